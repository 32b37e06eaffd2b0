"""Command-line front end.

Scenario files are JSON documents::

    {
      "K": 2,
      "population": {"p_plus": [...], "p_minus": [...]},
      "base_classifier": {"C_plus": [[...]], "C_minus": [[...]],
                          "phi_plus": [...], "phi_minus": [...]},
      "memorization": {"p_D": 0.2, "q": [...], "q_plus": [...]}
    }

``phi_*`` and the ``memorization`` block are optional. Human-readable output
goes to stdout; ``--out`` writes the machine-readable report.

Exit codes: 0 success / feasible / pass, 1 infeasible / Monte Carlo failure,
2 unreadable or invalid input, 3 degenerate input for the requested formula.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import gaps as G
from . import simulator as S
from . import zero_bias as Z
from .errors import (DegenerateError, InconsistentMasses, MemfairError, MissingPhi,
                     RatioConditionFailed, SolutionNotProbability)
from .population import (BaseClassifier, LabelGroupJoint, MemorizedComposition, Scenario,
                         Strictness, validate, validate_inputs)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2, 3

_TOP_KEYS = {"K", "population", "base_classifier", "memorization", "description"}
_SECTION_KEYS = {
    "population": ({"p_plus", "p_minus"}, set()),
    "base_classifier": ({"C_plus", "C_minus"}, {"phi_plus", "phi_minus"}),
    "memorization": ({"p_D", "q", "q_plus"}, set()),
}


class InputError(MemfairError):
    """The scenario file cannot be read or violates the schema."""


# ---------------------------------------------------------------- serialization

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def loads(text: str):
    return json.loads(text)


def _vector(section: dict, key: str, K: int):
    arr = np.asarray(section[key], dtype=float)
    if arr.shape != (K,):
        raise InputError(f"{key} must have length {K}, got shape {arr.shape}")
    return arr


def _matrix(section: dict, key: str, K: int):
    arr = np.asarray(section[key], dtype=float)
    if arr.shape != (K, K):
        raise InputError(f"{key} must be {K}x{K}, got shape {arr.shape}")
    return arr


def parse_scenario(doc: dict, normalize: bool = False):
    """Turn a scenario document into ``(joint, base, memo_or_None)``."""
    if not isinstance(doc, dict):
        raise InputError("scenario file must contain a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise InputError(f"unknown top-level fields: {sorted(unknown)}")
    for name in ("K", "population", "base_classifier"):
        if name not in doc:
            raise InputError(f"missing field {name!r}")
    for name, (required, optional) in _SECTION_KEYS.items():
        if name not in doc:
            continue
        section = doc[name]
        if not isinstance(section, dict):
            raise InputError(f"{name} must be an object")
        if set(section) - required - optional:
            raise InputError(f"unknown fields in {name}: {sorted(set(section) - required - optional)}")
        if required - set(section):
            raise InputError(f"missing fields in {name}: {sorted(required - set(section))}")
    K = doc["K"]
    if not isinstance(K, int) or isinstance(K, bool) or K < 2:
        raise InputError("K must be an integer >= 2")

    try:
        pop, clf = doc["population"], doc["base_classifier"]
        p_plus, p_minus = _vector(pop, "p_plus", K), _vector(pop, "p_minus", K)
        C_plus, C_minus = _matrix(clf, "C_plus", K), _matrix(clf, "C_minus", K)
        phi = None
        if "phi_plus" in clf or "phi_minus" in clf:
            if not ("phi_plus" in clf and "phi_minus" in clf):
                raise InputError("phi_plus and phi_minus must be given together")
            phi = (_vector(clf, "phi_plus", K), _vector(clf, "phi_minus", K))
        memo = None
        if "memorization" in doc:
            m = doc["memorization"]
            memo = (float(m["p_D"]), _vector(m, "q", K), _vector(m, "q_plus", K))
    except (TypeError, ValueError) as exc:
        raise InputError(f"malformed numeric field: {exc}") from exc

    if normalize:
        total = p_plus.sum() + p_minus.sum()
        p_plus, p_minus = p_plus / total, p_minus / total
        C_plus = C_plus / C_plus.sum(axis=1, keepdims=True)
        C_minus = C_minus / C_minus.sum(axis=1, keepdims=True)
        if phi is not None:
            phi = (phi[0] / phi[0].sum(), phi[1] / phi[1].sum())
        if memo is not None:
            qs = memo[1].sum()
            memo = (memo[0], memo[1] / qs, memo[2] / qs)

    joint = LabelGroupJoint(p_plus, p_minus)
    base = BaseClassifier(C_plus, C_minus, *(phi or (None, None)))
    return joint, base, (MemorizedComposition(*memo) if memo is not None else None)


def scenario_document(joint: LabelGroupJoint, base: BaseClassifier,
                      memo: MemorizedComposition | None = None) -> dict:
    doc = {"K": joint.K,
           "population": {"p_plus": joint.p_plus.tolist(), "p_minus": joint.p_minus.tolist()},
           "base_classifier": {"C_plus": base.C_plus.tolist(), "C_minus": base.C_minus.tolist()}}
    if base.has_phi:
        doc["base_classifier"]["phi_plus"] = base.phi_plus.tolist()
        doc["base_classifier"]["phi_minus"] = base.phi_minus.tolist()
    if memo is not None:
        doc["memorization"] = memorization_block(memo)
    return doc


def memorization_block(memo: MemorizedComposition) -> dict:
    return {"p_D": memo.p_D, "q": memo.q.tolist(), "q_plus": memo.q_plus.tolist()}


# ---------------------------------------------------------------- commands

class _Run:
    def __init__(self, command: str, args: argparse.Namespace, raw: bytes):
        self.report = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "options": {k: v for k, v in sorted(vars(args).items())
                        if k not in ("func", "file", "out")},
            "inputs_digest": "sha256:" + hashlib.sha256(raw).hexdigest(),
            "results": {},
            "diagnostics": [],
            "exit_status": EXIT_OK,
        }
        self.lines: list[str] = []

    def say(self, line: str = ""):
        self.lines.append(line)

    def finish(self, status: int, out: str | None) -> int:
        self.report["exit_status"] = status
        for d in self.report["diagnostics"]:
            self.say(f"note: {d}")
        print("\n".join(self.lines))
        if out:
            Path(out).write_text(dumps(self.report) + "\n", encoding="utf-8")
        return status


def _vec(v) -> str:
    return "[" + ", ".join(f"{x: .6f}" for x in np.ravel(v)) + "]"


def _gaps(run: _Run, args, joint, base, memo):
    if memo is None:
        raise InputError("the gaps command needs a memorization block")
    scenario = Scenario(joint, memo, base)
    report = validate(scenario, Strictness.BASIC)
    if not report.passed:
        run.report["diagnostics"].extend(str(report).splitlines())
        run.say("invalid scenario")
        return EXIT_INPUT
    phi = G.scenario_phi(scenario)
    if base.has_phi:
        disc = max(np.max(np.abs(base.phi_plus - phi[0])), np.max(np.abs(base.phi_minus - phi[1])))
        run.report["results"]["phi_discrepancy"] = float(disc)
        if disc > 1e-9:
            run.report["diagnostics"].append(
                f"supplied phi differs from phi derived from C by {disc:.3g}; derived values used")
    closed = G.closed_form_gaps(scenario, phi)
    run.report["results"]["closed_form"] = closed.to_dict()
    run.say(f"statistical parity gap   {_vec(closed.sp)}")
    run.say(f"equal opportunity gap    {_vec(closed.eqopp)}")
    run.say("equalized odds gap")
    for row in closed.eqodds:
        run.say(f"  {_vec(row)}")
    if args.verify:
        check = validate(scenario, Strictness.CONSISTENT)
        if not check.passed:
            run.report["diagnostics"].extend(str(check).splitlines())
            run.say("cannot verify: memorized masses are inconsistent with the population")
            return EXIT_INPUT
        enum = G.gaps_by_enumeration(scenario)
        disc = closed.max_abs_diff(enum)
        run.report["results"]["enumeration"] = enum.to_dict()
        run.report["results"]["max_discrepancy"] = disc
        run.say(f"max |closed form - enumeration| = {disc:.3e}")
    return EXIT_OK


def _solve(run: _Run, args, joint, base, memo):
    metric = args.metric
    res = run.report["results"]
    if metric == "eqodds":
        try:
            sol = Z.solve_eqodds_zero(joint, base, ratio_tol=args.ratio_tol)
        except RatioConditionFailed as exc:
            res.update(status="infeasible", reason=str(exc), deviation=exc.deviation)
            run.say(f"infeasible: {exc}")
            return EXIT_NEGATIVE
        except SolutionNotProbability as exc:
            res.update(status="infeasible", reason=str(exc))
            run.say(f"no valid composition: {exc}")
            return EXIT_NEGATIVE
        res.update(status="feasible", r=sol.r.tolist(), p_D_required=sol.p_D_required,
                   ratio_deviation=sol.ratio_deviation, memorization=memorization_block(
                       sol.composition()), residual=sol.residual)
        run.say(f"feasible: p_D = {sol.p_D_required:.12g}")
        run.say(f"  q      = {_vec(sol.q)}")
        run.say(f"  q_plus = {_vec(sol.q_plus)}")
        run.say(f"  residual max |eq.odds gap| = {sol.residual:.3e}")
        return EXIT_OK

    if args.pd is None:
        raise InputError(f"--pd is required for metric {metric}")
    mode = Z.Mode(args.mode)
    if metric == "sp":
        sol = Z.solve_sp_zero(joint, base, args.pd, mode, recompute_phi=True)
        run.report["diagnostics"].extend(sol.diagnostics)
        extra = {"rederived_residual": sol.rederived_residual}
    else:
        sol = Z.solve_eqopp_zero(joint, base, args.pd, mode)
        extra = {}
    if not sol.feasible:
        cert = sol.result.certificate
        res.update(status="infeasible", certificate=cert.tolist())
        run.say(f"infeasible at p_D = {args.pd:g}")
        run.say(f"  Farkas certificate {_vec(cert)}")
        return EXIT_NEGATIVE
    res.update(status="feasible", memorization=memorization_block(sol.memo),
               residual=sol.residual, **extra)
    run.say(f"feasible at p_D = {args.pd:g}")
    run.say(f"  q      = {_vec(sol.memo.q)}")
    run.say(f"  q_plus = {_vec(sol.memo.q_plus)}")
    run.say(f"  residual max |gap| = {sol.residual:.3e}")
    return EXIT_OK


def _bounds(run: _Run, args, joint, base, memo):
    if args.metric == "sp":
        phi_plus, phi_minus, fallback = Z.resolve_phi(joint, base)
        if fallback:
            run.report["diagnostics"].append(
                "phi not supplied; derived from C under the population label mix")
        bounds = Z.sp_bounds(joint, phi_plus, phi_minus)
    else:
        bounds = Z.eqopp_bounds(joint, base)
    run.report["results"]["bounds"] = bounds.to_dict()
    for kind in ("sufficient", "necessary"):
        for name, value in getattr(bounds, kind).items():
            run.say(f"{kind:<10} {name:<12} {value: .12g}")
    if bounds.exact is not None:
        run.say(f"{'exact':<10} {'':<12} {bounds.exact: .12g}")
    if args.pd is not None:
        verdict = bounds.verdict(args.pd)
        run.report["results"]["verdict"] = verdict.value
        run.say(f"verdict at p_D = {args.pd:g}: {verdict.value}")
    return EXIT_OK


def _simulate(run: _Run, args, joint, base, memo):
    if memo is None:
        raise InputError("the simulate command needs a memorization block")
    scenario = Scenario(joint, memo, base)
    report = validate(scenario, Strictness.CONSISTENT)
    if not report.passed:
        run.report["diagnostics"].extend(str(report).splitlines())
        run.say("invalid scenario")
        return EXIT_INPUT
    check = S.mc_verify(scenario, args.samples, args.seed, args.z)
    res = run.report["results"]
    res.update(passed=check.passed, max_z_score=check.max_z_score, failures=check.failures,
               empirical=check.empirical.to_dict(), closed_form=check.closed_form.to_dict())
    run.say(f"n = {args.samples}, seed = {args.seed}, z = {args.z:g}")
    run.say(f"empirical sp gap  {_vec(check.empirical.gaps.sp)}")
    run.say(f"closed-form sp    {_vec(check.closed_form.sp)}")
    run.say(f"max z-score {check.max_z_score:.3f}: {'pass' if check.passed else 'FAIL'}")
    for f in check.failures:
        run.say(f"  {f}")
    return EXIT_OK if check.passed else EXIT_NEGATIVE


def _input_check(run: _Run, joint, base) -> bool:
    report = validate_inputs(joint, base)
    if not report.passed:
        run.report["diagnostics"].extend(str(report).splitlines())
        run.say("invalid scenario")
    return report.passed


def _dispatch(args) -> int:
    command = args.command
    try:
        raw = Path(args.file).read_bytes()
    except OSError as exc:
        print(f"error: cannot read {args.file}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    run = _Run(command, args, raw)
    try:
        try:
            doc = loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InputError(f"not a JSON document: {exc}") from exc
        joint, base, memo = parse_scenario(doc, normalize=args.normalize)
        if not _input_check(run, joint, base):
            return run.finish(EXIT_INPUT, args.out)
        status = args.func(run, args, joint, base, memo)
    except InputError as exc:
        run.report["diagnostics"].append(str(exc))
        return run.finish(EXIT_INPUT, args.out)
    except InconsistentMasses as exc:
        run.report["diagnostics"].append(f"inconsistent masses: {exc}")
        return run.finish(EXIT_INPUT, args.out)
    except (DegenerateError, MissingPhi, ValueError) as exc:
        run.report["diagnostics"].append(f"{type(exc).__name__}: {exc}")
        return run.finish(EXIT_DEGENERATE, args.out)
    return run.finish(status, args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memfair",
                                 description="Fairness gaps of classifiers that memorize part "
                                             "of the population.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("file", help="scenario JSON file")
        p.add_argument("--out", default=None, help="write the machine-readable report here")
        p.add_argument("--normalize", action="store_true",
                       help="renormalize probability vectors and confusion rows before use")

    p = sub.add_parser("gaps", help="closed-form gaps of a full scenario")
    common(p)
    p.add_argument("--verify", action="store_true", help="also run the enumeration oracle")
    p.set_defaults(func=_gaps)

    p = sub.add_parser("solve", help="memorized composition with zero gap")
    common(p)
    p.add_argument("--metric", choices=["sp", "eqopp", "eqodds"], required=True)
    p.add_argument("--pd", type=float, default=None, help="memorized mass p_D (sp, eqopp)")
    p.add_argument("--mode", choices=[m.value for m in Z.Mode], default="paper")
    p.add_argument("--ratio-tol", type=float, default=Z.RATIO_TOL)
    p.set_defaults(func=_solve)

    p = sub.add_parser("bounds", help="memorized-mass thresholds")
    common(p)
    p.add_argument("--metric", choices=["sp", "eqopp"], required=True)
    p.add_argument("--pd", type=float, default=None, help="also classify this p_D")
    p.set_defaults(func=_bounds)

    p = sub.add_parser("simulate", help="Monte Carlo check of the closed forms")
    common(p)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z", type=float, default=5.0)
    p.set_defaults(func=_simulate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return _dispatch(args)


if __name__ == "__main__":
    raise SystemExit(main())
