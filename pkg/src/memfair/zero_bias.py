"""Memorized compositions that remove each bias, and memorized-mass thresholds.

Variables of the statistical parity system are ``(q_1..q_K, q_1^+..q_K^+)``;
the equal opportunity system is parametrized by one scalar per class,
``lambda_y``, from which ``q`` and ``q^+`` follow in closed form.

Two modes are supported for the solvers. ``Mode.PAPER`` keeps only the
constraints that make ``(q, q^+)`` a composition; ``Mode.CONSISTENT`` also
requires that the memorized mass of every (group, class) cell fits inside the
population, ``p_D q_y^a <= p_y^a``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import gaps as _gaps
from .errors import (DegenerateGroup, DenominatorVanishes, InconsistentMasses, InvalidLambda,
                     MissingPhi, PerfectClassDegenerate, RatioConditionFailed,
                     SolutionNotProbability, ZeroRateDivision)
from .linfeas import FeasibilityResult, LinearSystem, solve_feasibility
from .population import (SIMPLEX_TOL, ZERO_MASS, BaseClassifier, LabelGroupJoint,
                         MemorizedComposition, Scenario)

GUARD_BAND = 1e-12
RATIO_TOL = 1e-9
# 1 - C_yy below this counts as a perfect class
PERFECT_TOL = 1e-12


class Mode(str, enum.Enum):
    PAPER = "paper"
    CONSISTENT = "consistent"


class Verdict(str, enum.Enum):
    GUARANTEED_FEASIBLE = "GuaranteedFeasible"
    GUARANTEED_INFEASIBLE = "GuaranteedInfeasible"
    INDETERMINATE = "Indeterminate"


def _check_group_share(joint: LabelGroupJoint) -> float:
    pp = joint.plus_total
    if not (ZERO_MASS < pp < 1.0 - ZERO_MASS):
        raise DegenerateGroup(f"p^+ = {pp!r}; both groups must be present")
    return pp


def _check_p_D(p_D: float):
    if not (0.0 < p_D < 1.0):
        raise ValueError(f"p_D = {p_D!r} must lie in (0, 1)")


def resolve_phi(joint: LabelGroupJoint, base: BaseClassifier) -> tuple[np.ndarray, np.ndarray, bool]:
    """Rates held fixed by the statistical parity solver.

    Supplied rates win. Otherwise they are derived from ``C`` under the
    population label mix, which is exact when memorization is proportional.
    The flag reports whether that fallback was used.
    """
    if base.has_phi:
        return base.phi_plus, base.phi_minus, False
    pm, pp = joint.p_minus.sum(), joint.p_plus.sum()
    if pm <= ZERO_MASS or pp <= ZERO_MASS:
        raise MissingPhi("cannot derive prediction rates for an empty group")
    return (joint.p_plus / pp) @ base.C_plus, (joint.p_minus / pm) @ base.C_minus, True


# ---------------------------------------------------------------- statistical parity

@dataclass(frozen=True)
class SpSystemParams:
    b: np.ndarray
    c: np.ndarray
    p_plus_total: float
    p_D: float


def sp_system_params(joint: LabelGroupJoint, phi_plus, phi_minus, p_D: float,
                     variant: str = "proof") -> SpSystemParams:
    """Offset ``b`` and kernel direction ``c`` of the statistical parity system.

    ``variant="proof"`` weights by the group share ``p^+`` (the only variant with
    ``sum(c) = 1`` and ``sum(b) = 0``); ``variant="statement"`` weights by the
    per-class masses ``p_y^+`` instead and is kept for comparison only.
    """
    pp = _check_group_share(joint)
    _check_p_D(p_D)
    phi_plus = np.asarray(phi_plus, dtype=float)
    phi_minus = np.asarray(phi_minus, dtype=float)
    if variant == "proof":
        w = pp
    elif variant == "statement":
        w = joint.p_plus
    else:
        raise ValueError(f"unknown variant {variant!r}")
    b = w * (1 - w) * (1 - p_D) / p_D * (phi_plus - phi_minus)
    c = (1 - w) * phi_plus + w * phi_minus
    return SpSystemParams(b, c, pp, float(p_D))


def build_sp_system(joint: LabelGroupJoint, phi_plus, phi_minus, p_D: float,
                    mode: Mode = Mode.PAPER) -> LinearSystem:
    """Constraints on ``x = (q, q^+)`` whose solutions are exactly the zero-parity compositions."""
    params = sp_system_params(joint, phi_plus, phi_minus, p_D)
    K = joint.K
    pp, b, c = params.p_plus_total, params.b, params.c
    eq = []
    for y in range(K):
        row = np.zeros(2 * K)
        row[y] = pp
        row[K:] = c[y]
        row[K + y] -= 1.0
        eq.append((row, pp * c[y] + b[y]))
    eq.append((np.concatenate([np.ones(K), np.zeros(K)]), 1.0))

    ineq = []
    for y in range(K):
        row = np.zeros(2 * K)
        row[K + y] = -1.0
        ineq.append((row, 0.0))
    for y in range(K):
        row = np.zeros(2 * K)
        row[K + y] = 1.0
        row[y] = -1.0
        ineq.append((row, 0.0))
    if Mode(mode) is Mode.CONSISTENT:
        for y in range(K):
            row = np.zeros(2 * K)
            row[K + y] = p_D
            ineq.append((row, joint.p_plus[y]))
            row = np.zeros(2 * K)
            row[y] = p_D
            row[K + y] = -p_D
            ineq.append((row, joint.p_minus[y]))
    return LinearSystem.from_rows(2 * K, eq=eq, ineq=ineq)


@dataclass(frozen=True)
class SpSolution:
    result: FeasibilityResult
    memo: MemorizedComposition | None
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    # max |sp gap| of the witness with the rates held fixed
    residual: float | None = None
    # max |sp gap| after re-deriving the rates from C at the witness
    rederived_residual: float | None = None
    diagnostics: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.result.feasible


def _composition_from(q, q_plus, p_D) -> MemorizedComposition:
    q = np.asarray(q, dtype=float)
    q_plus = np.asarray(q_plus, dtype=float)
    # snap solver round-off back onto the constraint set
    q_plus = np.clip(q_plus, 0.0, None)
    q = np.maximum(q, q_plus)
    q = q / q.sum()
    q_plus = np.minimum(q_plus, q)
    return MemorizedComposition(p_D, q, q_plus)


def solve_sp_zero(joint: LabelGroupJoint, base: BaseClassifier, p_D: float,
                  mode: Mode = Mode.PAPER, phi: tuple | None = None,
                  recompute_phi: bool = False) -> SpSolution:
    """Find ``(q, q^+)`` with zero statistical parity gap at memorized mass ``p_D``.

    The base rates are held fixed; ``recompute_phi`` additionally reports the
    gap left after re-deriving them from ``C`` at the found composition.
    """
    diagnostics = []
    if phi is None:
        phi_plus, phi_minus, fallback = resolve_phi(joint, base)
        if fallback:
            diagnostics.append("phi not supplied; derived from C under the population label mix")
    else:
        phi_plus, phi_minus = (np.asarray(v, dtype=float) for v in phi)
    system = build_sp_system(joint, phi_plus, phi_minus, p_D, mode)
    result = solve_feasibility(system)
    if not result.feasible:
        return SpSolution(result, None, phi_plus, phi_minus, diagnostics=diagnostics)

    K = joint.K
    memo = _composition_from(result.witness[:K], result.witness[K:], p_D)
    scenario = Scenario(joint, memo, base)
    residual = float(np.max(np.abs(_gaps.sp_gap(scenario, (phi_plus, phi_minus)))))
    rederived = None
    if recompute_phi:
        try:
            rederived = float(np.max(np.abs(_gaps.sp_gap(Scenario(joint, memo, base.without_phi())))))
        except (InconsistentMasses, MissingPhi) as exc:
            diagnostics.append(f"could not re-derive phi at the witness: {exc}")
    return SpSolution(result, memo, phi_plus, phi_minus, residual, rederived, diagnostics)


def farkas_sp_check(joint: LabelGroupJoint, phi_plus, phi_minus, p_D: float) -> bool:
    """Decide solvability of the parity system through its Farkas alternative.

    With generators ``s_i = -(1-p^+) e_i + (c, 1)`` and ``s_{K+i} = p^+ e_i + e_{K+1}``
    and ``d = (p^+ c + b, 1)``, the system is solvable iff every ``x`` with
    ``s_i^T x <= 0`` for all ``i`` also has ``d^T x <= 0``. The cone inclusion
    fails iff some such ``x`` has ``d^T x >= 1``, which is one feasibility run.
    """
    params = sp_system_params(joint, phi_plus, phi_minus, p_D)
    K = joint.K
    pp, b, c = params.p_plus_total, params.b, params.c
    ineq = []
    for i in range(K):
        s = np.zeros(K + 1)
        s[:K] = c
        s[i] -= 1 - pp
        s[K] = 1.0
        ineq.append((s, 0.0))
    for i in range(K):
        s = np.zeros(K + 1)
        s[i] = pp
        s[K] = 1.0
        ineq.append((s, 0.0))
    d = np.concatenate([pp * c + b, [1.0]])
    ineq.append((-d, -1.0))
    separating = solve_feasibility(LinearSystem.from_rows(K + 1, ineq=ineq))
    return not separating.feasible


# ---------------------------------------------------------------- bounds

@dataclass(frozen=True)
class BoundsReport:
    """Memorized-mass thresholds for one metric.

    ``sufficient`` thresholds claim solvability for ``p_D`` at or above them,
    ``necessary`` thresholds claim emptiness strictly below them. ``exact``, when
    set, is the true solvability threshold of the system under ``Mode.PAPER``.
    """

    metric: str
    sufficient: dict[str, float]
    necessary: dict[str, float]
    exact: float | None = None

    def verdict(self, p_D: float, rule: str | None = None) -> Verdict:
        """Classify ``p_D``.

        ``rule="exact"`` uses the exact threshold; ``rule="corollary"`` uses the
        closed-form sufficient and necessary thresholds. Defaults to exact when known.
        """
        if rule is None:
            rule = "exact" if self.exact is not None else "corollary"
        if rule == "exact":
            if self.exact is None:
                raise ValueError("no exact threshold available for this metric")
            if p_D >= self.exact - GUARD_BAND:
                return Verdict.GUARANTEED_FEASIBLE
            return Verdict.GUARANTEED_INFEASIBLE
        if rule != "corollary":
            raise ValueError(f"unknown rule {rule!r}")
        if self.metric == "sp":
            # each orientation alone suffices
            if p_D >= min(self.sufficient.values()) - GUARD_BAND:
                return Verdict.GUARANTEED_FEASIBLE
            if p_D < max(self.necessary.values()) - GUARD_BAND:
                return Verdict.GUARANTEED_INFEASIBLE
            return Verdict.INDETERMINATE
        if p_D >= max(self.sufficient["sum_minus"], self.sufficient["sum_plus"]) - GUARD_BAND:
            return Verdict.GUARANTEED_FEASIBLE
        if p_D < max(self.necessary.values()) - GUARD_BAND:
            return Verdict.GUARANTEED_INFEASIBLE
        return Verdict.INDETERMINATE

    def to_dict(self) -> dict:
        return {"metric": self.metric, "sufficient": dict(self.sufficient),
                "necessary": dict(self.necessary), "exact": self.exact}


def sp_bounds(joint: LabelGroupJoint, phi_plus, phi_minus) -> BoundsReport:
    """Parity thresholds in both group orientations.

    ``stated``: ``(1-p^+) max_y (phi^-_y - phi^+_y) / phi^-_y`` (sufficient) and the
    same with ``min`` (necessary). ``exchanged`` swaps the groups.
    """
    pp = _check_group_share(joint)
    phi_plus = np.asarray(phi_plus, dtype=float)
    phi_minus = np.asarray(phi_minus, dtype=float)
    sufficient, necessary = {}, {}
    for name, share, own, other in (("stated", 1 - pp, phi_minus, phi_plus),
                                    ("exchanged", pp, phi_plus, phi_minus)):
        zero = np.flatnonzero(own <= 0.0)
        if zero.size:
            y = int(zero[0])
            raise ZeroRateDivision(f"prediction rate of class {y} is zero ({name} orientation)", y=y)
        ratio = (own - other) / own
        sufficient[name] = float(share * ratio.max())
        necessary[name] = float(share * ratio.min())
    return BoundsReport("sp", sufficient, necessary)


# ---------------------------------------------------------------- equal opportunity

@dataclass(frozen=True)
class EqOppSystemParams:
    alpha: np.ndarray
    lambda_upper: np.ndarray
    budget: float


def _diagonals(base: BaseClassifier) -> tuple[np.ndarray, np.ndarray]:
    c_plus, c_minus = np.diag(base.C_plus), np.diag(base.C_minus)
    for y in range(base.K):
        if 1 - c_plus[y] <= PERFECT_TOL or 1 - c_minus[y] <= PERFECT_TOL:
            raise PerfectClassDegenerate(f"class {y} is predicted perfectly in one group", y=y)
    return c_plus, c_minus


def eqopp_system_params(joint: LabelGroupJoint, base: BaseClassifier, p_D: float) -> EqOppSystemParams:
    _check_p_D(p_D)
    c_plus, c_minus = _diagonals(base)
    alpha = joint.p_plus / (1 - c_plus) + joint.p_minus / (1 - c_minus)
    upper = np.minimum((1 - c_plus) / p_D, (1 - c_minus) / p_D)
    return EqOppSystemParams(alpha, upper, (1 - p_D) / p_D)


def build_eqopp_system(joint: LabelGroupJoint, base: BaseClassifier, p_D: float,
                       mode: Mode = Mode.PAPER) -> LinearSystem:
    """``sum_y alpha_y lambda_y = (1-p_D)/p_D`` with ``lambda_y <= (1 - C^a_yy)/p_D``.

    In consistent mode ``lambda >= 0`` is added, which is the same as
    ``p_D q_y^a <= p_y^a``.
    """
    K = joint.K
    for name, p in (("p_plus", joint.p_plus), ("p_minus", joint.p_minus)):
        if np.any(p <= 0):
            raise ValueError(f"{name} must be positive for every class")
    params = eqopp_system_params(joint, base, p_D)
    c_plus, c_minus = np.diag(base.C_plus), np.diag(base.C_minus)
    ineq = []
    for y in range(K):
        e = np.zeros(K)
        e[y] = 1.0
        ineq.append((e, (1 - c_plus[y]) / p_D))
        ineq.append((e, (1 - c_minus[y]) / p_D))
    lower = np.zeros(K) if Mode(mode) is Mode.CONSISTENT else None
    return LinearSystem.from_rows(K, eq=[(params.alpha, params.budget)], ineq=ineq, lower=lower)


def map_lambda_to_composition(joint: LabelGroupJoint, base: BaseClassifier, p_D: float,
                              lam, tol: float = 1e-9) -> MemorizedComposition:
    """Composition ``q_y = p_y/p_D - alpha_y lambda_y``, ``q_y^+ = p_y^+/p_D - p_y^+ lambda_y/(1-C^+_yy)``."""
    lam = np.asarray(lam, dtype=float)
    params = eqopp_system_params(joint, base, p_D)
    if lam.shape != (joint.K,):
        raise InvalidLambda(f"lambda must have length {joint.K}")
    budget_gap = float(params.alpha @ lam - params.budget)
    if abs(budget_gap) > tol * max(1.0, params.budget):
        raise InvalidLambda(f"sum(alpha * lambda) misses (1-p_D)/p_D = {params.budget:.6g} "
                            f"by {budget_gap:.3g}")
    over = np.flatnonzero(lam > params.lambda_upper + tol)
    if over.size:
        raise InvalidLambda(f"lambda exceeds its upper bound for classes {over.tolist()}")
    lam = np.minimum(lam, params.lambda_upper)
    c_plus = np.diag(base.C_plus)
    q = joint.p_y / p_D - params.alpha * lam
    q_plus = joint.p_plus / p_D - joint.p_plus / (1 - c_plus) * lam
    q_plus = np.clip(q_plus, 0.0, None)
    q = np.maximum(q, q_plus)
    return MemorizedComposition(p_D, q / q.sum(), q_plus / q.sum())


@dataclass(frozen=True)
class EqOppSolution:
    result: FeasibilityResult
    memo: MemorizedComposition | None
    residual: float | None = None

    @property
    def feasible(self) -> bool:
        return self.result.feasible


def solve_eqopp_zero(joint: LabelGroupJoint, base: BaseClassifier, p_D: float,
                     mode: Mode = Mode.PAPER) -> EqOppSolution:
    result = solve_feasibility(build_eqopp_system(joint, base, p_D, mode))
    if not result.feasible:
        return EqOppSolution(result, None)
    memo = map_lambda_to_composition(joint, base, p_D, result.witness)
    residual = float(np.max(np.abs(_gaps.eqopp_gap(Scenario(joint, memo, base)))))
    return EqOppSolution(result, memo, residual)


def eqopp_bounds(joint: LabelGroupJoint, base: BaseClassifier) -> BoundsReport:
    """Equal opportunity thresholds.

    ``sum_minus = sum_y p_y^- (C^+_yy - C^-_yy)/(1 - C^-_yy)`` and its mirror
    ``sum_plus`` are each a lower bound on any solvable ``p_D``; so are the
    coarser ``min`` forms. ``exact`` adds the per-class maxima of the two sum
    terms, which is where the budget equality meets the upper bounds on lambda.
    """
    c_plus, c_minus = _diagonals(base)
    g = (c_plus - c_minus) / (1 - c_minus)
    h = (c_minus - c_plus) / (1 - c_plus)
    term_minus = joint.p_minus * g
    term_plus = joint.p_plus * h
    pm, pp = joint.minus_total, joint.plus_total
    sufficient = {
        "sum_minus": float(term_minus.sum()),
        "sum_plus": float(term_plus.sum()),
        "coarse_minus": float(pm * g.max()),
        "coarse_plus": float(pp * h.max()),
    }
    necessary = {"min_minus": float(pm * g.min()), "min_plus": float(pp * h.min())}
    exact = float(np.maximum(term_minus, term_plus).sum())
    return BoundsReport("eqopp", sufficient, necessary, exact)


# ---------------------------------------------------------------- equalized odds

@dataclass(frozen=True)
class EqOddsSolution:
    r: np.ndarray
    p_D_required: float
    q: np.ndarray
    q_plus: np.ndarray
    ratio_condition_met: bool
    ratio_deviation: float
    profile_deviation: float
    residual: float

    def composition(self) -> MemorizedComposition:
        return MemorizedComposition(self.p_D_required, self.q, self.q_plus)


def ratio_deviation(base: BaseClassifier) -> tuple[np.ndarray, float]:
    """Per-class off-diagonal ratios ``(1 - C^+_{y,yhat}) / (1 - C^-_{y,yhat})`` and their spread."""
    K = base.K
    worst = 0.0
    for y in range(K):
        off = [j for j in range(K) if j != y]
        denom = 1 - base.C_minus[y, off]
        if np.any(np.abs(denom) <= PERFECT_TOL):
            raise DenominatorVanishes(f"C^-[{y}, yhat] = 1 for some yhat != y", y=y)
        ratios = (1 - base.C_plus[y, off]) / denom
        worst = max(worst, float(ratios.max() - ratios.min()))
    K1 = K - 1
    r = (K1 - (1 - np.diag(base.C_plus))) / (K1 - (1 - np.diag(base.C_minus)))
    return r, worst


def profile_deviation(base: BaseClassifier) -> float:
    """Spread of the error profiles ``C^a_{y,yhat} / (1 - C^a_yy)`` between the groups.

    Zero off-diagonal gaps for every ``yhat != y`` require the two groups to
    distribute their errors on class ``y`` in the same proportions.
    """
    worst = 0.0
    for y in range(base.K):
        miss_plus = 1 - base.C_plus[y, y]
        miss_minus = 1 - base.C_minus[y, y]
        if miss_plus <= PERFECT_TOL or miss_minus <= PERFECT_TOL:
            continue
        off = [j for j in range(base.K) if j != y]
        diff = base.C_plus[y, off] / miss_plus - base.C_minus[y, off] / miss_minus
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def solve_eqodds_zero(joint: LabelGroupJoint, base: BaseClassifier,
                      ratio_tol: float = RATIO_TOL) -> EqOddsSolution:
    """Unique memorized mass and composition removing every equalized-odds gap."""
    K = joint.K
    r, dev = ratio_deviation(base)
    if dev > ratio_tol:
        raise RatioConditionFailed(
            f"off-diagonal ratios (1-C+)/(1-C-) vary across predicted labels by {dev:.3g}", dev)
    prof = profile_deviation(base)
    if prof > ratio_tol:
        raise RatioConditionFailed(
            f"groups distribute their errors differently (error-profile spread {prof:.3g}); "
            f"off-diagonal gaps cannot all vanish", prof, kind="error_profile")

    c_plus, c_minus = np.diag(base.C_plus), np.diag(base.C_minus)
    numer = c_minus - c_plus
    denom = (1 - c_plus) - r * (1 - c_minus)
    if np.all(np.abs(numer) <= RATIO_TOL) and np.all(np.abs(base.C_plus - base.C_minus) <= RATIO_TOL):
        raise SolutionNotProbability(
            "base classifier already has zero equalized-odds gap; required p_D is 0", "p_D")
    small = np.flatnonzero(np.abs(denom) <= RATIO_TOL)
    if small.size:
        y = int(small[0])
        raise DenominatorVanishes(f"(1-C+_yy) - r_y (1-C-_yy) vanishes for class {y}", y=y)

    memorized_plus_share = numer / denom            # p_D * q_y^+ / p_y^+
    memorized_minus_share = r * memorized_plus_share  # p_D * q_y^- / p_y^-
    plus_mass = joint.p_plus * memorized_plus_share
    class_mass = (joint.p_plus + r * joint.p_minus) * memorized_plus_share
    p_D = float(class_mass.sum())

    for name, share in (("p_D*q_y^+/p_y^+", memorized_plus_share),
                        ("p_D*q_y^-/p_y^-", memorized_minus_share)):
        if np.any(share < -SIMPLEX_TOL) or np.any(share > 1 + SIMPLEX_TOL):
            raise SolutionNotProbability(f"{name} = {share.tolist()} leaves [0, 1]", name)
    if not (0.0 < p_D < 1.0):
        raise SolutionNotProbability(f"required p_D = {p_D!r} is not in (0, 1)", "p_D")

    q = class_mass / p_D
    q_plus = plus_mass / p_D
    memo = MemorizedComposition(p_D, q, q_plus)
    residual = float(np.max(np.abs(_gaps.eqodds_gap(Scenario(joint, memo, base)))))
    return EqOddsSolution(r, p_D, q, q_plus, True, dev, prof, residual)
