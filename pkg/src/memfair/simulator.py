"""Finite-sample realizations of a scenario and Monte Carlo checks of the gap formulas.

Random numbers come from numpy's Philox4x64-10, a counter-based generator.
Draws are produced in fixed blocks of ``BLOCK`` samples; block ``i`` uses key
``seed`` with the third counter word set to ``i``. A block's stream therefore
does not depend on how blocks are distributed over workers, and the counts
are identical for any shard count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gaps import GapReport, Method, closed_form_gaps
from .population import Scenario, joint_table

BLOCK = 1 << 16
SE_FLOOR = 1e-12
EXACT_TOL = 1e-9


class AliasTable:
    """Walker/Vose alias table for O(1) draws from a discrete distribution."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
            raise ValueError("probabilities must be a nonempty nonnegative vector")
        m = p.size
        scaled = p * (m / p.sum())
        self.prob = np.ones(m)
        self.alias = np.arange(m)
        small = [i for i in range(m) if scaled[i] < 1.0]
        large = [i for i in range(m) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to round-off
        for i in small + large:
            self.prob[i] = 1.0
        zero = p == 0
        self.prob[zero] = 0.0
        self.alias[zero & (self.alias == np.arange(m))] = int(np.argmax(p))

    def __len__(self) -> int:
        return self.prob.size

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cols = rng.integers(0, len(self), size=size)
        u = rng.random(size)
        return np.where(u < self.prob[cols], cols, self.alias[cols])


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(block), 0]))


@dataclass(frozen=True)
class SampleCounts:
    counts: np.ndarray  # [a, y, d, yhat]
    n: int
    seed: int | None = None

    @property
    def K(self) -> int:
        return self.counts.shape[1]


def sample(scenario: Scenario, n: int, seed: int, shards: int = 1) -> SampleCounts:
    """Draw ``n`` i.i.d. individuals from the joint model and tabulate them."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not (0 <= int(seed) < 2**64):
        raise ValueError("seed must be an unsigned 64-bit integer")
    table = joint_table(scenario).table
    alias = AliasTable(table.ravel())
    sizes = [BLOCK] * (n // BLOCK) + ([n % BLOCK] if n % BLOCK else [])

    def run(block_ids):
        acc = np.zeros(table.size, dtype=np.int64)
        for i in block_ids:
            idx = alias.draw(block_generator(seed, i), sizes[i])
            acc += np.bincount(idx, minlength=table.size)
        return acc

    ids = list(range(len(sizes)))
    if shards <= 1:
        flat = run(ids)
    else:
        with ThreadPoolExecutor(max_workers=shards) as pool:
            flat = sum(pool.map(run, [ids[s::shards] for s in range(shards)]))
    return SampleCounts(flat.reshape(table.shape), n, int(seed))


def expected_counts(scenario: Scenario, n: int) -> SampleCounts:
    """Exact expected counts (real-valued), for plug-in consistency checks."""
    return SampleCounts(joint_table(scenario).table * n, n)


@dataclass(frozen=True)
class EmpiricalGapReport:
    gaps: GapReport
    sp_se: np.ndarray
    eqopp_se: np.ndarray
    eqodds_se: np.ndarray
    n: int
    # True where a conditioning event had no samples
    sp_missing: np.ndarray
    eqodds_missing: np.ndarray

    @property
    def eqopp_missing(self) -> np.ndarray:
        return np.diag(self.eqodds_missing).copy()

    def to_dict(self) -> dict:
        def clean(v, miss):
            return [None if m else float(x) for x, m in zip(np.ravel(v), np.ravel(miss))]
        K = self.gaps.sp.shape[0]
        return {
            "n": self.n,
            "sp": clean(self.gaps.sp, self.sp_missing),
            "sp_se": clean(self.sp_se, self.sp_missing),
            "eqopp": clean(self.gaps.eqopp, self.eqopp_missing),
            "eqopp_se": clean(self.eqopp_se, self.eqopp_missing),
            "eqodds": np.reshape(clean(self.gaps.eqodds, self.eqodds_missing), (K, K)).tolist(),
            "eqodds_se": np.reshape(clean(self.eqodds_se, self.eqodds_missing), (K, K)).tolist(),
        }


def _proportion_diff(num, den):
    """Difference of group proportions ``num[1]/den[1] - num[0]/den[0]`` and its standard error."""
    den = np.asarray(den, dtype=float)
    missing = np.any(den <= 0, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        prop = num / den
        var = prop * (1 - prop) / den
    diff = np.where(missing, np.nan, prop[1] - prop[0])
    se = np.where(missing, np.nan, np.sqrt(np.clip(var[0] + var[1], 0.0, None)))
    return diff, se, np.broadcast_to(missing, diff.shape).copy()


def empirical_gaps(counts: SampleCounts) -> EmpiricalGapReport:
    """Plug-in gap estimates with delta-method standard errors.

    Entries whose conditioning event was never observed are NaN and flagged
    missing.
    """
    c = np.asarray(counts.counts, dtype=float)
    by_a_yhat = c.sum(axis=(1, 2))
    sp, sp_se, sp_missing = _proportion_diff(by_a_yhat, by_a_yhat.sum(axis=1, keepdims=True))
    by_a_y_yhat = c.sum(axis=2)
    odds, odds_se, odds_missing = _proportion_diff(by_a_y_yhat,
                                                   by_a_y_yhat.sum(axis=2, keepdims=True))
    report = GapReport(sp, np.diag(odds).copy(), odds, Method.EMPIRICAL)
    return EmpiricalGapReport(report, sp_se, np.diag(odds_se).copy(), odds_se, counts.n,
                              sp_missing, odds_missing)


@dataclass(frozen=True)
class MCVerification:
    passed: bool
    z: float
    max_z_score: float
    failures: list[str] = field(default_factory=list)
    empirical: EmpiricalGapReport | None = None
    closed_form: GapReport | None = None


def mc_verify(scenario: Scenario, n: int, seed: int, z: float = 5.0,
              closed_form: Callable[[Scenario], GapReport] = closed_form_gaps,
              shards: int = 1) -> MCVerification:
    """Check every closed-form gap against a Monte Carlo estimate at ``z`` standard errors."""
    exact = closed_form(scenario)
    emp = empirical_gaps(sample(scenario, n, seed, shards))
    failures = []
    worst = 0.0
    for name, value, est, se, miss in (
            ("sp", exact.sp, emp.gaps.sp, emp.sp_se, emp.sp_missing),
            ("eqodds", exact.eqodds, emp.gaps.eqodds, emp.eqodds_se, emp.eqodds_missing)):
        for idx in np.ndindex(np.shape(value)):
            if miss[idx]:
                continue
            err = abs(value[idx] - est[idx])
            if se[idx] < SE_FLOOR:
                if err > EXACT_TOL:
                    failures.append(f"{name}{list(idx)}: closed form {value[idx]:.6g} vs "
                                    f"empirical {est[idx]:.6g} with zero standard error")
                    worst = np.inf
                continue
            score = err / se[idx]
            worst = max(worst, score)
            if score > z:
                failures.append(f"{name}{list(idx)}: {score:.2f} standard errors")
    return MCVerification(not failures, z, float(worst), failures, emp, exact)
