"""Distributional inputs and the exact joint model over (A, Y, D, Yhat).

Arrays are indexed with the group first, ``a = 0`` for the non-sensitive group
(the "minus" quantities) and ``a = 1`` for the sensitive group ("plus").
Labels are 0-based.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateSlice, InconsistentMasses

SIMPLEX_TOL = 1e-12
ZERO_MASS = 1e-15


def _frozen(x, ndim: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabelGroupJoint:
    """Population masses ``p_plus[y] = P(Y=y, A=1)`` and ``p_minus[y] = P(Y=y, A=0)``."""

    p_plus: np.ndarray
    p_minus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_plus", _frozen(self.p_plus, 1, "p_plus"))
        object.__setattr__(self, "p_minus", _frozen(self.p_minus, 1, "p_minus"))
        if self.p_plus.shape != self.p_minus.shape:
            raise ValueError("p_plus and p_minus must have the same length")

    @property
    def K(self) -> int:
        return self.p_plus.shape[0]

    @property
    def plus_total(self) -> float:
        return float(self.p_plus.sum())

    @property
    def minus_total(self) -> float:
        return 1.0 - self.plus_total

    @property
    def p_y(self) -> np.ndarray:
        return self.p_plus + self.p_minus

    def by_group(self) -> np.ndarray:
        """Masses as a ``(2, K)`` array indexed ``[a, y]``."""
        return np.stack([self.p_minus, self.p_plus])

    def swapped(self) -> LabelGroupJoint:
        return LabelGroupJoint(self.p_minus, self.p_plus)


@dataclass(frozen=True)
class MemorizedComposition:
    """Memorized mass ``p_D`` with label composition ``q`` and sensitive part ``q_plus``."""

    p_D: float
    q: np.ndarray
    q_plus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_D", float(self.p_D))
        object.__setattr__(self, "q", _frozen(self.q, 1, "q"))
        object.__setattr__(self, "q_plus", _frozen(self.q_plus, 1, "q_plus"))
        if self.q.shape != self.q_plus.shape:
            raise ValueError("q and q_plus must have the same length")

    @property
    def K(self) -> int:
        return self.q.shape[0]

    @property
    def q_minus(self) -> np.ndarray:
        return self.q - self.q_plus

    @property
    def plus_total(self) -> float:
        return float(self.q_plus.sum())

    def by_group(self) -> np.ndarray:
        return np.stack([self.q_minus, self.q_plus])

    def swapped(self) -> MemorizedComposition:
        return MemorizedComposition(self.p_D, self.q, self.q_minus)

    def with_p_D(self, p_D: float) -> MemorizedComposition:
        return MemorizedComposition(p_D, self.q, self.q_plus)


@dataclass(frozen=True)
class BaseClassifier:
    """Group-conditional confusion matrices on the unmemorized data, rows indexed by true label."""

    C_plus: np.ndarray
    C_minus: np.ndarray
    phi_plus: np.ndarray | None = None
    phi_minus: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "C_plus", _frozen(self.C_plus, 2, "C_plus"))
        object.__setattr__(self, "C_minus", _frozen(self.C_minus, 2, "C_minus"))
        if self.C_plus.shape != self.C_minus.shape or self.C_plus.shape[0] != self.C_plus.shape[1]:
            raise ValueError("C_plus and C_minus must be square matrices of equal size")
        if (self.phi_plus is None) != (self.phi_minus is None):
            raise ValueError("phi_plus and phi_minus must be supplied together")
        if self.phi_plus is not None:
            object.__setattr__(self, "phi_plus", _frozen(self.phi_plus, 1, "phi_plus"))
            object.__setattr__(self, "phi_minus", _frozen(self.phi_minus, 1, "phi_minus"))

    @property
    def K(self) -> int:
        return self.C_plus.shape[0]

    @property
    def has_phi(self) -> bool:
        return self.phi_plus is not None

    def by_group(self) -> np.ndarray:
        """Confusion matrices as a ``(2, K, K)`` array indexed ``[a, y, yhat]``."""
        return np.stack([self.C_minus, self.C_plus])

    def swapped(self) -> BaseClassifier:
        return BaseClassifier(self.C_minus, self.C_plus, self.phi_minus, self.phi_plus)

    def without_phi(self) -> BaseClassifier:
        return BaseClassifier(self.C_plus, self.C_minus)


@dataclass(frozen=True)
class Scenario:
    joint: LabelGroupJoint
    memo: MemorizedComposition
    base: BaseClassifier

    @property
    def K(self) -> int:
        return self.joint.K

    def swapped(self) -> Scenario:
        """Exchange the roles of the two groups."""
        return Scenario(self.joint.swapped(), self.memo.swapped(), self.base.swapped())

    def with_memo(self, memo: MemorizedComposition) -> Scenario:
        return Scenario(self.joint, memo, self.base)


@dataclass(frozen=True)
class JointDistribution:
    """Exact probabilities ``table[a, y, d, yhat]``."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(self.table, 4, "table"))

    @property
    def K(self) -> int:
        return self.table.shape[1]


class Strictness(enum.IntEnum):
    BASIC = 1
    STRICT = 2
    CONSISTENT = 3


class Issue(NamedTuple):
    tier: Strictness
    invariant: str
    message: str


@dataclass
class ValidationReport:
    strictness: Strictness
    issues: list[Issue] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.issues

    def failed_tiers(self) -> set[Strictness]:
        return {i.tier for i in self.issues}

    def invariants(self) -> list[str]:
        return [i.invariant for i in self.issues]

    def __str__(self) -> str:
        if self.passed:
            return f"valid ({self.strictness.name.lower()})"
        return "\n".join(f"[{i.tier.name.lower()}] {i.invariant}: {i.message}" for i in self.issues)


def _check_simplex(vec, name, issues, tier=Strictness.BASIC, tol=SIMPLEX_TOL):
    vec = np.asarray(vec)
    if not np.all(np.isfinite(vec)):
        issues.append(Issue(tier, f"{name}.finite", f"{name} has non-finite entries"))
        return
    if np.any(vec < -tol):
        issues.append(Issue(tier, f"{name}.nonnegative", f"{name} has negative entries: {vec.tolist()}"))
    s = float(vec.sum())
    if abs(s - 1.0) > tol:
        issues.append(Issue(tier, f"{name}.sum", f"{name} sums to {s!r}, expected 1"))


def _check_inputs(joint: LabelGroupJoint, base: BaseClassifier, issues: list[Issue]):
    if joint.K != base.K:
        issues.append(Issue(Strictness.BASIC, "K.agree",
                            f"dimension mismatch: population {joint.K}, classifier {base.K}"))
        return
    if joint.K < 2:
        issues.append(Issue(Strictness.BASIC, "K.min", "need at least two classes"))
    _check_simplex(np.concatenate([joint.p_plus, joint.p_minus]), "population", issues)
    pp = joint.plus_total
    if not (0.0 < pp < 1.0):
        issues.append(Issue(Strictness.BASIC, "population.group_share",
                            f"p^+ = {pp!r} must lie strictly between 0 and 1"))
    for name, C in (("C_plus", base.C_plus), ("C_minus", base.C_minus)):
        if np.any(C < -SIMPLEX_TOL) or not np.all(np.isfinite(C)):
            issues.append(Issue(Strictness.BASIC, f"{name}.nonnegative", f"{name} has invalid entries"))
        bad = np.flatnonzero(np.abs(C.sum(axis=1) - 1.0) > SIMPLEX_TOL)
        if bad.size:
            issues.append(Issue(Strictness.BASIC, f"{name}.row_sum",
                                f"rows {bad.tolist()} of {name} do not sum to 1"))
    if base.has_phi:
        _check_simplex(base.phi_plus, "phi_plus", issues)
        _check_simplex(base.phi_minus, "phi_minus", issues)


def _check_strict(joint: LabelGroupJoint, issues: list[Issue]):
    for name, p in (("p_plus", joint.p_plus), ("p_minus", joint.p_minus)):
        zero = np.flatnonzero(p <= 0.0)
        if zero.size:
            issues.append(Issue(Strictness.STRICT, f"population.{name}.positive",
                                f"{name} is zero for classes {zero.tolist()}"))


def validate_inputs(joint: LabelGroupJoint, base: BaseClassifier,
                    strictness: Strictness = Strictness.BASIC) -> ValidationReport:
    """Validate population and classifier alone (no memorized composition yet)."""
    strictness = Strictness(min(strictness, Strictness.STRICT))
    report = ValidationReport(strictness)
    _check_inputs(joint, base, report.issues)
    if strictness >= Strictness.STRICT and not report.issues:
        _check_strict(joint, report.issues)
    return report


def validate(scenario: Scenario, strictness: Strictness = Strictness.BASIC) -> ValidationReport:
    """Check the scenario invariants up to and including ``strictness``.

    Tiers are cumulative. Failures are collected, never raised.
    """
    strictness = Strictness(strictness)
    report = ValidationReport(strictness)
    issues = report.issues
    joint, memo, base = scenario.joint, scenario.memo, scenario.base

    if not (joint.K == memo.K == base.K):
        issues.append(Issue(Strictness.BASIC, "K.agree",
                            f"dimension mismatch: population {joint.K}, memorization {memo.K}, "
                            f"classifier {base.K}"))
        return report
    _check_inputs(joint, base, issues)
    if not (0.0 < memo.p_D < 1.0):
        issues.append(Issue(Strictness.BASIC, "memorization.p_D", f"p_D = {memo.p_D!r} not in (0, 1)"))
    _check_simplex(memo.q, "memorization.q", issues)
    if np.any(memo.q_plus < -SIMPLEX_TOL) or np.any(memo.q_plus > memo.q + SIMPLEX_TOL):
        issues.append(Issue(Strictness.BASIC, "memorization.q_plus.range",
                            "need 0 <= q_plus[y] <= q[y] for all y"))

    if strictness >= Strictness.STRICT:
        _check_strict(joint, issues)

    if strictness >= Strictness.CONSISTENT:
        p = joint.by_group()
        q = memo.by_group()
        for a, sign in ((1, "plus"), (0, "minus")):
            empty = np.flatnonzero((p[a] <= 0.0) & (q[a] > 0.0))
            if empty.size:
                issues.append(Issue(Strictness.CONSISTENT, f"memorization.{sign}.empty_cell",
                                    f"memorized mass on classes {empty.tolist()} which have no "
                                    f"population mass in group a={a}"))
            over = np.flatnonzero(memo.p_D * q[a] > p[a] + SIMPLEX_TOL)
            if over.size:
                y = int(over[0])
                issues.append(Issue(Strictness.CONSISTENT, f"memorization.{sign}.mass",
                                    f"p_D*q_{y}^{sign} = {memo.p_D * q[a, y]:.6g} exceeds "
                                    f"p_{y}^{sign} = {p[a, y]:.6g}"))
    return report


def unmemorized_masses(joint: LabelGroupJoint, memo: MemorizedComposition) -> np.ndarray:
    """``P(A=a, Y=y, D=0) = p_y^a - p_D q_y^a`` as a ``(2, K)`` array."""
    masses = joint.by_group() - memo.p_D * memo.by_group()
    if np.any(masses < -SIMPLEX_TOL):
        a, y = np.argwhere(masses < -SIMPLEX_TOL)[0]
        raise InconsistentMasses(
            f"memorized mass exceeds population mass in cell a={a}, y={y} "
            f"(residual {masses[a, y]:.3g})")
    return np.clip(masses, 0.0, None)


def unmemorized_conditionals(joint: LabelGroupJoint, memo: MemorizedComposition) -> np.ndarray:
    """``P(Y=y | D=0, A=a)`` as a ``(2, K)`` array indexed ``[a, y]``."""
    masses = unmemorized_masses(joint, memo)
    totals = masses.sum(axis=1)
    for a in (0, 1):
        if totals[a] <= ZERO_MASS:
            raise DegenerateSlice(f"group a={a} is entirely memorized; P(Y | D=0, A={a}) undefined")
    return masses / totals[:, None]


class PhiRates(NamedTuple):
    plus: np.ndarray
    minus: np.ndarray
    # max |supplied - derived|, None when nothing was supplied
    discrepancy: float | None


def derive_phi(joint: LabelGroupJoint, memo: MemorizedComposition, base: BaseClassifier) -> PhiRates:
    """Prediction rates of the base classifier on the unmemorized data.

    ``phi^a[yhat] = sum_y P(Y=y | D=0, A=a) C^a[y, yhat]``. When the classifier
    already carries rates they are returned unchanged together with their
    deviation from the derived values.
    """
    cond = unmemorized_conditionals(joint, memo)
    derived_plus = cond[1] @ base.C_plus
    derived_minus = cond[0] @ base.C_minus
    if base.has_phi:
        disc = max(np.max(np.abs(base.phi_plus - derived_plus)),
                   np.max(np.abs(base.phi_minus - derived_minus)))
        return PhiRates(base.phi_plus, base.phi_minus, float(disc))
    return PhiRates(derived_plus, derived_minus, None)


def joint_table(scenario: Scenario) -> JointDistribution:
    """Exact distribution of (A, Y, D, Yhat) under perfect prediction on ``D = 1``."""
    joint, memo, base = scenario.joint, scenario.memo, scenario.base
    K = joint.K
    rest = unmemorized_masses(joint, memo)
    memorized = memo.p_D * memo.by_group()
    C = base.by_group()
    table = np.zeros((2, K, 2, K))
    eye = np.eye(K)
    table[:, :, 1, :] = memorized[:, :, None] * eye[None, :, :]
    table[:, :, 0, :] = rest[:, :, None] * C
    return JointDistribution(table)
