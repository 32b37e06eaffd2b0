"""Linear feasibility with verified witnesses and Farkas certificates.

A dense phase-1 simplex with Bland's rule. The phase-1 duals of an infeasible
system are turned into a Farkas certificate, so every answer comes with an
object that can be checked independently of the solver.

Certificate layout: one multiplier per equality row, then one per inequality
row, then one per variable with a finite lower bound (the row ``-x_j <= -lb_j``).
A valid certificate ``y`` has nonnegative inequality and bound multipliers,
``y^T A = 0`` and ``y^T b < 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericalBreakdown

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-13
# tableau entries below this are treated as zero in the ratio test
RATIO_TOL = 1e-11
REDUCED_COST_TOL = 1e-12


class Status(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class LinearSystem:
    """``A_eq x = b_eq``, ``A_ub x <= b_ub`` and ``x >= lower`` (``-inf`` means free)."""

    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        n = self.lower.shape[0]
        for name in ("A_eq", "A_ub"):
            A = getattr(self, name)
            if A.ndim != 2 or A.shape[1] != n:
                raise ValueError(f"{name} must have {n} columns, got shape {A.shape}")
        if self.A_eq.shape[0] != self.b_eq.shape[0] or self.A_ub.shape[0] != self.b_ub.shape[0]:
            raise ValueError("row count mismatch between coefficients and right-hand sides")
        for name in ("A_eq", "b_eq", "A_ub", "b_ub"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
            getattr(self, name).setflags(write=False)
        self.lower.setflags(write=False)

    @classmethod
    def from_rows(cls, n: int, eq: Sequence[tuple[Sequence[float], float]] = (),
                  ineq: Sequence[tuple[Sequence[float], float]] = (),
                  lower: Sequence[float] | None = None) -> LinearSystem:
        def stack(rows):
            if not rows:
                return np.zeros((0, n)), np.zeros(0)
            A = np.array([np.asarray(r[0], dtype=float) for r in rows], dtype=float)
            return A.reshape(len(rows), n), np.array([float(r[1]) for r in rows])

        A_eq, b_eq = stack(list(eq))
        A_ub, b_ub = stack(list(ineq))
        lb = np.full(n, -np.inf) if lower is None else np.array(lower, dtype=float)
        return cls(A_eq, b_eq, A_ub, b_ub, lb)

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def bounded(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.lower))

    @property
    def n_rows(self) -> int:
        return self.A_eq.shape[0] + self.A_ub.shape[0] + self.bounded.shape[0]

    def scaled_row(self, kind: str, i: int, factor: float) -> LinearSystem:
        A_eq, b_eq, A_ub, b_ub = (np.array(v) for v in (self.A_eq, self.b_eq, self.A_ub, self.b_ub))
        if kind == "eq":
            A_eq[i] *= factor
            b_eq[i] *= factor
        else:
            A_ub[i] *= factor
            b_ub[i] *= factor
        return LinearSystem(A_eq, b_eq, A_ub, b_ub, np.array(self.lower))


@dataclass(frozen=True)
class FeasibilityResult:
    status: Status
    witness: np.ndarray | None = None
    certificate: np.ndarray | None = None
    phase1_objective: float = 0.0
    pivots: int = 0

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


def check_witness(system: LinearSystem, x) -> float:
    """Largest violation of any constraint by ``x`` (0 when all hold)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.n,):
        raise ValueError(f"witness has shape {x.shape}, expected ({system.n},)")
    worst = 0.0
    if system.A_eq.shape[0]:
        worst = max(worst, float(np.max(np.abs(system.A_eq @ x - system.b_eq))))
    if system.A_ub.shape[0]:
        worst = max(worst, float(np.max(system.A_ub @ x - system.b_ub)))
    b = system.bounded
    if b.size:
        worst = max(worst, float(np.max(system.lower[b] - x[b])))
    return max(worst, 0.0)


def _split_certificate(system: LinearSystem, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (system.n_rows,):
        raise ValueError(f"certificate has shape {y.shape}, expected ({system.n_rows},)")
    m_eq, m_ub = system.A_eq.shape[0], system.A_ub.shape[0]
    return y[:m_eq], y[m_eq:m_eq + m_ub], y[m_eq + m_ub:]


def check_certificate(system: LinearSystem, y, tol: float = FEAS_TOL) -> bool:
    """True iff ``y`` proves the system infeasible (scale-free, within ``tol``)."""
    y_eq, y_ub, mu = _split_certificate(system, y)
    scale = float(np.max(np.abs(y))) if np.size(y) else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return False
    y_eq, y_ub, mu = y_eq / scale, y_ub / scale, mu / scale
    if np.any(y_ub < -tol) or np.any(mu < -tol):
        return False
    combo = system.A_eq.T @ y_eq + system.A_ub.T @ y_ub
    combo[system.bounded] -= mu
    rhs = system.b_eq @ y_eq + system.b_ub @ y_ub - mu @ system.lower[system.bounded]
    coef_scale = max(1.0, float(np.max(np.abs(np.concatenate(
        [system.A_eq.ravel(), system.A_ub.ravel(), [0.0]])))))
    return bool(np.max(np.abs(combo), initial=0.0) <= tol * coef_scale and rhs < -tol)


class _Tableau:
    """Phase-1 tableau ``[A | I | b]`` with the reduced-cost row last."""

    def __init__(self, A: np.ndarray, b: np.ndarray):
        m, N = A.shape
        self.m, self.N = m, N
        T = np.zeros((m + 1, N + m + 1))
        T[:m, :N] = A
        T[:m, N:N + m] = np.eye(m)
        T[:m, -1] = b
        T[m, :N] = -A.sum(axis=0)
        T[m, -1] = -b.sum()
        self.T = T
        self.basis = list(range(N, N + m))
        self.pivots = 0

    def pivot(self, r: int, j: int):
        T = self.T
        piv = T[r, j]
        if abs(piv) < PIVOT_TOL:
            raise NumericalBreakdown(f"pivot magnitude {abs(piv):.3g} below {PIVOT_TOL}")
        T[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.pivots += 1

    def run(self, max_pivots: int):
        T, m = self.T, self.m
        while True:
            cost = T[m, :-1]
            # the phase-1 objective is bounded below, so a candidate column with no
            # admissible row only has round-off in its reduced cost; skip it
            candidates = np.flatnonzero((cost < -REDUCED_COST_TOL)
                                        & np.any(T[:m, :-1] > RATIO_TOL, axis=0))
            if candidates.size == 0:
                return
            j = int(candidates[0])
            col = T[:m, j]
            rows = np.flatnonzero(col > RATIO_TOL)
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-14 * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, j)
            if self.pivots > max_pivots:
                raise NumericalBreakdown(f"simplex exceeded {max_pivots} pivots")


def solve_feasibility(system: LinearSystem) -> FeasibilityResult:
    """Find ``x`` satisfying ``system`` or a certificate that none exists."""
    n = system.n
    bounded = np.isfinite(system.lower)
    shift = np.where(bounded, system.lower, 0.0)

    # columns: one per bounded variable, two (x+, x-) per free variable, then slacks
    col_of: list[tuple[int, float]] = []
    for j in range(n):
        col_of.append((j, 1.0))
        if not bounded[j]:
            col_of.append((j, -1.0))
    n_struct = len(col_of)
    sel = np.zeros((n, n_struct))
    for c, (j, s) in enumerate(col_of):
        sel[j, c] = s

    m_eq, m_ub = system.A_eq.shape[0], system.A_ub.shape[0]
    A_rows = np.vstack([system.A_eq, system.A_ub])
    b_rows = np.concatenate([system.b_eq, system.b_ub]) - A_rows @ shift
    m = m_eq + m_ub
    A = np.zeros((m, n_struct + m_ub))
    A[:, :n_struct] = A_rows @ sel
    A[m_eq:, n_struct:] = np.eye(m_ub)

    row_scale = np.max(np.abs(A_rows), axis=1, initial=0.0)
    row_scale[row_scale == 0.0] = 1.0
    sign = np.where(b_rows < 0, -1.0, 1.0)
    factor = sign / row_scale
    A *= factor[:, None]
    b = b_rows * factor

    if m == 0:
        x = np.where(bounded, system.lower, 0.0)
        return FeasibilityResult(Status.FEASIBLE, witness=x)

    tab = _Tableau(A, b)
    tab.run(max_pivots=200 * (m + A.shape[1]) + 1000)
    T = tab.T
    w = -T[m, -1]

    z = np.zeros(A.shape[1] + m)
    for r, j in enumerate(tab.basis):
        z[j] = T[r, -1]
    x = sel @ z[:n_struct] + shift

    # phase-1 duals of the scaled rows, mapped back to the original rows
    duals = 1.0 - T[m, A.shape[1]:A.shape[1] + m]
    y_rows = -duals * factor
    y_rows[m_eq:] = np.clip(y_rows[m_eq:], 0.0, None)
    mu = (A_rows.T @ y_rows)[bounded]
    mu = np.clip(mu, 0.0, None)
    cert = np.concatenate([y_rows, mu])
    if np.max(np.abs(cert), initial=0.0) > 0:
        cert = cert / np.max(np.abs(cert))

    witness_ok = check_witness(system, x) <= FEAS_TOL
    cert_ok = check_certificate(system, cert)
    prefer_witness = w <= FEAS_TOL
    if witness_ok and (prefer_witness or not cert_ok):
        return FeasibilityResult(Status.FEASIBLE, witness=x, phase1_objective=float(w),
                                 pivots=tab.pivots)
    if cert_ok:
        return FeasibilityResult(Status.INFEASIBLE, certificate=cert, phase1_objective=float(w),
                                 pivots=tab.pivots)
    raise NumericalBreakdown(
        f"phase 1 ended with objective {w:.3g} but neither the witness "
        f"(violation {check_witness(system, x):.3g}) nor the certificate verifies")
