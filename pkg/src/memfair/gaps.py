"""Fairness gaps of a memorizing classifier.

Two independent routes are provided: the closed forms in terms of
``(p, q, phi, C)`` and exact enumeration of the joint table. The closed forms
are written term by term as they appear in the derivation, without algebraic
simplification, so that the enumeration route can catch transcription errors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateClassGroup, DegenerateGroup, DegenerateSlice, InconsistentMasses,
                     MissingPhi)
from .population import (ZERO_MASS, BaseClassifier, Scenario, joint_table,
                         unmemorized_conditionals)


class Method(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    ENUMERATION = "enumeration"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class GapReport:
    sp: np.ndarray
    eqopp: np.ndarray
    eqodds: np.ndarray
    method: Method
    # gaps restricted to the unmemorized data, when known
    base: GapReport | None = None

    def max_abs_diff(self, other: GapReport) -> float:
        return float(max(np.max(np.abs(self.sp - other.sp)),
                         np.max(np.abs(self.eqopp - other.eqopp)),
                         np.max(np.abs(self.eqodds - other.eqodds))))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.sp)), np.max(np.abs(self.eqodds))))

    def to_dict(self) -> dict:
        out = {"method": self.method.value, "sp": self.sp.tolist(), "eqopp": self.eqopp.tolist(),
               "eqodds": self.eqodds.tolist()}
        if self.base is not None:
            out["base"] = self.base.to_dict()
        return out


def base_gaps(base: BaseClassifier, phi: tuple[np.ndarray, np.ndarray] | None = None) -> GapReport:
    """Gaps of the base classifier on the unmemorized data."""
    if phi is None:
        if not base.has_phi:
            raise MissingPhi("prediction rates were not supplied and cannot be derived "
                             "without a memorized composition")
        phi = (base.phi_plus, base.phi_minus)
    phi_plus, phi_minus = (np.asarray(v, dtype=float) for v in phi)
    eqodds = base.C_plus - base.C_minus
    return GapReport(phi_plus - phi_minus, np.diag(eqodds).copy(), eqodds, Method.CLOSED_FORM)


def scenario_phi(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Rates used by the closed forms: derived from ``C`` when possible, else supplied."""
    try:
        cond = unmemorized_conditionals(scenario.joint, scenario.memo)
    except (DegenerateSlice, InconsistentMasses):
        if scenario.base.has_phi:
            return scenario.base.phi_plus, scenario.base.phi_minus
        raise MissingPhi("prediction rates not supplied and the unmemorized slice is degenerate")
    return cond[1] @ scenario.base.C_plus, cond[0] @ scenario.base.C_minus


def sp_gap(scenario: Scenario, phi: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Statistical parity gap for every predicted label.

    ``phi`` overrides the rates of the base classifier; use it to hold them
    fixed while the memorized composition varies.
    """
    joint, memo = scenario.joint, scenario.memo
    pp = joint.plus_total
    if not (ZERO_MASS < pp < 1.0 - ZERO_MASS):
        raise DegenerateGroup(f"p^+ = {pp!r}; statistical parity needs both groups present")
    phi_plus, phi_minus = scenario_phi(scenario) if phi is None else phi
    phi_plus = np.asarray(phi_plus, dtype=float)
    phi_minus = np.asarray(phi_minus, dtype=float)
    p_D, q, q_plus = memo.p_D, memo.q, memo.q_plus
    qp = float(q_plus.sum())

    base_sp = phi_plus - phi_minus
    correction = p_D / (pp * (1 - pp)) * (phi_plus * (pp - qp) - (q * pp - q_plus))
    return correction + base_sp * (1 - p_D * (1 - qp) / (1 - pp))


def _class_masses(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    p_plus = scenario.joint.p_plus
    p_y = scenario.joint.p_y
    for y in range(scenario.K):
        if p_plus[y] <= ZERO_MASS or p_y[y] - p_plus[y] <= ZERO_MASS:
            raise DegenerateClassGroup(f"class {y} has no mass in one of the groups", y=y)
    return p_plus, p_y


def eqodds_gap(scenario: Scenario) -> np.ndarray:
    """Equalized odds gap as a ``K x K`` matrix indexed ``[y, yhat]``."""
    p_plus, p_y = _class_masses(scenario)
    memo, base = scenario.memo, scenario.base
    p_D, q, q_plus = memo.p_D, memo.q, memo.q_plus
    K = scenario.K

    shift = (q * p_plus - p_y * q_plus)[:, None]
    scale = (p_D / (p_plus * (p_y - p_plus)))[:, None]
    base_odds = base.C_plus - base.C_minus
    damping = (1 - p_D * (q - q_plus) / (p_y - p_plus))[:, None]
    return scale * (base.C_plus - np.eye(K)) * shift + base_odds * damping


def eqopp_gap(scenario: Scenario) -> np.ndarray:
    """Equal opportunity gap for every true label."""
    p_plus, p_y = _class_masses(scenario)
    memo, base = scenario.memo, scenario.base
    p_D, q, q_plus = memo.p_D, memo.q, memo.q_plus
    c_plus = np.diag(base.C_plus)
    base_opp = c_plus - np.diag(base.C_minus)

    correction = p_D / (p_plus * (p_y - p_plus)) * (c_plus - 1) * (q * p_plus - p_y * q_plus)
    return correction + base_opp * (1 - p_D * (q - q_plus) / (p_y - p_plus))


def closed_form_gaps(scenario: Scenario, phi: tuple[np.ndarray, np.ndarray] | None = None) -> GapReport:
    if phi is None:
        phi = scenario_phi(scenario)
    return GapReport(sp_gap(scenario, phi), eqopp_gap(scenario), eqodds_gap(scenario),
                     Method.CLOSED_FORM, base=base_gaps(scenario.base, phi))


def _conditional(mass: np.ndarray, total: np.ndarray, what: str) -> np.ndarray:
    total = np.asarray(total)
    if np.any(total <= ZERO_MASS):
        raise DegenerateSlice(f"zero-mass conditioning event while computing {what}")
    return mass / total


def gaps_from_table(table: np.ndarray, method: Method = Method.ENUMERATION,
                    with_base: bool = True) -> GapReport:
    """All gap definitions evaluated directly on a table indexed ``[a, y, d, yhat]``.

    ``with_base`` also evaluates the gaps on the unmemorized slice, which is
    undefined (and raises) once some label/group cell is entirely memorized.
    """
    by_a_yhat = table.sum(axis=(1, 2))                      # [a, yhat]
    pred_given_a = _conditional(by_a_yhat, by_a_yhat.sum(axis=1, keepdims=True), "P(Yhat | A)")
    by_a_y_yhat = table.sum(axis=2)                         # [a, y, yhat]
    pred_given_ay = _conditional(by_a_y_yhat, by_a_y_yhat.sum(axis=2, keepdims=True),
                                 "P(Yhat | A, Y)")
    sp = pred_given_a[1] - pred_given_a[0]
    eqodds = pred_given_ay[1] - pred_given_ay[0]
    if not with_base:
        return GapReport(sp, np.diag(eqodds).copy(), eqodds, method)

    rest = table[:, :, 0, :]
    rest_a = rest.sum(axis=1)
    phi = _conditional(rest_a, rest_a.sum(axis=1, keepdims=True), "P(Yhat | A, D=0)")
    C = _conditional(rest, rest.sum(axis=2, keepdims=True), "P(Yhat | A, Y, D=0)")
    base_odds = C[1] - C[0]
    base = GapReport(phi[1] - phi[0], np.diag(base_odds).copy(), base_odds, method)
    return GapReport(sp, np.diag(eqodds).copy(), eqodds, method, base=base)


def gaps_by_enumeration(scenario: Scenario, with_base: bool = True) -> GapReport:
    """Reference gaps obtained by marginalizing the exact joint table."""
    return gaps_from_table(joint_table(scenario).table, with_base=with_base)
