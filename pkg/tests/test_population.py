import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from factories import (C_A, P_MINUS, P_PLUS, eqodds_worked, random_scenario, uneven_joint)
from memfair import (BaseClassifier, DegenerateSlice, InconsistentMasses, LabelGroupJoint,
                     MemorizedComposition, Scenario, Strictness, derive_phi, joint_table,
                     unmemorized_conditionals, validate, validate_inputs)


def symmetric_scenario():
    joint = LabelGroupJoint(np.full(2, 0.25), np.full(2, 0.25))
    memo = MemorizedComposition(0.2, np.array([0.5, 0.5]), np.array([0.25, 0.25]))
    return Scenario(joint, memo, BaseClassifier(C_A, C_A))


class TestValidate:
    @pytest.mark.parametrize("tier", list(Strictness))
    def test_symmetric_passes_every_tier(self, tier):
        assert validate(symmetric_scenario(), tier).passed

    def test_q_sum_violation_named(self):
        s = symmetric_scenario()
        bad = s.with_memo(MemorizedComposition(0.2, np.array([0.5, 0.4]), np.array([0.2, 0.2])))
        report = validate(bad, Strictness.BASIC)
        assert not report.passed
        assert "memorization.q.sum" in report.invariants()
        assert report.failed_tiers() == {Strictness.BASIC}

    def test_mass_consistency_fails_only_consistent_tier(self):
        memo = MemorizedComposition(0.5, np.array([0.8, 0.2]), np.array([0.8, 0.0]))
        s = Scenario(uneven_joint(), memo, BaseClassifier(C_A, C_A))
        assert validate(s, Strictness.BASIC).passed
        assert validate(s, Strictness.STRICT).passed
        report = validate(s, Strictness.CONSISTENT)
        assert report.failed_tiers() == {Strictness.CONSISTENT}
        assert "memorization.plus.mass" in report.invariants()

    def test_strict_needs_positive_cells(self):
        joint = LabelGroupJoint(np.array([0.5, 0.0]), np.array([0.25, 0.25]))
        memo = MemorizedComposition(0.1, np.array([0.5, 0.5]), np.array([0.25, 0.0]))
        s = Scenario(joint, memo, BaseClassifier(C_A, C_A))
        assert validate(s, Strictness.BASIC).passed
        assert "population.p_plus.positive" in validate(s, Strictness.STRICT).invariants()

    def test_mass_on_empty_cell_rejected_when_consistent(self):
        joint = LabelGroupJoint(np.array([0.5, 0.0]), np.array([0.25, 0.25]))
        memo = MemorizedComposition(0.1, np.array([0.5, 0.5]), np.array([0.25, 0.25]))
        report = validate(Scenario(joint, memo, BaseClassifier(C_A, C_A)), Strictness.CONSISTENT)
        assert "memorization.plus.empty_cell" in report.invariants()

    def test_p_D_out_of_range(self):
        s = symmetric_scenario()
        assert "memorization.p_D" in validate(s.with_memo(s.memo.with_p_D(0.0))).invariants()

    def test_bad_confusion_row(self):
        C = np.array([[0.8, 0.3], [0.3, 0.7]])
        report = validate_inputs(uneven_joint(), BaseClassifier(C, C_A))
        assert "C_plus.row_sum" in report.invariants()

    def test_validation_reports_instead_of_raising(self):
        joint = LabelGroupJoint(np.array([np.nan, 0.5]), np.array([0.25, 0.25]))
        assert not validate_inputs(joint, BaseClassifier(C_A, C_A)).passed


class TestUnmemorized:
    def test_proportional_memorization_keeps_conditionals(self):
        joint = uneven_joint()
        memo = MemorizedComposition(0.3, joint.p_y.copy(), P_PLUS.copy())
        cond = unmemorized_conditionals(joint, memo)
        np.testing.assert_allclose(cond[1], P_PLUS / P_PLUS.sum(), atol=1e-15)
        np.testing.assert_allclose(cond[0], P_MINUS / P_MINUS.sum(), atol=1e-15)

    def test_hand_computed_conditional(self):
        memo = MemorizedComposition(0.2, np.array([0.5, 0.5]), np.array([0.4, 0.1]))
        cond = unmemorized_conditionals(uneven_joint(), memo)
        # (0.3 - 0.08) / (0.5 - 0.1)
        assert cond[1, 0] == pytest.approx(0.55, abs=1e-15)
        np.testing.assert_allclose(cond.sum(axis=1), 1.0, atol=1e-15)

    def test_whole_group_memorized(self):
        # p_D * q^+ = p^+ = 0.5
        memo = MemorizedComposition(0.6, np.array([0.5, 0.5]), np.array([0.5, 1 / 3]))
        with pytest.raises(DegenerateSlice):
            unmemorized_conditionals(uneven_joint(), memo)

    def test_inconsistent_masses_raise(self):
        memo = MemorizedComposition(0.5, np.array([0.8, 0.2]), np.array([0.8, 0.0]))
        with pytest.raises(InconsistentMasses):
            unmemorized_conditionals(uneven_joint(), memo)


class TestDerivePhi:
    def test_identity_classifier_gives_label_mix(self):
        memo = MemorizedComposition(0.2, np.array([0.5, 0.5]), np.array([0.4, 0.1]))
        base = BaseClassifier(np.eye(2), C_A)
        rates = derive_phi(uneven_joint(), memo, base)
        np.testing.assert_allclose(rates.plus, unmemorized_conditionals(uneven_joint(), memo)[1])
        assert rates.discrepancy is None

    def test_uniform_conditionals(self):
        joint = LabelGroupJoint(np.full(2, 0.25), np.full(2, 0.25))
        memo = MemorizedComposition(0.2, np.array([0.5, 0.5]), np.array([0.25, 0.25]))
        rates = derive_phi(joint, memo, BaseClassifier(C_A, C_A))
        np.testing.assert_allclose(rates.plus, [0.55, 0.45], atol=1e-15)

    def test_supplied_rates_returned_with_discrepancy(self):
        s = eqodds_worked()
        derived = derive_phi(s.joint, s.memo, s.base)
        base = BaseClassifier(s.base.C_plus, s.base.C_minus, derived.plus, derived.minus)
        again = derive_phi(s.joint, s.memo, base)
        assert again.discrepancy == 0.0
        np.testing.assert_array_equal(again.plus, derived.plus)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_rates_on_simplex(self, seed):
        s = random_scenario(np.random.default_rng(seed))
        rates = derive_phi(s.joint, s.memo, s.base)
        for v in (rates.plus, rates.minus):
            assert np.all(v >= 0)
            assert v.sum() == pytest.approx(1.0, abs=1e-12)


class TestJointTable:
    def test_tiny_memorization(self):
        joint = uneven_joint()
        memo = MemorizedComposition(1e-9, np.array([0.5, 0.5]), np.array([0.25, 0.25]))
        table = joint_table(Scenario(joint, memo, BaseClassifier(C_A, C_A))).table
        assert table[:, :, 1, :].sum() == pytest.approx(1e-9, rel=1e-9)
        np.testing.assert_allclose(table.sum(axis=(2, 3)), joint.by_group(), atol=1e-12)

    def test_eqodds_scenario_memorized_mass(self):
        table = joint_table(eqodds_worked()).table
        assert table[:, :, 1, :].sum() == pytest.approx(0.76, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip(self, seed):
        s = random_scenario(np.random.default_rng(seed))
        table = joint_table(s).table
        K = s.K
        assert np.all(table >= 0)
        assert table.sum() == pytest.approx(1.0, abs=1e-12)
        off = ~np.eye(K, dtype=bool)
        assert np.all(table[:, :, 1, :][:, off] == 0.0)
        np.testing.assert_allclose(table.sum(axis=(2, 3)), s.joint.by_group(), atol=1e-12)
        d1 = table[:, :, 1, :].sum(axis=2)
        np.testing.assert_allclose(d1.sum(axis=0) / s.memo.p_D, s.memo.q, atol=1e-12)
        np.testing.assert_allclose(d1[1] / s.memo.p_D, s.memo.q_plus, atol=1e-12)
        rest = table[:, :, 0, :]
        rows = rest.sum(axis=2, keepdims=True)
        mask = rows[..., 0] > 1e-12
        np.testing.assert_allclose((rest / np.where(rows > 0, rows, 1))[mask],
                                   s.base.by_group()[mask], atol=1e-9)

    def test_inconsistent_rejected(self):
        memo = MemorizedComposition(0.5, np.array([0.8, 0.2]), np.array([0.8, 0.0]))
        with pytest.raises(InconsistentMasses):
            joint_table(Scenario(uneven_joint(), memo, BaseClassifier(C_A, C_A)))


def test_values_are_read_only():
    s = symmetric_scenario()
    with pytest.raises(ValueError):
        s.joint.p_plus[0] = 1.0
    with pytest.raises(ValueError):
        s.base.C_plus[0, 0] = 1.0


def test_swap_is_an_involution():
    s = random_scenario(np.random.default_rng(3))
    back = s.swapped().swapped()
    np.testing.assert_allclose(back.memo.q_plus, s.memo.q_plus, atol=1e-15)
    np.testing.assert_array_equal(back.base.C_plus, s.base.C_plus)
    np.testing.assert_array_equal(back.joint.p_minus, s.joint.p_minus)
