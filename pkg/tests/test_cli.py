import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from factories import SCENARIO_DIR, random_scenario
from memfair import cli

EQOPP = SCENARIO_DIR / "eqopp_worked.json"
SP = SCENARIO_DIR / "sp_worked.json"
EQODDS = SCENARIO_DIR / "eqodds_worked.json"


def run(tmp_path, *argv):
    out = tmp_path / "report.json"
    code = cli.main([*map(str, argv), "--out", str(out)])
    report = json.loads(out.read_text())
    assert report["exit_status"] == code
    return code, report


def write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def load(path):
    return json.loads(path.read_text())


class TestGaps:
    def test_verify(self, tmp_path):
        code, report = run(tmp_path, "gaps", EQOPP, "--verify")
        assert code == 0
        assert report["results"]["closed_form"]["eqopp"][0] == pytest.approx(1 / 30, abs=1e-12)
        assert report["results"]["max_discrepancy"] < 1e-10
        assert report["inputs_digest"] == "sha256:" + hashlib.sha256(EQOPP.read_bytes()).hexdigest()
        assert report["schema_version"] == cli.SCHEMA_VERSION

    def test_symmetric_scenario(self, tmp_path):
        doc = load(EQOPP)
        doc["population"] = {"p_plus": [0.25, 0.25], "p_minus": [0.25, 0.25]}
        doc["memorization"]["q_plus"] = [0.25, 0.25]
        code, report = run(tmp_path, "gaps", write(tmp_path, doc))
        assert code == 0
        assert np.max(np.abs(report["results"]["closed_form"]["eqodds"])) < 1e-15

    def test_bad_q_sum(self, tmp_path, capsys):
        doc = load(EQOPP)
        doc["memorization"]["q"] = [0.5, 0.4]
        code, report = run(tmp_path, "gaps", write(tmp_path, doc))
        assert code == 2
        assert any("memorization.q.sum" in d for d in report["diagnostics"])
        assert "memorization.q.sum" in capsys.readouterr().out

    def test_needs_memorization(self, tmp_path):
        doc = load(EQOPP)
        del doc["memorization"]
        assert run(tmp_path, "gaps", write(tmp_path, doc))[0] == 2

    def test_degenerate_class(self, tmp_path):
        doc = load(EQOPP)
        doc["population"] = {"p_plus": [0.5, 0.0], "p_minus": [0.25, 0.25]}
        doc["memorization"] = {"p_D": 0.1, "q": [0.5, 0.5], "q_plus": [0.25, 0.0]}
        code, report = run(tmp_path, "gaps", write(tmp_path, doc))
        assert code == 3
        assert "DegenerateClassGroup" in report["diagnostics"][0]

    def test_supplied_rates_mismatch_noted(self, tmp_path):
        doc = load(EQOPP)
        doc["base_classifier"]["phi_plus"] = [0.5, 0.5]
        doc["base_classifier"]["phi_minus"] = [0.5, 0.5]
        code, report = run(tmp_path, "gaps", write(tmp_path, doc))
        assert code == 0
        assert report["results"]["phi_discrepancy"] > 1e-3
        assert any("derived values used" in d for d in report["diagnostics"])


class TestSolve:
    def test_sp(self, tmp_path):
        code, report = run(tmp_path, "solve", SP, "--metric", "sp", "--pd", "0.3")
        assert code == 0
        assert report["results"]["residual"] < 1e-8
        block = report["results"]["memorization"]
        assert set(block) == {"p_D", "q", "q_plus"}

    def test_witness_block_is_reusable(self, tmp_path):
        _, report = run(tmp_path, "solve", SP, "--metric", "sp", "--pd", "0.3",
                        "--mode", "consistent")
        doc = load(SP)
        doc["memorization"] = report["results"]["memorization"]
        code, gaps = run(tmp_path, "gaps", write(tmp_path, doc, "reuse.json"), "--verify")
        assert code == 0
        assert np.max(np.abs(gaps["results"]["enumeration"]["sp"])) < 1e-8

    def test_sp_infeasible(self, tmp_path):
        code, report = run(tmp_path, "solve", SP, "--metric", "sp", "--pd", "0.01")
        assert code == 1
        assert report["results"]["status"] == "infeasible"
        assert report["results"]["certificate"]

    def test_eqodds(self, tmp_path):
        code, report = run(tmp_path, "solve", EQODDS, "--metric", "eqodds")
        assert code == 0
        res = report["results"]
        assert res["p_D_required"] == pytest.approx(0.76, abs=1e-12)
        np.testing.assert_allclose(res["memorization"]["q_plus"], [0.27 / 0.76, 0.12 / 0.76],
                                   atol=1e-12)

    def test_eqopp_below_threshold(self, tmp_path, capsys):
        code, report = run(tmp_path, "solve", EQODDS, "--metric", "eqopp", "--pd", "0.2")
        assert code == 1
        assert len(report["results"]["certificate"]) == 5
        assert "Farkas certificate" in capsys.readouterr().out

    def test_eqodds_already_fair(self, tmp_path):
        assert run(tmp_path, "solve", EQOPP, "--metric", "eqodds")[0] == 1

    def test_eqodds_vanishing_denominator(self, tmp_path):
        doc = load(EQODDS)
        doc["base_classifier"]["C_minus"] = [[0.8, 0.2], [0.4, 0.6]]
        assert run(tmp_path, "solve", write(tmp_path, doc), "--metric", "eqodds")[0] == 3

    def test_eqopp_perfect_class(self, tmp_path):
        doc = load(EQODDS)
        doc["base_classifier"]["C_plus"] = [[1.0, 0.0], [0.3, 0.7]]
        code = run(tmp_path, "solve", write(tmp_path, doc), "--metric", "eqopp", "--pd", "0.3")[0]
        assert code == 3

    def test_missing_pd(self, tmp_path):
        assert run(tmp_path, "solve", SP, "--metric", "sp")[0] == 2


class TestBounds:
    def test_sp(self, tmp_path):
        code, report = run(tmp_path, "bounds", SP, "--metric", "sp", "--pd", "0.5")
        assert code == 0
        assert report["results"]["bounds"]["sufficient"]["stated"] == pytest.approx(1 / 6, abs=1e-12)
        assert report["results"]["verdict"] == "GuaranteedFeasible"

    def test_shared_confusion(self, tmp_path):
        code, report = run(tmp_path, "bounds", EQOPP, "--metric", "eqopp")
        assert code == 0
        b = report["results"]["bounds"]
        assert all(v == 0 for v in [*b["sufficient"].values(), *b["necessary"].values()])

    def test_zero_rate(self, tmp_path):
        doc = load(SP)
        doc["base_classifier"]["phi_minus"] = [1.0, 0.0]
        assert run(tmp_path, "bounds", write(tmp_path, doc), "--metric", "sp")[0] == 3

    def test_perfect_class(self, tmp_path):
        doc = load(EQODDS)
        doc["base_classifier"]["C_minus"] = [[0.9, 0.1], [0.0, 1.0]]
        assert run(tmp_path, "bounds", write(tmp_path, doc), "--metric", "eqopp")[0] == 3


class TestSimulate:
    def test_pass(self, tmp_path):
        code, report = run(tmp_path, "simulate", EQODDS, "--seed", "3")
        assert code == 0 and report["results"]["passed"]

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            cli.main(["simulate", str(SP), "--samples", "100000", "--seed", "5", "--out", str(path)])
        assert a.read_bytes() == b.read_bytes()

    def test_tiny_band(self, tmp_path):
        assert run(tmp_path, "simulate", EQOPP, "--z", "0.0001")[0] == 1


class TestInput:
    def test_unknown_field(self, tmp_path):
        doc = load(EQOPP)
        doc["memorization"]["extra"] = 1
        assert run(tmp_path, "gaps", write(tmp_path, doc))[0] == 2

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run(tmp_path, "gaps", path)[0] == 2

    def test_wrong_shape(self, tmp_path):
        doc = load(EQOPP)
        doc["population"]["p_plus"] = [0.3, 0.2, 0.0]
        assert run(tmp_path, "gaps", write(tmp_path, doc))[0] == 2

    def test_missing_file(self, tmp_path):
        assert cli.main(["gaps", str(tmp_path / "nope.json")]) == 2

    def test_normalize_flag(self, tmp_path):
        doc = load(EQOPP)
        doc["population"] = {"p_plus": [3, 2], "p_minus": [2, 3]}
        path = write(tmp_path, doc)
        assert run(tmp_path, "gaps", path)[0] == 2
        code, report = run(tmp_path, "gaps", path, "--normalize")
        assert code == 0
        assert report["results"]["closed_form"]["eqopp"][0] == pytest.approx(1 / 30, abs=1e-12)

    def test_input_not_modified(self, tmp_path):
        path = write(tmp_path, load(SP))
        before = path.read_bytes()
        run(tmp_path, "solve", path, "--metric", "sp", "--pd", "0.3")
        assert path.read_bytes() == before


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scenario_round_trip(seed):
    s = random_scenario(np.random.default_rng(seed), with_phi=bool(seed % 2))
    doc = cli.scenario_document(s.joint, s.base, s.memo)
    text = cli.dumps(doc)
    assert cli.loads(text) == doc
    joint, base, memo = cli.parse_scenario(cli.loads(text))
    np.testing.assert_array_equal(joint.p_plus, s.joint.p_plus)
    np.testing.assert_array_equal(base.C_minus, s.base.C_minus)
    np.testing.assert_array_equal(memo.q_plus, s.memo.q_plus)
    assert memo.p_D == s.memo.p_D


@settings(max_examples=200, deadline=None)
@given(st.recursive(
    st.none() | st.booleans() | st.integers(-2**53, 2**53) | st.text(max_size=5)
    | st.floats(allow_nan=False, allow_infinity=False),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=5), children, max_size=4),
    max_leaves=20))
def test_report_round_trip(value):
    assert cli.loads(cli.dumps(value)) == value


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "memfair", "bounds", str(SP), "--metric", "sp"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "sufficient" in proc.stdout
