import json
import re

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from povmtomo import io
from povmtomo.cli import EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, main, run
from povmtomo.core import CountTable, PovmSet, ProbeEnsemble, probability_table, validate_povm
from povmtomo.errors import FileFormatError
from povmtomo.simulator import probe_states_12, stern_gerlach_povms

from conftest import random_povm, random_state


@pytest.fixture
def sg_files(tmp_path):
    exp, truth = tmp_path / "exp.json", tmp_path / "truth.json"
    code, _ = run(["simulate", "--seed", "7", "--shots", "30", "-o", str(exp), "--truth-out", str(truth)])
    assert code == EXIT_OK
    return exp, truth


def _corrupt(path, edit):
    doc = json.loads(path.read_text())
    edit(doc)
    path.write_text(json.dumps(doc))


# file formats --------------------------------------------------------------


@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4), st.integers(1, 6))
def test_experiment_round_trip(tmp_path, seed, n, k, m):
    rng = np.random.default_rng(seed)
    probes = ProbeEnsemble(tuple(random_state(rng, n) for _ in range(m)))
    counts = CountTable(rng.integers(0, 10**12, size=(k, m)))
    path = tmp_path / "e.json"
    io.write_experiment(path, io.ExperimentFile(probes, counts, {"seed": seed}))
    back = io.read_experiment(path)
    assert np.array_equal(back.probes.stack(), probes.stack())
    assert np.array_equal(back.counts.counts, counts.counts)
    assert back.probes.labels == probes.labels and back.metadata == {"seed": seed}


@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
def test_result_round_trip(tmp_path, seed, n, k):
    rng = np.random.default_rng(seed)
    povm = PovmSet(random_povm(rng, n, k))
    diag = {"iterations": 12, "final_loglik": -0.123456789012345678, "converged": True}
    path = tmp_path / "r.json"
    io.write_result(path, io.ResultFile(povm, diag))
    back = io.read_result(path)
    assert np.array_equal(back.povm.operators, povm.operators)
    assert back.diagnostics == diag


def test_complex_entries_are_pairs(tmp_path):
    path = tmp_path / "p.json"
    io.write_povm(path, PovmSet(np.array([[[1, 2j], [-2j, 3]]])))
    doc = json.loads(path.read_text())
    assert doc["format_version"] == "1"
    assert doc["povms"][0][0][1] == [0.0, 2.0]


@pytest.mark.parametrize("edit, where", [
    (lambda d: d["probes"][3]["matrix"][1].__setitem__(0, "0.5"), "$.probes[3].matrix[1][0]"),
    (lambda d: d["counts"][2].__setitem__(5, 1.5), "$.counts[2][5]"),
    (lambda d: d["counts"][1].pop(), "$.counts[1]"),
    (lambda d: d.__setitem__("format_version", "2"), "$.format_version"),
    (lambda d: d.pop("dim"), "missing field 'dim'"),
    (lambda d: d["probes"][0].__setitem__("matrix", [[[2, 0], [0, 0], [0, 0]]] * 3), "$.probes[0].matrix"),
])
def test_parse_errors_name_the_location(sg_files, edit, where):
    exp, _ = sg_files
    _corrupt(exp, edit)
    with pytest.raises(FileFormatError, match=re.escape(where)):
        io.read_experiment(exp)


def test_invalid_json_reports_line(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "format_version": "1",\n oops\n}')
    with pytest.raises(FileFormatError, match="line 3"):
        io.read_experiment(bad)


# simulate ------------------------------------------------------------------


def test_simulate_fixture(sg_files):
    exp = io.read_experiment(sg_files[0])
    assert len(exp.probes) == 12 and exp.counts.shape == (3, 12)
    np.testing.assert_array_equal(exp.counts.shots_per_state, 30)
    assert exp.metadata["seed"] == 7


def test_simulate_prints_probability_table(tmp_path):
    code, out = run(["simulate", "--seed", "1", "-o", str(tmp_path / "e.json")])
    assert code == EXIT_OK
    assert "true outcome probabilities" in out and "|1z>" in out


def test_simulate_rejects_zero_shots(tmp_path, capsys):
    assert main(["simulate", "--shots", "0", "-o", str(tmp_path / "e.json")]) == EXIT_USAGE
    assert "--shots" in capsys.readouterr().err
    assert not (tmp_path / "e.json").exists()


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["simulate", "--seed", "11", "-o", str(a)])
    run(["simulate", "--seed", "11", "-o", str(b)])
    assert json.loads(a.read_text())["counts"] == json.loads(b.read_text())["counts"]
    assert a.read_bytes() == b.read_bytes()


def test_simulate_custom_povm_and_probes(tmp_path):
    rng = np.random.default_rng(4)
    povm_path, probe_path = tmp_path / "povm.json", tmp_path / "probes.json"
    io.write_povm(povm_path, PovmSet(random_povm(rng, 2, 2)))
    io.write_probes(probe_path, ProbeEnsemble(tuple(random_state(rng, 2) for _ in range(4))))
    out = tmp_path / "e.json"
    code, _ = run(["simulate", "--povm", str(povm_path), "--probes", str(probe_path), "--shots", "9", "-o", str(out)])
    assert code == EXIT_OK
    assert io.read_experiment(out).counts.shape == (2, 4)


def test_simulate_dimension_mismatch(tmp_path):
    povm_path = tmp_path / "povm.json"
    io.write_povm(povm_path, PovmSet.uniform(2, 2))
    assert main(["simulate", "--povm", str(povm_path), "-o", str(tmp_path / "e.json")]) == EXIT_USAGE


# estimate ------------------------------------------------------------------


def test_estimate_dform_fixture(sg_files, tmp_path):
    res_path = tmp_path / "res.json"
    code, out = run(["estimate", str(sg_files[0]), "-o", str(res_path)])
    assert code == EXIT_OK and "converged" in out
    res = io.read_result(res_path)
    assert res.diagnostics["converged"] is True and res.diagnostics["estimator"] == "ml-dform"
    assert res.diagnostics["physical"] is True
    assert validate_povm(res.povm).passed
    assert run(["validate", str(res_path)])[0] == EXIT_OK


def test_estimate_linear_is_flagged_non_physical(sg_files, tmp_path):
    res_path = tmp_path / "lin.json"
    code, out = run(["estimate", str(sg_files[0]), "-m", "linear", "-o", str(res_path)])
    assert code == EXIT_INVALID
    res = io.read_result(res_path)
    assert res.diagnostics["physical"] is False
    assert res.diagnostics["constraint_residuals"]["min_eigenvalue"] < -1e-8
    code, out = run(["validate", str(res_path)])
    worst = res.diagnostics["constraint_residuals"]["worst_outcome"]
    assert code == EXIT_INVALID
    assert f"offending outcome {worst}" in out and "min eigenvalue -" in out


def test_estimate_not_converged_still_writes(sg_files, tmp_path):
    res_path = tmp_path / "r.json"
    code, _ = run(["estimate", str(sg_files[0]), "--max-iterations", "5", "-o", str(res_path)])
    assert code == EXIT_NOT_CONVERGED
    assert io.read_result(res_path).diagnostics["iterations"] == 5


@pytest.mark.parametrize("method", ["ml-fixed", "ml-diag", "simplex"])
def test_estimate_other_methods_run(sg_files, tmp_path, method):
    res_path = tmp_path / "r.json"
    code, _ = run(["estimate", str(sg_files[0]), "-m", method, "-o", str(res_path)])
    assert code in (EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED)
    assert io.read_result(res_path).diagnostics["estimator"] == method


def test_estimate_exact_input_fixed_vs_dform(tmp_path):
    # "exact" counts: 10^12 shots per probe, rounded; zero-probability cells stay zero
    probes = probe_states_12()
    p = np.clip(probability_table(stern_gerlach_povms(), probes), 0, None)
    counts = CountTable(np.rint(p * 1e12).astype(np.int64))
    exp = tmp_path / "exact.json"
    io.write_experiment(exp, io.ExperimentFile(probes, counts))
    outs = {}
    for method, budget in (("ml-fixed", "200000"), ("ml-dform", "100000")):
        path = tmp_path / f"{method}.json"
        code, _ = run(["estimate", str(exp), "-m", method, "-o", str(path),
                       "--max-iterations", budget, "--tol", "1e-15"])
        assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
        outs[method] = io.read_povm(path).operators
    assert np.all(np.linalg.norm(outs["ml-fixed"] - outs["ml-dform"], axis=(1, 2)) < 1e-6)


def test_estimate_bad_inputs(sg_files, tmp_path, capsys):
    out = str(tmp_path / "r.json")
    assert main(["estimate", str(sg_files[0]), "-m", "nope", "-o", out]) == EXIT_USAGE
    assert main(["estimate", str(tmp_path / "missing.json"), "-o", out]) == EXIT_USAGE
    _corrupt(sg_files[0], lambda d: d["counts"].__setitem__(0, d["counts"][0][:5]))
    assert main(["estimate", str(sg_files[0]), "-o", out]) == EXIT_USAGE
    assert "$.counts[0]" in capsys.readouterr().err


# compare -------------------------------------------------------------------


def test_compare_with_itself(sg_files):
    code, out = run(["compare", str(sg_files[1]), str(sg_files[1])])
    assert code == EXIT_OK
    assert out.count("0.000000e+00") == 3


def test_compare_truth_against_uniform(sg_files, tmp_path):
    uni = tmp_path / "uni.json"
    io.write_povm(uni, PovmSet.uniform(3, 3))
    code, out = run(["compare", str(uni), "--reference-sg"])
    assert code == EXIT_OK
    expected = f"{np.sqrt(2 / 3):.6e}"
    assert out.count(expected) == 3


def test_compare_csv(sg_files, tmp_path):
    res, csv_path = tmp_path / "res.json", tmp_path / "cmp.csv"
    run(["estimate", str(sg_files[0]), "-o", str(res)])
    code, _ = run(["compare", str(res), str(sg_files[1]), "--csv", str(csv_path)])
    assert code == EXIT_OK
    raw = csv_path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == "outcome_index,component_index,estimated,reference"
    assert len(lines) == 3 * 9 + 1
    assert [ln.split(",")[1] for ln in lines[1:10]] == [str(c) for c in range(9)]


def test_compare_shape_mismatch(sg_files, tmp_path):
    other = tmp_path / "two.json"
    io.write_povm(other, PovmSet.uniform(2, 3))
    assert main(["compare", str(other), str(sg_files[1])]) == EXIT_USAGE
    assert main(["compare", str(other)]) == EXIT_USAGE


# validate ------------------------------------------------------------------


def test_validate_truth(sg_files):
    code, out = run(["validate", str(sg_files[1])])
    assert code == EXIT_OK and "PASS" in out


def test_validate_broken_completeness(sg_files):
    truth = sg_files[1]
    povm = io.read_povm(truth).operators.copy()
    povm[0] *= 1.1
    io.write_povm(truth, povm)
    code, out = run(["validate", str(truth)])
    assert code == EXIT_INVALID
    resid = validate_povm(povm).completeness_residual
    assert resid == pytest.approx(0.1 * np.linalg.norm(stern_gerlach_povms()[0]), rel=1e-9)
    assert f"{resid:.3e}" in out


def test_validate_parse_failure(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    assert main(["validate", str(bad)]) == EXIT_USAGE


@pytest.mark.parametrize("cmd", ["simulate", "estimate", "compare", "validate"])
def test_help(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    assert "usage: povmtomo " + cmd in capsys.readouterr().out


def test_pipeline_is_reproducible(tmp_path):
    outputs = []
    for tag in "ab":
        exp, res, csv_path = (tmp_path / f"{tag}{x}" for x in ("e.json", "r.json", ".csv"))
        run(["simulate", "--seed", "3", "-o", str(exp)])
        run(["estimate", str(exp), "-o", str(res)])
        run(["compare", str(res), "--reference-sg", "--csv", str(csv_path)])
        outputs.append((res.read_bytes(), csv_path.read_bytes()))
    assert outputs[0] == outputs[1]
