import warnings
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from povmtomo import kernels
from povmtomo.core import CountTable, DensityMatrix, FrequencyTable, PovmSet, ProbeEnsemble, validate_povm
from povmtomo.errors import DegenerateDataWarning, NotConvergedWarning, RankDeficientProbesWarning, ShapeMismatch
from povmtomo.estimators import (
    EstimatorOptions,
    linear_inversion,
    ml_diagonal,
    ml_dform,
    ml_fixed_point,
    ml_simplex,
    support_projector,
)
from povmtomo.estimators.simplex import LikelihoodObjective, n_parameters, params_to_povm, povm_to_params
from povmtomo.simulator import SimConfig, exact_frequencies, sample_counts

from conftest import random_povm, random_state

ML = [ml_fixed_point, ml_dform]


def frob(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b), axis=(-2, -1))


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        return fn(*args, **kw)


# diagonal detector: click probability 1 - (1 - eta)^n (1 - dark) on photon number n
def click_povm(eta=0.6, dark=0.05, n=4):
    click = 1 - (1 - eta) ** np.arange(n) * (1 - dark)
    r = np.stack([1 - click, click])
    return r, PovmSet(np.stack([np.diag(x) for x in r]).astype(complex))


def poisson_probes(means=(0.05, 0.5, 1.5, 4.0, 10.0), n=4):
    states = []
    for mu in means:
        w = np.array([np.exp(-mu) * mu**j / factorial(j) for j in range(n)])
        states.append(np.diag(w / w.sum()))
    return ProbeEnsemble(tuple(states))


def qubit_problem(theta=1.1, phi=0.7):
    psi = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    p1 = np.outer(psi, psi.conj())
    povm = PovmSet(np.stack([p1, np.eye(2) - p1]))
    kets = [[1, 0], [0, 1], [1, 1], [1, -1], [1, 1j], [1, -1j]]
    probes = ProbeEnsemble(tuple(DensityMatrix.from_ket(k) for k in kets))
    return povm, probes, exact_frequencies(povm, probes)


# linear inversion ----------------------------------------------------------


def test_linear_exact_sg(sg_povm, probes12):
    res = linear_inversion(exact_frequencies(sg_povm, probes12), probes12)
    assert np.all(frob(res.operators, sg_povm.operators) < 1e-9)
    assert res.rank == 9 and not res.rank_deficient
    assert res.residual < 1e-12


def test_linear_uniform_povm(probes12):
    uni = PovmSet.uniform(3, 3)
    res = linear_inversion(exact_frequencies(uni, probes12), probes12)
    assert np.all(frob(res.operators, uni.operators) < 1e-12)


def test_linear_counts_can_be_unphysical(probes12):
    res = linear_inversion(sample_counts(SimConfig.stern_gerlach(0, 30)), probes12)
    assert not res.physical
    assert res.validation.min_eigenvalue < -1e-4
    for op in res.operators:
        np.testing.assert_array_equal(op, op.conj().T)


def test_linear_rank_deficient_warns():
    probes = ProbeEnsemble((np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    with pytest.warns(RankDeficientProbesWarning):
        res = linear_inversion(CountTable([[3, 1], [1, 3]]), probes)
    assert res.rank == 2
    np.testing.assert_allclose(res.operators[0], np.diag([0.75, 0.25]))


def test_linear_shape_mismatch(probes12):
    with pytest.raises(ShapeMismatch):
        linear_inversion(CountTable(np.ones((3, 5), dtype=int)), probes12)


# ML iterations -------------------------------------------------------------


@pytest.mark.parametrize("method", ML)
def test_stationary_at_truth(method, sg_povm, probes12):
    f = exact_frequencies(sg_povm, probes12)
    res = method(f, probes12, EstimatorOptions(max_iterations=1, initial_povm=sg_povm))
    assert np.all(frob(res.povm.operators, sg_povm.operators) < 1e-12)


@pytest.mark.parametrize("method", ML)
def test_multiplier_at_solution_is_frequency_weighted_probe_sum(method, sg_povm, probes12):
    f = exact_frequencies(sg_povm, probes12)
    res = method(f, probes12, EstimatorOptions(max_iterations=1, initial_povm=sg_povm))
    lam = np.einsum("lm,mij->ij", f.freqs, probes12.stack())
    assert np.linalg.norm(res.multiplier - lam) < 1e-12


@pytest.mark.parametrize("method", ML + [ml_simplex])
def test_single_outcome_returns_identity(method, probes12):
    res = method(CountTable(np.full((1, 12), 7)), probes12)
    np.testing.assert_allclose(res.povm.operators, np.eye(3)[None], atol=1e-14)


@pytest.fixture(scope="module")
def exact_sg_runs(sg_povm, probes12):
    # the optimum sits on the PSD boundary, where both maps converge like 1/n
    f = exact_frequencies(sg_povm, probes12)
    lin = linear_inversion(f, probes12)
    opts = EstimatorOptions(convergence_tol=1e-15)
    fp = quiet(ml_fixed_point, f, probes12, opts.replace(max_iterations=200_000))
    df = quiet(ml_dform, f, probes12, opts.replace(max_iterations=100_000))
    return lin, fp, df


def test_exact_sg_default_init_converges_to_projectors(exact_sg_runs, sg_povm):
    lin, fp, df = exact_sg_runs
    for res in (fp, df):
        assert np.all(frob(res.povm.operators, lin.operators) < 1e-6)
        assert np.all(frob(res.povm.operators, sg_povm.operators) < 1e-6)


def test_dform_zero_iterations_returns_init(probes12, seed7_counts):
    init = PovmSet(random_povm(np.random.default_rng(1), 3, 3))
    res = ml_dform(seed7_counts, probes12, EstimatorOptions(max_iterations=0, initial_povm=init))
    assert res.iterations_used == 0 and len(res.loglik_trace) == 1
    assert np.all(frob(res.povm.operators, init.operators) < 1e-14)


@pytest.mark.parametrize("method", ML)
def test_trace_length_and_not_converged_warning(method, probes12, seed7_counts):
    with pytest.warns(NotConvergedWarning):
        res = method(seed7_counts, probes12, EstimatorOptions(max_iterations=3))
    assert not res.converged
    assert res.iterations_used == 3 and len(res.loglik_trace) == 4


def test_dform_every_iterate_is_physical(probes12, seed7_counts):
    res = ml_dform(seed7_counts, probes12, EstimatorOptions(record_iterates=True))
    assert len(res.iterates) == res.iterations_used + 1
    for it in res.iterates:
        rep = validate_povm(it)
        assert rep.min_eigenvalue >= -1e-9 and rep.completeness_residual <= 1e-9


def test_fixed_point_and_dform_agree_on_fixture(probes12, seed7_counts):
    fp = ml_fixed_point(seed7_counts, probes12)
    df = ml_dform(seed7_counts, probes12)
    assert fp.converged and df.converged
    assert np.all(frob(fp.povm.operators, df.povm.operators) < 1e-5)
    assert fp.validation.passed and df.validation.passed
    assert df.final_loglik == pytest.approx(fp.final_loglik, abs=1e-9)


@pytest.mark.parametrize("method", ML)
def test_unobserved_outcome_becomes_zero(method, probes12):
    counts = np.array([np.full(12, 10), np.zeros(12, dtype=int), np.full(12, 5)])
    with pytest.warns(DegenerateDataWarning):
        res = quiet(method, counts, probes12, EstimatorOptions(max_iterations=20))
    assert np.linalg.norm(res.povm[1]) < 1e-12
    assert res.validation.passed


def test_fixed_point_solves_probe_independent_data_in_one_step(probes12):
    counts = np.array([np.full(12, 10), np.full(12, 5), np.full(12, 15)])
    res = ml_fixed_point(counts, probes12)
    assert res.converged
    for op, w in zip(res.povm.operators, [1 / 3, 1 / 6, 1 / 2]):
        np.testing.assert_allclose(op, w * np.eye(3), atol=1e-14)


def test_dform_two_cycle_on_probe_independent_data(probes12):
    # Known counterexample to likelihood monotonicity of the D-form map: with
    # Pi_l = a_l I and probe-independent data the update is a_l -> f_l^2 / a_l
    # (normalised), which alternates between I/3 and f^2/sum(f^2) forever.
    counts = np.array([np.full(12, 10), np.full(12, 5), np.full(12, 15)])
    with pytest.warns(NotConvergedWarning):
        res = ml_dform(counts, probes12, EstimatorOptions(max_iterations=6, record_iterates=True))
    f = np.array([1 / 3, 1 / 6, 1 / 2])
    bounce = f**2 / np.sum(f**2)
    for n, it in enumerate(res.iterates):
        expected = np.full(3, 1 / 3) if n % 2 == 0 else bounce
        np.testing.assert_allclose(np.diagonal(it.operators, axis1=1, axis2=2).real.T[0], expected, atol=1e-12)
    steps = np.diff(res.loglik_trace)
    assert np.all(steps[1::2] < -0.02)
    assert not res.converged and res.validation.passed


def test_initial_povm_shape_checked(probes12, seed7_counts):
    with pytest.raises(ShapeMismatch):
        ml_dform(seed7_counts, probes12, EstimatorOptions(initial_povm=PovmSet.uniform(2, 3)))


def test_options_validation():
    with pytest.raises(ValueError):
        EstimatorOptions(convergence_tol=0)
    with pytest.raises(ValueError):
        EstimatorOptions(max_iterations=-1)


@pytest.mark.parametrize("method", ML)
def test_permutation_equivariance(method, probes12, seed7_counts):
    perm = [2, 0, 1]
    a = method(seed7_counts, probes12)
    b = method(seed7_counts.counts[perm], probes12)
    assert np.max(np.abs(a.povm.operators[perm] - b.povm.operators)) < 1e-12


# support restriction -------------------------------------------------------


def test_support_projector_examples(probes12):
    assert support_projector(probes12)[1] == 3
    p, r = support_projector(ProbeEnsemble((np.diag([1.0, 0, 0]),)))
    assert r == 1
    np.testing.assert_allclose(p, np.diag([1.0, 0, 0]), atol=1e-15)
    p, r = support_projector(ProbeEnsemble((np.diag([1.0, 0, 0]), np.diag([0, 1.0, 0]))))
    assert r == 2
    np.testing.assert_allclose(p, np.diag([1.0, 1.0, 0]), atol=1e-15)


@pytest.mark.parametrize("method", ML)
def test_rank_deficient_probes_are_completed(method):
    rng = np.random.default_rng(5)
    basis = np.linalg.qr(rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2)))[0]
    states = []
    for _ in range(6):
        v = basis @ (rng.normal(size=2) + 1j * rng.normal(size=2))
        states.append(DensityMatrix.from_ket(v))
    probes = ProbeEnsemble(tuple(states))
    counts = rng.integers(1, 40, size=(3, 6))
    res = method(counts, probes)
    proj, rank = support_projector(probes)
    assert rank == 2 and res.support_rank == 2 and res.completed_outside_support
    outside = np.eye(3) - proj
    for op in res.povm.operators:
        assert np.linalg.norm(op @ proj - proj @ op) < 1e-8
        assert np.linalg.norm(outside @ op @ outside - outside / 3) < 1e-12
    assert res.validation.passed


# diagonal solver -----------------------------------------------------------


def test_diagonal_recovers_click_ramp():
    r, truth = click_povm()
    probes = poisson_probes()
    res = ml_diagonal(exact_frequencies(truth, probes), probes)
    assert res.converged
    assert np.max(np.abs(res.extra["eigenvalues"] - r)) < 1e-6
    assert res.validation.passed


def test_diagonal_uniform_is_stationary():
    probes = poisson_probes()
    uni = PovmSet.uniform(2, 4)
    res = ml_diagonal(exact_frequencies(uni, probes), probes, EstimatorOptions(max_iterations=1))
    np.testing.assert_allclose(res.extra["eigenvalues"], 0.5, atol=1e-15)


def test_diagonal_matches_dform():
    _, truth = click_povm()
    probes = poisson_probes()
    f = exact_frequencies(truth, probes)
    a = ml_diagonal(f, probes).extra["eigenvalues"]
    b = np.diagonal(ml_dform(f, probes).povm.operators, axis1=1, axis2=2).real
    assert np.max(np.abs(a - b)) < 1e-6


# simplex ---------------------------------------------------------------------


def test_simplex_matches_dform_on_qubit():
    _, probes, f = qubit_problem()
    ref = quiet(ml_dform, f, probes)
    res = ml_simplex(f, probes)
    assert np.all(frob(res.povm.operators, ref.povm.operators) < 1e-3)
    assert res.validation.passed
    assert np.all(np.diff(res.loglik_trace) >= 0)


def test_simplex_initial_loglik_is_minus_log_k():
    _, probes, f = qubit_problem()
    res = ml_simplex(f, probes, EstimatorOptions(max_iterations=0))
    assert res.loglik_trace[0] == pytest.approx(-np.log(2), abs=1e-15)


def test_simplex_infeasible_point_is_minus_inf():
    _, probes, f = qubit_problem()
    obj = LikelihoodObjective(f.freqs, probes.stack(), 2)
    x = np.array([np.sqrt(2), np.sqrt(2), 0.0, 0.0])
    assert obj(x) == float("-inf")
    np.testing.assert_allclose(params_to_povm(x, 2, 2)[1], -np.eye(2), atol=1e-15)


def test_simplex_parametrisation_round_trip():
    ops = random_povm(np.random.default_rng(2), 3, 3)
    x = povm_to_params(ops)
    assert x.size == n_parameters(3, 3)
    np.testing.assert_allclose(params_to_povm(x, 3, 3), ops, atol=1e-10)


# properties ------------------------------------------------------------------


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.sampled_from(["ml-fixed", "ml-dform"]))
def test_one_step_from_a_compatible_solution_is_a_no_op(seed, k, name):
    rng = np.random.default_rng(seed)
    povm = PovmSet(random_povm(rng, 3, k))
    probes = ProbeEnsemble(tuple(random_state(rng, 3) for _ in range(12)))
    f = exact_frequencies(povm, probes)
    method = ml_fixed_point if name == "ml-fixed" else ml_dform
    res = method(f, probes, EstimatorOptions(max_iterations=1, initial_povm=povm))
    assert np.all(frob(res.povm.operators, povm.operators) < 1e-10)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_frequency_table_equals_scaled_counts(seed):
    counts = sample_counts(SimConfig.stern_gerlach(seed, 30))
    a = ml_dform(counts, SimConfig.stern_gerlach(0).probe_set)
    b = ml_dform(FrequencyTable(counts.counts / 7.0), SimConfig.stern_gerlach(0).probe_set)
    assert np.max(np.abs(a.povm.operators - b.povm.operators)) < 1e-12


def test_backend_is_known():
    assert kernels.BACKEND in kernels.available()
