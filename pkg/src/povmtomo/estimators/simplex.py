"""Direct likelihood search with a downhill simplex.

The first ``k - 1`` outcomes are parametrised as ``C_l^dagger C_l`` with
lower-triangular ``C_l`` (real diagonal); the last one is whatever is left
of the identity.  Parameter points where that remainder is not positive
semidefinite get likelihood zero (log-likelihood ``-inf``), so the search
never leaves the physical region.
"""
from __future__ import annotations

import numpy as np

from .. import matcore
from ..core import PovmSet, log_likelihood_from_probs, probability_table, relative_frequencies, validate_povm
from ..errors import NoFeasibleStart, ShapeMismatch
from .common import (
    EstimateResult,
    EstimatorOptions,
    as_data,
    as_probes,
    check_shapes,
    support_basis,
    warn_not_converged,
)

REMAINDER_EIG_TOL = 1e-10

DEFAULT_OPTIONS = EstimatorOptions()


def n_parameters(dim: int, k: int) -> int:
    return dim * dim * (k - 1)


def _lower_indices(n: int):
    return [(i, j) for i in range(n) for j in range(i)]


def params_to_factor(x: np.ndarray, n: int) -> np.ndarray:
    """Lower-triangular factor from ``n`` real diagonal entries followed by
    (Re, Im) pairs of the strictly lower part in row order."""
    c = np.zeros((n, n), dtype=complex)
    c[np.diag_indices(n)] = x[:n]
    for t, (i, j) in enumerate(_lower_indices(n)):
        c[i, j] = complex(x[n + 2 * t], x[n + 2 * t + 1])
    return c


def factor_to_params(c: np.ndarray) -> np.ndarray:
    n = c.shape[0]
    out = list(np.diag(c).real)
    for i, j in _lower_indices(n):
        out.extend((c[i, j].real, c[i, j].imag))
    return np.array(out)


def lower_factor(op: np.ndarray, jitter: float = 1e-12) -> np.ndarray:
    """Lower-triangular ``C`` with ``C^dagger C = op`` (real positive diagonal).

    Obtained from the ordinary Cholesky factor of the index-reversed
    matrix; a tiny jitter keeps singular inputs factorable.
    """
    n = op.shape[0]
    flip = np.asarray(op, dtype=complex)[::-1, ::-1]
    low = np.linalg.cholesky(0.5 * (flip + flip.conj().T) + jitter * np.eye(n))
    return low.conj().T[::-1, ::-1]


def params_to_povm(x: np.ndarray, n: int, k: int) -> np.ndarray:
    size = n * n
    ops = np.empty((k, n, n), dtype=complex)
    for l in range(k - 1):
        ops[l] = matcore.lower_triangular_square(params_to_factor(x[l * size:(l + 1) * size], n))
    ops[k - 1] = np.eye(n) - ops[: k - 1].sum(axis=0)
    return ops


def povm_to_params(ops: np.ndarray) -> np.ndarray:
    return np.concatenate([factor_to_params(lower_factor(op)) for op in ops[:-1]])


class LikelihoodObjective:
    """Log-likelihood of a parameter vector, ``-inf`` outside the physical region."""

    def __init__(self, freqs: np.ndarray, rhos: np.ndarray, k: int):
        self.freqs = freqs
        self.rhos = rhos
        self.k = k
        self.n = rhos.shape[1]
        self.evaluations = 0

    def feasible(self, ops: np.ndarray) -> bool:
        return np.linalg.eigvalsh(ops[-1])[0] >= -REMAINDER_EIG_TOL

    def __call__(self, x: np.ndarray) -> float:
        self.evaluations += 1
        ops = params_to_povm(x, self.n, self.k)
        if not self.feasible(ops):
            return float("-inf")
        return log_likelihood_from_probs(self.freqs, probability_table(ops, self.rhos))


def nelder_mead(fun, simplex, max_iter, xatol, fatol, callback=None):
    """Minimise `fun` from the given ``(d + 1, d)`` simplex.

    ``+inf`` values are allowed and simply rank last.  `callback` gets the
    best value after each completed iteration.  Returns ``(best_x, best_f, iterations, converged)``.
    """
    sim = np.array(simplex, dtype=float)
    fs = np.array([fun(x) for x in sim])
    it = 0
    converged = False
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if callback is not None and it > 0:
            callback(fs[0])
        spread = np.max(np.abs(fs[1:] - fs[0])) if np.isfinite(fs[-1]) else np.inf
        if np.max(np.abs(sim[1:] - sim[0])) <= xatol and spread <= fatol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = fun(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = fun(xe)
            sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = fun(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (sim[-1] - centroid)
            fc = fun(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
        fs[1:] = [fun(x) for x in sim[1:]]
    return sim[0].copy(), float(fs[0]), it, converged


def _initial_simplex(objective, x0, scale, retries):
    h = scale
    for _ in range(retries + 1):
        sim = np.vstack([x0, x0 + h * np.eye(x0.size)])
        if any(np.isfinite(objective(x)) for x in sim):
            return sim
        h *= 0.5
    raise NoFeasibleStart(f"no feasible vertex found after {retries} shrinking retries")


def ml_simplex(counts, probes, opts: EstimatorOptions = DEFAULT_OPTIONS) -> EstimateResult:
    """Maximise the likelihood by Nelder-Mead over the minimal parametrisation.

    Intended for small problems (N, k <= 4); precision is limited to what a
    direct search achieves, typically 1e-4 to 1e-3 in the operators.
    """
    counts = as_data(counts)
    probes = as_probes(probes)
    check_shapes(counts, probes)
    k, n = counts.shape[0], probes.dim
    freqs = relative_frequencies(counts).freqs
    rhos = probes.stack()
    objective = LikelihoodObjective(freqs, rhos, k)
    init = opts.initial_povm
    if init is None:
        init = PovmSet.uniform(k, n)
    elif init.k != k or init.dim != n:
        raise ShapeMismatch(f"initial POVM is {init.k} x {init.dim}, data need {k} x {n}")

    if k == 1:
        ops = np.eye(n, dtype=complex)[None]
        ll = objective(np.zeros(0))
        povm = PovmSet(ops)
        return EstimateResult(povm, "simplex", 0, np.array([ll]), True, support_basis(probes).shape[1],
                              validate_povm(povm), options=opts)

    x = povm_to_params(init.operators)
    trace = [objective(x)]

    def neg(v):
        return -objective(v)

    def record(fbest):
        trace.append(-fbest)

    total, converged, scale = 0, False, opts.simplex_scale
    for _ in range(opts.simplex_restarts + 1):
        sim = _initial_simplex(objective, x, scale, opts.feasibility_retries)
        budget = max(opts.max_iterations - total, 0)
        x, _, used, converged = nelder_mead(neg, sim, budget, opts.simplex_xtol, opts.convergence_tol, record)
        total += used
        scale *= 0.1
    trace_arr = np.array(trace)
    if not converged:
        warn_not_converged("simplex", total, opts)
    ops = params_to_povm(x, n, k)
    povm = PovmSet(ops)
    return EstimateResult(
        povm=povm,
        method="simplex",
        iterations_used=total,
        loglik_trace=trace_arr,
        converged=converged,
        support_rank=support_basis(probes, opts.support_rel_tol).shape[1],
        validation=validate_povm(povm),
        options=opts,
        extra={"evaluations": objective.evaluations, "parameters": x},
    )

