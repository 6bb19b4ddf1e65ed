"""Maximum-likelihood fixed-point iterations.

Three variants share the ratio operators ``S_l = sum_m (f_lm / p_lm) rho_m``:

* `ml_fixed_point` updates ``Pi_l <- (R_l Pi_l + Pi_l R_l^dagger) / 2`` with
  ``R_l = lambda^{-1} S_l`` and ``lambda = sum_l S_l Pi_l``.
* `ml_dform` carries factors ``Pi_l = D_l^dagger D_l`` and updates
  ``D_l <- D_l R_l^dagger`` with ``lambda = G^{1/2}``,
  ``G = sum_l S_l Pi_l S_l``; every iterate is positive and complete.
* `ml_diagonal` is the scalar version for POVMs diagonal in a fixed basis.

The loops themselves live in the kernel backend (see `povmtomo.kernels`).
"""
from __future__ import annotations

import numpy as np

from .. import kernels, matcore
from ..core import PovmSet, relative_frequencies, validate_povm
from .common import (
    EstimateResult,
    EstimatorOptions,
    Problem,
    as_data,
    as_probes,
    check_shapes,
    warn_not_converged,
    warn_unobserved,
)

DEFAULT_OPTIONS = EstimatorOptions()


def ml_fixed_point(counts, probes, opts: EstimatorOptions = DEFAULT_OPTIONS) -> EstimateResult:
    """Hermitised fixed-point iteration.

    Iterates are Hermitian but positivity and completeness hold only at
    convergence.
    """
    prob = Problem(counts, probes, opts)
    out = kernels.impl.run_fixed_point(
        prob.initial(), prob.rhos, prob.freqs, opts.prob_floor, opts.support_rel_tol,
        opts.max_iterations, opts.convergence_tol, opts.record_iterates,
    )
    ops, lam, n, trace, converged, _, iterates = out
    return prob.finish("ml-fixed", ops, lam, n, trace, converged, iterates)


def ml_dform(counts, probes, opts: EstimatorOptions = DEFAULT_OPTIONS) -> EstimateResult:
    """Constraint-exact iteration on the factors ``D_l``.

    The factors start as the PSD square roots of the initial POVM and are
    never re-factorised; only ``D_l^dagger D_l`` is consumed.
    """
    prob = Problem(counts, probes, opts)
    factors = np.stack([matcore.psd_sqrt(op) for op in prob.initial()])
    out = kernels.impl.run_dform(
        factors, prob.rhos, prob.freqs, opts.prob_floor, opts.support_rel_tol,
        opts.max_iterations, opts.convergence_tol, opts.record_iterates,
    )
    ops, lam, n, trace, converged, _, iterates = out
    return prob.finish("ml-dform", ops, lam, n, trace, converged, iterates)


def _diag_ops(r: np.ndarray) -> np.ndarray:
    k, n = r.shape
    ops = np.zeros((k, n, n), dtype=complex)
    ops[:, np.arange(n), np.arange(n)] = r
    return ops


def ml_diagonal(counts, probes, opts: EstimatorOptions = DEFAULT_OPTIONS) -> EstimateResult:
    """Estimate a POVM known to be diagonal in the computational basis.

    Only the probe diagonals are read.  Levels never populated by any
    probe keep their initial weights, which for the default start is the
    same ``1/k`` completion used by the matrix estimators.
    """
    counts = as_data(counts)
    probes = as_probes(probes)
    check_shapes(counts, probes)
    warn_unobserved(counts)
    f = relative_frequencies(counts).freqs
    k, n = counts.shape[0], probes.dim
    diags = np.stack([np.diag(s.matrix).real for s in probes.states])
    if opts.initial_povm is None:
        r0 = np.full((k, n), 1.0 / k)
    else:
        r0 = np.stack([np.diag(op).real for op in opts.initial_povm.operators])
    r, lam, it, trace, converged, _, iterates = kernels.impl.run_diagonal(
        r0, diags, f, opts.prob_floor, opts.support_rel_tol,
        opts.max_iterations, opts.convergence_tol, opts.record_iterates,
    )
    povm = PovmSet(_diag_ops(r))
    if not converged:
        warn_not_converged("ml-diag", it, opts)
    populated = diags.mean(axis=0)
    rank = int(np.sum(populated > opts.support_rel_tol * populated.max()))
    return EstimateResult(
        povm=povm,
        method="ml-diag",
        iterations_used=it,
        loglik_trace=np.asarray(trace),
        converged=converged,
        support_rank=rank,
        validation=validate_povm(povm),
        multiplier=None if lam is None else np.diag(lam).astype(complex),
        completed_outside_support=rank < n,
        iterates=None if iterates is None else tuple(PovmSet(_diag_ops(x)) for x in iterates),
        options=opts,
        extra={"eigenvalues": r},
    )
