"""Options, result container and the support-subspace bookkeeping shared by
all estimators."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .. import matcore
from ..core import (
    CountTable,
    DensityMatrix,
    FrequencyTable,
    PovmSet,
    ProbeEnsemble,
    ValidationReport,
    relative_frequencies,
    validate_povm,
)
from ..errors import DegenerateDataWarning, NotConvergedWarning, ShapeMismatch


@dataclass(frozen=True)
class EstimatorOptions:
    """Stopping rules and regularisation for the iterative estimators.

    Attributes
    ----------
    max_iterations : int
        Upper bound on update steps (simplex: on Nelder-Mead iterations).
        Zero returns the initialisation unchanged.
    convergence_tol : float
        Stop once the largest per-outcome Frobenius change in one step
        drops below this value.
    prob_floor : float
        Lower bound applied to p_lm inside the ratios f_lm / p_lm.
    support_rel_tol : float
        Relative eigenvalue threshold for the probe support and for
        pseudoinverses.
    initial_povm : PovmSet, optional
        Starting point; ``I/k`` for every outcome when omitted.
    record_iterates : bool
        Keep every iterate in `EstimateResult.iterates`.
    simplex_scale : float
        Initial simplex edge length in parameter space.
    simplex_restarts : int
        Restarts from the best vertex with a simplex shrunk by 10x.
    simplex_xtol : float
        Simplex diameter below which Nelder-Mead stops.
    feasibility_retries : int
        Halvings of the initial simplex allowed while looking for a
        feasible start.
    """

    max_iterations: int = 10000
    convergence_tol: float = 1e-10
    prob_floor: float = 1e-12
    support_rel_tol: float = 1e-10
    initial_povm: Optional[PovmSet] = None
    record_iterates: bool = False
    simplex_scale: float = 0.1
    simplex_restarts: int = 1
    simplex_xtol: float = 1e-10
    feasibility_retries: int = 30

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise ValueError("max_iterations must be a nonnegative integer")
        for name in ("convergence_tol", "prob_floor", "support_rel_tol", "simplex_scale", "simplex_xtol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.simplex_restarts < 0 or self.feasibility_retries < 0:
            raise ValueError("restart counts must be nonnegative")
        if self.initial_povm is not None and not isinstance(self.initial_povm, PovmSet):
            object.__setattr__(self, "initial_povm", PovmSet(self.initial_povm))

    def replace(self, **changes) -> "EstimatorOptions":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "max_iterations": int(self.max_iterations),
            "convergence_tol": self.convergence_tol,
            "prob_floor": self.prob_floor,
            "support_rel_tol": self.support_rel_tol,
            "custom_initial_povm": self.initial_povm is not None,
        }


@dataclass(frozen=True)
class EstimateResult:
    """Estimated POVM plus convergence diagnostics.

    ``loglik_trace[n]`` is the log-likelihood of iterate ``n``, so the
    trace holds ``iterations_used + 1`` values.  ``multiplier`` is the
    Lagrange-multiplier operator from the last step (``None`` when no step
    ran).  Outside a rank-deficient probe support every outcome is padded
    with ``(I - P)/k``; ``completed_outside_support`` flags that case.
    """

    povm: PovmSet
    method: str
    iterations_used: int
    loglik_trace: np.ndarray
    converged: bool
    support_rank: int
    validation: ValidationReport
    multiplier: Optional[np.ndarray] = None
    completed_outside_support: bool = False
    iterates: Optional[tuple] = None
    options: Optional[EstimatorOptions] = None
    extra: dict = field(default_factory=dict)

    @property
    def final_constraint_residuals(self):
        return self.validation.min_eigenvalue, self.validation.completeness_residual

    @property
    def final_loglik(self) -> float:
        return float(self.loglik_trace[-1])


def as_data(data):
    """Pass `CountTable` and `FrequencyTable` through; wrap anything else as counts."""
    if isinstance(data, (CountTable, FrequencyTable)):
        return data
    return CountTable(data)


def data_array(data) -> np.ndarray:
    """The raw ``(k, M)`` table behind counts or frequencies."""
    return data.freqs if isinstance(data, FrequencyTable) else data.counts


def as_probes(probes) -> ProbeEnsemble:
    if isinstance(probes, ProbeEnsemble):
        return probes
    return ProbeEnsemble(tuple(p if isinstance(p, DensityMatrix) else DensityMatrix(p) for p in probes))


def check_shapes(counts, probes: ProbeEnsemble):
    if counts.shape[1] != len(probes):
        raise ShapeMismatch(f"count table has {counts.shape[1]} columns but there are {len(probes)} probe states")


def support_projector(probes, rel_tol: float = matcore.PINV_REL_TOL):
    """Orthogonal projector onto the span of the probe supports.

    Returns
    -------
    projector : ndarray
    rank : int
    """
    basis = support_basis(probes, rel_tol)
    return basis @ basis.conj().T, basis.shape[1]


def support_basis(probes, rel_tol: float = matcore.PINV_REL_TOL) -> np.ndarray:
    """Orthonormal columns spanning the probe support.

    The identity is returned unchanged when the probes span the whole
    space, so full-rank problems are never rotated.
    """
    stack = as_probes(probes).stack()
    avg = stack.mean(axis=0)
    w, v = matcore.hermitian_eig(avg)
    keep = w > rel_tol * w[0]
    n = avg.shape[0]
    if keep.all():
        return np.eye(n, dtype=complex)
    return v[:, keep]


def warn_unobserved(counts):
    empty = np.flatnonzero(data_array(counts).sum(axis=1) == 0)
    if empty.size:
        warnings.warn(
            f"outcomes {empty.tolist()} were never observed; they are estimated as zero operators",
            DegenerateDataWarning,
            stacklevel=4,
        )


def warn_not_converged(method: str, iterations: int, opts: EstimatorOptions):
    if opts.max_iterations > 0:
        warnings.warn(
            f"{method} stopped after {iterations} iterations without reaching "
            f"convergence_tol={opts.convergence_tol:g}",
            NotConvergedWarning,
            stacklevel=4,
        )


class Problem:
    """Frequencies and probes expressed in the support basis."""

    def __init__(self, counts, probes, opts: EstimatorOptions):
        self.counts = as_data(counts)
        self.probes = as_probes(probes)
        check_shapes(self.counts, self.probes)
        self.opts = opts
        self.freqs = relative_frequencies(self.counts).freqs
        self.k, self.dim = self.counts.shape[0], self.probes.dim
        self.basis = support_basis(self.probes, opts.support_rel_tol)
        self.rank = self.basis.shape[1]
        self.full = self.rank == self.dim
        stack = self.probes.stack()
        self.rhos = stack if self.full else np.einsum("ia,mij,jb->mab", self.basis.conj(), stack, self.basis)
        warn_unobserved(self.counts)

    def initial(self) -> np.ndarray:
        init = self.opts.initial_povm
        if init is None:
            return np.repeat(np.eye(self.rank, dtype=complex)[None] / self.k, self.k, axis=0)
        if init.k != self.k or init.dim != self.dim:
            raise ShapeMismatch(f"initial POVM is {init.k} x {init.dim}, data need {self.k} x {self.dim}")
        return self.reduce(init.operators)

    def reduce(self, ops: np.ndarray) -> np.ndarray:
        if self.full:
            return np.array(ops, dtype=complex)
        b = self.basis
        return np.einsum("ia,lij,jb->lab", b.conj(), ops, b)

    def lift(self, ops: np.ndarray) -> np.ndarray:
        if self.full:
            return np.array(ops, dtype=complex)
        b = self.basis
        outside = (np.eye(self.dim) - b @ b.conj().T) / self.k
        return np.einsum("ia,lab,jb->lij", b, ops, b.conj()) + outside

    def lift_operator(self, op: Optional[np.ndarray]) -> Optional[np.ndarray]:
        if op is None or self.full:
            return op
        return self.basis @ op @ self.basis.conj().T

    def finish(self, method, ops, lam, iterations, trace, converged, iterates) -> EstimateResult:
        povm = PovmSet(self.lift(ops))
        if not converged:
            warn_not_converged(method, iterations, self.opts)
        recorded = None
        if iterates is not None:
            recorded = tuple(PovmSet(self.lift(x)) for x in iterates)
        return EstimateResult(
            povm=povm,
            method=method,
            iterations_used=int(iterations),
            loglik_trace=np.asarray(trace, dtype=float),
            converged=bool(converged),
            support_rank=self.rank,
            validation=validate_povm(povm),
            multiplier=self.lift_operator(lam),
            completed_outside_support=not self.full,
            iterates=recorded,
            options=self.opts,
        )
