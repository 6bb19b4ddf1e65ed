"""Domain types for measurement tomography and the probability model.

Arrays are stored read-only inside the frozen dataclasses so that values
can be shared freely between estimators and threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import matcore
from .errors import DimensionMismatch, EmptyData, InvalidState, ShapeMismatch

STATE_TOL = 1e-10
POVM_HERMITIAN_TOL = 1e-10
POVM_EIG_TOL = 1e-8
POVM_COMPLETENESS_TOL = 1e-8
PROB_CLAMP = 1e-10


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite state."""

    matrix: np.ndarray

    def __post_init__(self):
        m = matcore.as_square(self.matrix, "density matrix")
        if matcore.hermiticity_defect(m) > STATE_TOL:
            raise InvalidState("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > STATE_TOL:
            raise InvalidState(f"density matrix trace is {tr!r}, expected 1")
        w = np.linalg.eigvalsh(m)
        if w[0] < -STATE_TOL:
            raise InvalidState(f"density matrix has eigenvalue {w[0]:.3e}")
        object.__setattr__(self, "matrix", _frozen(m, complex))

    @classmethod
    def from_ket(cls, ket) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex).ravel()
        ket = ket / np.linalg.norm(ket)
        return cls(np.outer(ket, ket.conj()))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ProbeEnsemble:
    """Ordered list of known probe states with labels."""

    states: tuple
    labels: tuple = ()

    def __post_init__(self):
        states = tuple(s if isinstance(s, DensityMatrix) else DensityMatrix(s) for s in self.states)
        if not states:
            raise EmptyData("a probe ensemble needs at least one state")
        dims = {s.dim for s in states}
        if len(dims) != 1:
            raise DimensionMismatch(f"probe states have mixed dimensions {sorted(dims)}")
        labels = tuple(self.labels) or tuple(f"rho{m}" for m in range(len(states)))
        if len(labels) != len(states):
            raise ShapeMismatch("number of labels differs from number of states")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "labels", tuple(str(x) for x in labels))

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.states)

    def stack(self) -> np.ndarray:
        """All probe matrices as an ``(M, N, N)`` array."""
        return np.stack([s.matrix for s in self.states])


@dataclass(frozen=True)
class PovmSet:
    """Ordered measurement operators, stored as a ``(k, N, N)`` array.

    Construction only checks shape.  Positivity and completeness are what
    estimators are judged on, so they are reported by `validate_povm`
    rather than enforced here; linear inversion legitimately produces sets
    that fail them.
    """

    operators: np.ndarray

    def __post_init__(self):
        ops = np.asarray(self.operators, dtype=complex)
        if ops.ndim == 2:
            ops = ops[None]
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2] or ops.shape[0] < 1 or ops.shape[1] < 1:
            raise ShapeMismatch(f"POVM array must have shape (k, N, N), got {ops.shape}")
        object.__setattr__(self, "operators", _frozen(ops, complex))

    @property
    def k(self) -> int:
        return self.operators.shape[0]

    @property
    def dim(self) -> int:
        return self.operators.shape[1]

    def __len__(self) -> int:
        return self.k

    def __getitem__(self, l) -> np.ndarray:
        return self.operators[l]

    def __iter__(self):
        return iter(self.operators)

    @classmethod
    def uniform(cls, k: int, dim: int) -> "PovmSet":
        return cls(np.repeat(np.eye(dim, dtype=complex)[None] / k, k, axis=0))


@dataclass(frozen=True)
class CountTable:
    """Detection counts ``F[l, m]``: outcomes along rows, probe states along columns."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or 0 in c.shape:
            raise ShapeMismatch(f"counts must be a non-empty k x M table, got shape {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
                raise ValueError("counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", _frozen(c, np.int64))

    @property
    def shots_per_state(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def shape(self):
        return self.counts.shape


@dataclass(frozen=True)
class FrequencyTable:
    """Relative frequencies normalised over the whole table.

    Estimators accept one in place of a `CountTable`, which is how
    noise-free (infinite-shot) data are fed in.
    """

    freqs: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        if f.ndim != 2 or 0 in f.shape:
            raise ShapeMismatch(f"frequencies must be a non-empty k x M table, got shape {f.shape}")
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ValueError("frequencies must be finite and nonnegative")
        object.__setattr__(self, "freqs", _frozen(f, float))

    @property
    def shape(self):
        return self.freqs.shape

    @property
    def per_state(self) -> np.ndarray:
        """Column weights ``sum_l f_lm``."""
        return self.freqs.sum(axis=0)


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    min_eigenvalue: float
    worst_outcome: int
    completeness_residual: float
    hermiticity_defect: float
    outcome_min_eigenvalues: tuple = field(default=())

    def summary(self) -> str:
        lines = [
            f"status:                {'PASS' if self.passed else 'FAIL'}",
            f"min eigenvalue:        {self.min_eigenvalue:.3e} (outcome {self.worst_outcome})",
            f"completeness residual: {self.completeness_residual:.3e}",
            f"hermiticity defect:    {self.hermiticity_defect:.3e}",
        ]
        for l, w in enumerate(self.outcome_min_eigenvalues):
            flag = "  <-- negative" if w < -POVM_EIG_TOL else ""
            lines.append(f"  outcome {l}: min eigenvalue {w: .6e}{flag}")
        return "\n".join(lines)


def _as_ops(povm) -> np.ndarray:
    return povm.operators if isinstance(povm, PovmSet) else PovmSet(povm).operators


def _as_probe_stack(probes) -> np.ndarray:
    if isinstance(probes, ProbeEnsemble):
        return probes.stack()
    if isinstance(probes, DensityMatrix):
        return probes.matrix[None]
    return np.asarray(probes, dtype=complex)


def probability_table(povm, probes) -> np.ndarray:
    """Unclamped ``Re Tr[Pi_l rho_m]`` for all outcome/probe pairs, shape ``(k, M)``."""
    ops = _as_ops(povm)
    rhos = _as_probe_stack(probes)
    if rhos.ndim == 2:
        rhos = rhos[None]
    if ops.shape[1:] != rhos.shape[1:]:
        raise DimensionMismatch(f"POVM dimension {ops.shape[1]} != state dimension {rhos.shape[1]}")
    return np.einsum("lij,mji->lm", ops, rhos).real


def outcome_probabilities(povm, rho) -> np.ndarray:
    """Outcome probabilities ``Re Tr[Pi_l rho]`` for a single state.

    Values in ``[-1e-10, 0)`` are clamped to zero.
    """
    p = probability_table(povm, rho)[:, 0]
    return np.where((p < 0) & (p >= -PROB_CLAMP), 0.0, p)


def relative_frequencies(counts) -> FrequencyTable:
    """Normalise by the grand total of all counts.

    A `FrequencyTable` is passed through, renormalised if needed.
    """
    if isinstance(counts, FrequencyTable):
        c = counts.freqs
    else:
        c = counts.counts if isinstance(counts, CountTable) else CountTable(counts).counts
    total = c.sum()
    if total <= 0:
        raise EmptyData("count table is empty")
    return FrequencyTable(c / total)


def log_likelihood_from_probs(freqs: np.ndarray, probs: np.ndarray) -> float:
    """``sum f ln p`` with ``0 ln 0 = 0``; ``-inf`` if data hit an impossible outcome."""
    pos = freqs > 0
    p = probs[pos]
    if np.any(p <= 0):
        return float("-inf")
    # fixed row-major order keeps the sum reproducible
    return float(np.sum(freqs[pos] * np.log(p)))


def log_likelihood(povm, freqs, probes) -> float:
    f = freqs.freqs if isinstance(freqs, FrequencyTable) else np.asarray(freqs, dtype=float)
    p = probability_table(povm, probes)
    if f.shape != p.shape:
        raise ShapeMismatch(f"frequency table {f.shape} does not match outcomes x probes {p.shape}")
    return log_likelihood_from_probs(f, p)


def validate_povm(
    povm,
    eig_tol: float = POVM_EIG_TOL,
    completeness_tol: float = POVM_COMPLETENESS_TOL,
    hermitian_tol: float = POVM_HERMITIAN_TOL,
) -> ValidationReport:
    """Check positivity, completeness and Hermiticity of a POVM set."""
    ops = _as_ops(povm)
    n = ops.shape[1]
    herm = max(matcore.hermiticity_defect(op) for op in ops)
    mins = tuple(float(np.linalg.eigvalsh(0.5 * (op + op.conj().T))[0]) for op in ops)
    worst = int(np.argmin(mins))
    resid = float(np.linalg.norm(ops.sum(axis=0) - np.eye(n)))
    passed = mins[worst] >= -eig_tol and resid <= completeness_tol and herm <= hermitian_tol
    return ValidationReport(passed, mins[worst], worst, resid, herm, mins)


def _upper_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def povm_to_real_vector(op) -> np.ndarray:
    """Real vector of a Hermitian operator: diagonal first, then (Re, Im) of
    the upper off-diagonal entries in row order.

    For N = 3 this is ``(P11, P22, P33, Re P12, Im P12, Re P13, Im P13,
    Re P23, Im P23)``.
    """
    op = matcore.as_square(op)
    n = op.shape[0]
    out = [op[i, i].real for i in range(n)]
    for i, j in _upper_pairs(n):
        out.extend((op[i, j].real, op[i, j].imag))
    return np.array(out, dtype=float)


def real_vector_to_matrix(vec) -> np.ndarray:
    """Inverse of `povm_to_real_vector` for Hermitian operators."""
    vec = np.asarray(vec, dtype=float)
    n = int(round(np.sqrt(vec.size)))
    if n * n != vec.size:
        raise ShapeMismatch(f"vector of length {vec.size} is not N^2 for any N")
    m = np.zeros((n, n), dtype=complex)
    m[np.diag_indices(n)] = vec[:n]
    for t, (i, j) in enumerate(_upper_pairs(n)):
        z = complex(vec[n + 2 * t], vec[n + 2 * t + 1])
        m[i, j] = z
        m[j, i] = z.conjugate()
    return m


def stack_operators(ops: Sequence) -> np.ndarray:
    return np.stack([np.asarray(o, dtype=complex) for o in ops])
