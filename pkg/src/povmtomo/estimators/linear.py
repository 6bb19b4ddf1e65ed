"""Linear-inversion baseline.

Solves ``Tr[Pi_l rho_m] = F_lm / sum_l' F_l'm`` by least squares, one
outcome at a time, in a real coordinate system that is an isometry for the
Frobenius norm.  Positivity is deliberately not enforced.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..core import PovmSet, ValidationReport, povm_to_real_vector, real_vector_to_matrix, validate_povm
from ..errors import EmptyData, RankDeficientProbesWarning
from .common import as_data, as_probes, check_shapes, data_array

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class LinearInversionResult:
    operators: np.ndarray
    rank: int
    rank_deficient: bool
    residual: float
    validation: ValidationReport

    @property
    def povm(self) -> PovmSet:
        return PovmSet(self.operators)

    @property
    def physical(self) -> bool:
        return self.validation.passed


def _scales(n: int) -> np.ndarray:
    # diagonal entries weigh 1, each (Re, Im) pair stands for two matrix entries
    return np.concatenate([np.ones(n), np.full(n * (n - 1), _SQRT2)])


def design_matrix(probes) -> np.ndarray:
    """Rows ``a_m`` with ``a_m . y = Tr[Pi rho_m]`` for Frobenius-isometric
    coordinates ``y`` of a Hermitian ``Pi``."""
    probes = as_probes(probes)
    s = _scales(probes.dim)
    return np.stack([povm_to_real_vector(rho.matrix) * s for rho in probes.states])


def _from_coords(y: np.ndarray, n: int) -> np.ndarray:
    return real_vector_to_matrix(y / _scales(n))


def linear_inversion(counts, probes, rcond: float = 1e-10) -> LinearInversionResult:
    """Least-squares POVM estimate from per-state relative frequencies.

    Directions not probed by any state are set to zero (minimum Frobenius
    norm).  A rank-deficient probe set triggers
    `RankDeficientProbesWarning` but still returns a result.
    """
    counts = as_data(counts)
    probes = as_probes(probes)
    check_shapes(counts, probes)
    table = data_array(counts)
    shots = table.sum(axis=0)
    if np.any(shots == 0):
        raise EmptyData(f"probe states {np.flatnonzero(shots == 0).tolist()} have no counts")
    targets = table / shots
    n = probes.dim
    a = design_matrix(probes)
    y, _, rank, _ = np.linalg.lstsq(a, targets.T, rcond=rcond)
    deficient = rank < n * n
    if deficient:
        warnings.warn(
            f"probe states span {rank} of {n * n} operator directions; "
            "the estimate is restricted to that span",
            RankDeficientProbesWarning,
            stacklevel=2,
        )
    ops = np.stack([_from_coords(y[:, l], n) for l in range(counts.shape[0])])
    resid = float(np.linalg.norm(a @ y - targets.T))
    return LinearInversionResult(ops, int(rank), bool(deficient), resid, validate_povm(ops))
