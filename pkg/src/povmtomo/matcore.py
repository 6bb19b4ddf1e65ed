"""Small dense complex-matrix kernel.

Only what the estimators need: Hermitian eigendecomposition, PSD square
root, thresholded pseudoinverse, trace products and the lower-triangular
square used by the simplex parametrisation.  Matrices are plain
``numpy.ndarray`` objects of shape ``(N, N)``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, IndefiniteInput, NonHermitianInput, NonRealDiagonal

HERMITIAN_TOL = 1e-10
CLAMP_TOL = 1e-10
PINV_REL_TOL = 1e-10


class EigDecomposition(NamedTuple):
    """Eigenvalues in descending order and matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    return a


def hermiticity_defect(a) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - a.conj().T)))


def hermitian_eig(a, tol: float = HERMITIAN_TOL) -> EigDecomposition:
    """Full spectral decomposition of a Hermitian matrix.

    Raises
    ------
    NonHermitianInput
        If ``max |A_ij - conj(A_ji)|`` exceeds `tol`.  The input is never
        silently symmetrised.
    """
    a = as_square(a)
    defect = hermiticity_defect(a)
    if defect > tol:
        raise NonHermitianInput(f"matrix is not Hermitian (defect {defect:.3e} > {tol:.1e})")
    # eigh only reads one triangle; average so round-off in the other is not ignored
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    return EigDecomposition(w[::-1].copy(), v[:, ::-1].copy())


def psd_sqrt(g, clamp_tol: float = CLAMP_TOL, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Unique positive semidefinite square root.

    Eigenvalues in ``[-clamp_tol, 0)`` are treated as round-off and clamped
    to zero; anything more negative raises `IndefiniteInput`.
    """
    w, v = hermitian_eig(g, tol)
    if w.size and w[-1] < -clamp_tol:
        raise IndefiniteInput(f"matrix has eigenvalue {w[-1]:.3e} < -{clamp_tol:.1e}")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root) @ v.conj().T


def pinv_threshold(a, rel_tol: float = PINV_REL_TOL, tol: float = HERMITIAN_TOL):
    """Moore-Penrose pseudoinverse of a Hermitian PSD matrix.

    Eigenvalues below ``rel_tol * max_eigenvalue`` count as exact zeros.

    Returns
    -------
    pinv : ndarray
    rank : int
        Dimension of the retained support.
    """
    w, v = hermitian_eig(a, tol)
    n = w.shape[0]
    top = float(np.max(np.abs(w))) if n else 0.0
    if top == 0.0:
        return np.zeros((n, n), dtype=complex), 0
    keep = np.abs(w) > rel_tol * top
    vk = v[:, keep]
    return (vk / w[keep]) @ vk.conj().T, int(keep.sum())


def trace_product(a, b) -> complex:
    """``Tr[A B]`` without forming the product."""
    a = as_square(a, "A")
    b = as_square(b, "B")
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return complex(np.sum(a * b.T))


def lower_triangular_square(c, tol: float = 0.0) -> np.ndarray:
    """Return ``C^dagger C`` for lower-triangular `c` with a real diagonal.

    Entries above the diagonal are ignored.  The product is assembled from
    one triangle and mirrored, so the result is Hermitian bit for bit.
    """
    c = as_square(c, "C")
    d = np.diag(c)
    if np.any(np.abs(d.imag) > tol):
        raise NonRealDiagonal("diagonal of the triangular factor must be real")
    low = np.tril(c)
    m = low.conj().T @ low
    upper = np.triu(m, 1)
    return np.diag(m.real.diagonal()).astype(complex) + upper + upper.conj().T


def frobenius(a) -> float:
    return float(np.linalg.norm(np.asarray(a)))
