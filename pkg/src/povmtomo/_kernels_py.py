"""Pure-numpy iteration loops.

Reference implementation of the hot loops; ``_ckernels.pyx`` mirrors every
function here with identical arguments and return tuples.  All loops work
on a probe set already restricted to its support, so the multiplier
operator is invertible there up to the relative threshold.

Every ``run_*`` function returns
``(final, multiplier, iterations, loglik, converged, rank, iterates)``
where ``loglik[n]`` is the log-likelihood of iterate ``n`` and ``iterates``
is a list of recorded iterates (or ``None``).
"""
import numpy as np

from .errors import IndefiniteG

G_CLAMP_REL = 1e-10


def probabilities(povm, rhos):
    return np.einsum("lij,mji->lm", povm, rhos).real


def _loglik(f, p):
    pos = f > 0
    pp = p[pos]
    if np.any(pp <= 0):
        return -np.inf
    return float(np.sum(f[pos] * np.log(pp)))


def _ratios(f, p, floor):
    w = np.zeros_like(f)
    pos = f > 0
    w[pos] = f[pos] / np.maximum(p[pos], floor)
    return w


def _herm_pinv(a, rel_tol):
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    top = np.max(np.abs(w))
    keep = np.abs(w) > rel_tol * top if top > 0 else np.zeros_like(w, dtype=bool)
    vk = v[:, keep]
    return (vk / w[keep]) @ vk.conj().T, int(keep.sum())


def _max_change(new, old):
    d = (new - old).reshape(new.shape[0], -1)
    return float(np.max(np.sqrt(np.sum(np.abs(d) ** 2, axis=1))))


def fixed_point_step(povm, rhos, f, prob_floor, rel_tol):
    """One Hermitised update ``Pi <- (R Pi + Pi R^dagger) / 2``.

    Returns ``(new_povm, multiplier, rank, probs_of_input)``.
    """
    p = probabilities(povm, rhos)
    s = np.einsum("lm,mij->lij", _ratios(f, p, prob_floor), rhos)
    a = np.einsum("lij,ljk->ik", s, povm)
    lam = 0.5 * (a + a.conj().T)
    lam_inv, rank = _herm_pinv(lam, rel_tol)
    x = lam_inv @ s @ povm
    return 0.5 * (x + x.conj().transpose(0, 2, 1)), lam, rank, p


def dform_step(factors, rhos, f, prob_floor, rel_tol):
    """One constraint-exact update ``D <- D R^dagger`` with the multiplier
    fixed to the PSD square root of G.

    Returns ``(new_factors, multiplier, rank, probs_of_input)``.
    """
    povm = factors.conj().transpose(0, 2, 1) @ factors
    p = probabilities(povm, rhos)
    s = np.einsum("lm,mij->lij", _ratios(f, p, prob_floor), rhos)
    g = np.einsum("lij,ljk,lkm->im", s, povm, s)
    w, v = np.linalg.eigh(0.5 * (g + g.conj().T))
    top = max(float(np.max(np.abs(w))), 0.0)
    if w[0] < -G_CLAMP_REL * top:
        raise IndefiniteG(f"G has eigenvalue {w[0]:.3e} (largest {top:.3e})")
    root = np.sqrt(np.clip(w, 0.0, None))
    keep = root > rel_tol * root[-1] if root[-1] > 0 else np.zeros_like(root, dtype=bool)
    lam = (v * root) @ v.conj().T
    vk = v[:, keep]
    lam_inv = (vk / root[keep]) @ vk.conj().T
    return factors @ s @ lam_inv, lam, int(keep.sum()), p


def _gram(factors):
    return factors.conj().transpose(0, 2, 1) @ factors


def run_fixed_point(povm0, rhos, f, prob_floor, rel_tol, max_iter, tol, record):
    povm = np.array(povm0, dtype=complex)
    loglik = []
    iterates = [povm.copy()] if record else None
    lam, rank, converged, n = None, 0, False, 0
    while n < max_iter:
        new, lam, rank, p = fixed_point_step(povm, rhos, f, prob_floor, rel_tol)
        loglik.append(_loglik(f, p))
        change = _max_change(new, povm)
        povm = new
        n += 1
        if record:
            iterates.append(povm.copy())
        if change < tol:
            converged = True
            break
    loglik.append(_loglik(f, probabilities(povm, rhos)))
    return povm, lam, n, np.array(loglik), converged, rank, iterates


def run_dform(factors0, rhos, f, prob_floor, rel_tol, max_iter, tol, record):
    factors = np.array(factors0, dtype=complex)
    povm = _gram(factors)
    loglik = []
    iterates = [povm.copy()] if record else None
    lam, rank, converged, n = None, 0, False, 0
    while n < max_iter:
        factors, lam, rank, p = dform_step(factors, rhos, f, prob_floor, rel_tol)
        loglik.append(_loglik(f, p))
        new = _gram(factors)
        change = _max_change(new, povm)
        povm = new
        n += 1
        if record:
            iterates.append(povm.copy())
        if change < tol:
            converged = True
            break
    loglik.append(_loglik(f, probabilities(povm, rhos)))
    return povm, lam, n, np.array(loglik), converged, rank, iterates


def diagonal_step(r, diags, f, prob_floor):
    """Scalar update of the eigenvalues ``r[l, n]`` of a diagonal POVM.

    Returns ``(new_r, multipliers, probs_of_input)``.
    """
    p = r @ diags.T
    t = _ratios(f, p, prob_floor) @ diags
    lam = np.sum(t * r, axis=0)
    safe = np.where(lam > 0, lam, 1.0)
    new = np.where(lam > 0, r * t / safe, r)
    return new, lam, p


def run_diagonal(r0, diags, f, prob_floor, rel_tol, max_iter, tol, record):
    r = np.array(r0, dtype=float)
    loglik = []
    iterates = [r.copy()] if record else None
    lam, converged, n = None, False, 0
    while n < max_iter:
        new, lam, p = diagonal_step(r, diags, f, prob_floor)
        loglik.append(_loglik(f, p))
        change = _max_change(new, r)
        r = new
        n += 1
        if record:
            iterates.append(r.copy())
        if change < tol:
            converged = True
            break
    loglik.append(_loglik(f, r @ diags.T))
    rank = 0 if lam is None else int(np.sum(lam > rel_tol * max(float(np.max(lam)), 0.0)))
    return r, lam, n, np.array(loglik), converged, rank, iterates
