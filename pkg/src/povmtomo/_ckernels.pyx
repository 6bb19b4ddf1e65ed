# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled iteration loops.

Drop-in replacement for ``_kernels_py``: same functions, same arguments,
same return tuples.  Matrices are tiny (N <= ~10 in practice), so the
products are plain triple loops and the only LAPACK call is ``zheev``.
"""
import numpy as np

from libc.math cimport sqrt, log, fabs, INFINITY
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport zheev

from .errors import IndefiniteG

ctypedef double complex cplx

cdef double G_CLAMP_REL = 1e-10


cdef inline cplx conj(cplx z) noexcept nogil:
    return z.real - 1j * z.imag


cdef void matmul(const cplx* a, const cplx* b, cplx* c, int n) noexcept nogil:
    cdef int i, j, t
    cdef cplx s
    for i in range(n):
        for j in range(n):
            s = 0
            for t in range(n):
                s = s + a[i * n + t] * b[t * n + j]
            c[i * n + j] = s


cdef void gram(const cplx* d, cplx* out, int n) noexcept nogil:
    # out = d^H d
    cdef int i, j, t
    cdef cplx s
    for i in range(n):
        for j in range(n):
            s = 0
            for t in range(n):
                s = s + conj(d[t * n + i]) * d[t * n + j]
            out[i * n + j] = s


cdef class _Workspace:
    """Scratch buffers for one loop; freed on deallocation."""
    cdef int n, lwork
    cdef cplx* buf
    cdef cplx* vecs
    cdef cplx* work
    cdef double* rwork
    cdef double* evals
    cdef cplx* t1
    cdef cplx* t2

    def __cinit__(self, int n):
        self.n = n
        self.lwork = 4 * n + 8
        self.buf = <cplx*> malloc(n * n * sizeof(cplx))
        self.vecs = <cplx*> malloc(n * n * sizeof(cplx))
        self.work = <cplx*> malloc(self.lwork * sizeof(cplx))
        self.rwork = <double*> malloc((3 * n + 2) * sizeof(double))
        self.evals = <double*> malloc(n * sizeof(double))
        self.t1 = <cplx*> malloc(n * n * sizeof(cplx))
        self.t2 = <cplx*> malloc(n * n * sizeof(cplx))
        if (self.buf == NULL or self.vecs == NULL or self.work == NULL or self.rwork == NULL
                or self.evals == NULL or self.t1 == NULL or self.t2 == NULL):
            raise MemoryError()

    def __dealloc__(self):
        free(self.buf)
        free(self.vecs)
        free(self.work)
        free(self.rwork)
        free(self.evals)
        free(self.t1)
        free(self.t2)

    cdef int eigh(self, const cplx* a) noexcept nogil:
        """Eigen-decompose the Hermitian part of ``a`` into evals (ascending) and vecs (row-major, columns are vectors)."""
        cdef int n = self.n, i, j, info = 0
        cdef char jobz = b'V'
        cdef char uplo = b'L'
        for i in range(n):
            for j in range(n):
                # column-major Hermitian part
                self.buf[i + j * n] = 0.5 * (a[i * n + j] + conj(a[j * n + i]))
        zheev(&jobz, &uplo, &n, self.buf, &n, self.evals, self.work, &self.lwork, self.rwork, &info)
        for i in range(n):
            for j in range(n):
                self.vecs[i * n + j] = self.buf[i + j * n]
        return info

    cdef void spectral(self, const double* g, cplx* out) noexcept nogil:
        """out = V diag(g) V^H using the last decomposition."""
        cdef int n = self.n, i, j, t
        cdef cplx s
        for i in range(n):
            for j in range(n):
                s = 0
                for t in range(n):
                    s = s + self.vecs[i * n + t] * g[t] * conj(self.vecs[j * n + t])
                out[i * n + j] = s


cdef void compute_probs(const cplx* povm, const cplx* rhos, double* p, int k, int m, int n) noexcept nogil:
    cdef int l, s, i, j, nn = n * n
    cdef double acc
    for l in range(k):
        for s in range(m):
            acc = 0.0
            for i in range(n):
                for j in range(n):
                    acc += (povm[l * nn + i * n + j] * rhos[s * nn + j * n + i]).real
            p[l * m + s] = acc


cdef double loglik(const double* f, const double* p, int size) noexcept nogil:
    cdef int i
    cdef double acc = 0.0
    for i in range(size):
        if f[i] > 0:
            if p[i] <= 0:
                return -INFINITY
            acc += f[i] * log(p[i])
    return acc


cdef void weighted_sums(const double* f, const double* p, double floor, const cplx* rhos,
                        cplx* s_out, int k, int m, int n) noexcept nogil:
    cdef int l, s, i, nn = n * n
    cdef double w, q
    for i in range(k * nn):
        s_out[i] = 0
    for l in range(k):
        for s in range(m):
            if f[l * m + s] > 0:
                q = p[l * m + s]
                if q < floor:
                    q = floor
                w = f[l * m + s] / q
                for i in range(nn):
                    s_out[l * nn + i] = s_out[l * nn + i] + w * rhos[s * nn + i]


cdef double max_change(const cplx* a, const cplx* b, int k, int nn) noexcept nogil:
    cdef int l, i
    cdef double best = 0.0, acc
    cdef cplx d
    for l in range(k):
        acc = 0.0
        for i in range(nn):
            d = a[l * nn + i] - b[l * nn + i]
            acc += d.real * d.real + d.imag * d.imag
        acc = sqrt(acc)
        if acc > best:
            best = acc
    return best


def probabilities(povm, rhos):
    cdef cplx[:, :, ::1] pv = np.array(povm, dtype=complex, order="C")
    cdef cplx[:, :, ::1] rv = np.array(rhos, dtype=complex, order="C")
    cdef int k = pv.shape[0], m = rv.shape[0], n = pv.shape[1]
    out = np.empty((k, m))
    cdef double[:, ::1] ov = out
    compute_probs(&pv[0, 0, 0], &rv[0, 0, 0], &ov[0, 0], k, m, n)
    return out


def run_fixed_point(povm0, rhos, f, double prob_floor, double rel_tol, long max_iter, double tol, bint record):
    povm = np.array(povm0, dtype=complex, order="C")
    new = np.empty_like(povm)
    cdef cplx[:, :, ::1] P = povm
    cdef cplx[:, :, ::1] Q = new
    cdef cplx[:, :, ::1] R = np.array(rhos, dtype=complex, order="C")
    cdef double[:, ::1] F = np.array(f, dtype=float, order="C")
    cdef int k = P.shape[0], n = P.shape[1], m = R.shape[0], nn = n * n
    s_arr = np.empty((k, n, n), dtype=complex)
    cdef cplx[:, :, ::1] S = s_arr
    p_arr = np.empty((k, m))
    cdef double[:, ::1] pr = p_arr
    lam_arr = np.zeros((n, n), dtype=complex)
    cdef cplx[:, ::1] lam = lam_arr
    inv_arr = np.empty((n, n), dtype=complex)
    cdef cplx[:, ::1] lam_inv = inv_arr
    g_arr = np.empty(n)
    cdef double[::1] gv = g_arr
    trace = np.empty(max_iter + 1)
    cdef double[::1] tr = trace
    cdef _Workspace ws = _Workspace(n)
    cdef long it = 0
    cdef int l, i, j, rank = 0, info
    cdef double top, change
    cdef bint converged = False
    cdef cplx z
    cdef cplx* x
    cdef cplx* cur
    cdef cplx* nxt
    iterates = [povm.copy()] if record else None
    have_lam = False

    while it < max_iter:
        cur = &P[0, 0, 0]
        nxt = &Q[0, 0, 0]
        compute_probs(cur, &R[0, 0, 0], &pr[0, 0], k, m, n)
        tr[it] = loglik(&F[0, 0], &pr[0, 0], k * m)
        weighted_sums(&F[0, 0], &pr[0, 0], prob_floor, &R[0, 0, 0], &S[0, 0, 0], k, m, n)
        # lam = Hermitian part of sum_l S_l Pi_l
        for i in range(nn):
            ws.t2[i] = 0
        for l in range(k):
            matmul(&S[l, 0, 0], cur + l * nn, ws.t1, n)
            for i in range(nn):
                ws.t2[i] = ws.t2[i] + ws.t1[i]
        for i in range(n):
            for j in range(n):
                lam[i, j] = 0.5 * (ws.t2[i * n + j] + conj(ws.t2[j * n + i]))
        have_lam = True
        info = ws.eigh(&lam[0, 0])
        if info != 0:
            raise ArithmeticError(f"zheev failed with info={info}")
        top = 0.0
        for i in range(n):
            if fabs(ws.evals[i]) > top:
                top = fabs(ws.evals[i])
        rank = 0
        for i in range(n):
            if top > 0 and fabs(ws.evals[i]) > rel_tol * top:
                gv[i] = 1.0 / ws.evals[i]
                rank += 1
            else:
                gv[i] = 0.0
        ws.spectral(&gv[0], &lam_inv[0, 0])
        for l in range(k):
            matmul(&lam_inv[0, 0], &S[l, 0, 0], ws.t1, n)
            x = nxt + l * nn
            matmul(ws.t1, cur + l * nn, x, n)
            for i in range(n):
                for j in range(i, n):
                    z = 0.5 * (x[i * n + j] + conj(x[j * n + i]))
                    x[i * n + j] = z
                    x[j * n + i] = conj(z)
        change = max_change(nxt, cur, k, nn)
        povm, new = new, povm
        P, Q = Q, P
        it += 1
        if record:
            iterates.append(povm.copy())
        if change < tol:
            converged = True
            break

    compute_probs(&P[0, 0, 0], &R[0, 0, 0], &pr[0, 0], k, m, n)
    tr[it] = loglik(&F[0, 0], &pr[0, 0], k * m)
    return (povm, lam_arr if have_lam else None, int(it), trace[: it + 1].copy(),
            bool(converged), rank, iterates)


def run_dform(factors0, rhos, f, double prob_floor, double rel_tol, long max_iter, double tol, bint record):
    factors = np.array(factors0, dtype=complex, order="C")
    newf = np.empty_like(factors)
    cdef cplx[:, :, ::1] D = factors
    cdef cplx[:, :, ::1] D2 = newf
    cdef cplx[:, :, ::1] R = np.array(rhos, dtype=complex, order="C")
    cdef double[:, ::1] F = np.array(f, dtype=float, order="C")
    cdef int k = D.shape[0], n = D.shape[1], m = R.shape[0], nn = n * n
    povm = np.empty((k, n, n), dtype=complex)
    newp = np.empty_like(povm)
    cdef cplx[:, :, ::1] P = povm
    cdef cplx[:, :, ::1] Q = newp
    s_arr = np.empty((k, n, n), dtype=complex)
    cdef cplx[:, :, ::1] S = s_arr
    p_arr = np.empty((k, m))
    cdef double[:, ::1] pr = p_arr
    g_arr = np.empty((n, n), dtype=complex)
    cdef cplx[:, ::1] G = g_arr
    lam_arr = np.zeros((n, n), dtype=complex)
    cdef cplx[:, ::1] lam = lam_arr
    inv_arr = np.empty((n, n), dtype=complex)
    cdef cplx[:, ::1] lam_inv = inv_arr
    root_arr = np.empty(n)
    cdef double[::1] root = root_arr
    ginv_arr = np.empty(n)
    cdef double[::1] ginv = ginv_arr
    trace = np.empty(max_iter + 1)
    cdef double[::1] tr = trace
    cdef _Workspace ws = _Workspace(n)
    cdef long it = 0
    cdef int l, i, rank = 0, info
    cdef double top, change
    cdef bint converged = False
    cdef cplx* gp = &G[0, 0]
    have_lam = False

    for l in range(k):
        gram(&D[l, 0, 0], &P[l, 0, 0], n)
    iterates = [povm.copy()] if record else None

    while it < max_iter:
        compute_probs(&P[0, 0, 0], &R[0, 0, 0], &pr[0, 0], k, m, n)
        tr[it] = loglik(&F[0, 0], &pr[0, 0], k * m)
        weighted_sums(&F[0, 0], &pr[0, 0], prob_floor, &R[0, 0, 0], &S[0, 0, 0], k, m, n)
        for i in range(nn):
            gp[i] = 0
        for l in range(k):
            matmul(&S[l, 0, 0], &P[l, 0, 0], ws.t1, n)
            matmul(ws.t1, &S[l, 0, 0], ws.t2, n)
            for i in range(nn):
                gp[i] = gp[i] + ws.t2[i]
        info = ws.eigh(&G[0, 0])
        if info != 0:
            raise ArithmeticError(f"zheev failed with info={info}")
        top = fabs(ws.evals[n - 1])
        if fabs(ws.evals[0]) > top:
            top = fabs(ws.evals[0])
        if ws.evals[0] < -G_CLAMP_REL * top:
            raise IndefiniteG(f"G has eigenvalue {ws.evals[0]:.3e} (largest {top:.3e})")
        for i in range(n):
            root[i] = sqrt(ws.evals[i]) if ws.evals[i] > 0 else 0.0
        rank = 0
        for i in range(n):
            if root[n - 1] > 0 and root[i] > rel_tol * root[n - 1]:
                ginv[i] = 1.0 / root[i]
                rank += 1
            else:
                ginv[i] = 0.0
        ws.spectral(&root[0], &lam[0, 0])
        ws.spectral(&ginv[0], &lam_inv[0, 0])
        have_lam = True
        for l in range(k):
            matmul(&D[l, 0, 0], &S[l, 0, 0], ws.t1, n)
            matmul(ws.t1, &lam_inv[0, 0], &D2[l, 0, 0], n)
            gram(&D2[l, 0, 0], &Q[l, 0, 0], n)
        change = max_change(&Q[0, 0, 0], &P[0, 0, 0], k, nn)
        factors, newf = newf, factors
        D, D2 = D2, D
        povm, newp = newp, povm
        P, Q = Q, P
        it += 1
        if record:
            iterates.append(povm.copy())
        if change < tol:
            converged = True
            break

    compute_probs(&P[0, 0, 0], &R[0, 0, 0], &pr[0, 0], k, m, n)
    tr[it] = loglik(&F[0, 0], &pr[0, 0], k * m)
    return (povm, lam_arr if have_lam else None, int(it), trace[: it + 1].copy(),
            bool(converged), rank, iterates)


def run_diagonal(r0, diags, f, double prob_floor, double rel_tol, long max_iter, double tol, bint record):
    r = np.array(r0, dtype=float, order="C")
    newr = np.empty_like(r)
    cdef double[:, ::1] Rv = r
    cdef double[:, ::1] Nv = newr
    cdef double[:, ::1] Dg = np.array(diags, dtype=float, order="C")
    cdef double[:, ::1] F = np.array(f, dtype=float, order="C")
    cdef int k = Rv.shape[0], n = Rv.shape[1], m = Dg.shape[0]
    p_arr = np.empty((k, m))
    cdef double[:, ::1] pr = p_arr
    t_arr = np.empty((k, n))
    cdef double[:, ::1] T = t_arr
    lam_arr = np.zeros(n)
    cdef double[::1] lam = lam_arr
    trace = np.empty(max_iter + 1)
    cdef double[::1] tr = trace
    cdef long it = 0
    cdef int l, s, j, rank = 0
    cdef double acc, q, w, change, d, top
    cdef bint converged = False
    iterates = [r.copy()] if record else None
    have_lam = False

    while it < max_iter:
        for l in range(k):
            for s in range(m):
                acc = 0.0
                for j in range(n):
                    acc += Rv[l, j] * Dg[s, j]
                pr[l, s] = acc
        tr[it] = loglik(&F[0, 0], &pr[0, 0], k * m)
        for l in range(k):
            for j in range(n):
                T[l, j] = 0.0
            for s in range(m):
                if F[l, s] > 0:
                    q = pr[l, s]
                    if q < prob_floor:
                        q = prob_floor
                    w = F[l, s] / q
                    for j in range(n):
                        T[l, j] += w * Dg[s, j]
        for j in range(n):
            acc = 0.0
            for l in range(k):
                acc += T[l, j] * Rv[l, j]
            lam[j] = acc
        have_lam = True
        change = 0.0
        for l in range(k):
            acc = 0.0
            for j in range(n):
                if lam[j] > 0:
                    Nv[l, j] = Rv[l, j] * T[l, j] / lam[j]
                else:
                    Nv[l, j] = Rv[l, j]
                d = Nv[l, j] - Rv[l, j]
                acc += d * d
            acc = sqrt(acc)
            if acc > change:
                change = acc
        r, newr = newr, r
        Rv, Nv = Nv, Rv
        it += 1
        if record:
            iterates.append(r.copy())
        if change < tol:
            converged = True
            break

    for l in range(k):
        for s in range(m):
            acc = 0.0
            for j in range(n):
                acc += Rv[l, j] * Dg[s, j]
            pr[l, s] = acc
    tr[it] = loglik(&F[0, 0], &pr[0, 0], k * m)
    if have_lam:
        top = 0.0
        for j in range(n):
            if lam[j] > top:
                top = lam[j]
        for j in range(n):
            if lam[j] > rel_tol * top:
                rank += 1
    return (r, lam_arr if have_lam else None, int(it), trace[: it + 1].copy(),
            bool(converged), rank, iterates)
