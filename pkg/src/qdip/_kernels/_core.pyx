# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts and algorithms as ``pure.py``.

Per step the real symmetric Hamiltonian is diagonalized with LAPACK dsyev.
The buffer convention differs from NumPy: after dsyev on a row-major buffer,
row ``a`` holds the eigenvector for ``w[a]`` (LAPACK writes Fortran columns),
so with ``R`` denoting that buffer, ``A = R^T diag(w) R``. All hot loops run
without the GIL so callers can parallelize over independent propagations
with ordinary threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, cos, fabs, sin
from libc.string cimport memcpy
from scipy.linalg.cython_lapack cimport dsyev

cnp.import_array()

BACKEND_NAME = "cython"

ctypedef double complex zc


cdef inline void zmatmul(int n, zc* out, zc* a, zc* b) noexcept nogil:
    # out = a @ b, all row-major n x n
    cdef int i, j, k
    cdef zc acc
    for i in range(n):
        for j in range(n):
            acc = 0
            for k in range(n):
                acc = acc + a[i * n + k] * b[k * n + j]
            out[i * n + j] = acc


cdef inline void eig_step(int n, const double* h0, const double* mu, double lam,
                          double* a, double* w, double* work, int lwork) noexcept nogil:
    # fill a = diag(h0) - lam*mu (row-major; symmetric, so LAPACK's
    # column-major view is the same matrix) and diagonalize in place
    cdef int i, j, info
    cdef char jobz = b'V', uplo = b'L'
    for i in range(n):
        for j in range(n):
            a[i * n + j] = -lam * mu[i * n + j]
        a[i * n + i] += h0[i]
    dsyev(&jobz, &uplo, &n, a, &n, w, work, &lwork, &info)
    # info != 0 cannot be reported without the GIL; poison the output so the
    # caller's unitarity check trips (dsyev failures on finite real
    # symmetric input are effectively unreachable)
    if info != 0:
        w[0] = NAN


cdef inline void build_expm(int n, double* r, double* w, double dt, zc* e) noexcept nogil:
    # e = exp(-1j*dt*A) = R^T diag(exp(-1j*dt*w)) R
    cdef int a_, b_, c_
    cdef zc ph
    for b_ in range(n):
        for c_ in range(n):
            e[b_ * n + c_] = 0
    for a_ in range(n):
        ph = cos(dt * w[a_]) - 1j * sin(dt * w[a_])
        for b_ in range(n):
            for c_ in range(n):
                e[b_ * n + c_] = e[b_ * n + c_] + ph * r[a_ * n + b_] * r[a_ * n + c_]


cdef inline zc phi_fn(double theta) noexcept nogil:
    # (e^{1j*theta} - 1)/(1j*theta), the divided-difference kernel
    if fabs(theta) < 1e-6:
        return (1.0 - theta * theta / 6.0) + 1j * (theta / 2.0 - theta * theta * theta / 24.0)
    return sin(theta) / theta + 1j * ((1.0 - cos(theta)) / theta)


cdef inline void diag_phase_apply(int n, const double* h0, double dt, zc* u) noexcept nogil:
    # u = diag(exp(-1j*dt*h0)) @ u, in place
    cdef int i, j
    cdef zc ph
    for i in range(n):
        ph = cos(dt * h0[i]) - 1j * sin(dt * h0[i])
        for j in range(n):
            u[i * n + j] = ph * u[i * n + j]


def _lwork_for(int n):
    cdef double wkopt
    cdef double[::1] a = np.zeros(n * n)
    cdef double[::1] w = np.zeros(n)
    cdef int info, lwork = -1
    cdef char jobz = b'V', uplo = b'L'
    dsyev(&jobz, &uplo, &n, &a[0], &n, &w[0], &wkopt, &lwork, &info)
    return max(3 * n, int(wkopt))


def propagate(h0, mu, lam, dt, u0=None, stride=0):
    """Propagate over all steps; optionally collect strided snapshots."""
    cdef const double[::1] h0v = np.ascontiguousarray(h0, dtype=np.float64)
    cdef const double[:, ::1] muv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[::1] lamv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef const double[::1] dtv = np.ascontiguousarray(dt, dtype=np.float64)
    cdef int n = h0v.shape[0]
    cdef Py_ssize_t s = lamv.shape[0]
    cdef Py_ssize_t stridec = stride
    u_arr = np.eye(n, dtype=np.complex128) if u0 is None \
        else np.array(u0, dtype=np.complex128)
    cdef zc[:, ::1] uv = u_arr
    cdef Py_ssize_t nsnap = s // stridec if stridec > 0 else 0
    snaps_arr = np.zeros((nsnap, n, n), dtype=np.complex128)
    cdef zc[:, :, ::1] snapsv = snaps_arr
    if s == 0:
        return (u_arr, snaps_arr) if stride > 0 else u_arr

    cdef int lwork = _lwork_for(n)
    scratch = np.zeros(n * n + n + lwork + 2 * n * n, dtype=np.float64)
    ztmp = np.zeros(2 * n * n, dtype=np.complex128)
    cdef double[::1] sc = scratch
    cdef zc[::1] zv = ztmp
    cdef double* a = &sc[0]
    cdef double* w = &sc[n * n]
    cdef double* work = &sc[n * n + n]
    cdef zc* e = &zv[0]
    cdef zc* tmp = &zv[n * n]
    cdef zc* u = &uv[0, 0]
    cdef Py_ssize_t j, isn = 0
    with nogil:
        for j in range(s):
            if lamv[j] == 0.0:
                diag_phase_apply(n, &h0v[0], dtv[j], u)
            else:
                eig_step(n, &h0v[0], &muv[0, 0], lamv[j], a, w, work, lwork)
                build_expm(n, a, w, dtv[j], e)
                zmatmul(n, tmp, e, u)
                memcpy(u, tmp, n * n * sizeof(zc))
            if stridec > 0 and (j + 1) % stridec == 0:
                memcpy(&snapsv[isn, 0, 0], u, n * n * sizeof(zc))
                isn += 1
    if stride > 0:
        return u_arr, snaps_arr
    return u_arr


def propagate_sens(h0, mu, lam, dt, pairs, u0=None):
    """Propagate and accumulate dipole-entry derivatives of the discrete map."""
    cdef const double[::1] h0v = np.ascontiguousarray(h0, dtype=np.float64)
    cdef const double[:, ::1] muv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[::1] lamv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef const double[::1] dtv = np.ascontiguousarray(dt, dtype=np.float64)
    cdef const long[:, ::1] pairsv = np.ascontiguousarray(pairs, dtype=np.int64)
    cdef int n = h0v.shape[0]
    cdef Py_ssize_t s = lamv.shape[0]
    cdef int npair = pairsv.shape[0]
    u_arr = np.eye(n, dtype=np.complex128) if u0 is None \
        else np.array(u0, dtype=np.complex128)
    g_arr = np.zeros((npair, n, n), dtype=np.complex128)
    cdef zc[:, ::1] uv = u_arr
    cdef zc[:, :, ::1] gv = g_arr
    if s == 0 or npair == 0:
        return u_arr, g_arr

    cdef int lwork = _lwork_for(n)
    scratch = np.zeros(n * n + n + lwork, dtype=np.float64)
    ztmp = np.zeros(5 * n * n, dtype=np.complex128)
    cdef double[::1] sc = scratch
    cdef zc[::1] zv = ztmp
    cdef double* a = &sc[0]
    cdef double* w = &sc[n * n]
    cdef double* work = &sc[n * n + n]
    cdef zc* e = &zv[0]
    cdef zc* tmp = &zv[n * n]
    cdef zc* wmat = &zv[2 * n * n]       # W = R @ U
    cdef zc* m = &zv[3 * n * n]          # phi o (V^T sx V)
    cdef zc* t2 = &zv[4 * n * n]         # m @ W
    cdef zc* u = &uv[0, 0]
    cdef zc* g = &gv[0, 0, 0]
    cdef Py_ssize_t j
    cdef int p, l, k, a_, b_, c_
    cdef zc coeff, acc
    cdef double theta
    with nogil:
        for j in range(s):
            if lamv[j] == 0.0:
                diag_phase_apply(n, &h0v[0], dtv[j], u)
                continue
            eig_step(n, &h0v[0], &muv[0, 0], lamv[j], a, w, work, lwork)
            # W = R @ U (real R times complex U)
            for a_ in range(n):
                for c_ in range(n):
                    acc = 0
                    for b_ in range(n):
                        acc = acc + a[a_ * n + b_] * u[b_ * n + c_]
                    wmat[a_ * n + c_] = acc
            coeff = 1j * dtv[j] * lamv[j]
            for p in range(npair):
                l = <int> pairsv[p, 0]
                k = <int> pairsv[p, 1]
                # m_ab = phi(dt*(w_a-w_b)) * (R[a,l]R[b,k] + R[a,k]R[b,l])
                for a_ in range(n):
                    for b_ in range(n):
                        theta = dtv[j] * (w[a_] - w[b_])
                        m[a_ * n + b_] = phi_fn(theta) * (
                            a[a_ * n + l] * a[b_ * n + k]
                            + a[a_ * n + k] * a[b_ * n + l])
                zmatmul(n, t2, m, wmat)
                # g[p] += coeff * W^H @ t2
                for b_ in range(n):
                    for c_ in range(n):
                        acc = 0
                        for a_ in range(n):
                            acc = acc + wmat[a_ * n + b_].conjugate() * t2[a_ * n + c_]
                        g[p * n * n + b_ * n + c_] = g[p * n * n + b_ * n + c_] + coeff * acc
            build_expm(n, a, w, dtv[j], e)
            zmatmul(n, tmp, e, u)
            memcpy(u, tmp, n * n * sizeof(zc))
    return u_arr, g_arr


def overlap_grad(h0, mu, lam, dt, psi0, psif):
    """Overlap ``<psif|U|psi0>`` and its gradient wrt each step coupling.

    Stores one real n x n factor per step, so memory scales with the window
    length; intended for steering windows, not full interrogation horizons.
    """
    cdef const double[::1] h0v = np.ascontiguousarray(h0, dtype=np.float64)
    cdef const double[:, ::1] muv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[::1] lamv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef const double[::1] dtv = np.ascontiguousarray(dt, dtype=np.float64)
    psi0_arr = np.ascontiguousarray(psi0, dtype=np.complex128)
    psif_arr = np.ascontiguousarray(psif, dtype=np.complex128)
    cdef const zc[::1] p0 = psi0_arr
    cdef const zc[::1] pf = psif_arr
    cdef int n = h0v.shape[0]
    cdef Py_ssize_t s = lamv.shape[0]
    if s == 0:
        return complex(np.vdot(psif_arr, psi0_arr)), np.zeros(0, dtype=np.complex128)

    cdef int lwork = _lwork_for(n)
    rs_arr = np.zeros((s, n, n), dtype=np.float64)
    ws_arr = np.zeros((s, n), dtype=np.float64)
    fwd_arr = np.zeros((s + 1, n), dtype=np.complex128)
    dz_arr = np.zeros(s, dtype=np.complex128)
    scratch = np.zeros(lwork + n * n, dtype=np.float64)
    ztmp = np.zeros(n * n + 4 * n, dtype=np.complex128)
    cdef double[:, :, ::1] rs = rs_arr
    cdef double[:, ::1] ws = ws_arr
    cdef zc[:, ::1] fwd = fwd_arr
    cdef zc[::1] dzv = dz_arr
    cdef double[::1] sc = scratch
    cdef zc[::1] zv = ztmp
    cdef double* rmu = &sc[lwork]
    cdef zc* e = &zv[0]
    cdef zc* bwd = &zv[n * n]
    cdef zc* tmpv = &zv[n * n + n]
    cdef zc* x = &zv[n * n + 2 * n]
    cdef zc* y = &zv[n * n + 3 * n]
    cdef Py_ssize_t j
    cdef int a_, b_, c_
    cdef zc z, acc
    cdef double theta, mt_ab
    with nogil:
        for a_ in range(n):
            fwd[0, a_] = p0[a_]
        for j in range(s):
            eig_step(n, &h0v[0], &muv[0, 0], lamv[j], &rs[j, 0, 0], &ws[j, 0],
                     &sc[0], lwork)
            build_expm(n, &rs[j, 0, 0], &ws[j, 0], dtv[j], e)
            for a_ in range(n):
                acc = 0
                for b_ in range(n):
                    acc = acc + e[a_ * n + b_] * fwd[j, b_]
                fwd[j + 1, a_] = acc
        z = 0
        for a_ in range(n):
            z = z + pf[a_].conjugate() * fwd[s, a_]
            bwd[a_] = pf[a_]
        for j in range(s - 1, -1, -1):
            build_expm(n, &rs[j, 0, 0], &ws[j, 0], dtv[j], e)
            # bwd <- E^H bwd
            for a_ in range(n):
                acc = 0
                for b_ in range(n):
                    acc = acc + e[b_ * n + a_].conjugate() * bwd[b_]
                tmpv[a_] = acc
            memcpy(bwd, tmpv, n * sizeof(zc))
            # x = R bwd, y = R fwd[j], rmu = R mu
            for a_ in range(n):
                acc = 0
                for b_ in range(n):
                    acc = acc + rs[j, a_, b_] * bwd[b_]
                x[a_] = acc
                acc = 0
                for b_ in range(n):
                    acc = acc + rs[j, a_, b_] * fwd[j, b_]
                y[a_] = acc
                for b_ in range(n):
                    mt_ab = 0
                    for c_ in range(n):
                        mt_ab += rs[j, a_, c_] * muv[c_, b_]
                    rmu[a_ * n + b_] = mt_ab
            # dz_j = 1j*dt * sum_ab conj(x_a) phi_ab (R mu R^T)_ab y_b
            acc = 0
            for a_ in range(n):
                for b_ in range(n):
                    mt_ab = 0
                    for c_ in range(n):
                        mt_ab += rmu[a_ * n + c_] * rs[j, b_, c_]
                    theta = dtv[j] * (ws[j, a_] - ws[j, b_])
                    acc = acc + x[a_].conjugate() * phi_fn(theta) * mt_ab * y[b_]
            dzv[j] = 1j * dtv[j] * acc
    return complex(z), dz_arr
