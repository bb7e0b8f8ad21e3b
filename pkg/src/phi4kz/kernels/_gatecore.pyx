# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused two-site gate kernel: contraction, gate application, SVD, truncation.

Numerically equivalent to ``phi4kz.kernels.pure.apply_bond_gate`` but with
the intermediate permutations and the LAPACK calls fused into one compiled
routine, which removes the per-call dispatch overhead that dominates at the
small bond dimensions typical of desk-scale sweeps.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport zgemm
from scipy.linalg.cython_lapack cimport zgesdd, zgesvd

cnp.import_array()

NAME = "compiled"

ctypedef double complex zc


cdef void _gemm_c(zc* a, int am, int ak, zc* b, int bn, zc* c) noexcept nogil:
    """C-order C(am,bn) = A(am,ak) @ B(ak,bn) via Fortran gemm on transposes."""
    cdef zc one = 1.0
    cdef zc zero = 0.0
    cdef char nn = b'N'
    zgemm(&nn, &nn, &bn, &am, &ak, &one, b, &bn, a, &ak, &zero, c, &bn)


cdef int _svd_c(zc[::1] mat, int m, int n, double[::1] s, zc[::1] u, zc[::1] vt):
    """SVD of a C-order (m, n) matrix.

    Exploits the Fortran view: the buffer read column-major is the transpose,
    and the transposed factors land exactly in C-order ``u`` (m, k) and
    ``vt`` (k, n) buffers with no copies.  Falls back to the slower QR-based
    driver when the divide-and-conquer one fails to converge.
    """
    cdef int k = min(m, n)
    cdef int info = 0
    cdef int lwork = -1
    cdef char jobz = b'S'
    cdef char jobs = b'S'
    cdef zc wkopt
    cdef cnp.ndarray[zc, ndim=1] a_copy = np.asarray(mat).copy()
    cdef zc[::1] a_view = a_copy
    cdef cnp.ndarray[double, ndim=1] rwork = np.empty(
        max(1, k * max(5 * k + 7, 2 * max(m, n) + 2 * k + 1)), dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] iwork = np.empty(max(1, 8 * k), dtype=np.int32)
    cdef double[::1] rw = rwork
    cdef int[::1] iw = <int[:iwork.shape[0]]> <int*> cnp.PyArray_DATA(iwork)
    cdef cnp.ndarray[zc, ndim=1] work
    cdef zc[::1] wv

    # Fortran reads the buffer as A^T of shape (n, m), so LAPACK's U output
    # (n x k, Fortran order) is exactly the C-order (k, n) right factor of A
    # and its VT output (k x m) is the C-order (m, k) left factor; route the
    # LAPACK U into ``vt`` and the LAPACK VT into ``u``.
    zgesdd(&jobz, &n, &m, &a_view[0], &n, &s[0], &vt[0], &n, &u[0], &k,
           &wkopt, &lwork, &rw[0], &iw[0], &info)
    lwork = <int> wkopt.real
    work = np.empty(max(1, lwork), dtype=np.complex128)
    wv = work
    zgesdd(&jobz, &n, &m, &a_view[0], &n, &s[0], &vt[0], &n, &u[0], &k,
           &wv[0], &lwork, &rw[0], &iw[0], &info)
    if info == 0:
        return 0

    # gesvd fallback on a fresh copy (gesdd destroys its input)
    a_copy = np.asarray(mat).copy()
    a_view = a_copy
    lwork = -1
    zgesvd(&jobs, &jobs, &n, &m, &a_view[0], &n, &s[0], &vt[0], &n, &u[0], &k,
           &wkopt, &lwork, &rw[0], &info)
    lwork = <int> wkopt.real
    work = np.empty(max(1, lwork), dtype=np.complex128)
    wv = work
    zgesvd(&jobs, &jobs, &n, &m, &a_view[0], &n, &s[0], &vt[0], &n, &u[0], &k,
           &wv[0], &lwork, &rw[0], &info)
    return info


def apply_bond_gate(a1, a2, gate, m_max, weight_tol, fold_left=False):
    cdef cnp.ndarray[zc, ndim=3] a1c = np.ascontiguousarray(a1, dtype=np.complex128)
    cdef cnp.ndarray[zc, ndim=3] a2c = np.ascontiguousarray(a2, dtype=np.complex128)
    cdef cnp.ndarray[zc, ndim=2] gc = np.ascontiguousarray(gate, dtype=np.complex128)
    cdef int chi_l = a1c.shape[0]
    cdef int d = a1c.shape[1]
    cdef int chi_m = a1c.shape[2]
    cdef int chi_r = a2c.shape[2]
    cdef int m = chi_l * d
    cdef int n = d * chi_r
    cdef int k = min(m, n)
    cdef int d2 = d * d
    cdef int lr = chi_l * chi_r

    cdef cnp.ndarray[zc, ndim=1] theta = np.empty(m * n, dtype=np.complex128)
    cdef cnp.ndarray[zc, ndim=1] perm = np.empty(d2 * lr, dtype=np.complex128)
    cdef cnp.ndarray[zc, ndim=1] gperm = np.empty(d2 * lr, dtype=np.complex128)
    cdef zc[::1] th = theta
    cdef zc[::1] pm = perm
    cdef zc[::1] gp = gperm
    cdef zc* a1p = <zc*> cnp.PyArray_DATA(a1c)
    cdef zc* a2p = <zc*> cnp.PyArray_DATA(a2c)
    cdef zc* gatep = <zc*> cnp.PyArray_DATA(gc)

    cdef int l, r, s1, s2, i
    cdef double pre2 = 0.0, tot, tail, kept2
    cdef zc v

    with nogil:
        # theta[(l s1),(s2 r)] = sum_mid a1[l,s1,mid] a2[mid,s2,r]
        _gemm_c(a1p, m, chi_m, a2p, n, &th[0])
        for i in range(m * n):
            v = th[i]
            pre2 += v.real * v.real + v.imag * v.imag
        # permute to ((s1 s2), (l r)) and apply the gate
        for l in range(chi_l):
            for s1 in range(d):
                for s2 in range(d):
                    for r in range(chi_r):
                        pm[(s1 * d + s2) * lr + l * chi_r + r] = \
                            th[(l * d + s1) * n + s2 * chi_r + r]
        _gemm_c(gatep, d2, d2, &pm[0], lr, &gp[0])
        # permute back to ((l s1), (s2 r)) for the bond SVD
        for s1 in range(d):
            for s2 in range(d):
                for l in range(chi_l):
                    for r in range(chi_r):
                        th[(l * d + s1) * n + s2 * chi_r + r] = \
                            gp[(s1 * d + s2) * lr + l * chi_r + r]

    if not pre2 > 0.0:
        from ..errors import NumericalConsistencyError
        raise NumericalConsistencyError("two-site block has zero norm")

    cdef cnp.ndarray[double, ndim=1] s = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[zc, ndim=1] u = np.empty(m * k, dtype=np.complex128)
    cdef cnp.ndarray[zc, ndim=1] vt = np.empty(k * n, dtype=np.complex128)
    cdef double[::1] sv = s
    cdef zc[::1] uv = u
    cdef zc[::1] vtv = vt
    cdef int info = _svd_c(th, m, n, sv, uv, vtv)
    if info != 0:
        from ..errors import NumericalConsistencyError
        raise NumericalConsistencyError(f"SVD failed to converge (info={info})")

    # truncation: greedy keep within relative weight_tol, hard cap m_max
    tot = 0.0
    for i in range(k):
        tot += sv[i] * sv[i]
    cdef int keep = k
    tail = 0.0
    for i in range(k - 1, 0, -1):
        tail += sv[i] * sv[i]
        if tail <= weight_tol * tot:
            keep = i
    if keep > m_max:
        keep = m_max
    if keep < 1:
        keep = 1
    kept2 = 0.0
    for i in range(keep):
        kept2 += sv[i] * sv[i]
    cdef double discarded = 1.0 - kept2 / tot if keep < k else 0.0
    if discarded < 0.0:
        discarded = 0.0
    cdef double kept_amp = sqrt(kept2)
    cdef double factor = kept_amp / sqrt(pre2)

    cdef cnp.ndarray[zc, ndim=3] a1n = np.empty((chi_l, d, keep), dtype=np.complex128)
    cdef cnp.ndarray[zc, ndim=3] a2n = np.empty((keep, d, chi_r), dtype=np.complex128)
    cdef zc* a1np = <zc*> cnp.PyArray_DATA(a1n)
    cdef zc* a2np = <zc*> cnp.PyArray_DATA(a2n)
    cdef int a
    cdef double sn
    cdef bint fold = bool(fold_left)

    with nogil:
        if fold:
            for i in range(m):
                for a in range(keep):
                    a1np[i * keep + a] = uv[i * k + a] * (sv[a] / kept_amp)
            for a in range(keep):
                for i in range(n):
                    a2np[a * n + i] = vtv[a * n + i]
        else:
            for i in range(m):
                for a in range(keep):
                    a1np[i * keep + a] = uv[i * k + a]
            for a in range(keep):
                sn = sv[a] / kept_amp
                for i in range(n):
                    a2np[a * n + i] = vtv[a * n + i] * sn
    return a1n, a2n, factor, discarded
