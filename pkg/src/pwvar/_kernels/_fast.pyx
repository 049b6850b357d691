# cython: language_level=3, boundscheck=False, wraparound=False
# cython: cdivision=True, initializedcheck=False
"""Compiled per-pixel kernels.

Mirrors py_backend exactly: same aperture comparisons, same interpolation
edge rule, same covariance / solve / eigendecomposition chain, written as
fused per-pixel loops on top of BLAS/LAPACK (dgemm, dposv, dsyevd).  A
pixel whose linear solve or eigendecomposition fails is set to NaN; the
caller turns that into an error.

Layout trick used throughout: a C-order buffer holding the subarray
window matrix W (M rows, L columns) is, viewed through Fortran
conventions with lda=L, exactly W transposed, so dgemm('N','T') on it
produces sum-of-outer-products without any copies, and the eigenvectors
dsyevd leaves in a C-order square buffer land in its rows.
"""

import numpy as np

from libc.math cimport cos, fabs, floor, sqrt, M_PI, NAN
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport dposv, dsyevd


def das_block(double[:, ::1] samples, double[::1] elem_x, double fs,
              double t0, double cos_a, double sin_a, double c,
              double[::1] x, double[::1] z, double f_number, int hann):
    cdef Py_ssize_t nt = samples.shape[0]
    cdef Py_ssize_t ne = samples.shape[1]
    cdef Py_ssize_t nb = z.shape[0]
    cdef Py_ssize_t nx = x.shape[0]
    out_arr = np.zeros((nb, nx))
    cdef double[:, ::1] out = out_arr
    full_arr = np.ones(ne)
    cdef double[::1] full_w = full_arr
    cdef Py_ssize_t ib, ix, e
    cdef Py_ssize_t i0
    cdef double zp, xp, tt, half, dxv, tau, fi, frac, val, w, acc, xc, hs

    if hann and f_number == 0.0 and ne > 1:
        xc = (elem_x[0] + elem_x[ne - 1]) / 2.0
        hs = (elem_x[ne - 1] - elem_x[0]) / 2.0
        for e in range(ne):
            full_w[e] = 0.5 + 0.5 * cos(M_PI * (elem_x[e] - xc) / hs)

    with nogil:
        for ib in range(nb):
            zp = z[ib]
            half = 0.0
            if f_number != 0.0:
                half = zp / (2.0 * f_number)
            for ix in range(nx):
                xp = x[ix]
                tt = (zp * cos_a + xp * sin_a) / c
                acc = 0.0
                for e in range(ne):
                    dxv = xp - elem_x[e]
                    if f_number != 0.0 and fabs(dxv) > half:
                        continue
                    tau = tt + sqrt(dxv * dxv + zp * zp) / c
                    fi = (tau - t0) * fs
                    i0 = <Py_ssize_t>floor(fi)
                    frac = fi - i0
                    val = 0.0
                    if 0 <= i0 <= nt - 1:
                        val += (1.0 - frac) * samples[i0, e]
                    if 0 <= i0 + 1 <= nt - 1:
                        val += frac * samples[i0 + 1, e]
                    if hann:
                        if f_number != 0.0:
                            w = dxv / half if half > 0.0 else 0.0
                            w = 0.5 + 0.5 * cos(M_PI * w)
                        else:
                            w = full_w[e]
                    else:
                        w = 1.0
                    acc += w * val
                out[ib, ix] = acc
    return out_arr


def ebmv_block(double[:, ::1] samples, double[::1] elem_x, double fs,
               double t0, double cos_a, double sin_a, double c,
               double[::1] x, double[::1] z, double f_number,
               int subarray, double loading, double criterion, int taps):
    cdef Py_ssize_t nt = samples.shape[0]
    cdef Py_ssize_t ne = samples.shape[1]
    cdef Py_ssize_t nb = z.shape[0]
    cdef Py_ssize_t nx = x.shape[0]
    cdef int lcap = subarray if subarray < <int>ne else <int>ne
    out_arr = np.zeros((nb, nx))
    cdef double[:, ::1] out = out_arr

    # per-call scratch, sized for the largest aperture this call can see
    cdef double[::1] ybuf = np.empty(ne * taps)
    cdef double[::1] wbuf = np.empty(ne * taps * lcap)
    cdef double[::1] rbuf = np.empty(lcap * lcap)
    cdef double[::1] rfac = np.empty(lcap * lcap)
    cdef double[::1] rvec = np.empty(lcap * lcap)
    cdef double[::1] evals = np.empty(lcap)
    cdef double[::1] wmv = np.empty(lcap)
    cdef double[::1] wts = np.empty(lcap)
    cdef int lwork = 1 + 6 * lcap + 2 * lcap * lcap
    cdef int liwork = 3 + 5 * lcap
    cdef double[::1] work = np.empty(lwork)
    cdef int[::1] iwork = np.empty(liwork, dtype=np.intc)

    cdef char no_t = b'N'
    cdef char yes_t = b'T'
    cdef char lower = b'L'
    cdef char jobz = b'V'
    cdef int one_i = 1
    cdef int info, La, K, M
    cdef double alpha, beta = 0.0
    cdef double kc_off = (taps - 1) / 2.0
    cdef int kc = (taps - 1) // 2
    cdef Py_ssize_t ib, ix, e, e0, e1, na, j, k, i, l, m, i0
    cdef double zp, xp, half, lo, hi, tt, dxv, tau, base, fi, frac, val
    cdef double tr, eps, s, thresh, cj, acc

    with nogil:
        for ib in range(nb):
            zp = z[ib]
            for ix in range(nx):
                xp = x[ix]
                if f_number != 0.0:
                    half = zp / (2.0 * f_number)
                    lo = xp - half
                    hi = xp + half
                    e0 = 0
                    while e0 < ne and elem_x[e0] < lo:
                        e0 += 1
                    e1 = e0
                    while e1 < ne and elem_x[e1] <= hi:
                        e1 += 1
                    na = e1 - e0
                else:
                    e0 = 0
                    na = ne
                if na == 0:
                    out[ib, ix] = 0.0
                    continue

                tt = (zp * cos_a + xp * sin_a) / c
                for j in range(na):
                    e = e0 + j
                    dxv = xp - elem_x[e]
                    tau = tt + sqrt(dxv * dxv + zp * zp) / c
                    base = (tau - t0) * fs
                    for k in range(taps):
                        fi = base + (k - kc_off)
                        i0 = <Py_ssize_t>floor(fi)
                        frac = fi - i0
                        val = 0.0
                        if 0 <= i0 <= nt - 1:
                            val += (1.0 - frac) * samples[i0, e]
                        if 0 <= i0 + 1 <= nt - 1:
                            val += frac * samples[i0 + 1, e]
                        ybuf[j * taps + k] = val

                La = subarray if subarray < <int>na else <int>na
                K = <int>na - La + 1
                M = K * taps
                for l in range(K):
                    for k in range(taps):
                        m = l * taps + k
                        for i in range(La):
                            wbuf[m * La + i] = ybuf[(l + i) * taps + k]
                alpha = 1.0 / M
                dgemm(&no_t, &yes_t, &La, &La, &M, &alpha,
                      &wbuf[0], &La, &wbuf[0], &La, &beta, &rbuf[0], &La)

                tr = 0.0
                for i in range(La):
                    tr += rbuf[i * La + i]
                if tr == 0.0:
                    out[ib, ix] = 0.0
                    continue
                eps = loading * tr / La
                for i in range(La):
                    rbuf[i * La + i] += eps

                memcpy(&rfac[0], &rbuf[0], La * La * sizeof(double))
                for i in range(La):
                    wmv[i] = 1.0
                dposv(&lower, &La, &one_i, &rfac[0], &La,
                      &wmv[0], &La, &info)
                if info != 0:
                    out[ib, ix] = NAN
                    continue
                s = 0.0
                for i in range(La):
                    s += wmv[i]
                for i in range(La):
                    wmv[i] /= s

                memcpy(&rvec[0], &rbuf[0], La * La * sizeof(double))
                dsyevd(&jobz, &lower, &La, &rvec[0], &La, &evals[0],
                       &work[0], &lwork, &iwork[0], &liwork, &info)
                if info != 0:
                    out[ib, ix] = NAN
                    continue

                # eigenvalues ascending; eigenvector j is row j of rvec
                thresh = criterion * evals[La - 1]
                for i in range(La):
                    wts[i] = 0.0
                for j in range(La):
                    if evals[j] >= thresh:
                        cj = 0.0
                        for i in range(La):
                            cj += rvec[j * La + i] * wmv[i]
                        for i in range(La):
                            wts[i] += cj * rvec[j * La + i]

                acc = 0.0
                for l in range(K):
                    s = 0.0
                    for i in range(La):
                        s += wts[i] * ybuf[(l + i) * taps + kc]
                    acc += s
                out[ib, ix] = acc / K
    return out_arr
