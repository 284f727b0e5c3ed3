# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: strided valid cross-correlation and threshold sampling.

Convolution gathers every window of the batch into a row-major column matrix
(one row per output position, one column per kernel tap) in C, multiplies
with BLAS ``dgemm``, and scatters input gradients back in C. Row-major
buffers are handed to Fortran BLAS as their transposes.
"""

import numpy as np
from scipy.linalg.cython_blas cimport dgemm


cdef void _im2col(const double[:, :, :, ::1] x, double *cols, Py_ssize_t KH, Py_ssize_t KW,
                  Py_ssize_t OH, Py_ssize_t OW, Py_ssize_t sh, Py_ssize_t sw) noexcept nogil:
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t n, c, y, xo, i, j, p = 0
    cdef const double *src
    for n in range(N):
        for y in range(OH):
            for xo in range(OW):
                for c in range(C):
                    for i in range(KH):
                        src = &x[n, c, y * sh + i, xo * sw]
                        for j in range(KW):
                            cols[p] = src[j]
                            p += 1


cdef void _gemm(char *ta, char *tb, int m, int n, int k, const double *a, int lda,
                const double *b, int ldb, double *c, int ldc) noexcept nogil:
    cdef double one = 1.0, zero = 0.0
    dgemm(ta, tb, &m, &n, &k, &one, <double *>a, &lda, <double *>b, &ldb, &zero, c, &ldc)


def conv2d_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] k,
                   const double[::1] b, Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = k.shape[0], KH = k.shape[2], KW = k.shape[3]
    cdef Py_ssize_t OH = (H - KH) // sh + 1
    cdef Py_ssize_t OW = (W - KW) // sw + 1
    cdef Py_ssize_t P = N * OH * OW, KC = C * KH * KW
    cdef Py_ssize_t n, o, y, xo, row
    out = np.empty((N, O, OH, OW), dtype=np.float64)
    if P == 0 or O == 0:
        return out
    cdef double[:, :, :, ::1] res = out
    cols_arr = np.empty((P, KC), dtype=np.float64)
    prod_arr = np.empty((P, O), dtype=np.float64)
    cdef double[:, ::1] cols = cols_arr
    cdef double[:, ::1] prod = prod_arr
    with nogil:
        _im2col(x, &cols[0, 0], KH, KW, OH, OW, sh, sw)
        # prod (P x O) = cols (P x KC) @ kernels^T (KC x O)
        _gemm(b"T", b"N", <int>O, <int>P, <int>KC, &k[0, 0, 0, 0], <int>KC,
              &cols[0, 0], <int>KC, &prod[0, 0], <int>O)
        row = 0
        for n in range(N):
            for y in range(OH):
                for xo in range(OW):
                    for o in range(O):
                        res[n, o, y, xo] = prod[row, o] + b[o]
                    row += 1
    return out


def conv2d_backward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] k,
                    const double[:, :, :, ::1] g, Py_ssize_t sh, Py_ssize_t sw,
                    bint need_input_grad=True):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = k.shape[0], KH = k.shape[2], KW = k.shape[3]
    cdef Py_ssize_t OH = g.shape[2], OW = g.shape[3]
    cdef Py_ssize_t P = N * OH * OW, KC = C * KH * KW
    cdef Py_ssize_t n, o, c, y, xo, i, j, row, p
    cdef double *dst
    cdef double *flat
    dk_arr = np.zeros((O, C, KH, KW), dtype=np.float64)
    db_arr = np.zeros(O, dtype=np.float64)
    dx_arr = np.zeros((N, C, H, W), dtype=np.float64) if need_input_grad else None
    if P == 0 or O == 0:
        return dk_arr, db_arr, dx_arr
    cdef double[:, :, :, ::1] dk = dk_arr
    cdef double[::1] db = db_arr
    cdef double[:, :, :, ::1] dx
    cols_arr = np.empty((P, KC), dtype=np.float64)
    gmat_arr = np.empty((P, O), dtype=np.float64)
    cdef double[:, ::1] cols = cols_arr
    cdef double[:, ::1] gmat = gmat_arr
    cdef double[:, ::1] dcols
    if need_input_grad:
        dx = dx_arr
        dcols_arr = np.empty((P, KC), dtype=np.float64)
        dcols = dcols_arr
    with nogil:
        _im2col(x, &cols[0, 0], KH, KW, OH, OW, sh, sw)
        row = 0
        for n in range(N):
            for y in range(OH):
                for xo in range(OW):
                    for o in range(O):
                        gmat[row, o] = g[n, o, y, xo]
                    row += 1
        for row in range(P):
            for o in range(O):
                db[o] += gmat[row, o]
        # dk (O x KC) = gmat^T (O x P) @ cols (P x KC)
        _gemm(b"N", b"T", <int>KC, <int>O, <int>P, &cols[0, 0], <int>KC,
              &gmat[0, 0], <int>O, &dk[0, 0, 0, 0], <int>KC)
        if need_input_grad:
            # dcols (P x KC) = gmat (P x O) @ kernels (O x KC)
            _gemm(b"N", b"N", <int>KC, <int>P, <int>O, &k[0, 0, 0, 0], <int>KC,
                  &gmat[0, 0], <int>O, &dcols[0, 0], <int>KC)
            flat = &dcols[0, 0]
            p = 0
            for n in range(N):
                for y in range(OH):
                    for xo in range(OW):
                        for c in range(C):
                            for i in range(KH):
                                dst = &dx[n, c, y * sh + i, xo * sw]
                                for j in range(KW):
                                    dst[j] += flat[p]
                                    p += 1
    return dk_arr, db_arr, dx_arr


def threshold_crossings(const double[::1] profile, double threshold):
    cdef Py_ssize_t n = profile.shape[0] + 1
    cdef Py_ssize_t i, count = 1
    cdef double s = 0.0, v
    picked_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] picked = picked_arr
    picked[0] = 0
    with nogil:
        for i in range(1, n):
            v = profile[i - 1]
            s += v if v >= 0.0 else -v
            if s > threshold:
                picked[count] = i
                count += 1
                s = 0.0
        if picked[count - 1] != n - 1:
            picked[count] = n - 1
            count += 1
    return picked_arr[:count].copy()
