# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.

Signatures mirror :mod:`gvlasov._pykernels` exactly; :mod:`gvlasov.kernels`
picks one of the two at import time.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport log, sqrt, cos, sin, exp, expm1, fabs, INFINITY
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

BACKEND = "cython"

cdef uint32_t PHILOX_M0 = 0xD2511F53u
cdef uint32_t PHILOX_M1 = 0xCD9E8D57u
cdef uint32_t PHILOX_W0 = 0x9E3779B9u
cdef uint32_t PHILOX_W1 = 0xBB67AE85u
cdef double TWO_PI = 6.283185307179586
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef int r
    cdef uint64_t p0, p1
    cdef uint32_t c0, c1, c2, c3
    c0 = c[0]; c1 = c[1]; c2 = c[2]; c3 = c[3]
    for r in range(10):
        p0 = <uint64_t>PHILOX_M0 * c0
        p1 = <uint64_t>PHILOX_M1 * c2
        c0 = <uint32_t>(p1 >> 32) ^ c1 ^ k0
        c1 = <uint32_t>p1
        c2 = <uint32_t>(p0 >> 32) ^ c3 ^ k1
        c3 = <uint32_t>p0
        k0 = k0 + PHILOX_W0
        k1 = k1 + PHILOX_W1
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3


cdef inline double _uniform(uint32_t hi, uint32_t lo) noexcept nogil:
    return ((hi >> 5) * 67108864.0 + (lo >> 6) + 0.5) * TWO_M53


def philox4x32(ctr, key):
    """Philox4x32-10 applied row-wise to an ``(n, 4)`` uint32 counter array."""
    cdef cnp.ndarray[cnp.uint32_t, ndim=2] c = np.array(ctr, dtype=np.uint32, ndmin=2, copy=True)
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] k = np.asarray(key, dtype=np.uint32).reshape(2)
    cdef Py_ssize_t i
    cdef uint32_t buf[4]
    for i in range(c.shape[0]):
        buf[0] = c[i, 0]; buf[1] = c[i, 1]; buf[2] = c[i, 2]; buf[3] = c[i, 3]
        _philox(buf, k[0], k[1])
        c[i, 0] = buf[0]; c[i, 1] = buf[1]; c[i, 2] = buf[2]; c[i, 3] = buf[3]
    return c


cdef struct NormalPair:
    double first
    double second


cdef inline NormalPair _normal_pair(uint32_t k0, uint32_t k1, uint32_t s0, uint32_t s1,
                                    uint32_t particle, uint32_t word3) noexcept nogil:
    cdef uint32_t buf[4]
    cdef NormalPair res
    cdef double r, th
    buf[0] = s0
    buf[1] = s1
    buf[2] = particle
    buf[3] = word3
    _philox(buf, k0, k1)
    r = sqrt(-2.0 * log(_uniform(buf[0], buf[1])))
    th = TWO_PI * _uniform(buf[2], buf[3])
    res.first = r * cos(th)
    res.second = r * sin(th)
    return res


def gaussians(uint64_t seed, int stream, uint64_t step, int64_t start, Py_ssize_t n,
              Py_ssize_t dim, int nthreads=1):
    """Standard normals for particles ``start .. start+n-1`` at ``step``.

    Entry ``(i, k)`` depends only on ``(seed, stream, step, start+i, k)``.
    """
    out = np.empty((n, dim), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef uint32_t k0 = <uint32_t>(seed & 0xFFFFFFFFu)
    cdef uint32_t k1 = <uint32_t>(seed >> 32)
    cdef uint32_t s0 = <uint32_t>(step & 0xFFFFFFFFu)
    cdef uint32_t s1 = <uint32_t>(step >> 32)
    cdef uint32_t tag = (<uint32_t>stream) << 16
    cdef Py_ssize_t nblocks = (dim + 1) // 2
    cdef Py_ssize_t i, b, kk
    cdef NormalPair pr
    if n == 0 or dim == 0:
        return out
    for i in prange(n, nogil=True, num_threads=max(nthreads, 1), schedule="static"):
        for b in range(nblocks):
            pr = _normal_pair(k0, k1, s0, s1, <uint32_t>(start + i), tag | <uint32_t>b)
            kk = 2 * b
            o[i, kk] = pr.first
            if kk + 1 < dim:
                o[i, kk + 1] = pr.second
    return out


cdef inline double _tanh(double x) noexcept nogil:
    # exp forms: a few ulp, no overflow, cheaper than libm tanh;
    # expm1 only near zero where 1 - e would cancel
    cdef double a = fabs(x)
    cdef double e, t
    if a > 0.5:
        e = exp(-2.0 * a)
        t = (1.0 - e) / (1.0 + e)
    else:
        e = expm1(-2.0 * a)
        t = -e / (2.0 + e)
    return -t if x < 0 else t


def interaction(x, ref, int kind, double c, int nthreads=1):
    """Row ``i`` of the result is ``mean_j F(x_i - ref_j)`` with componentwise ``F``."""
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if ref.ndim != 2 or ref.shape[1] != xv.shape[1]:
        raise ValueError("dimension mismatch between evaluation points and reference")
    # coordinate-major copy so the inner loop over j is contiguous
    cdef const double[:, ::1] rt = np.ascontiguousarray(ref.T)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t m = rt.shape[1]
    cdef Py_ssize_t d = xv.shape[1]
    out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc, xi
    if kind == 0 or m == 0:
        return out
    for i in prange(n, nogil=True, num_threads=max(nthreads, 1), schedule="static"):
        for k in range(d):
            xi = xv[i, k]
            acc = 0.0
            if kind == 1:
                for j in range(m):
                    acc = acc + (xi - rt[k, j])
                acc = c * acc
            elif kind == 2:
                for j in range(m):
                    acc = acc + _tanh(xi - rt[k, j])
                acc = c * acc
            else:
                for j in range(m):
                    acc = acc + sin(xi - rt[k, j])
                acc = c * acc
            o[i, k] = acc / m
    return out


def assign(cost):
    """Minimum-cost perfect matching of a square cost matrix.

    Shortest augmenting path with dual updates; returns ``col4row``.
    """
    cdef const double[:, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = C.shape[0]
    if C.shape[1] != n:
        raise ValueError("cost matrix must be square")
    u_arr = np.zeros(n)
    v_arr = np.zeros(n)
    spc_arr = np.empty(n)
    path_arr = np.empty(n, dtype=np.int64)
    col4row_arr = np.full(n, -1, dtype=np.int64)
    row4col_arr = np.full(n, -1, dtype=np.int64)
    remaining_arr = np.empty(n, dtype=np.int64)
    sr_arr = np.empty(n, dtype=np.uint8)
    sc_arr = np.empty(n, dtype=np.uint8)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] spc = spc_arr
    cdef int64_t[::1] path = path_arr
    cdef int64_t[::1] col4row = col4row_arr
    cdef int64_t[::1] row4col = row4col_arr
    cdef int64_t[::1] remaining = remaining_arr
    cdef unsigned char[::1] SR = sr_arr
    cdef unsigned char[::1] SC = sc_arr
    cdef Py_ssize_t cur, i, j, it, index, num_remaining, sink, tmp
    cdef double min_val, lowest, r
    with nogil:
        for cur in range(n):
            for j in range(n):
                spc[j] = INFINITY
                path[j] = -1
                SR[j] = 0
                SC[j] = 0
                remaining[j] = n - 1 - j
            num_remaining = n
            min_val = 0.0
            i = cur
            sink = -1
            while sink == -1:
                index = -1
                lowest = INFINITY
                SR[i] = 1
                for it in range(num_remaining):
                    j = remaining[it]
                    r = min_val + C[i, j] - u[i] - v[j]
                    if r < spc[j]:
                        path[j] = i
                        spc[j] = r
                    if spc[j] < lowest or (spc[j] == lowest and row4col[j] == -1):
                        lowest = spc[j]
                        index = it
                min_val = lowest
                if index == -1 or lowest == INFINITY:
                    break
                j = remaining[index]
                if row4col[j] == -1:
                    sink = j
                else:
                    i = row4col[j]
                SC[j] = 1
                num_remaining = num_remaining - 1
                remaining[index] = remaining[num_remaining]
            if sink == -1:
                break
            u[cur] = u[cur] + min_val
            for i in range(n):
                if SR[i] and i != cur:
                    u[i] = u[i] + min_val - spc[col4row[i]]
            for j in range(n):
                if SC[j]:
                    v[j] = v[j] - (min_val - spc[j])
            j = sink
            while True:
                i = path[j]
                row4col[j] = i
                tmp = col4row[i]
                col4row[i] = j
                j = tmp
                if i == cur:
                    break
    if (col4row_arr < 0).any():
        raise ValueError("cost matrix is infeasible (non-finite entries)")
    return col4row_arr
