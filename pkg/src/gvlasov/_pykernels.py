"""Pure numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Same names, same signatures, same outputs up to floating-point summation
order. The ``nthreads`` arguments are accepted and ignored.
"""

import numpy as np

BACKEND = "numpy"

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO_M53 = 1.0 / 9007199254740992.0


def _philox_cols(c0, c1, c2, c3, k0, k1):
    # columns are uint64 arrays holding 32-bit values; keys are python ints
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def philox4x32(ctr, key):
    """Philox4x32-10 applied row-wise to an ``(n, 4)`` uint32 counter array."""
    c = np.array(ctr, dtype=np.uint32, ndmin=2).astype(np.uint64)
    k = [int(x) for x in np.asarray(key, dtype=np.uint32).reshape(2)]
    cols = _philox_cols(c[:, 0], c[:, 1], c[:, 2], c[:, 3], k[0], k[1])
    return np.stack(cols, axis=1).astype(np.uint32)


def _uniform(hi, lo):
    return ((hi >> np.uint64(5)).astype(np.float64) * 67108864.0
            + (lo >> np.uint64(6)).astype(np.float64) + 0.5) * _TWO_M53


def gaussians(seed, stream, step, start, n, dim, nthreads=1):
    """Standard normals for particles ``start .. start+n-1`` at ``step``."""
    seed = int(seed)
    step = int(step)
    out = np.empty((n, dim), dtype=np.float64)
    if n == 0 or dim == 0:
        return out
    nblocks = (dim + 1) // 2
    particle = np.repeat(np.arange(start, start + n, dtype=np.uint64), nblocks) & _MASK
    block = np.tile(np.arange(nblocks, dtype=np.uint64), n)
    c0 = np.full(particle.shape, step & 0xFFFFFFFF, dtype=np.uint64)
    c1 = np.full(particle.shape, (step >> 32) & 0xFFFFFFFF, dtype=np.uint64)
    c3 = np.uint64(int(stream) << 16) | block
    w0, w1, w2, w3 = _philox_cols(c0, c1, particle, c3, seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF)
    r = np.sqrt(-2.0 * np.log(_uniform(w0, w1)))
    th = 6.283185307179586 * _uniform(w2, w3)
    pairs = np.empty((n * nblocks, 2))
    pairs[:, 0] = r * np.cos(th)
    pairs[:, 1] = r * np.sin(th)
    out[:] = pairs.reshape(n, 2 * nblocks)[:, :dim]
    return out


def _force(kind, c, x):
    if kind == 1:
        return c * x
    if kind == 2:
        return c * np.tanh(x)
    if kind == 3:
        return c * np.sin(x)
    return np.zeros_like(x)


def interaction(x, ref, kind, c, nthreads=1, chunk=256):
    """Row ``i`` of the result is ``mean_j F(x_i - ref_j)`` with componentwise ``F``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    if x.shape[1] != ref.shape[1]:
        raise ValueError("dimension mismatch between evaluation points and reference")
    out = np.zeros_like(x)
    m = ref.shape[0]
    if kind == 0 or m == 0:
        return out
    for lo in range(0, x.shape[0], chunk):
        diff = x[lo:lo + chunk, None, :] - ref[None, :, :]
        out[lo:lo + chunk] = _force(kind, c, diff).sum(axis=1) / m
    return out


def assign(cost):
    """Minimum-cost perfect matching of a square cost matrix; returns ``col4row``.

    Same shortest-augmenting-path scheme as the compiled kernel, with the
    column scan vectorised.
    """
    C = np.ascontiguousarray(cost, dtype=np.float64)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n:
        raise ValueError("cost matrix must be square")
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    for cur in range(n):
        spc = np.full(n, np.inf)
        path = np.full(n, -1, dtype=np.int64)
        SR = np.zeros(n, dtype=bool)
        SC = np.zeros(n, dtype=bool)
        min_val = 0.0
        i = cur
        sink = -1
        while sink == -1:
            SR[i] = True
            open_cols = ~SC
            r = min_val + C[i] - u[i] - v
            better = open_cols & (r < spc)
            path[better] = i
            spc[better] = r[better]
            cand = np.where(open_cols, spc, np.inf)
            lowest = cand.min()
            if not np.isfinite(lowest):
                raise ValueError("cost matrix is infeasible (non-finite entries)")
            ties = np.flatnonzero(cand == lowest)
            free = ties[row4col[ties] == -1]
            j = int(free[0]) if free.size else int(ties[0])
            min_val = lowest
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
            SC[j] = True
        u[cur] += min_val
        rows = np.flatnonzero(SR)
        rows = rows[rows != cur]
        u[rows] += min_val - spc[col4row[rows]]
        v[SC] -= min_val - spc[SC]
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, int(col4row[i])
            if i == cur:
                break
    return col4row
