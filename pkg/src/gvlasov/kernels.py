"""Backend selection for the hot loops.

The compiled module is used when it imports; set ``GVLASOV_PURE_PYTHON=1``
to force the numpy fallback. ``GVLASOV_NUM_THREADS`` sets the default
thread count for the compiled kernels (results do not depend on it).
"""

import os

from gvlasov import _pykernels

FORCE_KINDS = {"zero": 0, "linear": 1, "tanh_saturating": 2, "sine": 3}


def _load():
    if os.environ.get("GVLASOV_PURE_PYTHON", "") not in ("", "0"):
        return _pykernels
    try:
        from gvlasov import _ckernels
    except ImportError:
        return _pykernels
    return _ckernels


backend = _load()
BACKEND = backend.BACKEND

_num_threads = max(int(os.environ.get("GVLASOV_NUM_THREADS", "1") or 1), 1)


def get_num_threads():
    return _num_threads


def set_num_threads(n):
    """Set the thread count used by the compiled kernels; returns the previous value."""
    global _num_threads
    if int(n) < 1:
        raise ValueError("thread count must be >= 1")
    old, _num_threads = _num_threads, int(n)
    return old


def available_backends():
    """Mapping of backend name to module for every importable backend."""
    out = {"numpy": _pykernels}
    try:
        from gvlasov import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out


def philox4x32(ctr, key):
    return backend.philox4x32(ctr, key)


def gaussians(seed, stream, step, start, n, dim):
    return backend.gaussians(int(seed), int(stream), int(step), int(start), int(n), int(dim), _num_threads)


def interaction(x, ref, kind, c):
    return backend.interaction(x, ref, FORCE_KINDS[kind] if isinstance(kind, str) else int(kind),
                               float(c), _num_threads)


def assign(cost):
    return backend.assign(cost)
