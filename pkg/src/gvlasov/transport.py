"""Wasserstein-2 distances between equal-size uniform empirical measures.

The exact distance solves an assignment problem on the full cost matrix.
The sliced distance is a cheap lower-bound proxy for trend plots only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gvlasov import kernels
from gvlasov.lyapunov import QuadraticForm, equivalence_constants, NotPositiveDefinite

MAX_EXACT_N = 4096


class SizeMismatch(ValueError):
    pass


class CostGuardExceeded(ValueError):
    pass


@dataclass
class EmpiricalMeasure:
    """Uniform weights on ``N`` points of ``R^{3d}`` (columns ordered ``q, p, z``)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a non-empty (N, k) array")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        self.points = pts

    @property
    def n(self):
        return self.points.shape[0]

    @classmethod
    def from_ensemble(cls, ens):
        return cls(ens.points())


@dataclass(frozen=True)
class GroundMetric:
    """``euclidean_sq`` or ``qform``: cost ``Q(x - y)`` applied blockwise per coordinate."""

    kind: str = "euclidean_sq"
    form: QuadraticForm | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean_sq", "qform"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "qform":
            if self.form is None:
                raise ValueError("qform metric needs a form")
            if not self.form.is_positive_definite:
                raise NotPositiveDefinite("qform metric requires a positive-definite form")

    def transform(self, pts):
        """Map points so that the cost becomes squared Euclidean distance."""
        if self.kind == "euclidean_sq":
            return pts
        k = pts.shape[1]
        if k % 3:
            raise ValueError("qform metric needs points of dimension 3d")
        d = k // 3
        lt = np.linalg.cholesky(self.form.block).T
        x = pts.reshape(-1, 3, d)
        return np.einsum("ij,njk->nik", lt, x).reshape(-1, k)


EUCLIDEAN = GroundMetric()


def cost_matrix(x, y, chunk: int = 128):
    """``C[i, j] = |x_i - y_j|^2`` built from explicit differences, row block by row block."""
    n, m = x.shape[0], y.shape[0]
    out = np.empty((n, m))
    for s in range(0, n, chunk):
        diff = x[s:s + chunk, None, :] - y[None, :, :]
        out[s:s + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _check_pair(mu, nu):
    if mu.n != nu.n:
        raise SizeMismatch(f"measures have different sizes: {mu.n} vs {nu.n}")
    if mu.points.shape[1] != nu.points.shape[1]:
        raise SizeMismatch("measures live in different dimensions")


def w2_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, metric: GroundMetric = EUCLIDEAN,
             return_plan: bool = False):
    """Exact W2 via optimal assignment; optionally also returns ``col4row``."""
    _check_pair(mu, nu)
    if mu.n > MAX_EXACT_N:
        raise CostGuardExceeded(f"N={mu.n} exceeds the exact-solver guard {MAX_EXACT_N}")
    c = cost_matrix(metric.transform(mu.points), metric.transform(nu.points))
    col = kernels.assign(c)
    total = float(np.sum(c[np.arange(mu.n), col]))
    val = math.sqrt(max(total, 0.0) / mu.n)
    return (val, col) if return_plan else val


def w2_sliced(mu: EmpiricalMeasure, nu: EmpiricalMeasure, n_projections: int = 256, seed: int = 0,
              directions=None):
    """Root mean square of 1-D W2 over random unit directions.

    Each projection is 1-Lipschitz, so the result never exceeds the exact
    W2. ``directions`` overrides the random draw (rows are normalized).
    """
    _check_pair(mu, nu)
    k = mu.points.shape[1]
    if directions is None:
        if n_projections < 1:
            raise ValueError("n_projections must be >= 1")
        theta = np.random.default_rng(seed).standard_normal((n_projections, k))
    else:
        theta = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    theta = theta / np.linalg.norm(theta, axis=1, keepdims=True)
    # einsum rather than BLAS: each projection is rounded independently of row order
    a = np.sort(np.einsum("nk,pk->np", mu.points, theta), axis=0)
    b = np.sort(np.einsum("nk,pk->np", nu.points, theta), axis=0)
    return math.sqrt(float(np.mean((a - b) ** 2)))


@dataclass
class W2QReport:
    w2: float
    w2q: float
    c_lo: float
    c_hi: float

    @property
    def lower(self):
        return math.sqrt(self.c_lo) * self.w2

    @property
    def upper(self):
        return math.sqrt(self.c_hi) * self.w2

    @property
    def slack(self):
        return (self.w2q - self.lower, self.upper - self.w2q)

    @property
    def holds(self):
        tol = 1e-12 * max(1.0, self.upper)
        lo, hi = self.slack
        return lo >= -tol and hi >= -tol

    def to_dict(self):
        return {"w2": self.w2, "w2q": self.w2q, "c_lo": self.c_lo, "c_hi": self.c_hi,
                "slack_lower": self.slack[0], "slack_upper": self.slack[1], "holds": self.holds}


def w2q_bounds_check(mu: EmpiricalMeasure, nu: EmpiricalMeasure, form: QuadraticForm) -> W2QReport:
    """Check ``sqrt(c_lo) W2 <= W2Q <= sqrt(c_hi) W2`` on a concrete pair."""
    c_lo, c_hi = equivalence_constants(form)
    w2 = w2_exact(mu, nu)
    w2q = w2_exact(mu, nu, GroundMetric("qform", form))
    return W2QReport(w2, w2q, c_lo, c_hi)
