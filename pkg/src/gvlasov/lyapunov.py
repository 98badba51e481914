"""Lyapunov quadratic forms for the coupled difference dynamics.

A form is fixed by five coefficients and acts blockwise on each coordinate
``k`` through the symmetric matrix ``[[a1, a4, a5], [a4, a2, 1], [a5, 1, a3]]``.
Three coefficient systems are solved here:

``contraction``
    the pair coupling used for exponential contraction in W2,
``second_moment``
    the single-law form that bounds second moments uniformly in time,
``chaos``
    the form for the particle-versus-mean-field difference.

Each solver returns a :class:`CoefficientSolution` whose margins are all
strictly positive, or raises :class:`InfeasibleForEta`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gvlasov.model import ModelParams, State

GRID_LO = 1e-3
GRID_HI = 1e6
GRID_POINTS = 200
VARIANTS = ("contraction", "second_moment", "chaos")


class LyapunovError(ValueError):
    pass


class InfeasibleForEta(LyapunovError):
    def __init__(self, eta, eta0, variant):
        super().__init__(f"{variant}: eta={eta!r} is not below the admissible threshold eta0={eta0!r}")
        self.eta = eta
        self.eta0 = eta0
        self.variant = variant


class NotPositiveDefinite(LyapunovError):
    pass


class InvalidA3Tilde(LyapunovError):
    pass


@dataclass(frozen=True)
class QuadraticForm:
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    pz: float = 1.0  # fixed at 1 by every solver; free only for reference forms

    @property
    def coefficients(self):
        return (self.a1, self.a2, self.a3, self.a4, self.a5)

    @property
    def block(self):
        return np.array([[self.a1, self.a4, self.a5],
                         [self.a4, self.a2, self.pz],
                         [self.a5, self.pz, self.a3]])

    def minors(self):
        """Leading principal minors of :attr:`block`."""
        a1, a2, a3, a4, a5 = self.coefficients
        m1 = a1
        c = self.pz
        m2 = a1 * a2 - a4 * a4
        m3 = a1 * (a2 * a3 - c * c) - a4 * (a4 * a3 - c * a5) + a5 * (a4 * c - a2 * a5)
        return m1, m2, m3

    @property
    def is_positive_definite(self):
        return all(m > 0 for m in self.minors())

    def evaluate(self, q, p, z):
        """Vectorised form value; the last axis is the coordinate index."""
        q, p, z = (np.asarray(v, dtype=np.float64) for v in (q, p, z))
        return (self.a1 * np.sum(q * q, axis=-1) + self.a2 * np.sum(p * p, axis=-1)
                + self.a3 * np.sum(z * z, axis=-1) + 2.0 * self.a4 * np.sum(q * p, axis=-1)
                + 2.0 * self.a5 * np.sum(q * z, axis=-1) + 2.0 * self.pz * np.sum(p * z, axis=-1))

    def scale(self, t):
        return QuadraticForm(*(t * a for a in self.coefficients), pz=t * self.pz)

    def to_dict(self):
        out = dict(zip(("a1", "a2", "a3", "a4", "a5"), self.coefficients))
        if self.pz != 1.0:
            out["pz"] = self.pz
        return out


IDENTITY = QuadraticForm(1.0, 1.0, 1.0, 0.0, 0.0, pz=0.0)


def eval_form(form: QuadraticForm, s: State) -> float:
    """Blockwise value ``sum_k x_k^T block x_k`` with ``x_k = (q_k, p_k, z_k)``."""
    x = np.stack([s.q, s.p, s.z], axis=1)
    return float(np.einsum("ki,ij,kj->", x, form.block, x))


# -- 3x3 symmetric eigenvalues ------------------------------------------------

def _charpoly(m):
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    c2 = (m[0, 0] * m[1, 1] - m[0, 1] ** 2) + (m[0, 0] * m[2, 2] - m[0, 2] ** 2) \
        + (m[1, 1] * m[2, 2] - m[1, 2] ** 2)
    det = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
           - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
           + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
    return tr, c2, det


def sym3_eigenvalues(m, polish_tol=1e-12):
    """Ascending eigenvalues of a symmetric 3x3 matrix.

    The trigonometric solution of the characteristic cubic locates the
    eigenvalue farthest from the mean; it is a simple root, so Newton
    polishing converges. The remaining pair comes from the 2x2 restriction
    to the orthogonal complement of its eigenvector, which stays accurate
    for (near-)double eigenvalues.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.array_equal(m, m.T):
        raise ValueError("expected a symmetric 3x3 matrix")
    tr, c2, det = _charpoly(m)
    off = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    if off == 0.0:
        return sorted([float(m[0, 0]), float(m[1, 1]), float(m[2, 2])])
    q = tr / 3.0
    p2 = (m[0, 0] - q) ** 2 + (m[1, 1] - q) ** 2 + (m[2, 2] - q) ** 2 + 2.0 * off
    p = math.sqrt(p2 / 6.0)
    b = (m - q * np.eye(3)) / p
    r = float(np.clip(_charpoly(b)[2] / 2.0, -1.0, 1.0))
    phi = math.acos(r) / 3.0
    e1 = q + 2.0 * p * math.cos(phi)
    e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    x = e1 if e1 - q >= q - e3 else e3
    scale = max(abs(e1), abs(e3), 1e-300)

    def cubic(y):  # det(y I - m)
        return ((y - tr) * y + c2) * y - det

    fx = cubic(x)
    for _ in range(8):
        df = (3.0 * x - 2.0 * tr) * x + c2
        if fx == 0.0 or df == 0.0 or abs(fx) <= polish_tol * scale ** 3:
            break
        xn = x - fx / df
        fn = cubic(xn)
        if abs(fn) >= abs(fx):
            break
        x, fx = xn, fn
    a = m - x * np.eye(3)
    crosses = [np.cross(a[0], a[1]), np.cross(a[0], a[2]), np.cross(a[1], a[2])]
    v = max(crosses, key=lambda c: float(c @ c))
    nv = math.sqrt(float(v @ v))
    if nv == 0.0:
        e2 = 3.0 * q - e1 - e3
        return sorted([e1, e2, e3])
    v = v / nv
    axis = np.eye(3)[int(np.argmin(np.abs(v)))]
    u = np.cross(v, axis)
    u /= math.sqrt(float(u @ u))
    w = np.cross(v, u)
    aa, bb, dd = float(u @ m @ u), float(u @ m @ w), float(w @ m @ w)
    mid, rad = 0.5 * (aa + dd), math.hypot(0.5 * (aa - dd), bb)
    return sorted([float(x), mid - rad, mid + rad])


def equivalence_constants(form: QuadraticForm):
    """``(c_lo, c_hi)`` with ``c_lo |s|^2 <= Q(s) <= c_hi |s|^2``."""
    lo, _, hi = sym3_eigenvalues(form.block)
    if not form.is_positive_definite or lo <= 0:
        raise NotPositiveDefinite(f"form {form.to_dict()} is not positive definite (eigenvalue {lo!r})")
    return float(lo), float(hi)


# -- coefficient systems --------------------------------------------------------

@dataclass
class CoefficientSolution:
    form: QuadraticForm
    variant: str
    eta: float
    eta0: float
    margins: dict = field(default_factory=dict)
    a3_tilde: float | None = None

    @property
    def min_margin(self):
        return min(self.margins.values())

    def to_dict(self):
        out = {"variant": self.variant, "eta": self.eta, "eta0": self.eta0}
        out.update(self.form.to_dict())
        if self.a3_tilde is not None:
            out["a3_tilde"] = self.a3_tilde
        out["margins"] = dict(self.margins)
        return out


def _contraction_a5(params):
    return (params.lam ** 2 / 2.0 - params.beta) / params.alpha


def threshold_functions(params: ModelParams, a3_tilde: float):
    """``(f1, ..., f5)``: the five linear functions of ``a3_tilde`` that must be positive."""
    al, be, la = params.alpha, params.beta, params.lam
    a5 = _contraction_a5(params)
    x = a3_tilde
    f1 = a5 * (la - be / la) + be * (x + al / la + 2.0) - a5 * a5 - la * la / 4.0
    f2 = x + al / la - a5 / la
    f3 = x
    f4 = x + al / la + la + 3.0 - a5 / la
    f5 = 2.0 * al * (2.0 + x) - 2.0 * la
    return f1, f2, f3, f4, f5


def _threshold_slopes(params):
    return (params.beta, 1.0, 1.0, 1.0, 2.0 * params.alpha)


def compute_eta0(params: ModelParams, a3_tilde: float) -> float:
    """Admissibility threshold for the contraction form at a given ``a3_tilde``."""
    f = threshold_functions(params, a3_tilde)
    if any(not fi > 0 for fi in f):
        bad = [i + 1 for i, fi in enumerate(f) if not fi > 0]
        raise InvalidA3Tilde(f"a3_tilde={a3_tilde!r} leaves f{bad} non-positive")
    _, f2, _, f4, f5 = f
    return min(params.lam * params.beta / f4, params.lam / (2.0 + f2), f5)


def contraction_form(params: ModelParams, a3_tilde: float) -> QuadraticForm:
    al, be, la = params.alpha, params.beta, params.lam
    a4 = la / 2.0
    a5 = _contraction_a5(params)
    a3 = 2.0 + a3_tilde
    a2 = a3 + al / la - a5 / la
    a1 = la * a5 + be * a2
    return QuadraticForm(a1, a2, a3, a4, a5)


def _golden_max(fun, lo, hi, iters=200, rtol=1e-13):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if abs(b - a) <= rtol * max(abs(a), abs(b), 1.0):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def _grid_then_golden(fun, lower_bound, points=GRID_POINTS):
    """Maximise ``fun`` over ``x > lower_bound``: log-spaced offsets, then golden section."""
    scale = max(1.0, abs(lower_bound))
    xs = lower_bound + scale * np.logspace(math.log10(GRID_LO), math.log10(GRID_HI), points)
    vals = np.array([fun(float(x)) for x in xs])
    k = int(np.argmax(vals))
    if not np.isfinite(vals[k]):
        return float(xs[k]), -math.inf
    lo = float(xs[k - 1]) if k > 0 else float(xs[0])
    hi = float(xs[k + 1]) if k + 1 < len(xs) else float(xs[-1])
    x, v = _golden_max(fun, lo, hi)
    if v < vals[k]:
        return float(xs[k]), float(vals[k])
    return x, v


def best_a3_tilde(params: ModelParams) -> float:
    """The ``a3_tilde`` maximising the contraction threshold ``eta0``."""
    f0 = threshold_functions(params, 0.0)
    lb = max([0.0] + [-fi / s for fi, s in zip(f0, _threshold_slopes(params))])

    def objective(x):
        try:
            return compute_eta0(params, x)
        except InvalidA3Tilde:
            return -math.inf

    x, _ = _grid_then_golden(objective, lb)
    return x


def _check_pd(form, variant):
    minors = form.minors()
    if not all(m > 0 for m in minors):
        raise NotPositiveDefinite(f"{variant}: leading minors {minors} of the solved form are not all positive")
    return minors


def solve_contraction(params: ModelParams, eta: float, a3_tilde: float | None = None) -> CoefficientSolution:
    """Coefficients of the contraction form for ``eta = C_A + C_B``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if a3_tilde is None:
        a3_tilde = best_a3_tilde(params)
    eta0 = compute_eta0(params, a3_tilde)
    form = contraction_form(params, a3_tilde)
    if not eta < eta0:
        raise InfeasibleForEta(eta, eta0, "contraction")
    al, be, la = params.alpha, params.beta, params.lam
    f = threshold_functions(params, a3_tilde)
    minors = _check_pd(form, "contraction")
    margins = {
        "q": la * be - (form.a2 + la + 1.0) * eta,
        "p": la - form.a2 * eta,
        "z": 2.0 * al * form.a3 - 2.0 * la - eta,
        "f1": f[0], "f2": f[1], "f3": f[2], "f4": f[3], "f5": f[4],
        "minor1": minors[0], "minor2": minors[1], "minor3": minors[2],
    }
    return CoefficientSolution(form, "contraction", eta, eta0, margins, a3_tilde=a3_tilde)


def _second_moment_form(params, a3, a4):
    al, be, la = params.alpha, params.beta, params.lam
    a5 = (la * a4 - be) / al
    a2 = a3 + al / la - a5 / la
    a1 = be * a2 + la * a5
    return QuadraticForm(a1, a2, a3, a4, a5)


def _second_moment_threshold(params, form):
    al, be, la = params.alpha, params.beta, params.lam
    if form.a2 <= 0 or not form.is_positive_definite:
        return -math.inf
    return min(be * form.a4 / (2.0 * form.a4 + form.a2 + 1.0),
               (la - 2.0 * form.a4) / form.a2,
               al * form.a3 - 2.0 * la)


def _second_moment_inner(params, a4):
    al, la = params.alpha, params.lam
    a5 = (la * a4 - params.beta) / al
    lb = max(2.0 * la / al, (a5 - al) / la)

    def obj(a3):
        return _second_moment_threshold(params, _second_moment_form(params, a3, a4))

    return _grid_then_golden(obj, lb, points=120)


def best_second_moment_coefficients(params: ModelParams, a4_points: int = 64):
    """``(a3, a4, threshold)`` maximising the second-moment threshold."""
    la = params.lam
    grid = [la / 2.0 * (k + 0.5) / a4_points for k in range(a4_points)]
    inner = [_second_moment_inner(params, a4) for a4 in grid]
    k = int(np.argmax([v for _, v in inner]))
    lo = grid[k - 1] if k > 0 else grid[0] * 1e-3
    hi = grid[k + 1] if k + 1 < len(grid) else la / 2.0 * (1.0 - 1e-9)
    a4, v = _golden_max(lambda a: _second_moment_inner(params, a)[1], lo, hi, rtol=1e-10)
    if v < inner[k][1]:
        a4, (a3, v) = grid[k], inner[k]
    else:
        a3, v = _second_moment_inner(params, a4)
    return a3, a4, v


def solve_second_moment(params: ModelParams, eta: float) -> CoefficientSolution:
    """Form bounding the second moment uniformly in time for ``eta = C_A + C_B``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    a3, a4, eta0 = best_second_moment_coefficients(params)
    if not eta < eta0:
        raise InfeasibleForEta(eta, eta0, "second_moment")
    form = _second_moment_form(params, a3, a4)
    al, be, la = params.alpha, params.beta, params.lam
    minors = _check_pd(form, "second_moment")
    margins = {
        "q": be * a4 - (2.0 * a4 + form.a2 + 1.0) * eta,
        "p": la - 2.0 * a4 - form.a2 * eta,
        "z": al * a3 - 2.0 * la - eta,
        "minor1": minors[0], "minor2": minors[1], "minor3": minors[2],
    }
    return CoefficientSolution(form, "second_moment", eta, eta0, margins)


def chaos_form(params: ModelParams, a3: float) -> QuadraticForm:
    al, be, la = params.alpha, params.beta, params.lam
    a4 = la / 4.0
    a5 = (la * la / 4.0 - be) / al
    a2 = a3 + al / la - a5 / la
    a1 = la * a5 + be * a2
    return QuadraticForm(a1, a2, a3, a4, a5)


def _chaos_threshold(params, form):
    al, be, la = params.alpha, params.beta, params.lam
    if form.a2 <= 0 or not form.is_positive_definite:
        return -math.inf
    return min(la * be / 4.0 / (form.a2 + la + 1.0), la / 2.0 / form.a2, al * form.a3 - 2.0 * la)


def best_chaos_a3(params: ModelParams):
    al, be, la = params.alpha, params.beta, params.lam
    a5 = (la * la / 4.0 - be) / al
    lb = max(2.0 * la / al, a5 / la - al / la)
    return _grid_then_golden(lambda a3: _chaos_threshold(params, chaos_form(params, a3)), lb)


def solve_chaos(params: ModelParams, eta: float) -> CoefficientSolution:
    """Form for the particle-versus-reference difference for ``eta = C_A + C_B``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    a3, eta0 = best_chaos_a3(params)
    if not eta < eta0:
        raise InfeasibleForEta(eta, eta0, "chaos")
    form = chaos_form(params, a3)
    al, be, la = params.alpha, params.beta, params.lam
    minors = _check_pd(form, "chaos")
    margins = {
        "q": la * be / 4.0 - (form.a2 + la + 1.0) * eta,
        "p": la / 2.0 - form.a2 * eta,
        "z": al * a3 - 2.0 * la - eta,
        "minor1": minors[0], "minor2": minors[1], "minor3": minors[2],
    }
    return CoefficientSolution(form, "chaos", eta, eta0, margins)


SOLVERS = {
    "contraction": solve_contraction,
    "second_moment": solve_second_moment,
    "chaos": solve_chaos,
}


def solve(variant: str, params: ModelParams, eta: float, **kw) -> CoefficientSolution:
    try:
        fn = SOLVERS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}") from None
    return fn(params, eta, **kw)


def threshold(variant: str, params: ModelParams) -> float:
    """Best admissible ``eta0`` for ``variant`` (independent of the actual ``eta``)."""
    if variant == "contraction":
        return compute_eta0(params, best_a3_tilde(params))
    if variant == "second_moment":
        return best_second_moment_coefficients(params)[2]
    if variant == "chaos":
        return best_chaos_a3(params)[1]
    raise ValueError(f"unknown variant {variant!r}")


def equality_residuals(solution: CoefficientSolution, params: ModelParams):
    """Relative residuals of the variant's three linear equalities."""
    a1, a2, a3, a4, a5 = solution.form.coefficients
    al, be, la = params.alpha, params.beta, params.lam
    if solution.variant == "second_moment":
        terms = [(a1, -be * a2, -la * a5), (-be, la * a4, -al * a5), (a5, la * a2, -la * a3, -al)]
    else:
        terms = [(2 * a1, -2 * la * a5, -2 * a2 * be), (2 * la * a4, -2 * al * a5, -2 * be),
                 (2 * la * a2, -2 * la * a3, 2 * a5, -2 * al)]
    return [abs(math.fsum(t)) / max(sum(abs(x) for x in t), 1e-300) for t in terms]


def contraction_rate_bound(solution: CoefficientSolution) -> float:
    """Computable lower bound on the decay rate of ``E Q(diff)``.

    For the contraction variant ``dQ/dt <= -m |x|^2 <= -(m / c_hi) Q`` where
    ``m`` is the smallest of the three dissipation margins.
    """
    if solution.variant != "contraction":
        raise ValueError("rate bound is defined for the contraction variant")
    m = min(solution.margins[k] for k in ("q", "p", "z"))
    return m / equivalence_constants(solution.form)[1]


def feasibility_frontier(variant: str, params: ModelParams, etas):
    """Sweep ``eta`` and record feasibility instead of raising."""
    rows = []
    for eta in etas:
        try:
            sol = solve(variant, params, float(eta))
        except InfeasibleForEta as exc:
            rows.append({"eta": float(eta), "feasible": False, "eta0": exc.eta0})
        else:
            rows.append({"eta": float(eta), "feasible": True, "eta0": sol.eta0, "min_margin": sol.min_margin})
    return rows
