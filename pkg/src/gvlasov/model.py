"""Parameters, force maps and the drift of the generalized Vlasov SDE.

Forces act componentwise on R^d. The builtin kinds are all odd and globally
Lipschitz with constant ``|c|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gvlasov.kernels import FORCE_KINDS


@dataclass(frozen=True)
class ForceSpec:
    """A componentwise force ``F: R^d -> R^d``.

    ``kind`` is one of ``zero``, ``linear`` (``c*q``), ``tanh_saturating``
    (``c*tanh(q)``) or ``sine`` (``c*sin(q)``).
    """

    kind: str = "zero"
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in FORCE_KINDS:
            raise ValueError(f"unknown force kind {self.kind!r}; expected one of {sorted(FORCE_KINDS)}")
        if not math.isfinite(self.c):
            raise ValueError("force coefficient must be finite")
        if self.kind == "zero" and self.c != 0.0:
            object.__setattr__(self, "c", 0.0)

    @property
    def is_odd(self) -> bool:
        return True

    @property
    def is_linear(self) -> bool:
        return self.kind in ("zero", "linear")

    @property
    def slope(self) -> float:
        """Coefficient of the linear map; only meaningful when :attr:`is_linear`."""
        return self.c if self.kind == "linear" else 0.0

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - {"kind", "c"}
        if unknown:
            raise ValueError(f"unknown force keys: {sorted(unknown)}")
        return cls(kind=str(doc.get("kind", "zero")), c=float(doc.get("c", 0.0)))


ZERO = ForceSpec()


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 1.0
    dim: int = 1
    force_a: ForceSpec = field(default=ZERO)
    force_b: ForceSpec = field(default=ZERO)

    def __post_init__(self):
        for name in ("alpha", "beta", "lam"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not self.force_b.is_odd:
            raise ValueError("the interaction force B must be odd")

    @property
    def eta(self) -> float:
        """``C_A + C_B``, the quantity compared against the admissibility threshold."""
        return lipschitz_constant(self.force_a) + lipschitz_constant(self.force_b)

    def drift_matrix(self, extra_confinement=0.0):
        """Per-coordinate drift matrix of the linear part, acting on ``(q, p, z)``."""
        b = self.beta + extra_confinement
        return np.array([[0.0, 1.0, 0.0],
                         [-b, 0.0, self.lam],
                         [0.0, -self.lam, -self.alpha]])

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "lambda": self.lam,
            "dim": self.dim,
            "force_a": self.force_a.to_dict(),
            "force_b": self.force_b.to_dict(),
        }


@dataclass(frozen=True)
class State:
    """A single particle state; each component is a length-``d`` vector."""

    q: np.ndarray
    p: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for name in ("q", "p", "z"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if not (self.q.shape == self.p.shape == self.z.shape) or self.q.ndim != 1:
            raise ValueError("q, p, z must be vectors of equal length")
        if not (np.isfinite(self.q).all() and np.isfinite(self.p).all() and np.isfinite(self.z).all()):
            raise ValueError("state has non-finite components")

    @property
    def dim(self):
        return self.q.shape[0]

    def as_vector(self):
        return np.concatenate([self.q, self.p, self.z])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=np.float64)
        d = v.shape[0] // 3
        if 3 * d != v.shape[0]:
            raise ValueError("vector length must be a multiple of 3")
        return cls(v[:d], v[d:2 * d], v[2 * d:])


def eval_force(spec: ForceSpec, q):
    """Apply ``spec`` componentwise to ``q`` (any array shape)."""
    q = np.asarray(q, dtype=np.float64)
    if spec.kind == "linear":
        return spec.c * q
    if spec.kind == "tanh_saturating":
        return spec.c * np.tanh(q)
    if spec.kind == "sine":
        return spec.c * np.sin(q)
    return np.zeros_like(q)


def lipschitz_constant(spec: ForceSpec) -> float:
    return 0.0 if spec.kind == "zero" else abs(spec.c)


@dataclass
class ContractViolation:
    kind: str  # "lipschitz" or "odd"
    x: np.ndarray
    y: np.ndarray | None
    excess: float


@dataclass
class ContractReport:
    spec: ForceSpec
    samples: int
    radius: float
    lipschitz: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def _sample_ball(rng, n, dim, radius):
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / dim)
    return g * r[:, None]


def check_force_contracts(spec: ForceSpec, samples: int, radius: float, seed: int, dim: int = 3,
                          tol: float = 1e-9) -> ContractReport:
    """Sampled check of the Lipschitz bound and (for odd kinds) of oddness.

    Violations are collected with witness points rather than raised.
    """
    if samples < 1 or not radius > 0:
        raise ValueError("samples must be >= 1 and radius > 0")
    rng = np.random.default_rng(seed)
    x = _sample_ball(rng, samples, dim, radius)
    y = _sample_ball(rng, samples, dim, radius)
    lip = lipschitz_constant(spec)
    report = ContractReport(spec, samples, radius, lip)
    fx, fy = eval_force(spec, x), eval_force(spec, y)
    lhs = np.linalg.norm(fx - fy, axis=1)
    rhs = (1.0 + tol) * lip * np.linalg.norm(x - y, axis=1)
    for i in np.flatnonzero(lhs > rhs):
        report.violations.append(ContractViolation("lipschitz", x[i], y[i], float(lhs[i] - rhs[i])))
    if spec.is_odd:
        odd_err = np.linalg.norm(eval_force(spec, -x) + fx, axis=1)
        bound = 1e-12 * (1.0 + np.linalg.norm(fx, axis=1))
        for i in np.flatnonzero(odd_err > bound):
            report.violations.append(ContractViolation("odd", x[i], None, float(odd_err[i] - bound[i])))
    return report


def drift(state: State, params: ModelParams, mf_term):
    """Deterministic part ``(dq, dp, dz)`` of the SDE at ``state``.

    ``mf_term`` is the already-evaluated interaction ``B * mu (q)``.
    """
    if state.dim != params.dim:
        raise ValueError(f"state dimension {state.dim} does not match params.dim={params.dim}")
    mf = np.broadcast_to(np.asarray(mf_term, dtype=np.float64), state.q.shape)
    dq = state.p.copy()
    dp = -params.beta * state.q - eval_force(params.force_a, state.q) - mf + params.lam * state.z
    dz = -params.lam * state.p - params.alpha * state.z
    return dq, dp, dz
