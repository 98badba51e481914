"""Fixed-step integrators for interacting particle ensembles.

Two schemes are available. ``euler_maruyama`` is the plain explicit scheme.
``ou_splitting`` wraps an exact Ornstein-Uhlenbeck update of ``z`` (with
``p`` frozen) between two half-steps of a velocity-Verlet update of
``(q, p)``. Both consume exactly one Gaussian d-vector per particle per
step, and the interaction term is frozen at the start of each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gvlasov import kernels
from gvlasov.lyapunov import QuadraticForm
from gvlasov.meanfield import EmpiricalProvider
from gvlasov.model import ForceSpec, ModelParams, ZERO, eval_force
from gvlasov.rng import NOISE, NoiseStream
from gvlasov.stats import NonPositiveSeries

SCHEMES = ("euler_maruyama", "ou_splitting")


class NonFiniteState(FloatingPointError):
    def __init__(self, particle: int, step: int, which: str = "state"):
        super().__init__(f"non-finite {which} for particle {particle} at step {step}")
        self.particle = particle
        self.step = step


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-2
    scheme: str = "euler_maruyama"
    t_end: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    def steps_for(self, t: float) -> int:
        """Step index of time ``t``; ``t`` must lie on the grid."""
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a multiple of dt={self.dt}")
        return k

    @property
    def n_steps(self) -> int:
        return self.steps_for(self.t_end)

    def to_dict(self):
        return {"dt": self.dt, "scheme": self.scheme, "t_end": self.t_end}


@dataclass
class ParticleEnsemble:
    """``N`` particles in ``R^{3d}``; ``q``, ``p``, ``z`` have shape ``(N, d)``."""

    q: np.ndarray
    p: np.ndarray
    z: np.ndarray
    time: float = 0.0
    step_count: int = 0

    def __post_init__(self):
        for name in ("q", "p", "z"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            setattr(self, name, np.ascontiguousarray(arr))
        if not (self.q.shape == self.p.shape == self.z.shape) or self.q.ndim != 2:
            raise ValueError("q, p, z must be arrays of equal shape (N, d)")
        if self.q.shape[0] < 1:
            raise ValueError("an ensemble needs at least one particle")
        check_finite(self, self.step_count)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    def points(self):
        """``(N, 3d)`` array with columns ``q_1..q_d, p_1..p_d, z_1..z_d``."""
        return np.hstack([self.q, self.p, self.z])

    @classmethod
    def from_points(cls, x, time=0.0, step_count=0):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] % 3:
            raise ValueError("points must have shape (N, 3d)")
        d = x.shape[1] // 3
        return cls(x[:, :d], x[:, d:2 * d], x[:, 2 * d:], time, step_count)

    @classmethod
    def sample(cls, law, n, dim, seed, stream):
        q, p, z = law.sample(n, dim, seed, stream)
        return cls(q, p, z)

    def copy(self):
        return ParticleEnsemble(self.q.copy(), self.p.copy(), self.z.copy(), self.time, self.step_count)

    def second_moment(self):
        """``(1/N) sum_i |X_i|^2`` over all ``3d`` coordinates."""
        return float((np.sum(self.q ** 2) + np.sum(self.p ** 2) + np.sum(self.z ** 2)) / self.n)


def check_finite(ens: ParticleEnsemble, step: int):
    for name in ("q", "p", "z"):
        arr = getattr(ens, name)
        bad = ~np.isfinite(arr)
        if bad.any():
            raise NonFiniteState(int(np.flatnonzero(bad.any(axis=1))[0]), step, name)


def ou_coefficients(alpha: float, dt: float):
    """``(decay, gain, sd)`` of the exact OU update ``z' = decay z - gain p + sd xi`` (gain per unit ``lambda/alpha``)."""
    e = math.exp(-alpha * dt)
    return e, 1.0 - e, math.sqrt(-math.expm1(-2.0 * alpha * dt) / alpha)


def z_variance_recursion(alpha: float, dt: float, n_steps: int, scheme: str, var0: float = 0.0):
    """Variance of ``z`` after ``n_steps`` of pure-z dynamics (``p = 0``)."""
    if scheme == "ou_splitting":
        a, _, sd = ou_coefficients(alpha, dt)
        s2 = sd * sd
    elif scheme == "euler_maruyama":
        a, s2 = 1.0 - alpha * dt, 2.0 * dt
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    v = var0
    for _ in range(n_steps):
        v = a * a * v + s2
    return v


def scheme_stationary_covariance(params: ModelParams, cfg: IntegratorConfig, kappa: float = 0.0):
    """Exact per-coordinate stationary covariance of the discretized linear dynamics.

    The one-step map of ``cfg.scheme`` is ``x' = A x + b xi`` when ``A`` and
    the centered interaction are linear; solves ``S = A S A^T + b b^T``.
    """
    if not params.force_a.is_linear:
        raise ValueError("scheme covariance needs A zero or linear")
    lin = ModelParams(params.alpha, params.beta, params.lam, 1,
                      ForceSpec("linear", params.force_a.slope + kappa), ZERO)
    one = np.zeros((1, 1))
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        ens = ParticleEnsemble(e[0:1, None], e[1:2, None], e[2:3, None])
        cols.append(np.ravel(_advance(ens, lin, cfg, one, None)))
    A = np.array(cols).T
    b = np.ravel(_advance(ParticleEnsemble(one, one, one), lin, cfg, np.ones((1, 1)), None))
    lhs = np.eye(9) - np.kron(A, A)
    S = np.linalg.solve(lhs, np.outer(b, b).ravel()).reshape(3, 3)
    return 0.5 * (S + S.T)


def _force_p(q, z, params: ModelParams, mf):
    f = -params.beta * q + params.lam * z
    if params.force_a.kind != "zero":
        f -= eval_force(params.force_a, q)
    if mf is not None:
        f -= mf
    return f


def _advance(ens, params, cfg, xi, mf):
    dt = cfg.dt
    q, p, z = ens.q, ens.p, ens.z
    if cfg.scheme == "euler_maruyama":
        fq = _force_p(q, z, params, mf)
        q1 = q + dt * p
        p1 = p + dt * fq
        z1 = z + dt * (-params.lam * p - params.alpha * z) + math.sqrt(2.0 * dt) * xi
    else:
        h = 0.5 * dt
        decay, gain, sd = ou_coefficients(params.alpha, dt)
        ph = p + h * _force_p(q, z, params, mf)
        q1 = q + dt * ph
        z1 = decay * z - (params.lam / params.alpha) * gain * ph + sd * xi
        p1 = ph + h * _force_p(q1, z1, params, mf)
    return q1, p1, z1


def step_ensemble(ens: ParticleEnsemble, params: ModelParams, cfg: IntegratorConfig, noise, mf=None,
                  xi=None) -> ParticleEnsemble:
    """One step of ``cfg.scheme``; returns a new ensemble.

    ``noise`` is a :class:`NoiseStream` (particle ``i`` draws index ``i`` at
    the current step) or ``None`` together with explicit ``xi`` of shape
    ``(N, d)``. ``mf`` is a provider with ``terms(ens)``; ``None`` means no
    interaction.
    """
    if ens.dim != params.dim:
        raise ValueError(f"ensemble dimension {ens.dim} does not match params.dim={params.dim}")
    if xi is None:
        xi = noise.normals(ens.step_count, ens.n, ens.dim)
    else:
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape != ens.q.shape:
            raise ValueError(f"xi must have shape {ens.q.shape}")
    terms = None if mf is None else mf.terms(ens)
    q1, p1, z1 = _advance(ens, params, cfg, xi, terms)
    out = object.__new__(ParticleEnsemble)
    out.q, out.p, out.z = q1, p1, z1
    out.step_count = ens.step_count + 1
    out.time = out.step_count * cfg.dt
    check_finite(out, out.step_count)
    return out


def simulate(ens0: ParticleEnsemble, params: ModelParams, cfg: IntegratorConfig, seed: int, mf=None,
             sample_times=(), observe=None, stream: int = NOISE):
    """Advance ``ens0`` to ``cfg.t_end``.

    ``observe(ens)`` returns ``{name: value}``; it is called at each sample
    time and its output collected as ``(time, name, value)`` rows.
    Returns ``(final_ensemble, rows, noise)``.
    """
    noise = NoiseStream(seed, stream)
    sample_steps = {cfg.steps_for(t) for t in sample_times}
    rows = []
    ens = ens0

    def emit(e):
        if observe is not None and e.step_count in sample_steps:
            for name, val in observe(e).items():
                rows.append((e.time, name, float(val)))

    emit(ens)
    for _ in range(ens0.step_count, cfg.n_steps):
        ens = step_ensemble(ens, params, cfg, noise, mf)
        if hasattr(mf, "advance"):
            mf.advance()
        emit(ens)
    return ens, rows, noise


@dataclass
class CoupledRun:
    times: np.ndarray
    mean_dq2: np.ndarray
    mean_dp2: np.ndarray
    mean_dz2: np.ndarray
    mean_form: np.ndarray | None
    final_a: ParticleEnsemble
    final_b: ParticleEnsemble
    extras: dict = field(default_factory=dict)

    def rows(self):
        """``(time, name, value)`` rows of all recorded series."""
        out = []
        for k, t in enumerate(self.times):
            out.append((float(t), "mean_dq2", float(self.mean_dq2[k])))
            out.append((float(t), "mean_dp2", float(self.mean_dp2[k])))
            out.append((float(t), "mean_dz2", float(self.mean_dz2[k])))
            if self.mean_form is not None:
                out.append((float(t), "mean_form", float(self.mean_form[k])))
        return out


def run_coupled(ens_a0: ParticleEnsemble, ens_b0: ParticleEnsemble, params: ModelParams, cfg: IntegratorConfig,
                seed: int, sample_times=None, form: QuadraticForm | None = None, providers=None,
                on_sample=None) -> CoupledRun:
    """Synchronously coupled pair: particle ``i`` of both ensembles sees the same noise.

    Records mean ``|dq|^2``, ``|dp|^2``, ``|dz|^2`` (summed over coordinates,
    averaged over particles) and, if ``form`` is given, the mean of
    ``form`` on the differences. ``on_sample(ens_a, ens_b)`` is an optional
    hook run at each sample time.
    """
    if ens_a0.q.shape != ens_b0.q.shape:
        raise ValueError(f"ensemble shapes differ: {ens_a0.q.shape} vs {ens_b0.q.shape}")
    if sample_times is None:
        sample_times = [k * cfg.dt for k in range(cfg.n_steps + 1)]
    sample_steps = sorted({cfg.steps_for(t) for t in sample_times})
    if providers is None:
        providers = (EmpiricalProvider(params.force_b), EmpiricalProvider(params.force_b))
    noise = NoiseStream(seed, NOISE)
    rec = {"t": [], "q": [], "p": [], "z": [], "f": []}

    def record(a, b):
        dq, dp, dz = a.q - b.q, a.p - b.p, a.z - b.z
        rec["t"].append(a.time)
        rec["q"].append(np.sum(dq * dq) / a.n)
        rec["p"].append(np.sum(dp * dp) / a.n)
        rec["z"].append(np.sum(dz * dz) / a.n)
        if form is not None:
            rec["f"].append(float(np.mean(form.evaluate(dq, dp, dz))))
        if on_sample is not None:
            on_sample(a, b)

    a, b = ens_a0, ens_b0
    want = set(sample_steps)
    if a.step_count in want:
        record(a, b)
    for _ in range(a.step_count, cfg.n_steps):
        xi = noise.normals(a.step_count, a.n, a.dim)
        a = step_ensemble(a, params, cfg, None, providers[0], xi=xi)
        b = step_ensemble(b, params, cfg, None, providers[1], xi=xi)
        for prov in providers:
            if hasattr(prov, "advance"):
                prov.advance()
        if a.step_count in want:
            record(a, b)
    return CoupledRun(np.array(rec["t"]), np.array(rec["q"]), np.array(rec["p"]), np.array(rec["z"]),
                      np.array(rec["f"]) if form is not None else None, a, b, {"noise_consumed": noise.consumed})


def strong_order_check(params: ModelParams, t_end: float, dt_list, n_paths: int, seed: int,
                       scheme: str = "euler_maruyama", noise_scale: float = 1.0, x0=(1.0, 0.5, -0.5),
                       ref_halvings: int = 4):
    """Strong convergence order against a fine reference grid with shared increments.

    The reference step is ``min(dt_list) / 2**ref_halvings``; coarse Gaussian
    increments are normalized sums of reference ones, so all grids see the
    same Brownian path. Returns ``(slope, dts, errors)`` where the errors are
    RMS distances at ``t_end`` to the reference solution and ``slope`` is the
    log2 regression slope over every entry of ``dt_list``.
    """
    if params.force_b.kind != "zero":
        raise ValueError("strong_order_check requires B = zero")
    dts = sorted((float(h) for h in dt_list), reverse=True)
    if len(dts) < 4:
        raise ValueError("need at least 4 step sizes")
    for h0, h1 in zip(dts, dts[1:]):
        if abs(h0 / h1 - 2.0) > 1e-9:
            raise ValueError("dt_list must be a halving sequence")
    if ref_halvings < 1:
        raise ValueError("ref_halvings must be >= 1")
    dts = dts + [dts[-1] / 2 ** ref_halvings]
    fine = dts[-1]
    n_fine = int(round(t_end / fine))
    if abs(n_fine * fine - t_end) > 1e-9 * t_end:
        raise ValueError("t_end must be a multiple of every dt")
    d = params.dim
    xi_fine = np.stack([kernels.gaussians(seed, NOISE, k, 0, n_paths, d) for k in range(n_fine)])
    start = np.broadcast_to(np.asarray(x0, dtype=np.float64)[:, None, None], (3, n_paths, d))
    finals = []
    for h in dts:
        r = int(round(h / fine))
        cfg = IntegratorConfig(h, scheme, t_end)
        ens = ParticleEnsemble(start[0].copy(), start[1].copy(), start[2].copy())
        xs = noise_scale * xi_fine.reshape(n_fine // r, r, n_paths, d).sum(axis=1) / math.sqrt(r)
        for k in range(n_fine // r):
            ens = step_ensemble(ens, params, cfg, None, None, xi=xs[k])
        finals.append(ens.points())
    ref = finals[-1]
    errs = np.array([math.sqrt(np.mean(np.sum((x - ref) ** 2, axis=1))) for x in finals[:-1]])
    if not (errs > 0).all():
        raise NonPositiveSeries("strong errors must be positive")
    slope = float(np.polyfit(np.log2(dts[:-1]), np.log2(errs), 1)[0])
    return slope, np.array(dts[:-1]), errs


__all__ = [
    "SCHEMES", "NonFiniteState", "IntegratorConfig", "ParticleEnsemble", "check_finite", "ou_coefficients",
    "z_variance_recursion", "scheme_stationary_covariance", "step_ensemble", "simulate", "CoupledRun", "run_coupled", "strong_order_check",
]
