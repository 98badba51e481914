"""Interaction terms: empirical, against a reference law, and exact linear.

Providers expose ``terms(ens)`` returning the ``(N, d)`` interaction for
every particle at the ensemble's current snapshot. Providers that carry
their own evolving state also implement ``advance()``, called once after
each step of the driven ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gvlasov import kernels
from gvlasov.model import ForceSpec, ModelParams, eval_force


class LinearOnlyMode(ValueError):
    pass


class NotClosed(ValueError):
    pass


class SingularLyapunov(ArithmeticError):
    pass


def empirical_interactions(q, force_b: ForceSpec, fast=True):
    """``(1/N) sum_j B(q_i - q_j)`` for all ``i``; ``q`` has shape ``(N, d)``.

    The ``j = i`` term is included (it vanishes for odd ``B``). Linear ``B``
    takes the O(N) path ``kappa (q_i - mean q)`` unless ``fast`` is off.
    """
    q = np.asarray(q, dtype=np.float64)
    if force_b.kind == "zero":
        return np.zeros_like(q)
    if force_b.kind == "linear" and fast:
        return force_b.c * (q - q.mean(axis=0))
    return kernels.interaction(q, q, force_b.kind, force_b.c)


def empirical_interaction(i: int, ens, force_b: ForceSpec):
    """Interaction felt by particle ``i`` (0-based) from the whole ensemble."""
    q = ens.q
    if not 0 <= i < q.shape[0]:
        raise IndexError(f"particle index {i} out of range for N={q.shape[0]}")
    return eval_force(force_b, q[i][None, :] - q).mean(axis=0)


@dataclass
class MeanTrajectory:
    """Mean ``E(Q, P, Z)`` on a time grid; rows are ``(m_q, m_p, m_z)`` flattened to ``3d``."""

    times: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.m = np.asarray(self.m, dtype=np.float64)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.isfinite(self.m).all():
            raise ValueError("mean trajectory must be finite")

    @property
    def dim(self):
        return self.m.shape[1] // 3

    def at(self, t):
        """Linear interpolation of the full ``3d`` mean at time ``t``."""
        k = int(np.searchsorted(self.times, t))
        if k < len(self.times) and self.times[k] == t:
            return self.m[k]
        if k == 0 or k >= len(self.times):
            raise ValueError(f"time {t} outside the trajectory grid")
        w = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1])
        return (1.0 - w) * self.m[k - 1] + w * self.m[k]

    def q_at(self, t):
        return self.at(t)[: self.dim]


def reference_interaction(q, ref, force_b: ForceSpec, t: float = 0.0):
    """Interaction at position(s) ``q`` against a reference law.

    ``ref`` is either a particle ensemble (frozen reference, any odd ``B``)
    or a :class:`MeanTrajectory` (exact, linear ``B`` only).
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    qq = q[None, :] if single else q
    if isinstance(ref, MeanTrajectory):
        if not force_b.is_linear:
            raise LinearOnlyMode("a mean trajectory determines the interaction only for linear B")
        out = force_b.slope * (qq - ref.q_at(t)[None, :])
    else:
        out = kernels.interaction(qq, ref.q, force_b.kind, force_b.c)
    return out[0] if single else out


class EmpiricalProvider:
    mode = "empirical"

    def __init__(self, force_b: ForceSpec):
        self.force_b = force_b

    def terms(self, ens):
        return empirical_interactions(ens.q, self.force_b)


class LinearExactProvider:
    """``kappa (q - m_Q(t))`` with ``m_Q`` from the closed mean dynamics."""

    mode = "linear_exact"

    def __init__(self, force_b: ForceSpec, trajectory: MeanTrajectory):
        if not force_b.is_linear:
            raise LinearOnlyMode("linear_exact mode requires a linear interaction force")
        self.force_b = force_b
        self.trajectory = trajectory

    def terms(self, ens):
        return reference_interaction(ens.q, self.trajectory, self.force_b, ens.time)


class FrozenReferenceProvider:
    """Interaction against a large self-interacting reference ensemble.

    The reference stands in for the law ``mu_t``; it is stepped with its own
    noise stream after every step of the driven ensemble.
    """

    mode = "frozen_reference"

    def __init__(self, force_b: ForceSpec, reference, params: ModelParams, cfg, noise):
        self.force_b = force_b
        self.reference = reference
        self.params = params
        self.cfg = cfg
        self.noise = noise
        self._self_provider = EmpiricalProvider(force_b)

    def terms(self, ens):
        if abs(ens.time - self.reference.time) > 1e-12 * max(1.0, ens.time):
            raise RuntimeError("reference ensemble is out of sync with the driven ensemble")
        return reference_interaction(ens.q, self.reference, self.force_b, ens.time)

    def advance(self):
        from gvlasov.sde import step_ensemble

        self.reference = step_ensemble(self.reference, self.params, self.cfg, self.noise, self._self_provider)


def _closed_confinement(params: ModelParams):
    if not params.force_a.is_linear:
        raise NotClosed(f"mean dynamics are not closed for A of kind {params.force_a.kind!r}")
    if not params.force_b.is_linear:
        raise NotClosed(f"mean dynamics are not closed for B of kind {params.force_b.kind!r}")
    return params.force_a.slope


def integrate_mean_ode(params: ModelParams, m0, t_end: float, dt: float) -> MeanTrajectory:
    """RK4 for the mean of the SDE when ``A`` and ``B`` are linear.

    The interaction cancels in the mean; a linear ``A(q) = c q`` shifts the
    confinement to ``beta + c``. ``m0`` is the ``3d`` vector ``(m_q, m_p, m_z)``.
    """
    c = _closed_confinement(params)
    d = params.dim
    m0 = np.asarray(m0, dtype=np.float64).reshape(3 * d)
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a positive integer multiple of dt")
    M = params.drift_matrix(extra_confinement=c)

    def rhs(x):
        return M @ x

    x = m0.reshape(3, d).copy()
    out = np.empty((n + 1, 3 * d))
    out[0] = x.ravel()
    for k in range(n):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x.ravel()
    return MeanTrajectory(np.arange(n + 1) * dt, out)


def stationary_covariance_oracle(params: ModelParams, kappa: float = 0.0, noise_diag=(0.0, 0.0, 2.0)):
    """Per-coordinate stationary covariance of the linear mean-field process.

    Solves ``M S + S M^T + D = 0`` for the six unknowns of the symmetric
    ``S`` with ``M`` the drift matrix at confinement ``beta + c + kappa``.
    """
    c = params.force_a.slope if params.force_a.is_linear else None
    if c is None:
        raise NotClosed("stationary covariance oracle needs A zero or linear")
    if params.beta + c + kappa <= 0:
        raise SingularLyapunov("effective confinement must be positive")
    M = params.drift_matrix(extra_confinement=c + kappa)
    D = np.diag(np.asarray(noise_diag, dtype=np.float64))
    idx = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    pos = {}
    for k, (i, j) in enumerate(idx):
        pos[(i, j)] = pos[(j, i)] = k
    A = np.zeros((6, 6))
    rhs = np.zeros(6)
    for row, (i, j) in enumerate(idx):
        # (M S)_{ij} + (S M^T)_{ij} = sum_k M_ik S_kj + S_ik M_jk
        for k in range(3):
            A[row, pos[(k, j)]] += M[i, k]
            A[row, pos[(i, k)]] += M[j, k]
        rhs[row] = -D[i, j]
    if abs(np.linalg.det(A)) < 1e-14:
        raise SingularLyapunov("Lyapunov system is singular")
    s = np.linalg.solve(A, rhs)
    S = np.empty((3, 3))
    for (i, j), k in pos.items():
        S[i, j] = s[k]
    return S
