"""Counter-based Gaussian streams and initial laws.

Every draw is a pure function of ``(seed, stream, step, particle)``, so
results are independent of particle count, chunking and thread schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gvlasov import kernels

# stream tags (16 bits)
NOISE = 0
INIT_A = 1
INIT_B = 2
INIT_REF = 3
NOISE_REF = 4
SLICING = 5


def derive_seed(master: int, *keys: int) -> int:
    """A 64-bit child seed for ``(master, keys...)``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class NoiseStream:
    """Standard Gaussian d-vectors keyed by ``(seed, stream, step, particle)``.

    ``consumed`` counts d-vectors handed out, for noise accounting.
    """

    seed: int
    stream: int = NOISE
    consumed: int = 0

    def normals(self, step: int, n: int, dim: int, start: int = 0):
        self.consumed += n
        return kernels.gaussians(self.seed, self.stream, step, start, n, dim)


@dataclass(frozen=True)
class GaussianLaw:
    """Per-coordinate Gaussian law for ``(q_k, p_k, z_k)``, i.i.d. over ``k``.

    Either an isotropic ``scale`` or a full 3x3 covariance ``cov``.
    """

    center: tuple = (0.0, 0.0, 0.0)
    scale: float = 1.0
    cov: tuple | None = None

    def factor(self):
        if self.cov is not None:
            return np.linalg.cholesky(np.asarray(self.cov, dtype=np.float64))
        return self.scale * np.eye(3)

    @property
    def mean_vector(self):
        return np.asarray(self.center, dtype=np.float64)

    def sample(self, n: int, dim: int, seed: int, stream: int):
        """Arrays ``q, p, z`` of shape ``(n, dim)``; particle ``i`` depends only on ``(seed, stream, i)``."""
        g = kernels.gaussians(seed, stream, 0, 0, n, 3 * dim).reshape(n, 3, dim)
        x = np.einsum("ij,njk->nik", self.factor(), g) + self.mean_vector[None, :, None]
        return x[:, 0, :].copy(), x[:, 1, :].copy(), x[:, 2, :].copy()

    def to_dict(self):
        out = {"center": list(self.center), "scale": self.scale}
        if self.cov is not None:
            out["cov"] = [list(r) for r in self.cov]
        return out
