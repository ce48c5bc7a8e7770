"""Forward noising schedules (alpha_t, sigma_t), perturbation, and the
analytic target velocity of the forward process.

Kinds:
  trigflow     alpha = cos t,        sigma = sin t,        t in [0, pi/2]
  linear_fm    alpha = 1 - t,        sigma = t,            t in [0, 1]
  cosine_ddpm  alpha = cos(pi t/2),  sigma = sin(pi t/2),  t in [0, 1]

cosine_ddpm is the standard cosine interpolation reparameterized to unit
time; it is only used as an ablation schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("trigflow", "linear_fm", "cosine_ddpm")


class TimeRangeError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    kind: str = "trigflow"
    sigma_d: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.sigma_d <= 0:
            raise ValueError("sigma_d must be positive")

    @property
    def t_max(self):
        return math.pi / 2.0 if self.kind == "trigflow" else 1.0

    def _check_t(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < -1e-12) or np.any(t > self.t_max + 1e-12):
            raise TimeRangeError(f"t={t} outside [0, {self.t_max}] for {self.kind}")
        return t

    def alpha_sigma(self, t):
        """Return (alpha, sigma, dalpha/dt, dsigma/dt) with exact derivatives."""
        t = self._check_t(t)
        if self.kind == "trigflow":
            return np.cos(t), np.sin(t), -np.sin(t), np.cos(t)
        if self.kind == "linear_fm":
            one = np.ones_like(t)
            return 1.0 - t, t + 0.0, -one, one
        h = math.pi / 2.0
        return np.cos(h * t), np.sin(h * t), -h * np.sin(h * t), h * np.cos(h * t)

    def perturb(self, x0, z, t):
        """x_t = alpha_t x0 + sigma_t z. Broadcasts scalar or per-item t."""
        x0 = np.asarray(x0, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if x0.shape != z.shape:
            raise ValueError(f"x0 shape {x0.shape} != z shape {z.shape}")
        a, s, _, _ = self.alpha_sigma(t)
        a, s = _expand_t(a, x0.ndim), _expand_t(s, x0.ndim)
        return a * x0 + s * z

    def analytic_velocity(self, x0, z, t):
        """Exact d/dt of perturb: alpha'_t x0 + sigma'_t z.

        For trigflow this is -sin t x0 + cos t z, which is also the
        flow-matching regression target.
        """
        x0 = np.asarray(x0, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if x0.shape != z.shape:
            raise ValueError(f"x0 shape {x0.shape} != z shape {z.shape}")
        _, _, da, ds = self.alpha_sigma(t)
        da, ds = _expand_t(da, x0.ndim), _expand_t(ds, x0.ndim)
        return da * x0 + ds * z

    def fm_target(self, x0, z, t):
        """Regression target for the scaled network output sigma_d F."""
        return self.analytic_velocity(x0, z, t)


def _expand_t(v, ndim):
    """Reshape a per-item scalar array so it broadcasts over (B, M, 3)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0:
        return v
    return v.reshape(v.shape + (1,) * (ndim - v.ndim))
