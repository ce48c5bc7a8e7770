"""Time-conditioned, permutation-equivariant velocity network.

PointNet-style layout: a shared per-point MLP, a global max-pooled feature
with the time embedding added at the bottleneck, and a per-point output
head over the concatenation of local and global features. The final layer
is zero-initialized so the consistency predictor starts as pure shrinkage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass(frozen=True)
class ModelConfig:
    point_widths: tuple[int, ...] = (64, 128)
    time_dim: int = 64
    time_hidden: int = 128
    out_widths: tuple[int, ...] = (128,)
    seed: int = 0

    def __post_init__(self):
        widths = (*self.point_widths, self.time_hidden, *self.out_widths)
        if any(w < 1 for w in widths):
            raise ValueError("all layer widths must be positive")
        if self.time_dim % 2 != 0 or self.time_dim < 2:
            raise ValueError("time_dim must be a positive even number")


def time_embedding(t, dim):
    """Sinusoidal embedding: [sin(t w_k); cos(t w_k)], w_k = 10000^(-2k/dim).

    ``t`` may be a scalar or a (B,) array; returns (dim,) or (B, dim).
    """
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    t = np.asarray(t, dtype=np.float64)
    k = np.arange(dim // 2)
    freqs = 10000.0 ** (-2.0 * k / dim)
    phase = t[..., None] * freqs
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


class VelocityModel:
    """F_theta(x_t / sigma_d, t) -> per-point velocity, shape (B, M, 3)."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: dict[str, T.Tensor] = {}
        self._build(np.random.default_rng(config.seed))

    def _linear(self, name, fan_in, fan_out, rng, zero=False):
        if zero:
            w = np.zeros((fan_in, fan_out))
        else:
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        self.params[f"{name}.w"] = T.Tensor(w, requires_grad=True)
        self.params[f"{name}.b"] = T.Tensor(np.zeros(fan_out), requires_grad=True)

    def _build(self, rng):
        cfg = self.config
        d = 3
        for i, w in enumerate(cfg.point_widths):
            self._linear(f"point.{i}", d, w, rng)
            d = w
        feat = d  # global feature width = last per-point width
        self._linear("time.0", cfg.time_dim, cfg.time_hidden, rng)
        self._linear("time.1", cfg.time_hidden, feat, rng)
        d = 2 * feat
        for i, w in enumerate(cfg.out_widths):
            self._linear(f"out.{i}", d, w, rng)
            d = w
        self._linear("head", d, 3, rng, zero=True)

    def _apply(self, name, h):
        return h @ self.params[f"{name}.w"] + self.params[f"{name}.b"]

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def forward(self, x_scaled, t):
        """Run the network inside the active tape (if any).

        ``x_scaled`` is (M, 3) or (B, M, 3); ``t`` a scalar or (B,).
        Returns a Tensor of the same leading shape as the input.
        """
        x = np.asarray(x_scaled, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3 or x.shape[-1] != 3:
            raise T.ShapeError(f"expected (B, M, 3) input, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite values in network input")
        batch = x.shape[0]

        h = T.Tensor(x)
        for i in range(len(self.config.point_widths)):
            h = T.tanh(self._apply(f"point.{i}", h))

        g = T.amax(h, axis=1)  # (B, feat) global feature

        temb = time_embedding(np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,)),
                              self.config.time_dim)
        tf = T.tanh(self._apply("time.0", T.Tensor(temb)))
        tf = self._apply("time.1", tf)
        g = g + tf

        g_rep = T.broadcast_to(T.reshape(g, (batch, 1, g.shape[-1])), h.shape)
        h = T.concat([h, g_rep], axis=2)
        for i in range(len(self.config.out_widths)):
            h = T.tanh(self._apply(f"out.{i}", h))
        v = self._apply("head", h)
        if squeeze:
            v = T.reshape(v, v.shape[1:])
        return v

    def forward_np(self, x_scaled, t):
        """Inference-only forward: plain ndarray out, nothing recorded."""
        return self.forward(x_scaled, t).data

    def state_arrays(self):
        """Name -> ndarray view of all parameters, in construction order."""
        return {name: p.data for name, p in self.params.items()}

    def load_state_arrays(self, arrays):
        for name, p in self.params.items():
            if name not in arrays:
                raise KeyError(f"missing parameter {name!r}")
            a = np.asarray(arrays[name], dtype=np.float64)
            if a.shape != p.data.shape:
                raise T.ShapeError(f"{name}: shape {a.shape} != expected {p.data.shape}")
            p.data = a
