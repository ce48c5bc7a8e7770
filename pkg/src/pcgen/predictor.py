"""Closed-form consistency predictor on the trigonometric schedule.

x_hat0 = cos t * x_t - sin t * sigma_d * F(x_t / sigma_d, t)

The closed form is specific to the cos/sin schedule (it relies on
cos^2 + sin^2 = 1 for exact recovery), so other schedule kinds are
rejected rather than silently generalized.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .schedule import Schedule


class UnsupportedScheduleError(ValueError):
    pass


def _check_trigflow(s: Schedule):
    if s.kind != "trigflow":
        raise UnsupportedScheduleError(
            f"closed-form predictor requires the trigflow schedule, got {s.kind!r}"
        )


def predict(s: Schedule, model, x_t, t):
    """Predict the clean sample from a noisy one; differentiable.

    ``x_t`` is (M, 3) or (B, M, 3); ``t`` scalar or (B,). Returns
    (x_hat Tensor, v Tensor) where v is the raw network velocity.
    """
    _check_trigflow(s)
    t_arr = s._check_t(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    v = model.forward(x_t / s.sigma_d, t)
    ct, st = np.cos(t_arr), np.sin(t_arr)
    if ct.ndim:  # per-item time: broadcast over (B, M, 3)
        ct = ct[:, None, None]
        st = st[:, None, None]
    x_hat = T.Tensor(ct * x_t) - T.mul(v, st * s.sigma_d)
    return x_hat, v


def predict_np(s: Schedule, model, x_t, t):
    """Inference-only predictor; returns a plain ndarray."""
    x_hat, _ = predict(s, model, x_t, t)
    return x_hat.data


def predict_with_velocity(s: Schedule, x_t, velocity, t):
    """Predictor with an externally supplied velocity (ndarray pathway)."""
    _check_trigflow(s)
    t_arr = s._check_t(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    ct, st = np.cos(t_arr), np.sin(t_arr)
    if ct.ndim:
        ct = ct.reshape(ct.shape + (1,) * (x_t.ndim - ct.ndim))
        st = st.reshape(st.shape + (1,) * (x_t.ndim - st.ndim))
    return ct * x_t - st * velocity


def predict_with_oracle(s: Schedule, x0, z, t):
    """Predictor with the exact analytic velocity substituted for the net.

    Recovers x0 up to rounding for every t: the cos/sin cross terms cancel
    and cos^2 + sin^2 collapses to the identity.
    """
    _check_trigflow(s)
    x_t = s.perturb(x0, z, t)
    v = s.analytic_velocity(x0, z, t)
    return predict_with_velocity(s, x_t, v, t)
