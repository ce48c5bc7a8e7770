"""Inference: single-evaluation generation, reverse-time Euler integration
of the flow ODE, the Heun trial for local error control, and latent
interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .predictor import predict_np, predict_with_velocity
from .schedule import Schedule

METHODS = ("single_step", "euler", "heun")


@dataclass(frozen=True)
class SampleConfig:
    steps: int = 1
    method: str = "single_step"
    n_points: int = 2048
    sigma_d: float = 1.0
    # advance by the Heun trial instead of only reporting it
    heun_advance: bool = False
    # apply the closed-form predictor once after the last Euler step
    final_predict: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown sampling method {self.method!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass(frozen=True)
class SampleResult:
    points: np.ndarray  # (M, 3)
    n_evals: int
    local_errors: tuple[float, ...] = ()  # Heun only, one entry per step


def model_velocity(model, sigma_d):
    """Wrap a network as a velocity field v(x, t) = sigma_d F(x/sigma_d, t)."""

    def vel(x, t):
        return sigma_d * model.forward_np(x / sigma_d, t)

    return vel


def draw_noise(rng, n_points, sigma_d):
    return rng.normal(0.0, sigma_d, size=(n_points, 3))


def sample_single(model, s: Schedule, x_noise) -> SampleResult:
    """One predictor evaluation at t = T_max (the consistency shortcut)."""
    return SampleResult(predict_np(s, model, x_noise, s.t_max), n_evals=1)


def euler_trajectory(velocity, s: Schedule, x_noise, steps, final_predict=False):
    """Integrate x' = v(x, t) backwards over a uniform S-step partition."""
    delta = s.t_max / steps
    x = np.asarray(x_noise, dtype=np.float64)
    n_evals = 0
    t = s.t_max
    for _ in range(steps):
        x = x - delta * velocity(x, t)
        n_evals += 1
        t -= delta
    if final_predict:
        x = predict_with_velocity(s, x, velocity(x, 0.0), 0.0)
        n_evals += 1
    return x, n_evals


def sample_euler(model, s: Schedule, x_noise, steps, final_predict=False) -> SampleResult:
    x, n_evals = euler_trajectory(
        model_velocity(model, s.sigma_d), s, x_noise, steps, final_predict
    )
    return SampleResult(x, n_evals=n_evals)


def heun_trajectory(velocity, s: Schedule, x_noise, steps,
                    advance_trial=False, final_predict=False):
    """Euler trajectory with a trapezoidal (Heun) trial at every step.

    The trial state averages the slopes at both interval ends. By default
    it only feeds the per-step local-error report ||trial - euler|| and
    the accepted state remains the Euler update; ``advance_trial``
    switches the accepted state to the trial.
    """
    delta = s.t_max / steps
    x = np.asarray(x_noise, dtype=np.float64)
    n_evals = 0
    local_errors = []
    t = s.t_max
    for _ in range(steps):
        v0 = velocity(x, t)
        x_euler = x - delta * v0
        v1 = velocity(x_euler, t - delta)
        x_trial = x - 0.5 * delta * (v0 + v1)
        n_evals += 2
        local_errors.append(float(np.linalg.norm(x_trial - x_euler)))
        x = x_trial if advance_trial else x_euler
        t -= delta
    if final_predict:
        x = predict_with_velocity(s, x, velocity(x, 0.0), 0.0)
        n_evals += 1
    return x, n_evals, local_errors


def sample_heun(model, s: Schedule, x_noise, steps,
                advance_trial=False, final_predict=False) -> SampleResult:
    x, n_evals, errs = heun_trajectory(
        model_velocity(model, s.sigma_d), s, x_noise, steps, advance_trial, final_predict
    )
    return SampleResult(x, n_evals=n_evals, local_errors=tuple(errs))


def sample(model, s: Schedule, cfg: SampleConfig, rng) -> SampleResult:
    """Draw noise and run the configured sampler once."""
    x_noise = draw_noise(rng, cfg.n_points, cfg.sigma_d)
    if cfg.method == "single_step":
        return sample_single(model, s, x_noise)
    if cfg.method == "euler":
        return sample_euler(model, s, x_noise, cfg.steps, cfg.final_predict)
    return sample_heun(model, s, x_noise, cfg.steps, cfg.heun_advance, cfg.final_predict)


def interpolate(model, s: Schedule, z1, z2, k):
    """Single-step samples along the linear noise path between z1 and z2.

    Returns the list of K clouds for alpha = 0, 1/(K-1), ..., 1.
    """
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise ValueError(f"z1 shape {z1.shape} != z2 shape {z2.shape}")
    if k < 2:
        raise ValueError("need at least the two endpoint frames")
    frames = []
    for alpha in np.linspace(0.0, 1.0, k):
        z_alpha = (1.0 - alpha) * z1 + alpha * z2
        frames.append(sample_single(model, s, z_alpha).points)
    return frames
