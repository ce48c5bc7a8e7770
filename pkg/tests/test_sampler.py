import numpy as np
import pytest

from pcgen import sampler
from pcgen.model import ModelConfig, VelocityModel
from pcgen.schedule import Schedule

SCHED = Schedule("trigflow")


def small_model(seed=0):
    model = VelocityModel(ModelConfig(point_widths=(8, 16), time_dim=8,
                                      time_hidden=16, out_widths=(16,), seed=seed))
    head = model.params["head.w"]
    head.data = np.random.default_rng(50 + seed).normal(scale=0.3, size=head.data.shape)
    return model


def oracle_velocity(x0, z):
    """Analytic velocity along the fixed (x0, z) trajectory.

    Time-only field, so Euler reduces to a left-rectangle quadrature of
    cos t z - sin t x0 and integrating from z over [0, T_max] lands on x0.
    """

    def vel(x, t):
        return np.cos(t) * z - np.sin(t) * x0

    return vel


def test_single_step_config_validation():
    with pytest.raises(ValueError):
        sampler.SampleConfig(method="midpoint")
    with pytest.raises(ValueError):
        sampler.SampleConfig(steps=0)


def test_single_step_matches_predictor_form():
    model = small_model()
    z = np.random.default_rng(0).normal(size=(16, 3))
    out = sampler.sample_single(model, SCHED, z)
    v = model.forward_np(z / SCHED.sigma_d, SCHED.t_max)
    expect = np.cos(SCHED.t_max) * z - np.sin(SCHED.t_max) * SCHED.sigma_d * v
    assert np.array_equal(out.points, expect)
    assert out.n_evals == 1


def test_euler_oracle_field_recovers_target_as_steps_grow():
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(12, 3)) * 0.5
    z = rng.normal(size=(12, 3))
    vel = oracle_velocity(x0, z)
    errs = []
    for steps in (2, 4, 8, 16, 32):
        x, n_evals = sampler.euler_trajectory(vel, SCHED, z, steps)
        assert n_evals == steps
        errs.append(np.abs(x - x0).max())
    assert errs[-1] < errs[0]
    # first-order convergence: error roughly halves per doubling
    slope = np.polyfit(np.log([2, 4, 8, 16, 32]), np.log(errs), 1)[0]
    assert -1.3 < slope < -0.7


def test_heun_trial_is_second_order_accurate():
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(12, 3)) * 0.5
    z = rng.normal(size=(12, 3))
    vel = oracle_velocity(x0, z)
    errs = []
    for steps in (2, 4, 8, 16, 32):
        x, n_evals, local = sampler.heun_trajectory(vel, SCHED, z, steps,
                                                    advance_trial=True)
        assert n_evals == 2 * steps
        assert len(local) == steps
        errs.append(np.abs(x - x0).max())
    slope = np.polyfit(np.log([2, 4, 8, 16, 32]), np.log(errs), 1)[0]
    assert -2.3 < slope < -1.7


def test_heun_default_advances_euler_state():
    model = small_model()
    z = np.random.default_rng(3).normal(size=(10, 3))
    euler = sampler.sample_euler(model, SCHED, z, 4)
    heun = sampler.sample_heun(model, SCHED, z, 4)
    assert np.array_equal(heun.points, euler.points)
    assert heun.n_evals == 8
    assert all(e >= 0.0 for e in heun.local_errors)
    trial = sampler.sample_heun(model, SCHED, z, 4, advance_trial=True)
    assert not np.array_equal(trial.points, euler.points)


def test_heun_local_error_shrinks_with_steps():
    rng = np.random.default_rng(4)
    x0 = rng.normal(size=(12, 3)) * 0.5
    z = rng.normal(size=(12, 3))
    vel = oracle_velocity(x0, z)
    _, _, coarse = sampler.heun_trajectory(vel, SCHED, z, 4)
    _, _, fine = sampler.heun_trajectory(vel, SCHED, z, 32)
    assert max(fine) < max(coarse)


def test_final_predict_applies_identity_at_t_zero():
    # at t = 0 the predictor is cos 0 x - sin 0 v = x, so final_predict
    # costs one evaluation but cannot move the state
    model = small_model()
    z = np.random.default_rng(5).normal(size=(10, 3))
    plain = sampler.sample_euler(model, SCHED, z, 3)
    final = sampler.sample_euler(model, SCHED, z, 3, final_predict=True)
    assert np.array_equal(plain.points, final.points)
    assert final.n_evals == plain.n_evals + 1


def test_sample_dispatch_and_determinism():
    model = small_model()
    cfg = sampler.SampleConfig(steps=3, method="euler", n_points=20)
    a = sampler.sample(model, SCHED, cfg, np.random.default_rng(9))
    b = sampler.sample(model, SCHED, cfg, np.random.default_rng(9))
    assert np.array_equal(a.points, b.points)
    assert a.points.shape == (20, 3)
    single = sampler.sample(model, SCHED, sampler.SampleConfig(n_points=20),
                            np.random.default_rng(9))
    assert single.n_evals == 1


def test_interpolation_endpoints_and_count():
    model = small_model()
    rng = np.random.default_rng(6)
    z1 = rng.normal(size=(14, 3))
    z2 = rng.normal(size=(14, 3))
    frames = sampler.interpolate(model, SCHED, z1, z2, 5)
    assert len(frames) == 5
    assert np.array_equal(frames[0], sampler.sample_single(model, SCHED, z1).points)
    assert np.array_equal(frames[-1], sampler.sample_single(model, SCHED, z2).points)
    with pytest.raises(ValueError):
        sampler.interpolate(model, SCHED, z1, z2, 1)
    with pytest.raises(ValueError):
        sampler.interpolate(model, SCHED, z1, z2[:5], 3)
