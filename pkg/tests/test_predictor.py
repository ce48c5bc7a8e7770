import numpy as np
import pytest

from pcgen import predictor
from pcgen.model import ModelConfig, VelocityModel
from pcgen.schedule import Schedule

SCHED = Schedule("trigflow")


def small_model(seed=0):
    return VelocityModel(ModelConfig(point_widths=(8, 16), time_dim=8,
                                     time_hidden=16, out_widths=(16,), seed=seed))


def test_oracle_velocity_recovers_x0_exactly():
    rng = np.random.default_rng(0)
    for t in rng.uniform(0.0, SCHED.t_max, size=25):
        x0 = rng.normal(size=(32, 3))
        z = rng.normal(size=(32, 3))
        x_hat = predictor.predict_with_oracle(SCHED, x0, z, t)
        assert np.abs(x_hat - x0).max() < 1e-12


def test_boundary_condition_identity_at_t_zero():
    model = small_model()
    model.params["head.w"].data = np.random.default_rng(1).normal(size=(16, 3))
    x = np.random.default_rng(2).normal(size=(10, 3))
    x_hat = predictor.predict_np(SCHED, model, x, 0.0)
    assert np.array_equal(x_hat, x)


def test_zero_velocity_model_shrinks_by_cos():
    model = small_model()  # zero-init head -> F = 0
    x = np.random.default_rng(3).normal(size=(10, 3))
    for t in (0.3, 1.0, SCHED.t_max):
        x_hat = predictor.predict_np(SCHED, model, x, t)
        assert np.abs(x_hat - np.cos(t) * x).max() < 1e-15


def test_velocity_error_maps_to_sin_t_output_error():
    rng = np.random.default_rng(4)
    x0 = rng.normal(size=(16, 3))
    z = rng.normal(size=(16, 3))
    eps = rng.normal(size=(16, 3))
    for t in (0.2, 0.8, 1.4):
        x_t = SCHED.perturb(x0, z, t)
        v = SCHED.analytic_velocity(x0, z, t) + eps
        x_hat = predictor.predict_with_velocity(SCHED, x_t, v, t)
        assert np.abs((x_hat - x0) + np.sin(t) * eps).max() < 1e-12


def test_sigma_d_scaling():
    s = Schedule("trigflow", sigma_d=2.0)
    x_t = np.ones((4, 3))
    v = np.full((4, 3), 0.5)
    t = 1.0
    expect = np.cos(t) * x_t - np.sin(t) * v
    assert np.allclose(predictor.predict_with_velocity(s, x_t, v, t), expect)


def test_batched_predict_matches_per_item():
    model = small_model()
    model.params["head.w"].data = np.random.default_rng(5).normal(size=(16, 3))
    rng = np.random.default_rng(6)
    x = rng.normal(size=(3, 8, 3))
    t = np.array([0.1, 0.7, 1.5])
    batched = predictor.predict_np(SCHED, model, x, t)
    for i in range(3):
        single = predictor.predict_np(SCHED, model, x[i], t[i])
        assert np.abs(batched[i] - single).max() < 1e-12


def test_predict_exposes_network_velocity():
    model = small_model()
    model.params["head.w"].data = np.random.default_rng(7).normal(size=(16, 3))
    x = np.random.default_rng(8).normal(size=(8, 3))
    x_hat, v = predictor.predict(SCHED, model, x, 0.9)
    assert np.array_equal(v.data, model.forward_np(x / SCHED.sigma_d, 0.9))
    rebuilt = predictor.predict_with_velocity(SCHED, x, v.data, 0.9)
    assert np.abs(x_hat.data - rebuilt).max() < 1e-15


@pytest.mark.parametrize("kind", ["linear_fm", "cosine_ddpm"])
def test_non_trigflow_schedules_rejected(kind):
    model = small_model()
    x = np.zeros((4, 3))
    with pytest.raises(predictor.UnsupportedScheduleError):
        predictor.predict(Schedule(kind), model, x, 0.5)
    with pytest.raises(predictor.UnsupportedScheduleError):
        predictor.predict_with_velocity(Schedule(kind), x, x, 0.5)
