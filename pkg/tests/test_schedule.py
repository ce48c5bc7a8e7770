import math

import numpy as np
import pytest

from pcgen.schedule import Schedule, TimeRangeError


def test_trigflow_endpoints_and_quarter():
    s = Schedule("trigflow")
    assert s.alpha_sigma(0.0) == (1.0, 0.0, -0.0, 1.0)
    a, sg, da, ds = s.alpha_sigma(math.pi / 4)
    r = math.sqrt(2) / 2
    assert np.allclose([a, sg, da, ds], [r, r, -r, r])


def test_linear_fm_values():
    s = Schedule("linear_fm")
    assert s.alpha_sigma(0.3) == (0.7, 0.3, -1.0, 1.0)
    assert s.t_max == 1.0


def test_all_kinds_start_clean():
    for kind in ("trigflow", "linear_fm", "cosine_ddpm"):
        a, sg, _, _ = Schedule(kind).alpha_sigma(0.0)
        assert a == 1.0 and sg == 0.0


def test_time_range_check():
    s = Schedule("trigflow")
    with pytest.raises(TimeRangeError):
        s.alpha_sigma(2.0)
    with pytest.raises(TimeRangeError):
        s.alpha_sigma(-0.1)


def test_perturb_endpoints():
    s = Schedule("trigflow")
    rng = np.random.default_rng(0)
    x0, z = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    assert np.array_equal(s.perturb(x0, z, 0.0), x0)
    assert np.abs(s.perturb(x0, z, s.t_max) - z).max() < 1e-15


def test_perturb_hand_value():
    s = Schedule("trigflow")
    x0 = np.array([[1.0, 0.0, 0.0]])
    z = np.array([[0.0, 1.0, 0.0]])
    r = math.sqrt(2) / 2
    assert np.allclose(s.perturb(x0, z, math.pi / 4), [[r, r, 0.0]])


def test_analytic_velocity_hand_values():
    s = Schedule("trigflow")
    x0 = np.array([[1.0, 0.0, 0.0]])
    z = np.array([[0.0, 1.0, 0.0]])
    assert np.array_equal(s.analytic_velocity(x0, z, 0.0), z)
    assert np.abs(s.analytic_velocity(x0, z, s.t_max) + x0).max() < 1e-15
    r = math.sqrt(2) / 2
    assert np.allclose(s.analytic_velocity(x0, z, math.pi / 4), [[-r, r, 0.0]])


@pytest.mark.parametrize("kind", ["trigflow", "linear_fm", "cosine_ddpm"])
def test_velocity_is_time_derivative_of_perturb(kind):
    s = Schedule(kind)
    rng = np.random.default_rng(17)
    h = 1e-6
    for _ in range(20):
        x0 = rng.normal(size=(4, 3))
        z = rng.normal(size=(4, 3))
        t = rng.uniform(h, s.t_max - h)
        fd = (s.perturb(x0, z, t + h) - s.perturb(x0, z, t - h)) / (2 * h)
        assert np.abs(fd - s.analytic_velocity(x0, z, t)).max() < 1e-6


def test_unit_snr_identity():
    s = Schedule("trigflow")
    t = np.linspace(0.0, s.t_max, 101)
    a, sg, _, _ = s.alpha_sigma(t)
    assert np.abs(a**2 + sg**2 - 1.0).max() < 1e-15


def test_perturb_is_bilinear():
    s = Schedule("trigflow")
    rng = np.random.default_rng(3)
    x0, x1, z = rng.normal(size=(3, 5, 3))
    t = 0.7
    lhs = s.perturb(x0 + 2.0 * x1, z, t)
    rhs = s.perturb(x0, z, t) + 2.0 * s.perturb(x1, np.zeros_like(z), t)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_per_item_time_broadcast():
    s = Schedule("trigflow")
    rng = np.random.default_rng(4)
    x0 = rng.normal(size=(3, 6, 3))
    z = rng.normal(size=(3, 6, 3))
    t = np.array([0.1, 0.5, 1.2])
    batched = s.perturb(x0, z, t)
    for i in range(3):
        assert np.array_equal(batched[i], s.perturb(x0[i], z[i], t[i]))
