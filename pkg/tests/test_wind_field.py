import numpy as np
import pytest

from quadplan.errors import DomainError
from quadplan.services.wind_field import (
    WindAxisParams, WindModelParams, axis_wind, calm_axis, gust, wind_acceleration, wind_vector,
)


def test_gust_peaks_at_quarter_period():
    assert gust(10.0 / 4, 0.2, 10.0) == pytest.approx(0.2, abs=1e-12)


def test_gust_at_start():
    assert gust(0.0, 0.2, 10.0) == pytest.approx(2 * 0.2 / (1 + np.exp(4)), abs=1e-15)
    assert gust(0.0, 0.2, 10.0) == pytest.approx(7.194e-3, abs=1e-6)


def test_gust_is_periodic_and_bounded():
    t = np.linspace(0.0, 30.0, 601)
    g = gust(t, 0.2, 10.0)
    assert np.all(g > 0)
    assert np.all(g <= 0.2 + 1e-12)
    np.testing.assert_allclose(gust(t + 10.0, 0.2, 10.0), g, atol=1e-12)


def test_gust_rejects_bad_period():
    with pytest.raises(DomainError):
        gust(0.0, 0.2, 0.0)


def test_axis_wind_sums_terms(table2_wind):
    x = table2_wind.x_axis
    t = 2.5
    expected = x.v0 + sum(a * np.sin(w * t) for w, a in x.harmonics) + gust(t, x.v_gmax, x.T_g)
    assert float(axis_wind(t, x)) == pytest.approx(expected)
    assert float(axis_wind(t, x)) - (expected - 0.2) == pytest.approx(0.2, abs=1e-12)


def test_wind_vector_shape_and_vertical_component(table2_wind):
    t = np.linspace(0.0, 10.0, 11)
    v = wind_vector(t, table2_wind)
    assert v.shape == (11, 3)
    np.testing.assert_array_equal(v[:, 2], 0.0)
    np.testing.assert_allclose(v[:, 1], axis_wind(t, table2_wind.y_axis))


def test_scalar_time_gives_single_vector(table2_wind):
    assert wind_vector(1.0, table2_wind).shape == (3,)


def test_disabled_wind_is_calm():
    np.testing.assert_array_equal(wind_vector(np.arange(4.0), None), np.zeros((4, 3)))
    np.testing.assert_array_equal(wind_acceleration(3.0, None), np.zeros(3))


def test_calm_axis_is_zero():
    np.testing.assert_allclose(axis_wind(np.linspace(0, 5, 7), calm_axis()), 0.0, atol=1e-12)


def test_acceleration_scales_with_gain(table2_wind):
    doubled = WindModelParams(table2_wind.x_axis, table2_wind.y_axis, gain=2.0)
    np.testing.assert_allclose(wind_acceleration(4.0, doubled), 2.0 * wind_vector(4.0, table2_wind))


def test_axis_validation():
    with pytest.raises(DomainError, match="harmonics"):
        WindAxisParams(1.0, ((0.5, 0.1),), 0.2, 10.0).validate()
    with pytest.raises(DomainError, match="T_g"):
        WindAxisParams(1.0, ((0.5, 0.1),) * 3, 0.2, -1.0).validate("wind.x")


def test_gust_angular_frequency(table2_wind):
    assert table2_wind.x_axis.omega_g == pytest.approx(2 * np.pi / 10.0)


def test_axis_validation_rejects_flat_harmonics():
    with pytest.raises(DomainError, match="harmonics"):
        WindAxisParams(1.0, (1.0, 2.0, 3.0), 0.2, 10.0).validate("wind.x")
    with pytest.raises(DomainError, match="harmonics"):
        WindAxisParams(1.0, None, 0.2, 10.0).validate("wind.x")
