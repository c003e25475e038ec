import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from corner.errors import DomainError, ParameterError
from corner.shape import (CURVED, LEFT_LINEAR, RIGHT_LINEAR, DensityPair, clt_moments, direction_predictions,
                          interface_speeds, mu, shape_curve, shape_p, tan_theta_to_u, u_theta_maps, u_to_tan_theta)

densities = st.builds(DensityPair, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
coordinates = st.floats(0.001, 100)


@given(pair=densities, x=coordinates, y=coordinates)
def test_above_point_to_point(pair, x, y):
    value = shape_p(x, y, pair)

    assert value.p >= mu(x, y) * (1 - 1e-12)
    assert value.p == max(value.p1, value.p2)


@given(pair=densities, x=coordinates, y=coordinates, c=st.floats(0.1, 10))
def test_homogeneous(pair, x, y, c):
    assert shape_p(c * x, c * y, pair).p == pytest.approx(c * shape_p(x, y, pair).p, rel=1e-9)


@given(rho=st.floats(0.01, 0.99))
def test_continuous_at_right_ray(rho):
    pair = DensityPair(0.5, rho)
    ray = pair.d_rho ** 2

    assert pair.p2(1, ray * (1 - 1e-9)) == pytest.approx(mu(1, ray), rel=1e-6)
    assert pair.p2(1, ray) == pytest.approx(1 / (1 - rho) ** 2)


@given(lam=st.floats(0.01, 0.99))
def test_continuous_at_left_ray(lam):
    pair = DensityPair(lam, 0.5)
    ray = pair.d_lambda ** 2

    assert pair.p1(1, ray * (1 + 1e-9)) == pytest.approx(mu(1, ray), rel=1e-6)


@pytest.mark.parametrize("x, y, regime, p", ((1, 4, LEFT_LINEAR, 10),
                                             (1, 0.01, RIGHT_LINEAR, 1.3),
                                             (1, 0.25, CURVED, 2.25),
                                             (1, 1, CURVED, 4)))
def test_regimes(x, y, regime, p):
    value = shape_p(x, y, DensityPair(0.5, 0.2))

    assert value.regime == regime
    assert value.p == pytest.approx(p)


def test_full_left_density():
    pair = DensityPair(1.0, 0.5)

    assert pair.d_lambda == math.inf
    assert pair.w_star == math.inf
    assert shape_p(1, 100, pair).p == pytest.approx(mu(1, 100))


@pytest.mark.parametrize("x, y", ((0, 0), (-1, 1), (1, -0.5)))
def test_shape_domain(x, y):
    with pytest.raises(DomainError):
        shape_p(x, y, DensityPair(0.5, 0.5))


@pytest.mark.parametrize("lam, rho", ((0, 0.5), (1.5, 0.5), (0.5, 1), (0.5, -0.5)))
def test_illegal_densities(lam, rho):
    with pytest.raises(ParameterError):
        DensityPair(lam, rho)


def test_shock_direction():
    prediction = direction_predictions(DensityPair(0.3, 0.6))

    assert prediction.deterministic
    assert prediction.tan_theta == pytest.approx(9 / 14)
    assert prediction.speed == pytest.approx(0.1)
    assert prediction.interval is None


def test_fan_direction():
    pair = DensityPair(0.7, 0.3)
    prediction = direction_predictions(pair)

    assert not prediction.deterministic
    assert prediction.interval == pytest.approx(((3 / 7) ** 2, (7 / 3) ** 2))
    assert prediction.speed_interval == pytest.approx((-0.4, 0.4))
    # the fan endpoints map onto the speed endpoints
    assert tan_theta_to_u(prediction.interval[0]) == pytest.approx(1 - 2 * pair.rho)
    assert tan_theta_to_u(prediction.interval[1]) == pytest.approx(1 - 2 * pair.lam)


@given(u=st.floats(-0.99, 0.99))
def test_speed_maps(u):
    tan_theta, i, j = u_theta_maps(u)

    assert tan_theta_to_u(tan_theta) == pytest.approx(u, abs=1e-9)
    assert i - j == pytest.approx(u)
    assert math.sqrt(i) + math.sqrt(j) == pytest.approx(1)
    assert j / i == pytest.approx(tan_theta)
    assert u_theta_maps(tan_theta, to="u")[0] == pytest.approx(u, abs=1e-9)


@pytest.mark.parametrize("value", (-1, 1, 2))
def test_speed_domain(value):
    with pytest.raises(DomainError):
        u_to_tan_theta(value)

    with pytest.raises(DomainError):
        interface_speeds(value)


def test_tan_domain():
    for value in (0, -1, math.inf):
        with pytest.raises(DomainError):
            tan_theta_to_u(value)

    with pytest.raises(ValueError):
        u_theta_maps(0.5, to="theta")


def test_clt_moments():
    moments = clt_moments(DensityPair(0.2, 0.6))

    assert moments.mean_i == pytest.approx(0.32)
    assert moments.mean_j == pytest.approx(0.12)
    assert moments.var_i == pytest.approx(0.448)
    assert moments.var_j == pytest.approx(0.168)
    assert moments.cov == pytest.approx(-0.192)
    assert not moments.diverging


@given(lam=st.floats(0.01, 0.49), gap=st.floats(0.01, 0.5))
def test_clt_means_match_shock(lam, gap):
    pair = DensityPair(lam, min(lam + gap, 0.99))
    moments = clt_moments(pair)

    assert moments.mean_i - moments.mean_j == pytest.approx(1 - pair.lam - pair.rho)
    assert moments.mean_j / moments.mean_i == pytest.approx(pair.w_star)
    assert moments.var_i * moments.var_j >= moments.cov ** 2 * (1 - 1e-9)


def test_clt_domain():
    with pytest.raises(DomainError):
        clt_moments(DensityPair(0.6, 0.2))

    with pytest.raises(DomainError):
        clt_moments(DensityPair(0.5, 0.5))

    moments = clt_moments(DensityPair(0.5, 0.5 + 1e-8))
    assert moments.diverging
    assert moments.var_i == math.inf


@pytest.mark.parametrize("lam, rho", ((0.5, 0.5), (0.3, 0.6), (0.8, 0.2), (1.0, 0.0)))
def test_shape_curve(lam, rho, n_angles=91):
    pair = DensityPair(lam, rho)
    curve = shape_curve(pair, n_angles)

    assert len(curve) == n_angles
    assert curve[0][0] == 0 and curve[-1][0] == pytest.approx(math.pi / 2)
    assert curve[0][2] == 0 and curve[-1][1] == 0
    for angle, x, y, regime in curve:
        assert shape_p(x, y, pair).p == pytest.approx(1)
    assert {regime for *_, regime in curve} <= {CURVED, LEFT_LINEAR, RIGHT_LINEAR}
