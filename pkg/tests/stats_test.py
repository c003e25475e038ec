import math

import numpy as np
import pytest

from corner.errors import ParameterError
from corner.growth import CompetitionPath
from corner.lattice import RngStream
from corner.shape import DensityPair
from corner.stats import (ReplicaResult, all_hold, at_least, clt_normality, covariance_summary, deviation_profile,
                          estimate_direction, exponential_ks, fluctuation_exponent, in_interval, ks_uniform_test,
                          two_sample_ks, u_from_direction, within)


def _path(steps):
    sites = np.vstack(([[0, 0]], np.cumsum(steps, axis=0)))
    return CompetitionPath(sites.astype(np.int64), np.arange(len(sites), dtype=np.float64))


def test_ks_at_quantiles(n=100):
    res = ks_uniform_test((np.arange(n) + 0.5) / n, 0, 1)

    assert res.statistic == pytest.approx(0.5 / n)
    assert res.pvalue > 0.99
    assert res.clamped == 0


def test_ks_point_mass(n=50):
    res = ks_uniform_test(np.full(n, 2.0), 2, 3)

    assert res.statistic == pytest.approx(1.0)
    assert res.pvalue < 1e-10


def test_ks_clamps(caplog, n=40):
    samples = np.linspace(-1, 1, n)
    samples[0] = -1.5

    res = ks_uniform_test(samples, -1, 1)

    assert res.clamped == 1
    assert "outside" in caplog.text


@pytest.mark.parametrize("size, a, b", ((19, 0, 1), (50, 1, 1), (50, 2, 1)))
def test_ks_illegal(size, a, b):
    with pytest.raises(ParameterError):
        ks_uniform_test(np.linspace(0, 1, size), a, b)


def test_ks_self(n=1000, trials=200):
    """
    Under the null the p-values are roughly uniform: few of them fall below 0.05
    """

    gen = RngStream(0).substream(0)
    pvalues = [ks_uniform_test(gen.uniform(-2, 5, n), -2, 5).pvalue for _ in range(trials)]

    assert np.mean(np.asarray(pvalues) < 0.05) < 0.12


def test_other_ks(n=500):
    gen = RngStream(1).substream(0)

    assert exponential_ks(gen.exponential(1.0, n)).pvalue > 0.001
    assert exponential_ks(gen.exponential(3.0, n)).pvalue < 0.001
    assert two_sample_ks(gen.random(n), gen.random(n)).pvalue > 0.001


def test_covariance_summary(t=100.0):
    pair = DensityPair(0.2, 0.6)
    psi = np.array([[32.0, 12.0], [32.0, 12.0], [32.0, 12.0]])
    summary = covariance_summary(psi, t, pair)

    assert summary.mean_i_rate == pytest.approx(0.32)
    assert summary.mean_j_rate == pytest.approx(0.12)
    assert summary.var_i_rate == 0 and summary.var_j_rate == 0 and summary.cov_rate == 0

    with pytest.raises(ParameterError):
        covariance_summary(psi[:1], t, pair)


def test_covariance_order_invariant(t=400.0, replicas=50):
    gen = RngStream(2).substream(0)
    psi = np.column_stack((gen.normal(128, 13, replicas), gen.normal(48, 8, replicas)))
    pair = DensityPair(0.2, 0.6)

    a = covariance_summary(psi, t, pair)
    b = covariance_summary(psi[::-1], t, pair)

    assert a == b
    assert a.var_i_rate == pytest.approx(np.var(psi[:, 0], ddof=1) / t)
    assert a.cov_rate == pytest.approx(np.cov(psi[:, 0], psi[:, 1])[0, 1] / t)


def test_clt_normality(t=500.0, replicas=400):
    pair = DensityPair(0.2, 0.6)
    mean = np.array([0.32, 0.12]) * t
    cov = np.array([[0.448, -0.192], [-0.192, 0.168]]) * t
    psi = RngStream(4).substream(0).multivariate_normal(mean, cov, replicas)

    ki, kj = clt_normality(psi, t, pair)
    assert ki.pvalue > 0.001 and kj.pvalue > 0.001

    # a drift of a few standard deviations is rejected
    ki, _ = clt_normality(psi + [3 * np.sqrt(0.448 * t), 0], t, pair)
    assert ki.pvalue < 0.001


def test_estimate_direction():
    path = _path([[1, 0], [0, 1], [1, 0], [1, 0], [0, 1]])

    assert estimate_direction(path).tan_theta == pytest.approx(2 / 3)
    assert estimate_direction(path, box_side=2) == estimate_direction(_path([[1, 0], [0, 1], [1, 0]]))

    right = estimate_direction(_path([[1, 0]] * 4))
    up = estimate_direction(_path([[0, 1]] * 4))
    assert (right.tan_theta, right.degenerate) == (0.0, True)
    assert (up.tan_theta, up.degenerate) == (math.inf, True)

    with pytest.raises(ParameterError):
        estimate_direction(_path(np.empty((0, 2), dtype=np.int64)))

    with pytest.raises(ParameterError):
        estimate_direction(path, box_side=10)


def test_u_from_direction():
    assert u_from_direction(0.0) == 1.0
    assert u_from_direction(math.inf) == -1.0
    assert u_from_direction(1.0) == pytest.approx(0.0)
    assert u_from_direction(1 / 9) == pytest.approx(0.5)


def test_deviation_profile():
    # staircase along the diagonal
    path = _path([[1, 0], [0, 1]] * 8)
    radii = [1, 4, 8, 100]
    res = deviation_profile(path, 1.0, radii)

    assert np.isnan(res[-1])
    assert (res[:-1] <= 1).all()

    up = deviation_profile(_path([[0, 1]] * 10), math.inf, [2, 5])
    assert up.tolist() == pytest.approx([0, 0], abs=1e-12)


def test_fluctuation_exponent(replicas=40):
    radii = [16, 32, 64, 128, 256]
    gen = RngStream(3).substream(0)
    scale = np.asarray(radii, dtype=np.float64) ** (2 / 3)
    deviations = scale * gen.uniform(0.5, 1.5, (replicas, len(radii)))

    fit = fluctuation_exponent(deviations, radii, seed=1, resamples=200)

    assert fit.chi == pytest.approx(2 / 3, abs=0.1)
    assert fit.stderr > 0
    assert fit.radii == tuple(float(r) for r in radii)
    assert fluctuation_exponent(deviations, radii, seed=1, resamples=200) == fit


def test_fluctuation_ignores_missing(replicas=20):
    radii = [2, 4, 8, 16]
    deviations = np.tile(np.sqrt(radii), (replicas, 1))
    deviations[0, -1] = np.nan

    assert fluctuation_exponent(deviations, radii, resamples=10).chi == pytest.approx(0.5)

    with pytest.raises(ParameterError):
        fluctuation_exponent(deviations[:, :3], radii[:3])


def test_fluctuation_sparse_radius(replicas=20):
    """
    Resamples that miss the only replica reaching the largest radius still give a slope
    """

    radii = [8, 16, 32, 64]
    gen = RngStream(5).substream(0)
    deviations = np.asarray(radii, dtype=np.float64) ** (2 / 3) * gen.uniform(0.8, 1.2, (replicas, len(radii)))
    deviations[1:, 3] = np.nan

    fit = fluctuation_exponent(deviations, radii, resamples=200)

    assert np.isfinite(fit.chi)
    assert np.isfinite(fit.stderr) and fit.stderr > 0
    assert fit.chi == pytest.approx(2 / 3, abs=0.15)


def test_fluctuation_too_few_usable_radii(replicas=10):
    radii = [8, 16, 32, 64]
    deviations = np.full((replicas, len(radii)), np.nan)
    deviations[:, 0] = 2.0
    deviations[:, 1] = 0.0

    with pytest.raises(ParameterError):
        fluctuation_exponent(deviations, radii)


def test_verdicts():
    assert within("mean", 1.02, 1.0, 0.05).passed
    assert not within("mean", 1.2, 1.0, 0.05).passed
    assert within("mean", 10.2, 10.0, 0.05, relative=True).passed
    assert in_interval("chi", 0.5, 0.4, 0.6).passed
    assert in_interval("chi", 0.5, 0.4, 0.6).target == pytest.approx(0.5)
    assert not in_interval("chi", 0.7, 0.4, 0.6, soft=True).passed
    assert at_least("ks", 0.2).passed
    assert not at_least("ks", 0.001).passed

    held = all_hold("exact", [True, True, False])
    assert not held.passed
    assert held.estimate == pytest.approx(2 / 3)
    assert held.detail == "2 of 3"
    assert all_hold("exact", [True] * 4).passed
    assert not all_hold("exact", []).passed


def test_replica_result_round_trip():
    result = ReplicaResult(3, tan_theta=0.5, psi=[(10.0, 4, 2)], x=[(1.0, -1)], values={"rost": 1.5})

    assert ReplicaResult.from_dict(result.to_dict()) == result
