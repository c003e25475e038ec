import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from corner.errors import CoverageError, ParameterError, ValidationError
from corner.interface import (HOLE, PARTICLE, SECOND_CLASS, ExclusionProfile, InitialInterface, build_deterministic,
                              build_flat_L, format_interface, from_exclusion, parse_interface, sample_profile,
                              sample_random_walk, staircase, to_exclusion)
from corner.lattice import LatticeBox, RngStream, Site


def _corners(gaps):
    """
    Nonincreasing corners <= -1 from nonnegative gaps, the first gap measured from -1
    """
    return [-1 - int(c) for c in np.cumsum(gaps)]


corner_sequences = st.lists(st.integers(0, 4), min_size=1, max_size=12).map(_corners)


def test_figure_staircase():
    interface = build_deterministic([-3, -6, -6], [-1, -2], 0.5, 0.5)

    assert interface.a(1) == Site(-2, 1)
    assert interface.a(3) == Site(-5, 3)
    assert interface.b(2) == Site(2, -1)
    assert interface.contains(Site(-3, 1))
    assert not interface.contains(Site(-2, 1))
    assert interface.contains(Site(1, -1))
    assert not interface.contains(Site(1, 0))
    assert interface.contains(Site(-7, -7))


def test_symmetric_slopes(n=50):
    interface = build_deterministic(range(-1, -n - 1, -1), range(-1, -n - 1, -1), 0.5, 0.5)

    assert interface.alpha_slope == 1
    assert interface.beta_slope == 1


@pytest.mark.parametrize("alpha, beta, index", (([-1, -3, -2], [-1], 3),
                                                ([0, -1], [-1], 1),
                                                ([-1], [-2, -2, -1], 3)))
def test_illegal_corners(alpha, beta, index):
    with pytest.raises(ValidationError) as e:
        build_deterministic(alpha, beta, 0.5, 0.5)

    assert e.value.index == index


@pytest.mark.parametrize("lam, rho", ((0, 0.5), (1.1, 0.5), (0.5, 1), (0.5, -0.1)))
def test_illegal_densities(lam, rho):
    with pytest.raises(ParameterError):
        build_deterministic([-1], [-1], lam, rho)

    with pytest.raises(ParameterError):
        sample_random_walk(lam, rho, 10, RngStream(0))


def test_density_mismatch_warning(caplog):
    with caplog.at_level(logging.WARNING):
        build_deterministic([-1] * 20, [-1] * 20, 0.1, 0.5)

    assert "alpha slope" in caplog.text


def test_random_walk_axes(length=50):
    interface = sample_random_walk(1.0, 0.0, length, RngStream(4))

    assert (interface.alpha == -1).all()
    assert (interface.beta == -1).all()
    assert interface == build_flat_L(1, length=length)


@pytest.mark.parametrize("lam, rho", ((0.5, 0.5), (0.3, 0.6), (0.8, 0.2)))
def test_random_walk_gaps(lam, rho, length=100000, seed=2):
    interface = sample_random_walk(lam, rho, length, RngStream(seed))
    alpha_gaps = -np.diff(np.concatenate(([-1], interface.alpha)))
    beta_gaps = -np.diff(np.concatenate(([-1], interface.beta)))

    assert abs(alpha_gaps.mean() / ((1 - lam) / lam) - 1) < 0.05
    assert abs(beta_gaps.mean() / (rho / (1 - rho)) - 1) < 0.05


def test_random_walk_deterministic(length=1000):
    a = sample_random_walk(0.4, 0.7, length, RngStream(8, 2))
    b = sample_random_walk(0.4, 0.7, length, RngStream(8, 2))

    assert a == b
    # a longer walk extends the shorter one
    assert sample_random_walk(0.4, 0.7, 2 * length, RngStream(8, 2)).truncate(length) == a


def test_random_walk_binomial(lam=0.3, n=10000, bins=20):
    """
    Up-steps of the left walk over its first n sites are Binomial(n, lambda) across replicas
    """

    counts = []
    for i in range(200):
        left = to_exclusion(sample_random_walk(lam, 0.5, n, RngStream(1, i))).left[:n]
        counts.append(int(left.sum()))
    counts = np.asarray(counts)

    quantiles = np.unique(stats.binom.ppf(np.linspace(0, 1, bins + 1), n, lam))
    # half-integer edges so bin i holds the counts in (q_i, q_{i+1}]
    observed, _ = np.histogram(counts, bins=quantiles + 0.5)
    expected = np.diff(stats.binom.cdf(quantiles, n, lam)) * counts.size

    assert stats.chisquare(observed, expected).pvalue > 0.01


@pytest.mark.parametrize("L", (1, 2, 3, 7))
def test_flat_L(L, length=10):
    interface = build_flat_L(L, length=length)
    points = staircase(to_exclusion(interface))

    assert (interface.alpha == -L).all() and (interface.beta == -L).all()
    assert (interface.lam, interface.rho) == (1.0, 0.0)
    assert Site(0, -L) in points
    assert Site(-L, 0) in points


@pytest.mark.parametrize("L", (0, -2, 1.5))
def test_flat_L_illegal(L):
    with pytest.raises(ParameterError):
        build_flat_L(L)


def test_axes_exclusion(length=10):
    profile = to_exclusion(build_flat_L(1, length=length))

    assert (profile.left == PARTICLE).all()
    assert profile.right[0] == PARTICLE
    assert (profile.right[1:] == HOLE).all()


def test_figure_exclusion():
    interface = build_deterministic([-3, -6, -6], [-1, -2], 0.5, 0.5)
    profile = to_exclusion(interface)

    assert profile.left.tolist() == [0, 0, 1, 0, 0, 0, 1, 1]
    assert profile.right.tolist() == [1, 0, 1, 0]
    assert from_exclusion(profile) == interface


@settings(max_examples=300)
@given(alpha=corner_sequences, beta=corner_sequences)
def test_bijection(alpha, beta):
    interface = InitialInterface(np.asarray(alpha), np.asarray(beta), 0.5, 0.5)

    assert from_exclusion(to_exclusion(interface)) == interface


@settings(max_examples=100)
@given(alpha=corner_sequences, beta=corner_sequences)
def test_staircase_increments(alpha, beta):
    profile = to_exclusion(InitialInterface(np.asarray(alpha), np.asarray(beta), 0.5, 0.5))
    points = staircase(profile)
    occupation = np.concatenate((profile.left[::-1], [HOLE], profile.right))

    assert Site(-1, 0) in points and Site(0, 0) in points and Site(0, -1) in points
    for j in range(1, len(points)):
        eta = occupation[j - 1]
        assert points[j] - points[j - 1] == Site(1 - int(eta), -int(eta))


def test_profile_conventions():
    with pytest.raises(ValidationError):
        ExclusionProfile(np.array([1, 0]), np.array([0, 1]))

    with pytest.raises(ValidationError):
        ExclusionProfile(np.array([1, 3]), np.array([1, 0]))


@pytest.mark.parametrize("lam, rho", ((0.5, 0.5), (0.3, 0.6), (0.8, 0.2)))
def test_profile_matches_walk(lam, rho, length=500, seed=6):
    """
    The exclusion profile and the staircase of one stream describe the same initial state
    """

    stream = RngStream(seed, 1)
    walk = to_exclusion(sample_random_walk(lam, rho, length, stream))
    profile = sample_profile(lam, rho, 300, stream)

    assert (walk.left[:300] == profile.left).all()
    assert (walk.right[:301] == profile.right).all()


@pytest.mark.parametrize("lam, rho", ((0.5, 0.5), (0.3, 0.6)))
def test_profile_densities(lam, rho, half_width=100000):
    profile = sample_profile(lam, rho, half_width, RngStream(12))

    for arm, density in ((profile.left, lam), (profile.right[1:], rho)):
        sigma = np.sqrt(density * (1 - density) / arm.size)
        assert abs(arm.mean() - density) < 4 * sigma


def test_window():
    profile = ExclusionProfile(np.array([1, 0, 1]), np.array([1, 0, 0, 1]))

    plain = profile.window(2)
    collapsed = profile.window(2, second_class=True)

    assert plain.lo == -2 and plain.hi == 2
    assert plain.sites.tolist() == [0, 1, 0, 1, 0]
    assert collapsed.sites.tolist() == [0, 1, SECOND_CLASS, 0, 0]
    assert collapsed.second_class() == 0

    with pytest.raises(CoverageError):
        profile.window(4)


def test_mask_matches_contains(seed=3):
    interface = sample_random_walk(0.4, 0.6, 12, RngStream(seed))
    box = LatticeBox(Site(int(interface.alpha[-1]) - 2, int(interface.beta[-1]) - 2), Site(12, 12))
    mask = interface.mask(box)

    for y in range(box.lo.y, box.hi.y + 1):
        for x in range(box.lo.x, box.hi.x + 1):
            assert mask[box.index(Site(x, y))] == interface.contains(Site(x, y))

    with pytest.raises(CoverageError):
        interface.mask(LatticeBox(Site(0, 0), Site(13, 1)))


def test_reflect():
    interface = build_deterministic([-3, -6, -6], [-1, -2], 0.3, 0.6)
    mirrored = interface.reflect()

    assert mirrored.alpha.tolist() == [-1, -2]
    assert mirrored.beta.tolist() == [-3, -6, -6]
    assert mirrored.lam == pytest.approx(0.4) and mirrored.rho == pytest.approx(0.7)
    for z in (Site(-3, 1), Site(-2, 1), Site(1, -1), Site(2, -1)):
        assert mirrored.contains(Site(z.y, z.x)) == interface.contains(z)


def test_text_format():
    interface = build_deterministic([-3, -6, -6], [-1, -2], 0.5, 0.25)
    text = format_interface(interface)

    assert parse_interface(text) == interface
    assert parse_interface("# figure\nalpha: -3 -6 -6\nbeta: -1 -2  # two columns\nlambda: 0.5\nrho: 0.25\n") \
        == interface


def test_text_format_estimates_densities():
    interface = parse_interface("alpha: -2 -3 -4 -5\nbeta: -2 -3 -4 -5\n")

    # slope 5/4 on both arms
    assert interface.lam == pytest.approx(1 / (1 + 5 / 4))
    assert interface.rho == pytest.approx((5 / 4) / (1 + 5 / 4))


@pytest.mark.parametrize("text, index", (("alpha: -1\nbeta: x\n", 2),
                                         ("alpha: -1\ngamma: -1\n", 2),
                                         ("alpha: -1\nalpha: -2\nbeta: -1\n", 2),
                                         ("alpha: -1 -2\nbeta: -1 0\n", 2)))
def test_text_format_errors(text, index):
    with pytest.raises(ValidationError) as e:
        parse_interface(text)

    assert e.value.index == index
