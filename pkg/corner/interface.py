"""
Interface
Initial growth interfaces (corner sequences of the staircase) and their exclusion profiles
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from corner.errors import CoverageError, DomainError, ParameterError, ValidationError
from corner.lattice import LEFT_ARM, ORIGIN, RIGHT_ARM, LatticeBox, RngStream, Site

HOLE = 0
PARTICLE = 1
SECOND_CLASS = 2

_CHUNK = 4096


def check_densities(lam: float, rho: float):
    try:
        assert 0 < lam <= 1, "lambda must be in (0, 1], provided %s" % lam
        assert 0 <= rho < 1, "rho must be in [0, 1), provided %s" % rho
    except AssertionError as e:
        raise ParameterError("Illegal parameters, %s" % e)


def _check_corners(name: str, seq: np.ndarray):
    for k, value in enumerate(seq, 1):
        if value > -1:
            raise ValidationError("%s_%d = %d must be <= -1" % (name, k, value), k)
        if k > 1 and value > seq[k - 2]:
            raise ValidationError("%s increases at index %d (%d > %d)" % (name, k, value, seq[k - 2]), k)


@dataclass(frozen=True)
class InitialInterface:
    """
    Staircase gamma_0 given by its corners.
    Rows k >= 1 of Gamma_0 are {x <= alpha_k}, columns m >= 1 are {y <= beta_m},
    and the closed third quadrant belongs to Gamma_0.
    """

    alpha: np.ndarray
    beta: np.ndarray
    lam: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=np.int64))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.int64))
        if self.alpha.ndim != 1 or self.alpha.size == 0 or self.beta.ndim != 1 or self.beta.size == 0:
            raise ValidationError("Corner sequences must be nonempty one-dimensional sequences")
        _check_corners("alpha", self.alpha)
        _check_corners("beta", self.beta)
        check_densities(self.lam, self.rho)
        self.alpha.flags.writeable = False
        self.beta.flags.writeable = False

    @property
    def truncation(self) -> int:
        """
        :return: Number of corners known on both arms
        """
        return min(self.alpha.size, self.beta.size)

    @property
    def alpha_slope(self) -> float:
        """
        :return: -alpha_K / K at the truncation end, estimates (1 - lambda) / lambda
        """
        return -float(self.alpha[-1]) / self.alpha.size

    @property
    def beta_slope(self) -> float:
        """
        :return: -beta_M / M at the truncation end, estimates rho / (1 - rho)
        """
        return -float(self.beta[-1]) / self.beta.size

    def a(self, k: int) -> Site:
        """
        :return: Boundary point A_k = (alpha_k + 1, k)
        """
        return Site(int(self.alpha[k - 1]) + 1, k)

    def b(self, m: int) -> Site:
        """
        :return: Boundary point B_m = (m, beta_m + 1)
        """
        return Site(m, int(self.beta[m - 1]) + 1)

    def contains(self, z: Site) -> bool:
        """
        :return: Whether z belongs to Gamma_0
        """

        if z.x <= 0 and z.y <= 0:
            return True
        if z.y > 0:
            if z.y > self.alpha.size:
                raise CoverageError("Row %d beyond the interface truncation" % z.y, z)
            return z.x <= self.alpha[z.y - 1]
        if z.x > self.beta.size:
            raise CoverageError("Column %d beyond the interface truncation" % z.x, z)
        return z.y <= self.beta[z.x - 1]

    def mask(self, box: LatticeBox) -> np.ndarray:
        """
        :return: Boolean row-major table, True on the sites of box inside Gamma_0
        """

        if box.hi.y > self.alpha.size:
            raise CoverageError("Interface knows %d rows, box needs %d" % (self.alpha.size, box.hi.y),
                                Site(int(self.alpha[-1]) + 1, self.alpha.size + 1))
        if box.hi.x > self.beta.size:
            raise CoverageError("Interface knows %d columns, box needs %d" % (self.beta.size, box.hi.x),
                                Site(self.beta.size + 1, int(self.beta[-1]) + 1))

        xs = np.arange(box.lo.x, box.hi.x + 1)
        ys = np.arange(box.lo.y, box.hi.y + 1)
        # pad so that negative or zero rows/columns index harmlessly
        alpha_row = np.where(ys > 0, self.alpha[np.clip(ys - 1, 0, None)], 0)
        beta_col = np.where(xs > 0, self.beta[np.clip(xs - 1, 0, None)], 0)

        x, y = xs[None, :], ys[:, None]
        return ((x <= 0) & (y <= 0)) | ((y > 0) & (x <= alpha_row[:, None])) | ((x > 0) & (y <= beta_col[None, :]))

    def reflect(self) -> "InitialInterface":
        """
        Mirror the staircase across the diagonal, exchanging the two arms
        """
        return InitialInterface(self.beta.copy(), self.alpha.copy(), 1.0 - self.rho, 1.0 - self.lam)

    def truncate(self, length: int) -> "InitialInterface":
        return InitialInterface(self.alpha[:length].copy(), self.beta[:length].copy(), self.lam, self.rho)

    def __eq__(self, other):
        return isinstance(other, InitialInterface) and np.array_equal(self.alpha, other.alpha) \
            and np.array_equal(self.beta, other.beta) and self.lam == other.lam and self.rho == other.rho

    def __hash__(self):
        return hash((self.alpha.tobytes(), self.beta.tobytes(), self.lam, self.rho))

    def __str__(self):
        return "InitialInterface(K=%d, M=%d, lambda=%s, rho=%s)" % (self.alpha.size, self.beta.size,
                                                                     self.lam, self.rho)


@dataclass(frozen=True)
class Configuration:
    """
    Finite exclusion configuration on the window [lo, lo + len(sites) - 1].
    Values: 0 hole, 1 particle, 2 second-class particle.
    """

    lo: int
    sites: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sites", np.asarray(self.sites, dtype=np.int8))

    @property
    def hi(self) -> int:
        return self.lo + self.sites.size - 1

    def at(self, x: int) -> int:
        if not self.lo <= x <= self.hi:
            raise DomainError("Site %d outside the window [%d, %d]" % (x, self.lo, self.hi), x)
        return int(self.sites[x - self.lo])

    def positions(self, species: int) -> np.ndarray:
        return np.flatnonzero(self.sites == species) + self.lo

    def second_class(self) -> Optional[int]:
        where = self.positions(SECOND_CLASS)
        return int(where[0]) if where.size else None

    def copy(self) -> "Configuration":
        return Configuration(self.lo, self.sites.copy())

    def __eq__(self, other):
        return isinstance(other, Configuration) and self.lo == other.lo and np.array_equal(self.sites, other.sites)

    def __hash__(self):
        return hash((self.lo, self.sites.tobytes()))


@dataclass(frozen=True)
class ExclusionProfile:
    """
    Initial exclusion configuration split at the origin:
    left[i] is the occupation of site -(i + 1), right[i] of site i + 1.
    Site 0 holds a hole and site 1 a particle.
    """

    left: np.ndarray
    right: np.ndarray
    lam: float = math.nan
    rho: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "left", np.asarray(self.left, dtype=np.int8))
        object.__setattr__(self, "right", np.asarray(self.right, dtype=np.int8))
        if self.right.size == 0 or self.right[0] != PARTICLE:
            raise ValidationError("Site 1 must hold a particle", 1)
        for name, arm in (("left", self.left), ("right", self.right)):
            bad = np.flatnonzero((arm != HOLE) & (arm != PARTICLE))
            if bad.size:
                raise ValidationError("%s occupation at position %d is not 0/1" % (name, bad[0] + 1), int(bad[0]) + 1)

    def window(self, half_width: int, second_class: bool = False) -> Configuration:
        """
        Restrict the profile to [-half_width, half_width].
        :param second_class: Collapse the hole at 0 and the particle at 1 into a second-class particle at 0,
            shifting the rest of the right arm one site to the left
        """

        shift = 1 if second_class else 0
        if self.left.size < half_width:
            raise CoverageError("Left arm covers %d sites, window needs %d" % (self.left.size, half_width),
                                -(self.left.size + 1))
        if self.right.size < half_width + shift:
            raise CoverageError("Right arm covers %d sites, window needs %d" % (self.right.size, half_width + shift),
                                self.right.size + 1)

        sites = np.empty(2 * half_width + 1, dtype=np.int8)
        sites[:half_width] = self.left[:half_width][::-1]
        sites[half_width] = SECOND_CLASS if second_class else HOLE
        sites[half_width + 1:] = self.right[shift:half_width + shift]
        return Configuration(-half_width, sites)

    def __eq__(self, other):
        return isinstance(other, ExclusionProfile) and np.array_equal(self.left, other.left) \
            and np.array_equal(self.right, other.right)

    def __hash__(self):
        return hash((self.left.tobytes(), self.right.tobytes()))


def build_deterministic(alpha: Iterable[int], beta: Iterable[int], lam: float, rho: float) -> InitialInterface:
    """
    Validate user supplied corner sequences
    :param alpha: Nonincreasing corners alpha_1, alpha_2, ... all <= -1
    :param beta: Nonincreasing corners beta_1, beta_2, ... all <= -1
    :param lam: Declared left density
    :param rho: Declared right density
    :return: InitialInterface
    """

    interface = InitialInterface(np.fromiter(alpha, dtype=np.int64), np.fromiter(beta, dtype=np.int64), lam, rho)

    # Only gross mismatches are reported, a truncation cannot pin down the limit
    expected_alpha = (1 - lam) / lam
    expected_beta = rho / (1 - rho)
    for name, seen, expected in (("alpha", interface.alpha_slope, expected_alpha),
                                 ("beta", interface.beta_slope, expected_beta)):
        if abs(seen - expected) > 0.5 * (1 + expected):
            logging.warning("Empirical %s slope %.3f far from %.3f implied by lambda=%s, rho=%s"
                            % (name, seen, expected, lam, rho))

    return interface


def _walk_corners(gen: np.random.Generator, density: float, corner: int, length: int) -> np.ndarray:
    """
    Corners of one arm of the nu_{lambda, rho} staircase. Sites are occupied with the given density,
    read outwards from the origin until length sites of the corner species are seen.
    The k-th corner sits at k - 2 - (index of the k-th corner site).
    """

    hits = []
    offset = 0
    while len(hits) < length:
        occupied = gen.random(_CHUNK) < density
        where = np.flatnonzero(occupied == bool(corner)) + offset
        hits.extend(where[:length - len(hits)].tolist())
        offset += _CHUNK
    k = np.arange(1, length + 1, dtype=np.int64)
    return k - 2 - np.asarray(hits, dtype=np.int64)


def sample_random_walk(lam: float, rho: float, length: int, stream: RngStream) -> InitialInterface:
    """
    Sample the random staircase of the product measure nu_{lambda, rho}
    :param lam: Particle density left of the origin, walk goes up with this probability
    :param rho: Particle density right of the origin
    :param length: Number of corners per arm
    :param stream: RngStream, the two arm substreams are used
    :return: InitialInterface with i.i.d. geometric gaps
    """

    check_densities(lam, rho)
    if length < 1:
        raise ParameterError("Illegal parameters, length must be positive, provided %s" % length)

    alpha = _walk_corners(stream.substream(LEFT_ARM), lam, PARTICLE, length)
    beta = _walk_corners(stream.substream(RIGHT_ARM), rho, HOLE, length)

    return InitialInterface(alpha, beta, lam, rho)


def sample_profile(lam: float, rho: float, half_width: int, stream: RngStream) -> ExclusionProfile:
    """
    The nu_{lambda, rho} exclusion profile over [-half_width, half_width + 1].
    Draws the same uniforms as sample_random_walk, so both views of one stream agree.
    """

    check_densities(lam, rho)
    left = (stream.substream(LEFT_ARM).random(half_width) < lam).astype(np.int8)
    right = np.ones(half_width + 1, dtype=np.int8)
    right[1:] = stream.substream(RIGHT_ARM).random(half_width) < rho
    return ExclusionProfile(left, right, lam, rho)


def build_flat_L(L: int, length: int = 4096) -> InitialInterface:
    """
    Staircase with all corners at -L: holes at -1..-L and beyond L, particles elsewhere
    """

    if not isinstance(L, (int, np.integer)) or L <= 0:
        raise ParameterError("Illegal parameters, L must be a positive integer, provided %s" % L)

    corners = np.full(length, -L, dtype=np.int64)
    return InitialInterface(corners, corners.copy(), 1.0, 0.0)


def to_exclusion(interface: InitialInterface) -> ExclusionProfile:
    """
    Read the exclusion profile off the staircase: walking right, a hole is a step right
    and a particle a step down. The left arm ends with particle K, the right arm with hole M.
    """

    left: List[int] = []
    previous = -1
    for a in interface.alpha:
        left.extend([HOLE] * (previous - a))
        left.append(PARTICLE)
        previous = int(a)

    right: List[int] = [PARTICLE]
    previous = -1
    for b in interface.beta:
        right.extend([PARTICLE] * (previous - b))
        right.append(HOLE)
        previous = int(b)

    return ExclusionProfile(np.asarray(left, dtype=np.int8), np.asarray(right, dtype=np.int8),
                            interface.lam, interface.rho)


def staircase(profile: ExclusionProfile) -> List[Site]:
    """
    Lattice points of gamma_0 from the far left end to the far right end, with
    gamma_0(j) - gamma_0(j - 1) = (1 - eta(j), -eta(j)) and gamma_0(0) = (0, 0)
    """

    points = [Site(-1, 0)]
    for occupation in profile.left:
        last = points[-1]
        points.append(Site(last.x, last.y + 1) if occupation == PARTICLE else Site(last.x - 1, last.y))
    points.reverse()

    points.append(ORIGIN)
    for occupation in profile.right:
        last = points[-1]
        points.append(Site(last.x, last.y - 1) if occupation == PARTICLE else Site(last.x + 1, last.y))
    return points


def _arm_corners(arm: np.ndarray, corner: int) -> np.ndarray:
    hits = np.flatnonzero(arm == corner)
    k = np.arange(1, hits.size + 1, dtype=np.int64)
    return k - 2 - hits


def from_exclusion(profile: ExclusionProfile) -> InitialInterface:
    """
    Inverse of to_exclusion. Entries past the last corner of an arm are dropped.
    """

    alpha = _arm_corners(profile.left, PARTICLE)
    beta = _arm_corners(profile.right[1:], HOLE)
    if alpha.size == 0 or beta.size == 0:
        raise ValidationError("Profile must contain a particle left of 0 and a hole right of 1")

    lam = profile.lam if not math.isnan(profile.lam) else 1.0 / (1.0 + -alpha[-1] / alpha.size)
    rho = profile.rho if not math.isnan(profile.rho) else _rho_from_slope(-beta[-1] / beta.size)
    return InitialInterface(alpha, beta, float(lam), float(rho))


def _rho_from_slope(slope: float) -> float:
    return slope / (1.0 + slope)


def parse_interface(text: str) -> InitialInterface:
    """
    Parse the text format:
        alpha: a1 a2 ...
        beta: b1 b2 ...
        lambda: x       (optional)
        rho: y          (optional)
    '#' starts a comment. Missing densities are estimated from the end slopes.
    """

    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep or key not in ("alpha", "beta", "lambda", "rho"):
            raise ValidationError("Line %d: expected 'alpha:', 'beta:', 'lambda:' or 'rho:', got %r"
                                  % (lineno, raw), lineno)
        if key in values:
            raise ValidationError("Line %d: duplicate key %r" % (lineno, key), lineno)
        try:
            if key in ("alpha", "beta"):
                values[key] = [int(tok) for tok in rest.split()]
            else:
                values[key] = float(rest)
        except ValueError:
            raise ValidationError("Line %d: malformed value %r" % (lineno, rest.strip()), lineno)

    for key in ("alpha", "beta"):
        if not values.get(key):
            raise ValidationError("Missing %r line" % key)

    lam = values.get("lambda")
    rho = values.get("rho")
    if lam is None:
        lam = 1.0 / (1.0 - values["alpha"][-1] / len(values["alpha"]))
        logging.info("No lambda given, estimated %.4f from the alpha slope" % lam)
    if rho is None:
        rho = _rho_from_slope(-values["beta"][-1] / len(values["beta"]))
        logging.info("No rho given, estimated %.4f from the beta slope" % rho)

    return build_deterministic(values["alpha"], values["beta"], lam, rho)


def format_interface(interface: InitialInterface) -> str:
    return "alpha: %s\nbeta: %s\nlambda: %r\nrho: %r\n" % (" ".join(str(a) for a in interface.alpha),
                                                           " ".join(str(b) for b in interface.beta),
                                                           interface.lam, interface.rho)
