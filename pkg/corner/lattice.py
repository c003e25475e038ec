"""
Lattice
Sites, boxes, counter-based random streams and the exponential weight field
"""

import logging
import struct
from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np

from corner.errors import DomainError, ParameterError, ResourceError, ValidationError

# Hard ceiling on the number of sites one dense table may hold
MAX_SITES = 2 ** 31

WEIGHTS_MAGIC = b"CGW1"
_HEADER = struct.Struct("<4s4i")

# Substream purposes, one namespace per consumer of randomness
WEIGHTS = 0
LEFT_ARM = 1
RIGHT_ARM = 2
BOND_CLOCKS = 3
BOOTSTRAP = 4


@dataclass(frozen=True, order=False)
class Site:
    x: int
    y: int

    def __le__(self, other: "Site") -> bool:
        return self.x <= other.x and self.y <= other.y

    def __ge__(self, other: "Site") -> bool:
        return other <= self

    def __add__(self, other: "Site") -> "Site":
        return Site(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Site") -> "Site":
        return Site(self.x - other.x, self.y - other.y)

    def __iter__(self) -> Iterator[int]:
        return iter((self.x, self.y))

    @property
    def norm(self) -> int:
        """
        :return: l1 norm |x| + |y|
        """
        return abs(self.x) + abs(self.y)

    def __str__(self):
        return "(%d, %d)" % (self.x, self.y)


RIGHT = Site(1, 0)
UP = Site(0, 1)
ORIGIN = Site(0, 0)


@dataclass(frozen=True)
class LatticeBox:
    """
    Closed integer rectangle [lo.x, hi.x] x [lo.y, hi.y]
    """

    lo: Site
    hi: Site

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DomainError("Box corners out of order, lo=%s hi=%s" % (self.lo, self.hi), self.hi)
        if self.site_count > np.iinfo(np.intp).max:
            raise ResourceError("Box of %d sites exceeds the index range" % self.site_count, self.site_count)

    @property
    def shape(self) -> Tuple[int, int]:
        """
        :return: (rows, columns) of the row-major table covering the box
        """
        return self.hi.y - self.lo.y + 1, self.hi.x - self.lo.x + 1

    @property
    def site_count(self) -> int:
        rows, cols = self.shape
        return rows * cols

    def contains(self, z: Site) -> bool:
        return self.lo <= z <= self.hi

    def __contains__(self, z: Site) -> bool:
        return self.contains(z)

    def index(self, z: Site) -> Tuple[int, int]:
        """
        :return: (row, column) of z in a row-major table with the box's min corner as offset
        """
        return z.y - self.lo.y, z.x - self.lo.x

    def intersect(self, other: "LatticeBox") -> "LatticeBox":
        lo = Site(max(self.lo.x, other.lo.x), max(self.lo.y, other.lo.y))
        hi = Site(min(self.hi.x, other.hi.x), min(self.hi.y, other.hi.y))
        return LatticeBox(lo, hi)

    def __str__(self):
        return "[%d, %d] x [%d, %d]" % (self.lo.x, self.hi.x, self.lo.y, self.hi.y)


class RngStream:
    """
    Counter-based random stream for one replica.
    A Philox key is built from (seed, index), and every consumer of randomness
    takes its own substream by fixing the upper counter words to (purpose, ordinal).
    The result depends only on (seed, index, purpose, ordinal), never on scheduling.
    """

    def __init__(self, seed: int, index: int = 0):
        """
        :param seed: Master seed, a 64-bit nonnegative integer
        :param index: Stream index, usually the replica id
        """

        try:
            assert isinstance(seed, (int, np.integer)) and 0 <= seed < 2 ** 64, "seed must be a 64-bit integer"
            assert isinstance(index, (int, np.integer)) and 0 <= index < 2 ** 64, "index must be a 64-bit integer"
        except AssertionError as e:
            raise ParameterError("Illegal parameters, %s" % e)

        self._seed = int(seed)
        self._index = int(index)

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def index(self) -> int:
        return self._index

    @property
    def key(self) -> int:
        return (self._index << 64) | self._seed

    def substream(self, purpose: int, ordinal: int = 0) -> np.random.Generator:
        """
        :param purpose: Namespace of the consumer (weights, arms, clocks...)
        :param ordinal: Sub-index inside the namespace, e.g. a bond ordinal
        :return: A fresh numpy Generator positioned at the start of the substream
        """

        assert 0 <= purpose < 2 ** 64 and 0 <= ordinal < 2 ** 64
        counter = (purpose << 192) | (ordinal << 128)
        return np.random.Generator(np.random.Philox(key=self.key, counter=counter))

    def spawn(self, index: int) -> "RngStream":
        return RngStream(self._seed, index)

    def __eq__(self, other):
        return isinstance(other, RngStream) and (self._seed, self._index) == (other._seed, other._index)

    def __hash__(self):
        return hash((self._seed, self._index))

    def __str__(self):
        return "RngStream(seed=%d, index=%d)" % (self._seed, self._index)

    def __getstate__(self):
        return self._seed, self._index

    def __setstate__(self, state):
        self._seed, self._index = state


def exponentials(gen: np.random.Generator, size) -> np.ndarray:
    """
    Mean-1 exponential draws by inverse transform, one uniform per draw.
    The uniform is shifted half a grid step away from 0 so every draw is strictly positive.
    """

    u = gen.random(size) + 2.0 ** -54
    return -np.log1p(-u)


@dataclass(frozen=True)
class WeightField:
    """
    I.i.d. mean-1 exponential weights X(z), stored row-major with region.lo as offset
    """

    region: LatticeBox
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.shape != self.region.shape:
            raise ValueError("Weights of shape %s do not match region %s" % (self.weights.shape, self.region))
        self.weights.flags.writeable = False

    def at(self, z: Site) -> float:
        if z not in self.region:
            raise DomainError("Site %s outside the field region %s" % (z, self.region), z)
        return float(self.weights[self.region.index(z)])

    def __getitem__(self, z: Site) -> float:
        return self.at(z)

    def view(self, box: LatticeBox) -> np.ndarray:
        """
        :return: Read-only row-major view of the weights over box
        """

        if not (box.lo in self.region and box.hi in self.region):
            bad = box.lo if box.lo not in self.region else box.hi
            raise DomainError("Box %s not inside the field region %s" % (box, self.region), bad)
        r0, c0 = self.region.index(box.lo)
        r1, c1 = self.region.index(box.hi)
        return self.weights[r0:r1 + 1, c0:c1 + 1]

    def transpose(self) -> "WeightField":
        """
        Reflect the field across the diagonal, X'(x, y) = X(y, x)
        """

        region = LatticeBox(Site(self.region.lo.y, self.region.lo.x), Site(self.region.hi.y, self.region.hi.x))
        return WeightField(region, np.ascontiguousarray(self.weights.T))

    def dump(self, path: str):
        """
        Write the field as a flat binary file: magic, box bounds, then row-major float64 weights
        """

        header = _HEADER.pack(WEIGHTS_MAGIC, self.region.lo.x, self.region.lo.y, self.region.hi.x, self.region.hi.y)
        with open(path, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(self.weights, dtype="<f8").tobytes())


def sample_weights(region: LatticeBox, stream: RngStream) -> WeightField:
    """
    Draw an independent mean-1 exponential for every site of region
    :param region: LatticeBox to cover
    :param stream: RngStream of the replica, the weights substream is used
    :return: WeightField
    """

    n = region.site_count
    if n > MAX_SITES:
        raise ResourceError("Refusing to allocate a weight field of %d sites" % n, n)

    logging.debug("Sampling %d weights over %s from %s" % (n, region, stream))
    try:
        weights = exponentials(stream.substream(WEIGHTS), region.shape)
    except MemoryError:
        raise ResourceError("Could not allocate a weight field of %d sites" % n, n)

    return WeightField(region, weights)


def weight_at(field: WeightField, z: Site) -> float:
    return field.at(z)


def load_weights(path: str) -> WeightField:
    """
    Read a field written by WeightField.dump
    """

    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValidationError("Truncated weight file header in %s" % path)
        magic, x0, y0, x1, y1 = _HEADER.unpack(header)
        if magic != WEIGHTS_MAGIC:
            raise ValidationError("Bad magic %r in %s" % (magic, path))
        region = LatticeBox(Site(x0, y0), Site(x1, y1))
        data = np.frombuffer(f.read(), dtype="<f8")

    if data.size != region.site_count:
        raise ValidationError("Expected %d weights in %s, found %d" % (region.site_count, path, data.size))

    return WeightField(region, data.astype(np.float64).reshape(region.shape))
