"""
Growth
Passage times of the corner growth model from an initial staircase, the two competing clusters,
the competition interface between them, geodesics and the reversed-weight field
"""

import csv
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from corner import kernels
from corner.errors import BoxExhaustedError, CoverageError, DomainError, HorizonError, ParameterError, RecurrenceError
from corner.interface import InitialInterface
from corner.lattice import LatticeBox, RngStream, Site, WeightField, sample_weights
from corner.utils import atomic_write


@dataclass(frozen=True)
class DirectedPath:
    """
    Up-right lattice path, sites from start to end, with its total weight
    """

    sites: np.ndarray
    total_weight: float

    def __len__(self):
        return self.sites.shape[0]

    def __getitem__(self, i) -> Site:
        x, y = self.sites[i]
        return Site(int(x), int(y))

    @property
    def start(self) -> Site:
        return self[0]

    @property
    def end(self) -> Site:
        return self[-1]


@dataclass(frozen=True)
class CompetitionPath:
    """
    phi_0 = (0, 0), phi_1, ... with phi_{n+1} - phi_n in {(1, 0), (0, 1)};
    times[n] = g(phi_n) is the moment the interface reaches phi_n
    """

    sites: np.ndarray
    times: np.ndarray

    def __len__(self):
        return self.sites.shape[0]

    def __getitem__(self, i) -> Site:
        x, y = self.sites[i]
        return Site(int(x), int(y))

    @property
    def end(self) -> Site:
        return self[-1]

    @property
    def steps(self) -> List[Site]:
        return [Site(int(x), int(y)) for x, y in self.sites]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def second_class_positions(self) -> np.ndarray:
        """
        :return: I - J along the path
        """
        return self.sites[:, 0] - self.sites[:, 1]


@dataclass(frozen=True)
class ContactPoint:
    """
    Where the geodesic to a site leaves the initial staircase: A_index (side 'A') or B_index (side 'B')
    """

    side: str
    index: int
    site: Site


class GrowthTable:
    """
    Passage times g, cluster labels and backpointers over the box [alpha_N + 1, N] x [beta_N + 1, N].
    Sites of Gamma_0 carry g = 0 and label 0, all other sites of the box form D.
    """

    def __init__(self, field: WeightField, interface: InitialInterface, n: int,
                 box: LatticeBox, g: np.ndarray, label: np.ndarray, back: np.ndarray):
        self._field = field
        self._interface = interface
        self._n = n
        self._box = box
        self._g = g
        self._label = label
        self._back = back
        for arr in (g, label, back):
            arr.flags.writeable = False

    @property
    def field(self) -> WeightField:
        return self._field

    @property
    def interface(self) -> InitialInterface:
        return self._interface

    @property
    def n(self) -> int:
        return self._n

    @property
    def box(self) -> LatticeBox:
        return self._box

    @property
    def g(self) -> np.ndarray:
        return self._g

    @property
    def label(self) -> np.ndarray:
        return self._label

    @property
    def back(self) -> np.ndarray:
        return self._back

    def _index(self, z: Site):
        if z not in self._box:
            raise DomainError("Site %s outside the table box %s" % (z, self._box), z)
        return self._box.index(z)

    def g_at(self, z: Site) -> float:
        return float(self._g[self._index(z)])

    def label_at(self, z: Site) -> int:
        return int(self._label[self._index(z)])

    def in_domain(self, z: Site) -> bool:
        return z in self._box and self._label[self._box.index(z)] != 0

    @property
    def horizon(self) -> float:
        """
        Smallest g on the outer frontier {(N, y), (x, N) : 0 <= x, y <= N} of the positive quadrant.
        Growth before this time never reaches beyond the box inside the quadrant.
        """

        r0, c0 = self._box.index(Site(0, 0))
        return float(min(self._g[r0:, -1].min(), self._g[-1, c0:].min()))

    def weights(self) -> np.ndarray:
        return self._field.view(self._box)

    def cluster_fraction(self, box: Optional[LatticeBox] = None) -> float:
        """
        :param box: Sub-box of the table, defaults to [1, N] x [1, N]
        :return: Share of cluster-1 sites among the sites of D in box
        """

        box = box or LatticeBox(Site(1, 1), Site(self._n, self._n))
        r0, c0 = self._index(box.lo)
        r1, c1 = self._index(box.hi)
        labels = self._label[r0:r1 + 1, c0:c1 + 1]
        in_d = labels != 0
        return float((labels == 1).sum() / max(in_d.sum(), 1))

    def dump_csv(self, path: str, box: Optional[LatticeBox] = None):
        """
        Write x, y, g, label rows for the sites of box (whole table by default)
        """

        box = self._box if box is None else self._box.intersect(box)
        with atomic_write(path, newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("x", "y", "g", "label"))
            for y in range(box.lo.y, box.hi.y + 1):
                for x in range(box.lo.x, box.hi.x + 1):
                    r, c = self._box.index(Site(x, y))
                    writer.writerow((x, y, repr(float(self._g[r, c])), int(self._label[r, c])))

    def __str__(self):
        return "GrowthTable(N=%d, box=%s)" % (self._n, self._box)


def growth_box(interface: InitialInterface, n: int) -> LatticeBox:
    """
    :return: The smallest box containing D = {z <= (N, N)} minus Gamma_0
    """

    if n < 1:
        raise ParameterError("Illegal parameters, box side must be positive, provided %s" % n)
    if interface.alpha.size < n:
        raise CoverageError("Interface has %d alpha corners, box side %d needs %d"
                            % (interface.alpha.size, n, n), Site(int(interface.alpha[-1]) + 1,
                                                                 interface.alpha.size + 1))
    if interface.beta.size < n:
        raise CoverageError("Interface has %d beta corners, box side %d needs %d"
                            % (interface.beta.size, n, n), Site(interface.beta.size + 1,
                                                                int(interface.beta[-1]) + 1))

    return LatticeBox(Site(int(interface.alpha[n - 1]) + 1, int(interface.beta[n - 1]) + 1), Site(n, n))


def compute_growth(field: WeightField, interface: InitialInterface, n: int) -> GrowthTable:
    """
    Passage times from Gamma_0: g = 0 on Gamma_0 and g(z) = X(z) + max(g(z - (1, 0)), g(z - (0, 1))).
    Labels follow the predecessor chosen by the max; ties are broken towards the site below.
    :param field: WeightField covering growth_box(interface, n)
    :param interface: InitialInterface with at least n corners per arm
    :param n: Box side N
    :return: GrowthTable
    """

    box = growth_box(interface, n)
    if box.lo not in field.region or box.hi not in field.region:
        uncovered = box.lo if box.lo not in field.region else box.hi
        raise CoverageError("Field region %s does not cover %s" % (field.region, box), uncovered)

    weights = field.view(box)
    gamma0 = interface.mask(box)

    rows, cols = box.shape
    g = np.empty((rows, cols), dtype=np.float64)
    label = np.empty((rows, cols), dtype=np.int8)
    back = np.empty((rows, cols), dtype=np.int8)

    logging.debug("Growth sweep over %s (%d sites)" % (box, box.site_count))
    kernels.growth_sweep(weights, gamma0, box.lo.x, box.lo.y, g, label, back)

    residual = kernels.recurrence_residual(weights, gamma0, g)
    if residual != 0.0:
        raise RecurrenceError("Growth sweep over %s breaks the recurrence, residual %r" % (box, residual), residual)

    return GrowthTable(field, interface, n, box, g, label, back)


def simulate_growth(interface: InitialInterface, n: int, stream: RngStream) -> GrowthTable:
    """
    Sample weights over exactly the box the table needs and run the sweep
    """

    return compute_growth(sample_weights(growth_box(interface, n), stream), interface, n)


def passage_time(field: WeightField, z: Site, z_end: Site) -> float:
    """
    Last-passage time: maximal total weight of an up-right path from z to z_end, both ends included
    """

    if not z <= z_end:
        raise DomainError("Need z <= z', got %s and %s" % (z, z_end), z_end)
    table = kernels.rectangle_lpp(field.view(LatticeBox(z, z_end)))
    return float(table[-1, -1])


def competition_interface(table: GrowthTable, max_steps: Optional[int] = None) -> CompetitionPath:
    """
    Walk from the origin, always stepping to the neighbor (right or up) that is reached first;
    a tie goes up.
    :param max_steps: Number of steps to take. None walks until the box boundary.
    :return: CompetitionPath
    :raises BoxExhaustedError: the boundary is hit before max_steps, the partial path is attached
    """

    g = table.g
    n = table.n
    r0, c0 = table.box.index(Site(0, 0))

    x = y = 0
    xs = [0]
    ys = [0]
    while max_steps is None or len(xs) - 1 < max_steps:
        if x >= n or y >= n:
            if max_steps is None:
                break
            partial = _make_path(g, r0, c0, xs, ys)
            raise BoxExhaustedError("Competition interface reached the box boundary at %s after %d of %d steps"
                                    % (Site(x, y), len(xs) - 1, max_steps), partial)
        if g[r0 + y, c0 + x + 1] < g[r0 + y + 1, c0 + x]:
            x += 1
        else:
            y += 1
        xs.append(x)
        ys.append(y)

    return _make_path(g, r0, c0, xs, ys)


def _make_path(g: np.ndarray, r0: int, c0: int, xs: List[int], ys: List[int]) -> CompetitionPath:
    sites = np.column_stack((np.asarray(xs, dtype=np.int64), np.asarray(ys, dtype=np.int64)))
    times = g[r0 + sites[:, 1], c0 + sites[:, 0]].astype(np.float64)
    return CompetitionPath(sites, times)


def geodesic_backtrack(table: GrowthTable, z: Site) -> DirectedPath:
    """
    Optimal path from the initial staircase to z, recovered through the backpointers:
    step left when g(left) > g(below), otherwise step down.
    """

    if not table.in_domain(z):
        raise DomainError("Site %s is not in D" % z, z)

    back = table.back
    lo = table.box.lo
    r, c = table.box.index(z)
    xs = [c]
    ys = [r]
    while back[r, c] != kernels.FROM_BOUNDARY:
        if back[r, c] == kernels.FROM_LEFT:
            c -= 1
        else:
            r -= 1
        xs.append(c)
        ys.append(r)

    cols = np.asarray(xs[::-1], dtype=np.int64)
    rows = np.asarray(ys[::-1], dtype=np.int64)
    weights = table.weights()[rows, cols]

    # accumulate in path order so the total matches g(z) bit for bit
    total = 0.0
    for w in weights:
        total += float(w)

    return DirectedPath(np.column_stack((cols + lo.x, rows + lo.y)), total)


def contact_point(table: GrowthTable, interface: InitialInterface, z: Site) -> ContactPoint:
    """
    :return: The boundary point A_k or B_m where the geodesic to z starts
    """

    if z.x < 1 or z.y < 1:
        raise DomainError("Contact points are defined for the positive quadrant, got %s" % z, z)

    start = geodesic_backtrack(table, z).start
    if start.x <= 0:
        assert start == interface.a(start.y)
        return ContactPoint("A", start.y, start)
    assert start == interface.b(start.x)
    return ContactPoint("B", start.x, start)


def psi_at(path: CompetitionPath, t: float) -> Site:
    """
    :return: phi_n with g(phi_n) <= t < g(phi_{n+1})
    """

    if t < 0:
        raise DomainError("Time must be nonnegative, got %s" % t, t)
    if t >= path.horizon:
        raise HorizonError("Time %s beyond the path horizon %s" % (t, path.horizon), t, path.horizon)
    n = int(np.searchsorted(path.times, t, side="right")) - 1
    return path[n]


@dataclass(frozen=True)
class ReversedField:
    """
    Y(z) = min(g(z + (0, 1)), g(z + (1, 0))) - g(z), NaN off D
    """

    region: LatticeBox
    values: np.ndarray

    def at(self, z: Site) -> float:
        if z not in self.region:
            raise DomainError("Site %s outside the reversed field region %s" % (z, self.region), z)
        return float(self.values[self.region.index(z)])


def reversed_weights(table: GrowthTable) -> ReversedField:
    g = table.g
    region = LatticeBox(table.box.lo, Site(table.n - 1, table.n - 1))
    inner = g[:-1, :-1]
    values = np.minimum(g[1:, :-1], g[:-1, 1:]) - inner
    values[table.label[:-1, :-1] == 0] = np.nan
    values.flags.writeable = False
    return ReversedField(region, values)


def nems_geodesic_check(table: GrowthTable, path: CompetitionPath, max_span: int = 12,
                        field: Optional[ReversedField] = None) -> bool:
    """
    Check that every subsegment of the path with at most max_span steps is the heaviest
    up-right path between its endpoints under the reversed weights Y.
    Segments start at phi_1 and keep both ends at least two steps inside the box.
    """

    field = field or reversed_weights(table)
    sites = path.sites
    limit = table.n - 2
    beyond = np.flatnonzero((sites[:, 0] > limit) | (sites[:, 1] > limit))
    last = (beyond[0] if beyond.size else len(path)) - 1
    if last < 1:
        return True

    ys = np.array([field.at(Site(int(x), int(y))) for x, y in sites[1:last + 1]])
    cum = np.concatenate(([0.0], np.cumsum(ys)))

    for k in range(1, last):
        end = min(k + max_span, last)
        lo = Site(int(sites[k, 0]), int(sites[k, 1]))
        hi = Site(int(sites[end, 0]), int(sites[end, 1]))
        r0, c0 = field.region.index(lo)
        r1, c1 = field.region.index(hi)
        best = kernels.rectangle_lpp(np.ascontiguousarray(field.values[r0:r1 + 1, c0:c1 + 1]))
        for ell in range(k + 1, end + 1):
            along = cum[ell] - cum[k - 1]
            optimum = best[sites[ell, 1] - lo.y, sites[ell, 0] - lo.x]
            if along < optimum - 1e-9 * (1.0 + abs(optimum)):
                logging.debug("Segment %d..%d is not a Y-geodesic: %r < %r" % (k, ell, along, optimum))
                return False
    return True
