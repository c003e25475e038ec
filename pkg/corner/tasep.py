"""
TASEP
Totally asymmetric exclusion with a second-class particle: direct simulation from Poisson clocks,
the exclusion process read off a growth table, the coupling between the two and flux counters
"""

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from corner import kernels
from corner.errors import CouplingViolationError, HorizonError, ParameterError, WindowError
from corner.growth import CompetitionPath, GrowthTable, psi_at
from corner.interface import HOLE, PARTICLE, SECOND_CLASS, Configuration, ExclusionProfile, to_exclusion
from corner.lattice import BOND_CLOCKS, RngStream, Site, exponentials
from corner.utils import atomic_write, zigzag

KIND_NAMES = {kernels.FIRST_CLASS: "first-class",
              kernels.SECOND_RIGHT: "second-right",
              kernels.SECOND_LEFT: "second-left"}


def required_margin(t_max: float) -> int:
    """
    Smallest window half-width allowed for a run up to t_max
    """
    return int(math.ceil(2 * t_max) + math.ceil(10 * math.sqrt(t_max)) + 100)


@dataclass(frozen=True)
class GrowthLabels:
    """
    Labels of the objects tracked by a growth-derived trajectory: holes x_min..n and particles y_min..n
    """

    x_min: int
    y_min: int
    n: int


@dataclass(frozen=True)
class TasepTrajectory:
    """
    One realisation of the exclusion process on a closed window.
    Events are (time, bond, kind) with bond the left site of the swapped pair.
    x_times / x_values hold the second-class path as a step function when the event log is known,
    x_samples holds the position at sample_times.
    """

    initial: Configuration
    final: Configuration
    t_max: float
    event_time: np.ndarray
    event_bond: np.ndarray
    event_kind: np.ndarray
    sample_times: np.ndarray
    x_samples: Optional[np.ndarray]
    x_times: Optional[np.ndarray] = None
    x_values: Optional[np.ndarray] = None
    labels: Optional[GrowthLabels] = None

    @property
    def lo(self) -> int:
        return self.initial.lo

    @property
    def hi(self) -> int:
        return self.initial.hi

    @property
    def recorded(self) -> bool:
        return self.x_times is not None or self.event_time.size > 0

    def iter_configurations(self) -> Iterator[Tuple[float, Configuration]]:
        """
        Yield (time, configuration) right after every recorded event, starting with (0, initial).
        The yielded configuration is updated in place; copy it to keep it.
        """

        conf = self.initial.copy()
        sites = conf.sites
        yield 0.0, conf
        for t, b in zip(self.event_time, self.event_bond):
            c = b - self.lo
            sites[c], sites[c + 1] = sites[c + 1], sites[c]
            yield float(t), conf

    def configuration_at(self, t: float) -> Configuration:
        if t >= self.t_max:
            return self.final.copy()
        if not self.recorded and self.t_max > 0:
            raise ValueError("Trajectory has no event log, only the final configuration is known")

        conf = self.initial.copy()
        sites = conf.sites
        count = int(np.searchsorted(self.event_time, t, side="right"))
        for b in self.event_bond[:count]:
            c = b - self.lo
            sites[c], sites[c + 1] = sites[c + 1], sites[c]
        return conf

    def x_at(self, t: float) -> int:
        """
        :return: Position of the second-class particle at time t
        """

        if self.x_times is not None:
            return int(self.x_values[np.searchsorted(self.x_times, t, side="right") - 1])
        if self.x_samples is not None:
            hit = np.flatnonzero(self.sample_times == t)
            if hit.size:
                return int(self.x_samples[hit[0]])
        raise ValueError("Second-class position at %s is not recorded" % t)

    def valid_window(self, t: float) -> Tuple[int, int]:
        """
        :return: Sites whose occupation at time t is exact. Harris runs: the whole window.
            Growth-derived runs: between the leftmost tracked particle and the rightmost tracked hole.
        """

        if self.labels is None:
            return self.lo, self.hi
        conf = self.configuration_at(t)
        particles = conf.positions(PARTICLE)
        holes = conf.positions(HOLE)
        return int(particles[0]), int(holes[-1])

    def dump_events(self, path: str):
        with atomic_write(path, newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("time", "bond", "kind"))
            for t, b, k in zip(self.event_time, self.event_bond, self.event_kind):
                writer.writerow((repr(float(t)), int(b), KIND_NAMES[int(k)]))


def _bond_clocks(stream: RngStream, lo: int, hi: int, t_max: float) -> np.ndarray:
    """
    Inter-ring times for the bonds (x, x + 1), lo <= x < hi. Each bond reads its own substream
    keyed by x, so a bond rings at the same times whatever the window.
    """

    depth = int(math.ceil(t_max + 10 * math.sqrt(t_max) + 20))
    clocks = np.empty((hi - lo, depth))
    for b, x in enumerate(range(lo, hi)):
        clocks[b] = exponentials(stream.substream(BOND_CLOCKS, zigzag(x)), depth)
    return clocks


def _run(sites: np.ndarray, clocks: np.ndarray, t_max: float, sample_times: np.ndarray, record: bool):
    x_samples = np.full(sample_times.size, -1, dtype=np.int64)
    capacity = clocks.size if record else 0
    ev_time = np.empty(capacity)
    ev_bond = np.empty(capacity, dtype=np.int64)
    ev_kind = np.empty(capacity, dtype=np.int8)

    moves = kernels.harris_events(sites, clocks, float(t_max), sample_times, x_samples, record,
                                  ev_time, ev_bond, ev_kind)
    if moves == kernels.CLOCKS_EXHAUSTED:
        raise RuntimeError("A bond clock rang more than %d times before t=%s" % (clocks.shape[1], t_max))

    if not record:
        moves = 0
    return x_samples, ev_time[:moves], ev_bond[:moves], ev_kind[:moves]


def _window_configuration(initial: Union[ExclusionProfile, Configuration], half_width: int,
                          second_class: bool) -> Configuration:
    if isinstance(initial, ExclusionProfile):
        return initial.window(half_width, second_class)
    if isinstance(initial, Configuration):
        if initial.lo > -half_width or initial.hi < half_width:
            raise ParameterError("Illegal parameters, configuration on [%d, %d] does not cover [%d, %d]"
                                 % (initial.lo, initial.hi, -half_width, half_width))
        sites = initial.sites[-half_width - initial.lo:half_width - initial.lo + 1].copy()
        if second_class:
            sites[half_width] = SECOND_CLASS
        return Configuration(-half_width, sites)
    raise TypeError("Initial state must be an ExclusionProfile or a Configuration, got %s" % type(initial))


def harris_simulate(initial: Union[ExclusionProfile, Configuration], half_width: int, t_max: float,
                    stream: RngStream, second_class: bool = False, sample_times=None,
                    record_events: bool = False, check_margin: bool = True) -> TasepTrajectory:
    """
    Simulate TASEP on the closed window [-M, M] from independent rate-1 bond clocks
    :param initial: ExclusionProfile (hole at 0, particle at 1) or a Configuration covering the window
    :param half_width: Window half-width M
    :param t_max: Time horizon
    :param stream: RngStream of the replica, bond clocks use the BOND_CLOCKS substreams
    :param second_class: Put a second-class particle at the origin
    :param sample_times: Times at which X(t) is recorded, defaults to [t_max]
    :param record_events: Keep the full event log
    :param check_margin: Enforce M >= required_margin(t_max)
    :return: TasepTrajectory
    """

    if t_max < 0:
        raise ParameterError("Illegal parameters, t_max must be nonnegative, provided %s" % t_max)
    if check_margin and half_width < required_margin(t_max):
        raise ParameterError("Illegal parameters, window half-width %d below the margin %d needed for t=%s"
                             % (half_width, required_margin(t_max), t_max))

    conf = _window_configuration(initial, half_width, second_class)
    sample_times = np.asarray([t_max] if sample_times is None else sample_times, dtype=np.float64)
    if np.any(np.diff(sample_times) < 0) or (sample_times.size and sample_times[-1] > t_max):
        raise ParameterError("Illegal parameters, sample times must increase and stay below t_max")

    logging.debug("Harris run on [%d, %d] up to t=%s from %s" % (-half_width, half_width, t_max, stream))
    clocks = _bond_clocks(stream, -half_width, half_width, t_max)
    sites = conf.sites.copy()
    x_cells, ev_time, ev_bond, ev_kind = _run(sites, clocks, t_max, sample_times, record_events)

    has_second = conf.second_class() is not None
    x_samples = x_cells + conf.lo if has_second else None

    x_times = x_values = None
    if record_events and has_second:
        moved = ev_kind != kernels.FIRST_CLASS
        shifts = np.where(ev_kind[moved] == kernels.SECOND_RIGHT, 1, -1)
        x_times = np.concatenate(([0.0], ev_time[moved]))
        x_values = conf.second_class() + np.concatenate(([0], np.cumsum(shifts)))

    return TasepTrajectory(conf, Configuration(conf.lo, sites), float(t_max), ev_time, ev_bond + conf.lo,
                           ev_kind, sample_times, x_samples, x_times, x_values)


def discrepancy_simulate(initial: Configuration, t_max: float, stream: RngStream, sample_times=None) -> np.ndarray:
    """
    Second-class particle as the single discrepancy between two exclusion processes that differ
    only at the origin (hole vs particle) and share the bond clocks.
    :return: Discrepancy positions at sample_times (defaults to [t_max])
    """

    sample_times = np.asarray([t_max] if sample_times is None else sample_times, dtype=np.float64)
    base = initial.sites.copy()
    origin = -initial.lo
    if base[origin] == SECOND_CLASS:
        base[origin] = HOLE
    clocks = _bond_clocks(stream, initial.lo, initial.hi, t_max)

    res = np.empty(sample_times.size, dtype=np.int64)
    for i, s in enumerate(sample_times):
        lower = base.copy()
        lower[origin] = HOLE
        upper = base.copy()
        upper[origin] = PARTICLE
        for sites in (lower, upper):
            _run(sites, clocks, s, np.empty(0), False)
        diff = np.flatnonzero(lower != upper)
        if diff.size != 1:
            raise CouplingViolationError("Basic coupling produced %d discrepancies at t=%s" % (diff.size, s))
        res[i] = diff[0] + initial.lo
    return res


def exclusion_from_growth(table: GrowthTable, t_max: Optional[float] = None) -> TasepTrajectory:
    """
    Exclusion process encoded by the growth table: at time g(i, j) particle j jumps over hole i.
    Holes x_min..N and particles y_min..N are tracked on the window they initially span;
    the pair (hole 0, particle 1) plays the second-class particle, whose position is I - J
    where (I, J) is the label pair of the pair.
    :param t_max: Last event time to execute, at most table.horizon (the default)
    """

    horizon = table.horizon
    if t_max is None:
        t_max = horizon
    if t_max > horizon:
        raise HorizonError("Time %s beyond the table horizon %s" % (t_max, horizon), t_max, horizon)

    n = table.n
    box = table.box
    profile = to_exclusion(table.interface.truncate(n))
    left, right = profile.left, profile.right
    lo = -left.size
    sites = np.concatenate((left[::-1], [HOLE], right)).astype(np.int8)
    initial = Configuration(lo, sites.copy())

    holes = np.flatnonzero(sites == HOLE) + lo
    particles = np.flatnonzero(sites == PARTICLE) + lo
    # holes are labelled x_min..N left to right, particles N..y_min left to right
    assert holes.size == n - box.lo.x + 1 and particles.size == n - box.lo.y + 1
    hole_pos = holes
    part_pos = particles[::-1].copy()

    rows, cols = np.nonzero((table.label != 0) & (table.g <= t_max))
    times = table.g[rows, cols]
    order = np.argsort(times, kind="stable")
    ev_i = cols[order] + box.lo.x
    ev_j = rows[order] + box.lo.y
    ev_time = times[order]

    ev_bond = np.empty(ev_time.size, dtype=np.int64)
    ev_kind = np.empty(ev_time.size, dtype=np.int8)
    x_times = [0.0]
    x_values = [0]
    pair_i = pair_j = 0
    for e in range(ev_time.size):
        i, j = int(ev_i[e]), int(ev_j[e])
        p = part_pos[j - box.lo.y]
        h = hole_pos[i - box.lo.x]
        c = p - lo
        if h != p + 1 or sites[c] != PARTICLE or sites[c + 1] != HOLE:
            raise CouplingViolationError("Particle %d at %d cannot jump over hole %d at %d (t=%r)"
                                         % (j, p, i, h, ev_time[e]))
        sites[c], sites[c + 1] = HOLE, PARTICLE
        part_pos[j - box.lo.y] = p + 1
        hole_pos[i - box.lo.x] = h - 1
        ev_bond[e] = p

        if i == pair_i + 1 and j == pair_j:
            ev_kind[e] = kernels.SECOND_RIGHT
            pair_i += 1
        elif i == pair_i and j == pair_j + 1:
            ev_kind[e] = kernels.SECOND_LEFT
            pair_j += 1
        else:
            ev_kind[e] = kernels.FIRST_CLASS
            continue
        x_times.append(float(ev_time[e]))
        x_values.append(pair_i - pair_j)

    logging.debug("Replayed %d swaps of %s up to t=%s" % (ev_time.size, table, t_max))
    return TasepTrajectory(initial, Configuration(lo, sites), float(t_max), ev_time, ev_bond, ev_kind,
                           np.asarray([t_max]), np.asarray([pair_i - pair_j]),
                           np.asarray(x_times), np.asarray(x_values, dtype=np.int64),
                           GrowthLabels(box.lo.x, box.lo.y, n))


def _in_gamma(table: GrowthTable, i: int, j: int, t: float) -> bool:
    box = table.box
    if i < box.lo.x or j < box.lo.y:
        return True
    r, c = box.index(Site(i, j))
    return table.label[r, c] == 0 or table.g[r, c] <= t


def interface_consistent(table: GrowthTable, conf: Configuration, t: float) -> bool:
    """
    Re-derive the growth interface at time t from a growth-derived configuration and compare it with
    the boundary of {g <= t}: for every tracked hole i between the leftmost tracked particle and the
    rightmost tracked hole, with y the label of the next particle to its right, (i, y) must be
    occupied and (i, y + 1) not.
    """

    box = table.box
    holes = conf.positions(HOLE)
    particles = conf.positions(PARTICLE)
    if particles.size == 0 or holes.size == 0:
        return True

    for k, pos in enumerate(holes):
        if pos < particles[0]:
            continue
        i = box.lo.x + k
        nxt = int(np.searchsorted(particles, pos))
        y = table.n - nxt if nxt < particles.size else box.lo.y - 1
        if not _in_gamma(table, i, y, t) or _in_gamma(table, i, y + 1, t):
            logging.debug("Interface mismatch at hole %d (site %d), y=%d, t=%r" % (i, pos, y, t))
            return False
    return True


def interface_consistent_throughout(table: GrowthTable, trajectory: TasepTrajectory) -> bool:
    """
    interface_consistent right after every event of a growth-derived trajectory, and at time 0
    """

    for t, conf in trajectory.iter_configurations():
        if not interface_consistent(table, conf, t):
            logging.debug("Configuration after the event at t=%r disagrees with the growth interface" % t)
            return False
    return True


def coupled_second_class(table: GrowthTable, path: CompetitionPath, t: float,
                         trajectory: Optional[TasepTrajectory] = None) -> int:
    """
    Position of the second-class particle at time t read from the competition interface, I(t) - J(t).
    Checks on the way that at each interface step the configuration just before the step shows a
    hole right of the second-class particle (right step) or a particle left of it (up step), and that
    the growth-derived second-class path agrees with I - J.
    """

    psi = psi_at(path, t)
    if trajectory is None or trajectory.t_max < t:
        trajectory = exclusion_from_growth(table, t)

    jumps = [n for n in range(1, len(path)) if path.times[n] <= t]
    conf = trajectory.initial.copy()
    sites = conf.sites
    k = 0
    for time, b in zip(trajectory.event_time, trajectory.event_bond):
        while k < len(jumps) and path.times[jumps[k]] <= time:
            n = jumps[k]
            x = int(path.sites[n - 1, 0] - path.sites[n - 1, 1])
            _check_local_move(conf, x, path[n] - path[n - 1], float(path.times[n]))
            k += 1
        if k == len(jumps):
            break
        c = b - conf.lo
        sites[c], sites[c + 1] = sites[c + 1], sites[c]
    if k < len(jumps):
        raise CouplingViolationError("Interface step at t=%r has no matching swap" % path.times[jumps[k]])

    for n in jumps:
        expected = int(path.sites[n, 0] - path.sites[n, 1])
        got = trajectory.x_at(float(path.times[n]))
        if got != expected:
            raise CouplingViolationError("Second-class particle at %d, interface gives I - J = %d at t=%r"
                                         % (got, expected, path.times[n]))

    return psi.x - psi.y


def _check_local_move(conf: Configuration, x: int, step: Site, jump_time: float):
    """
    In extended coordinates the second-class particle is the hole at x followed by the particle at x + 1
    """

    lo, hi = (x, x + 2) if step.x == 1 else (x - 1, x + 1)
    if lo < conf.lo or hi > conf.hi:
        raise CouplingViolationError("Step at t=%r needs sites [%d, %d] outside the window [%d, %d]"
                                     % (jump_time, lo, hi, conf.lo, conf.hi))
    if conf.at(x) != HOLE or conf.at(x + 1) != PARTICLE:
        raise CouplingViolationError("No hole/particle pair at %d just before t=%r" % (x, jump_time))
    if step.x == 1 and conf.at(x + 2) != HOLE:
        raise CouplingViolationError("Right step at t=%r without a hole right of %d" % (jump_time, x))
    if step.y == 1 and conf.at(x - 1) != PARTICLE:
        raise CouplingViolationError("Up step at t=%r without a particle left of %d" % (jump_time, x))


@dataclass(frozen=True)
class FluxCounter:
    """
    Net number of objects of one species that crossed the space-time line from (0, 0) to (reference, t):
    those starting at or left of 0 and ending right of the reference, minus those starting right of 0
    and ending at or left of the reference
    """

    reference: int
    t: float
    species: int
    initial_right: int
    final_right: int

    @property
    def value(self) -> int:
        return self.final_right - self.initial_right

    @classmethod
    def measure(cls, trajectory: TasepTrajectory, reference: int, t: float, species: int = PARTICLE):
        lo, hi = trajectory.valid_window(t)
        if not lo <= reference <= hi or not trajectory.lo <= 0 <= trajectory.hi:
            raise WindowError("Reference site %d outside the valid window [%d, %d] at t=%s"
                              % (reference, lo, hi, t))

        initial = trajectory.initial
        final = trajectory.configuration_at(t)
        initial_right = int((initial.sites[-initial.lo + 1:] == species).sum())
        final_right = int((final.sites[reference - final.lo + 1:] == species).sum())
        return cls(reference, t, species, initial_right, final_right)


def flux(trajectory: TasepTrajectory, r: float, t: float, species: str = "particle") -> int:
    """
    Flux of particles (or holes) through the line from (0, 0) to (r t, t)
    """

    code = {"particle": PARTICLE, "hole": HOLE}.get(species)
    if code is None:
        raise ValueError("Unknown species %r" % species)
    return FluxCounter.measure(trajectory, int(math.floor(r * t + 1e-9)), t, code).value


def count_particles(conf: Configuration, r: int, r_end: int, species: int = PARTICLE) -> int:
    """
    Number of particles on [r, r_end]; reversed limits give the negated count on [r_end, r]
    """

    a, b = min(r, r_end), max(r, r_end)
    if a < conf.lo or b > conf.hi:
        raise WindowError("Interval [%d, %d] outside the window [%d, %d]" % (a, b, conf.lo, conf.hi))
    count = int((conf.sites[a - conf.lo:b - conf.lo + 1] == species).sum())
    return count if r <= r_end else -count


def margin_check(profile: ExclusionProfile, half_width: int, t_max: float, stream: RngStream,
                 sample_times=None) -> bool:
    """
    Rerun with a doubled window on the same clocks and compare the second-class paths
    """

    runs = [harris_simulate(profile, m, t_max, stream, second_class=True, sample_times=sample_times).x_samples
            for m in (half_width, 2 * half_width)]
    same = bool(np.array_equal(runs[0], runs[1]))
    if not same:
        logging.warning("Second-class path changed when doubling the window from %d (%s)" % (half_width, stream))
    return same
