"""
Experiments
Configuration, replica runners, aggregation and reports for the named experiments.
Replica i of a run always draws from RngStream(seed, i), so results do not depend on the thread count.
"""

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from corner import stats
from corner.errors import BoxExhaustedError, CouplingViolationError, HorizonError, UsageError
from corner.growth import (competition_interface, nems_geodesic_check, passage_time, psi_at, reversed_weights,
                           simulate_growth)
from corner.interface import sample_profile, sample_random_walk
from corner.lattice import ORIGIN, RngStream, Site
from corner.shape import DIVERGENCE_GAP, DensityPair, clt_moments, direction_predictions, mu, shape_curve, shape_p
from corner.stats import ReplicaResult, Verdict
from corner.tasep import (coupled_second_class, discrepancy_simulate, exclusion_from_growth, flux, harris_simulate,
                          interface_consistent, interface_consistent_throughout, margin_check, required_margin)
from corner.utils import atomic_write, powers_of_two

EXPERIMENTS = ("shape", "direction", "udist", "clt", "fluct", "coupling", "duality", "tasep")

DEFAULTS = {
    "shape": dict(lam=0.5, rho=0.2, n=1500),
    "direction": dict(lam=0.3, rho=0.6, n=2000),
    "udist": dict(lam=0.8, rho=0.2, n=2000),
    "clt": dict(lam=0.2, rho=0.6, t=2000.0),
    "fluct": dict(lam=0.5, rho=0.5, n=4096),
    "coupling": dict(lam=0.8, rho=0.2, n=100, t=400.0),
    "duality": dict(lam=0.5, rho=0.5, n=300),
    "tasep": dict(lam=0.3, rho=0.6, t=1000.0),
}

# what each experiment reads from the config
NEEDS_N = ("shape", "direction", "udist", "fluct", "coupling", "duality")
NEEDS_T = ("clt", "coupling", "tasep")

# columns of replicas.csv beyond replica,n,retried,error,tan_theta,u,degenerate
SCHEMAS = {
    "shape": "rost (passage time (0,0)->(m,m), m = min(500, N)), ray_00..ray_24 (G(z)/p(z) on the fan)",
    "direction": "tan_theta_half (direction at the exit of the half box)",
    "udist": "tan_theta_half",
    "clt": "i, j (interface coordinates at time t)",
    "fluct": "dev_<r> (transverse deviation at radius r), tan_ray (direction of the deviation ray)",
    "coupling": "exact (coupling checks held at N), x_growth, x_harris (X(t)/t), discrepancy_ok (every 20th replica)",
    "duality": "nems (interface is a Y-geodesic on short segments); JSON format also lists the Y samples",
    "tasep": "x_over_t, flux_origin (particle flux through the origin), margin_ok (every 20th replica)",
}

MANIFEST = "replicas.jsonl"
REPORT = "report.json"

# replicas draw the Harris half of the coupling experiment from index + HARRIS_OFFSET
HARRIS_OFFSET = 2 ** 32

FAN_RAYS = 25
# experiments that run the window margin or discrepancy cross-check do so on every CHECK_EVERY-th replica
CHECK_EVERY = 20
DUALITY_GRID = 10
SUPPORT_SLACK = 0.05

# weights, g, reversed weights (float64) plus label and back (int8) per box site
BYTES_PER_SITE = 26
MEMORY_BUDGET = 8 * 2 ** 30


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Parameters of one experiment run. n is the box side N, t the time horizon; experiments
    ignore the one they do not use.
    """

    experiment: str
    lam: float
    rho: float
    n: Optional[int] = None
    t: Optional[float] = None
    replicas: int = 100
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: Optional[str] = None
    format: str = "csv"
    resume: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError("Unknown experiment %r, expected one of %s" % (self.experiment, ", ".join(EXPERIMENTS)),
                             "experiment")
        if self.out is None:
            object.__setattr__(self, "out", os.path.join("runs", self.experiment))

        checks = [
            ("lambda", 0 < self.lam <= 1, "lambda must be in (0, 1], provided %s" % self.lam),
            ("rho", 0 <= self.rho < 1, "rho must be in [0, 1), provided %s" % self.rho),
            ("replicas", self.replicas >= 1, "replicas must be positive, provided %s" % self.replicas),
            ("seed", 0 <= self.seed < 2 ** 64, "seed must be a 64-bit nonnegative integer, provided %s" % self.seed),
            ("threads", self.threads >= 1, "threads must be positive, provided %s" % self.threads),
            ("format", self.format in ("csv", "json"), "format must be csv or json, provided %r" % self.format),
        ]
        if self.experiment in NEEDS_N:
            checks.append(("n", self.n is not None and self.n >= 2, "n must be at least 2, provided %s" % self.n))
        if self.experiment in NEEDS_T:
            checks.append(("t", self.t is not None and self.t > 0, "t must be positive, provided %s" % self.t))
        for token, ok, message in checks:
            if not ok:
                raise UsageError(message, token)

        if self.experiment == "clt" and self.rho - self.lam < DIVERGENCE_GAP:
            raise UsageError("clt needs lambda < rho, provided lambda=%s rho=%s" % (self.lam, self.rho), "lambda")
        if self.experiment == "udist":
            if self.lam <= self.rho:
                raise UsageError("udist needs lambda > rho, provided lambda=%s rho=%s" % (self.lam, self.rho),
                                 "lambda")
            if self.replicas < 20:
                raise UsageError("udist needs at least 20 replicas, provided %d" % self.replicas, "replicas")
        if self.experiment == "fluct" and len(fluct_radii(self)) < 4:
            raise UsageError("fluct needs n large enough for 4 radii, provided %s" % self.n, "n")

    @property
    def densities(self) -> DensityPair:
        return DensityPair(self.lam, self.rho)

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        """
        Digest of the parameters that determine replica results
        """

        key = {k: getattr(self, k) for k in ("experiment", "lam", "rho", "n", "t", "seed")}
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]


_FILE_KEYS = {
    "lambda": ("lam", float),
    "rho": ("rho", float),
    "n": ("n", int),
    "t": ("t", float),
    "replicas": ("replicas", int),
    "seed": ("seed", int),
    "threads": ("threads", int),
    "out": ("out", str),
    "format": ("format", str),
    "resume": ("resume", None),
}


def _to_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(value)


def read_config_file(path: str) -> Dict[str, object]:
    """
    Read a key = value configuration file; '#' starts a comment
    :return: Field values keyed by ExperimentConfig attribute
    """

    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise UsageError("Cannot read config file %s: %s" % (path, e), path)

    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise UsageError("%s:%d: expected 'key = value', got %r" % (path, lineno, raw), raw.strip())
        if key not in _FILE_KEYS:
            raise UsageError("%s:%d: unknown key %r" % (path, lineno, key), key)
        name, kind = _FILE_KEYS[key]
        try:
            values[name] = _to_bool(value) if kind is None else kind(value)
        except ValueError:
            raise UsageError("%s:%d: malformed value %r for %s" % (path, lineno, value, key), key)
    return values


def make_config(experiment: str, file_values: Optional[dict] = None,
                overrides: Optional[dict] = None) -> ExperimentConfig:
    """
    Merge per-experiment defaults, config file values and command-line overrides, in increasing precedence.
    Overrides set to None are ignored.
    """

    if experiment not in DEFAULTS:
        raise UsageError("Unknown experiment %r" % experiment, experiment)
    values = dict(DEFAULTS[experiment])
    values.update(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(experiment, **values)


def fluct_radii(config: ExperimentConfig) -> List[int]:
    """
    Geometric radii 64, 128, ... up to N/2. With lambda > rho the deviation ray is the replica's own
    terminal direction, which biases small radii, so radii below N/32 are left out.
    """

    lo = 64
    if config.lam > config.rho:
        lo = max(lo, int(math.ceil(config.n / 32)))
    return powers_of_two(lo, config.n // 2)


def fan_sites(n: int, rays: int = FAN_RAYS) -> List[Site]:
    """
    Sites on the outer frontier of [0, n]^2 along rays spread evenly over the open quarter turn
    """

    sites = []
    for k in range(rays):
        angle = 0.5 * math.pi * (k + 1) / (rays + 1)
        c, s = math.cos(angle), math.sin(angle)
        scale = n / max(c, s)
        sites.append(Site(max(1, int(round(scale * c))), max(1, int(round(scale * s)))))
    return sites


def box_for_time(densities: DensityPair, t: float) -> int:
    """
    Box side N large enough for the competition interface to be inside the box at time t with high probability
    """

    lam, rho = densities.lam, densities.rho
    if lam < rho:
        moments = clt_moments(densities)
        rate = max(moments.mean_i, moments.mean_j)
        spread = math.sqrt(max(moments.var_i, moments.var_j) * t) if not moments.diverging else t
    else:
        # I(t)/t and J(t)/t stay below the largest values the uniform speed allows
        rate = max((1 - rho) ** 2, lam ** 2)
        spread = 0.2 * rate * t + 10 * math.sqrt(t)
    return int(math.ceil(rate * t + 6 * spread + 10))


def _growth(config: ExperimentConfig, stream: RngStream, n: int):
    """
    Growth table on [0, n]^2 and its competition interface. The interface inside the box is exact,
    so a path ending on the frontier is the box-N sample itself; replicas that need it to reach
    further raise BoxExhaustedError
    """

    interface = sample_random_walk(config.lam, config.rho, n, stream)
    table = simulate_growth(interface, n, stream)
    return table, competition_interface(table)


def _direction_fields(result: ReplicaResult, path, n: int):
    est = stats.estimate_direction(path)
    half = stats.estimate_direction(path, box_side=n // 2)
    result.tan_theta = est.tan_theta
    result.degenerate = est.degenerate
    result.u = stats.u_from_direction(est.tan_theta)
    result.values["tan_theta_half"] = half.tan_theta


def shape_replica(config: ExperimentConfig, stream: RngStream, scale: int) -> ReplicaResult:
    n = config.n * scale
    table = simulate_growth(sample_random_walk(config.lam, config.rho, n, stream), n, stream)
    result = ReplicaResult(stream.index, n=n)

    m = min(500, config.n)
    result.values["rost"] = passage_time(table.field, ORIGIN, Site(m, m))
    for k, z in enumerate(fan_sites(config.n)):
        result.values["ray_%02d" % k] = table.g_at(z) / shape_p(z.x, z.y, config.densities).p
    return result


def direction_replica(config: ExperimentConfig, stream: RngStream, scale: int) -> ReplicaResult:
    n = config.n * scale
    table, path = _growth(config, stream, n)
    result = ReplicaResult(stream.index, n=n)
    _direction_fields(result, path, n)
    return result


def clt_replica(config: ExperimentConfig, stream: RngStream, scale: int) -> ReplicaResult:
    n = box_for_time(config.densities, config.t) * scale
    table, path = _growth(config, stream, n)
    psi = psi_at(path, config.t)
    result = ReplicaResult(stream.index, n=n, psi=[(config.t, psi.x, psi.y)])
    result.values["i"] = psi.x
    result.values["j"] = psi.y
    return result


def fluct_replica(config: ExperimentConfig, stream: RngStream, scale: int) -> ReplicaResult:
    n = config.n * scale
    table, path = _growth(config, stream, n)
    result = ReplicaResult(stream.index, n=n)
    _direction_fields(result, path, n)

    predicted = direction_predictions(config.densities)
    tan_ray = predicted.tan_theta if predicted.deterministic else result.tan_theta
    radii = fluct_radii(config)
    deviations = stats.deviation_profile(path, tan_ray, radii)
    if np.isnan(deviations[-1]):
        raise BoxExhaustedError("Interface leaves the box of side %d before radius %d along tan=%.4g"
                                % (n, radii[-1], tan_ray), path)
    result.deviations = deviations.tolist()
    result.values["tan_ray"] = tan_ray
    for r, d in zip(radii, result.deviations):
        result.values["dev_%d" % r] = d
    return result


def coupling_replica(config: ExperimentConfig, stream: RngStream, scale: int) -> ReplicaResult:
    result = ReplicaResult(stream.index, n=config.n * scale)

    # exact coupling up to the last time the small table can vouch for
    table, path = _growth(config, stream, config.n * scale)
    t_exact = float(np.nextafter(min(table.horizon, path.horizon), 0.0))
    try:
        trajectory = exclusion_from_growth(table, t_exact)
        coupled_second_class(table, path, t_exact, trajectory)
        if stream.index % CHECK_EVERY == 0:
            exact = interface_consistent_throughout(table, trajectory)
        else:
            exact = interface_consistent(table, trajectory.final, t_exact)
    except CouplingViolationError as e:
        logging.warning("Replica %d: %s" % (stream.index, e))
        exact = False
    result.values["exact"] = float(exact)

    # growth-derived X(t) / t
    n_t = box_for_time(config.densities, config.t) * scale
    table, path = _growth(config, stream, n_t)
    result.values["x_growth"] = coupled_second_class(table, path, config.t) / config.t

    # Harris-simulated X(t) / t from an independent stream
    harris = stream.spawn(stream.index + HARRIS_OFFSET)
    margin = required_margin(config.t)
    profile = sample_profile(config.lam, config.rho, margin, harris)
    run = harris_simulate(profile, margin, config.t, harris, second_class=True)
    x = int(run.x_samples[-1])
    result.values["x_harris"] = x / config.t
    result.x = [(config.t, x)]

    if stream.index % CHECK_EVERY == 0:
        direct = discrepancy_simulate(profile.window(margin, second_class=True), config.t, harris)
        result.values["discrepancy_ok"] = float(int(direct[-1]) == x)
    return result


def duality_replica(config: ExperimentConfig, stream: RngStream, scale: int) -> ReplicaResult:
    n = config.n * scale
    table, path = _growth(config, stream, n)
    result = ReplicaResult(stream.index, n=n)
    result.values["nems"] = float(nems_geodesic_check(table, path))

    y = reversed_weights(table)
    grid = np.linspace(n // 4, (3 * n) // 4, DUALITY_GRID).astype(int)
    result.samples = [y.at(Site(int(a), int(b))) for b in grid for a in grid]
    return result


def tasep_replica(config: ExperimentConfig, stream: RngStream, scale: int) -> ReplicaResult:
    t = config.t
    margin = required_margin(t) * scale
    check = stream.index % CHECK_EVERY == 0
    # a doubled profile starts with the same sites, so the checked run sees the same initial state
    profile = sample_profile(config.lam, config.rho, 2 * margin if check else margin, stream)
    sample_times = t * np.arange(1, 11) / 10.0

    run = harris_simulate(profile, margin, t, stream, second_class=True, sample_times=sample_times)
    result = ReplicaResult(stream.index, n=margin)
    result.x = [(float(s), int(x)) for s, x in zip(sample_times, run.x_samples)]
    result.values["x_over_t"] = float(run.x_samples[-1]) / t
    result.values["flux_origin"] = flux(run, 0.0, t)
    if check:
        result.values["margin_ok"] = float(margin_check(profile, margin, t, stream, sample_times))
    return result


REPLICAS: Dict[str, Callable[[ExperimentConfig, RngStream, int], ReplicaResult]] = {
    "shape": shape_replica,
    "direction": direction_replica,
    "udist": direction_replica,
    "clt": clt_replica,
    "fluct": fluct_replica,
    "coupling": coupling_replica,
    "duality": duality_replica,
    "tasep": tasep_replica,
}


def run_replica(config: ExperimentConfig, index: int) -> ReplicaResult:
    """
    Run replica index; a replica whose interface leaves the box (or whose table cannot reach the
    requested time) is retried once with the box doubled, then reported as failed
    """

    stream = RngStream(config.seed, index)
    replica = REPLICAS[config.experiment]
    for scale in (1, 2):
        try:
            result = replica(config, stream, scale)
            result.retried = scale > 1
            logging.debug("Replica %d of %s done" % (index, config.experiment))
            return result
        except (BoxExhaustedError, HorizonError) as e:
            if scale == 1:
                logging.warning("Replica %d: %s, retrying with the box doubled" % (index, e))
            else:
                logging.warning("Replica %d failed after a retry: %s" % (index, e))
                return ReplicaResult(index, retried=True, error=str(e))


def _values(results: Sequence[ReplicaResult], key: str) -> np.ndarray:
    return np.asarray([r.values[key] for r in results if key in r.values], dtype=np.float64)


def _fmean(values: np.ndarray) -> float:
    return math.fsum(values) / values.size if values.size else math.nan


def _support(criterion: str, u: np.ndarray, lo: float, hi: float) -> Verdict:
    inside = (u >= lo - SUPPORT_SLACK) & (u <= hi + SUPPORT_SLACK)
    return stats.all_hold(criterion, inside.tolist(),
                          detail="U in [%g, %g] with slack %g" % (lo, hi, SUPPORT_SLACK))


def aggregate_shape(config, results, out) -> Tuple[List[Verdict], List[str]]:
    m = min(500, config.n)
    verdicts = [stats.within("shape.rost", _fmean(_values(results, "rost")), mu(m, m), 0.03, relative=True,
                             detail="mean passage time to (%d, %d)" % (m, m))]
    for k, z in enumerate(fan_sites(config.n)):
        regime = shape_p(z.x, z.y, config.densities).regime
        verdicts.append(stats.within("shape.ray_%02d" % k, _fmean(_values(results, "ray_%02d" % k)), 1.0, 0.05,
                                     detail="z=%s, %s" % (z, regime)))

    path = os.path.join(out, "shape_curve.csv")
    with atomic_write(path, newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("angle", "x", "y", "regime"))
        for angle, x, y, regime in shape_curve(config.densities):
            writer.writerow((repr(angle), repr(x), repr(y), regime))
    return verdicts, [path]


def aggregate_direction(config, results, out) -> Tuple[List[Verdict], List[str]]:
    predicted = direction_predictions(config.densities)
    tan = np.asarray([r.tan_theta for r in results if not r.degenerate])
    half = np.asarray([r.values["tan_theta_half"] for r in results if not r.degenerate])
    verdicts = []

    if predicted.deterministic:
        verdicts.append(stats.within("direction.mean", _fmean(tan), predicted.tan_theta, 0.05, relative=True,
                                     detail="%d non-degenerate replicas" % tan.size))
        if tan.size >= 2:
            spread, spread_half = float(np.std(tan, ddof=1)), float(np.std(half, ddof=1))
            verdicts.append(Verdict("direction.spread", spread, spread_half, 0.0, spread < spread_half,
                                    detail="std at N vs at N/2"))
    else:
        lo, hi = predicted.speed_interval
        verdicts.append(_support("direction.support", np.asarray([r.u for r in results]), lo, hi))

    if tan.size:
        moved = float(np.median(np.abs(tan - half)))
        verdicts.append(stats.within("direction.convergence", moved, 0.0, 0.05, soft=True,
                                     detail="median |tan(N/2) - tan(N)|"))
    return verdicts, []


def aggregate_udist(config, results, out) -> Tuple[List[Verdict], List[str]]:
    lo, hi = direction_predictions(config.densities).speed_interval
    u = np.asarray([r.u for r in results])
    verdicts = [_support("udist.support", u, lo, hi)]
    if u.size >= 20:
        ks = stats.ks_uniform_test(u, lo, hi)
        verdicts.append(stats.at_least("udist.ks", ks.pvalue, 0.01,
                                       detail="D=%.5f n=%d clamped=%d" % (ks.statistic, ks.n, ks.clamped)))
    return verdicts, []


def aggregate_clt(config, results, out) -> Tuple[List[Verdict], List[str]]:
    psi = np.column_stack((_values(results, "i"), _values(results, "j")))
    summary = stats.covariance_summary(psi, config.t, config.densities)
    moments = clt_moments(config.densities)
    ks_i, ks_j = stats.clt_normality(psi, config.t, config.densities)
    return [
        stats.within("clt.mean_i", summary.mean_i_rate, moments.mean_i, 0.02, relative=True),
        stats.within("clt.mean_j", summary.mean_j_rate, moments.mean_j, 0.02, relative=True),
        stats.within("clt.var_i", summary.var_i_rate, moments.var_i, 0.10, relative=True),
        stats.within("clt.var_j", summary.var_j_rate, moments.var_j, 0.10, relative=True),
        stats.within("clt.cov", summary.cov_rate, moments.cov, 0.10, relative=True),
        stats.at_least("clt.normal_i", ks_i.pvalue, 0.01, detail="D=%.5f" % ks_i.statistic),
        stats.at_least("clt.normal_j", ks_j.pvalue, 0.01, detail="D=%.5f" % ks_j.statistic),
    ], []


def aggregate_fluct(config, results, out) -> Tuple[List[Verdict], List[str]]:
    radii = np.asarray(fluct_radii(config), dtype=np.float64)
    deviations = np.asarray([r.deviations for r in results], dtype=np.float64)
    reached = np.mean(~np.isnan(deviations), axis=0) >= 0.5

    if config.lam < config.rho:
        lo, hi, target = 0.40, 0.60, 0.5
    else:
        lo, hi, target = 0.55, 0.80, 2.0 / 3.0

    if reached.sum() < 4:
        return [Verdict("fluct.chi", math.nan, target, 0.5 * (hi - lo), False, soft=True,
                        detail="fewer than 4 radii reached by most replicas")], []

    fit = stats.fluctuation_exponent(deviations[:, reached], radii[reached], seed=config.seed)
    path = os.path.join(out, "fluct_profile.csv")
    with atomic_write(path, newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("radius", "median_deviation"))
        for r, m in zip(fit.radii, fit.medians):
            writer.writerow((repr(r), repr(m)))

    return [stats.in_interval("fluct.chi", fit.chi, lo, hi, target, soft=True,
                              detail="bootstrap stderr %.4f over %d radii" % (fit.stderr, len(fit.radii)))], [path]


def aggregate_coupling(config, results, out) -> Tuple[List[Verdict], List[str]]:
    verdicts = [stats.all_hold("coupling.exact", (_values(results, "exact") == 1).tolist())]
    checked = _values(results, "discrepancy_ok")
    if checked.size:
        verdicts.append(stats.all_hold("coupling.discrepancy", (checked == 1).tolist()))
    ks = stats.two_sample_ks(_values(results, "x_growth"), _values(results, "x_harris"))
    verdicts.append(stats.at_least("coupling.ks", ks.pvalue, 0.01, detail="D=%.5f" % ks.statistic))
    return verdicts, []


def aggregate_duality(config, results, out) -> Tuple[List[Verdict], List[str]]:
    verdicts = [stats.all_hold("duality.nems", (_values(results, "nems") == 1).tolist())]
    if config.lam == config.rho:
        samples = np.concatenate([np.asarray(r.samples, dtype=np.float64) for r in results])
        samples = samples[~np.isnan(samples)]
        ks = stats.exponential_ks(samples)
        verdicts.append(stats.at_least("duality.exponential", ks.pvalue, 0.01,
                                       detail="D=%.5f n=%d" % (ks.statistic, ks.n)))
    return verdicts, []


def aggregate_tasep(config, results, out) -> Tuple[List[Verdict], List[str]]:
    predicted = direction_predictions(config.densities)
    speeds = _values(results, "x_over_t")
    verdicts = []
    if predicted.deterministic:
        verdicts.append(stats.within("tasep.speed", _fmean(speeds), predicted.speed, 0.03,
                                     detail="mean X(t)/t"))
    elif speeds.size >= 20:
        lo, hi = predicted.speed_interval
        ks = stats.ks_uniform_test(speeds, lo, hi)
        verdicts.append(stats.at_least("tasep.uniform", ks.pvalue, 0.01, soft=True,
                                       detail="D=%.5f clamped=%d" % (ks.statistic, ks.clamped)))

    checked = _values(results, "margin_ok")
    if checked.size:
        verdicts.append(stats.all_hold("tasep.margin", (checked == 1).tolist(), soft=True))

    path = os.path.join(out, "x_paths.csv")
    with atomic_write(path, newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("replica", "time", "x"))
        for r in results:
            for s, x in r.x:
                writer.writerow((r.replica, repr(float(s)), int(x)))
    return verdicts, [path]


AGGREGATORS = {
    "shape": aggregate_shape,
    "direction": aggregate_direction,
    "udist": aggregate_udist,
    "clt": aggregate_clt,
    "fluct": aggregate_fluct,
    "coupling": aggregate_coupling,
    "duality": aggregate_duality,
    "tasep": aggregate_tasep,
}


@dataclass
class RunReport:
    config: ExperimentConfig
    verdicts: List[Verdict]
    requested: int
    completed: int
    failed: int
    retried: int
    artifacts: List[str]
    started: str = ""
    finished: str = ""
    wall_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        """
        All hard verdicts passed. Soft verdicts are informative only.
        """
        return all(v.passed for v in self.verdicts if not v.soft)

    def to_dict(self) -> dict:
        echo = self.config.to_dict()
        threads = echo.pop("threads")
        return {
            "config": echo,
            "fingerprint": self.config.fingerprint(),
            "passed": self.passed,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "replicas": {"requested": self.requested, "completed": self.completed,
                         "failed": self.failed, "retried": self.retried},
            "artifacts": self.artifacts,
            "metadata": {"started": self.started, "finished": self.finished,
                         "wall_seconds": self.wall_seconds, "threads": threads},
        }


def _load_manifest(path: str, config: ExperimentConfig) -> Dict[int, ReplicaResult]:
    done = {}
    with open(path) as f:
        header = f.readline()
        try:
            fingerprint = json.loads(header)["fingerprint"]
        except (ValueError, KeyError):
            raise UsageError("Manifest %s has no header line" % path, "resume")
        if fingerprint != config.fingerprint():
            raise UsageError("Manifest %s belongs to another configuration (%s != %s)"
                             % (path, fingerprint, config.fingerprint()), "resume")
        for line in f:
            try:
                result = ReplicaResult.from_dict(json.loads(line))
            except (ValueError, TypeError):
                logging.warning("Skipping a truncated manifest line in %s" % path)
                continue
            done[result.replica] = result
    return done


def _start_manifest(path: str, config: ExperimentConfig):
    with atomic_write(path) as f:
        f.write(json.dumps({"fingerprint": config.fingerprint(), "config": config.to_dict()}, sort_keys=True) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_replicas(path: str, results: Sequence[ReplicaResult], fmt: str = "csv"):
    """
    Raw per-replica output, ordered by replica id
    """

    if fmt == "json":
        with atomic_write(path) as f:
            json.dump([r.to_dict() for r in results], f, sort_keys=True, indent=1)
            f.write("\n")
        return

    keys = sorted({k for r in results for k in r.values})
    with atomic_write(path, newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["replica", "n", "retried", "error", "tan_theta", "u", "degenerate"] + keys)
        for r in results:
            row = [r.replica, r.n, int(r.retried), r.error, r.tan_theta, r.u, int(r.degenerate)]
            row += [r.values.get(k, "") for k in keys]
            writer.writerow([_csv_cell(v) for v in row])


def replica_bytes(config: ExperimentConfig) -> int:
    """
    Rough peak memory of one first-attempt replica, from a (2N + 2)^2 growth box
    """

    if config.experiment == "tasep":
        return BYTES_PER_SITE * (2 * required_margin(config.t) + 2)
    n = config.n or 0
    if config.experiment in NEEDS_T:
        n = max(n, box_for_time(config.densities, config.t))
    return BYTES_PER_SITE * (2 * n + 2) ** 2


def worker_count(config: ExperimentConfig, budget: int = MEMORY_BUDGET) -> int:
    """
    config.threads, lowered so that the replicas in flight fit in budget bytes
    """

    per_replica = replica_bytes(config)
    threads = max(1, min(config.threads, budget // per_replica))
    if threads < config.threads:
        logging.warning("Replicas need about %d MB each, running %d threads instead of %d"
                        % (per_replica // 2 ** 20, threads, config.threads))
    return threads


def run_experiment(config: ExperimentConfig) -> RunReport:
    """
    Run the replicas of config on a thread pool, aggregate them in replica order and write
    replicas.csv|json, report.json and the experiment's own artifacts under config.out
    :param config: ExperimentConfig
    :return: RunReport
    """

    started = datetime.now(timezone.utc).isoformat()
    clock = time.monotonic()
    os.makedirs(config.out, exist_ok=True)
    threads = worker_count(config)
    logging.info("Running %s (lambda=%s, rho=%s, n=%s, t=%s) with %d replicas on %d threads into %s"
                 % (config.experiment, config.lam, config.rho, config.n, config.t, config.replicas,
                    threads, config.out))

    manifest = os.path.join(config.out, MANIFEST)
    done: Dict[int, ReplicaResult] = {}
    if config.resume and os.path.exists(manifest):
        done = _load_manifest(manifest, config)
        logging.info("Resuming, %d replicas already in %s" % (len(done), manifest))
    else:
        _start_manifest(manifest, config)

    todo = [i for i in range(config.replicas) if i not in done]
    with open(manifest, "a") as f, ThreadPoolExecutor(max_workers=threads) as pool:
        for result in pool.map(partial(run_replica, config), todo):
            done[result.replica] = result
            f.write(json.dumps(result.to_dict(), sort_keys=True) + "\n")
            f.flush()

    results = [done[i] for i in range(config.replicas)]
    ok = [r for r in results if not r.error]

    replicas_path = os.path.join(config.out, "replicas.%s" % config.format)
    write_replicas(replicas_path, results, config.format)
    verdicts, artifacts = AGGREGATORS[config.experiment](config, ok, config.out) if ok else ([], [])

    artifacts = [replicas_path] + artifacts + [os.path.join(config.out, REPORT)]
    report = RunReport(config, verdicts, config.replicas, len(ok), len(results) - len(ok),
                       sum(r.retried for r in results), artifacts,
                       started, datetime.now(timezone.utc).isoformat(), time.monotonic() - clock)

    with atomic_write(os.path.join(config.out, REPORT)) as f:
        json.dump(report.to_dict(), f, sort_keys=True, indent=2)
        f.write("\n")

    for v in verdicts:
        log = logging.info if v.passed or v.soft else logging.warning
        log("%s: estimate %.6g, target %.6g, tolerance %.3g -> %s%s"
            % (v.criterion, v.estimate, v.target, v.tolerance, "pass" if v.passed else "FAIL",
               " (soft)" if v.soft else ""))
    logging.info("Report written to %s" % os.path.join(config.out, REPORT))
    return report
