"""
Stats
Estimators and tests that turn replica outputs into verdicts
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from corner.errors import ParameterError
from corner.growth import CompetitionPath
from corner.lattice import BOOTSTRAP, RngStream
from corner.shape import DensityPair, clt_moments, tan_theta_to_u

# samples this far outside a KS interval are reported as out of range
RANGE_SLACK = 1e-9


@dataclass
class ReplicaResult:
    """
    Everything one replica contributes to the aggregated statistics
    """

    replica: int
    tan_theta: float = math.nan
    u: float = math.nan
    degenerate: bool = False
    psi: List[Tuple[float, int, int]] = field(default_factory=list)
    x: List[Tuple[float, int]] = field(default_factory=list)
    deviations: List[float] = field(default_factory=list)
    samples: List[float] = field(default_factory=list)
    values: Dict[str, float] = field(default_factory=dict)
    n: int = 0
    retried: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ReplicaResult":
        d = dict(d)
        d["psi"] = [tuple(p) for p in d.get("psi", [])]
        d["x"] = [tuple(p) for p in d.get("x", [])]
        return cls(**d)


@dataclass(frozen=True)
class DirectionEstimate:
    tan_theta: float
    degenerate: bool


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float
    n: int
    clamped: int = 0


@dataclass(frozen=True)
class CovarianceSummary:
    t: float
    replicas: int
    mean_i_rate: float
    mean_j_rate: float
    var_i_rate: float
    var_j_rate: float
    cov_rate: float


@dataclass(frozen=True)
class FluctuationFit:
    chi: float
    stderr: float
    radii: Tuple[float, ...]
    medians: Tuple[float, ...]


@dataclass(frozen=True)
class Verdict:
    """
    Outcome of one acceptance criterion. Soft verdicts are reported but do not fail a run.
    """

    criterion: str
    estimate: float
    target: float
    tolerance: float
    passed: bool
    soft: bool = False
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def within(criterion: str, estimate: float, target: float, tolerance: float,
           relative: bool = False, soft: bool = False, detail: str = "") -> Verdict:
    """
    :return: Verdict passing when |estimate - target| <= tolerance (times |target| if relative)
    """

    bound = tolerance * abs(target) if relative else tolerance
    passed = bool(abs(estimate - target) <= bound)
    return Verdict(criterion, float(estimate), float(target), float(tolerance), passed, soft, detail)


def in_interval(criterion: str, estimate: float, lo: float, hi: float, target: float = math.nan,
                soft: bool = False, detail: str = "") -> Verdict:
    """
    Verdict for lo <= estimate <= hi; the tolerance field carries the half-width of the interval
    """

    target = 0.5 * (lo + hi) if math.isnan(target) else target
    return Verdict(criterion, float(estimate), float(target), float(0.5 * (hi - lo)),
                   bool(lo <= estimate <= hi), soft, detail or "interval [%g, %g]" % (lo, hi))


def at_least(criterion: str, pvalue: float, level: float = 0.01, soft: bool = False, detail: str = "") -> Verdict:
    """
    Verdict for a test that passes when its p-value exceeds the level
    """

    return Verdict(criterion, float(pvalue), float(level), float(level), bool(pvalue > level), soft, detail)


def all_hold(criterion: str, flags: Sequence[bool], soft: bool = False, detail: str = "") -> Verdict:
    """
    Verdict for an exact property checked once per replica: the estimate is the share of replicas where it held
    """

    share = float(np.mean(flags)) if len(flags) else math.nan
    return Verdict(criterion, share, 1.0, 0.0, bool(len(flags) and share == 1.0), soft,
                   detail or "%d of %d" % (int(np.sum(flags)), len(flags)))


def estimate_direction(path: CompetitionPath, box_side: Optional[int] = None) -> DirectionEstimate:
    """
    Terminal direction phi_n(2) / phi_n(1) of the competition interface
    :param box_side: Use the first site leaving [0, box_side - 1]^2 instead of the last site
    :return: DirectionEstimate, with 0 or inf and degenerate=True when the site lies on an axis
    """

    if len(path) < 2:
        raise ParameterError("Illegal parameters, direction needs at least one step")

    if box_side is None:
        x, y = path.sites[-1]
    else:
        out = np.flatnonzero((path.sites[:, 0] >= box_side) | (path.sites[:, 1] >= box_side))
        if out.size == 0:
            raise ParameterError("Illegal parameters, path never leaves the box of side %d" % box_side)
        x, y = path.sites[out[0]]

    if x == 0:
        return DirectionEstimate(math.inf, True)
    if y == 0:
        return DirectionEstimate(0.0, True)
    return DirectionEstimate(float(y) / float(x), False)


def u_from_direction(tan_theta: float) -> float:
    """
    Speed estimate (1 - sqrt(tan)) / (1 + sqrt(tan)); axis directions map to the sentinels +1 and -1
    """

    if tan_theta <= 0:
        return 1.0
    if math.isinf(tan_theta):
        return -1.0
    return tan_theta_to_u(tan_theta)


def ks_uniform_test(samples: Sequence[float], a: float, b: float) -> KsResult:
    """
    One-sample Kolmogorov-Smirnov test against Uniform[a, b], p-value from the asymptotic Kolmogorov law
    """

    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    try:
        assert n >= 20, "need at least 20 samples, provided %d" % n
        assert a < b, "interval must satisfy a < b, provided [%s, %s]" % (a, b)
    except AssertionError as e:
        raise ParameterError("Illegal parameters, %s" % e)

    outside = int(((x < a - RANGE_SLACK) | (x > b + RANGE_SLACK)).sum())
    if outside:
        logging.warning("%d of %d samples outside [%s, %s], clamped for the KS test" % (outside, n, a, b))

    u = np.sort((np.clip(x, a, b) - a) / (b - a))
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))
    return KsResult(d, float(stats.kstwobign.sf(math.sqrt(n) * d)), n, outside)


def exponential_ks(samples: Sequence[float]) -> KsResult:
    """
    KS test against the mean-1 exponential law
    """

    x = np.asarray(samples, dtype=np.float64)
    res = stats.kstest(x, "expon")
    return KsResult(float(res.statistic), float(res.pvalue), x.size)


def normal_ks(samples: Sequence[float]) -> KsResult:
    x = np.asarray(samples, dtype=np.float64)
    res = stats.kstest(x, "norm")
    return KsResult(float(res.statistic), float(res.pvalue), x.size)


def two_sample_ks(a: Sequence[float], b: Sequence[float]) -> KsResult:
    res = stats.ks_2samp(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return KsResult(float(res.statistic), float(res.pvalue), len(a) + len(b))


def _fmean(values: np.ndarray) -> float:
    return math.fsum(values) / values.size


def covariance_summary(psi: np.ndarray, t: float, densities: DensityPair) -> CovarianceSummary:
    """
    :param psi: Array of shape (replicas, 2) with (I(t), J(t)) per replica
    :return: Mean rates of I/t, J/t and the (co)variance rates of the centred pair divided by sqrt(t)
    """

    psi = np.asarray(psi, dtype=np.float64)
    n = psi.shape[0]
    if n < 2:
        raise ParameterError("Illegal parameters, need at least 2 replicas, provided %d" % n)

    lam, rho = densities.lam, densities.rho
    a = (psi[:, 0] - (1 - rho) * (1 - lam) * t) / math.sqrt(t)
    b = (psi[:, 1] - rho * lam * t) / math.sqrt(t)
    da = a - _fmean(a)
    db = b - _fmean(b)

    return CovarianceSummary(t, n,
                             mean_i_rate=_fmean(psi[:, 0]) / t,
                             mean_j_rate=_fmean(psi[:, 1]) / t,
                             var_i_rate=math.fsum(da * da) / (n - 1),
                             var_j_rate=math.fsum(db * db) / (n - 1),
                             cov_rate=math.fsum(da * db) / (n - 1))


def clt_normality(psi: np.ndarray, t: float, densities: DensityPair) -> Tuple[KsResult, KsResult]:
    """
    KS test of each standardised margin of psi(t) against the standard normal,
    using the predicted means and variances
    """

    moments = clt_moments(densities)
    psi = np.asarray(psi, dtype=np.float64)
    zi = (psi[:, 0] - moments.mean_i * t) / math.sqrt(moments.var_i * t)
    zj = (psi[:, 1] - moments.mean_j * t) / math.sqrt(moments.var_j * t)
    return normal_ks(zi), normal_ks(zj)


def deviation_profile(path: CompetitionPath, tan_theta: float, radii: Sequence[float]) -> np.ndarray:
    """
    Transverse deviation of the interface from the ray of direction tan_theta: for each radius r,
    the distance between the first site whose projection on the ray is >= r and the point r e.
    Radii the path never reaches give NaN.
    """

    theta = math.atan(tan_theta) if not math.isinf(tan_theta) else 0.5 * math.pi
    e = np.array([math.cos(theta), math.sin(theta)])
    sites = path.sites.astype(np.float64)
    proj = sites @ e

    res = np.full(len(radii), np.nan)
    for k, r in enumerate(radii):
        i = int(np.searchsorted(proj, r, side="left"))
        if i < proj.size:
            res[k] = float(np.hypot(*(sites[i] - r * e)))
    return res


def _column_medians(sample: np.ndarray) -> np.ndarray:
    """
    Median of each column over its finite entries, NaN for a column with none
    """

    res = np.full(sample.shape[1], np.nan)
    filled = (~np.isnan(sample)).any(axis=0)
    if filled.any():
        res[filled] = np.nanmedian(sample[:, filled], axis=0)
    return res


def _slope(log_r: np.ndarray, medians: np.ndarray) -> float:
    """
    Fitted slope over the radii with a finite positive median, NaN when fewer than two remain
    """

    usable = np.isfinite(medians) & (medians > 0)
    if usable.sum() < 2:
        return math.nan
    return float(np.polyfit(log_r[usable], np.log(medians[usable]), 1)[0])


def fluctuation_exponent(deviations: np.ndarray, radii: Sequence[float], seed: int = 0,
                         resamples: int = 1000) -> FluctuationFit:
    """
    Least-squares slope of log median deviation against log radius, with a bootstrap standard error
    :param deviations: Array of shape (replicas, radii); NaN entries are ignored, and so are radii
        with no finite positive median in the sample at hand
    :param radii: At least four radii
    :param seed: Seed of the bootstrap stream
    """

    radii = np.asarray(radii, dtype=np.float64)
    if radii.size < 4:
        raise ParameterError("Illegal parameters, need at least 4 radii, provided %d" % radii.size)

    deviations = np.atleast_2d(np.asarray(deviations, dtype=np.float64))
    log_r = np.log(radii)
    medians = _column_medians(deviations)
    chi = _slope(log_r, medians)
    if math.isnan(chi):
        raise ParameterError("Illegal parameters, fewer than 2 radii have a positive median deviation")

    gen = RngStream(seed).substream(BOOTSTRAP)
    n = deviations.shape[0]
    slopes = np.empty(resamples)
    for k in range(resamples):
        sample = deviations[gen.integers(0, n, n)]
        slopes[k] = _slope(log_r, _column_medians(sample))

    # resamples that leave fewer than two usable radii carry no slope
    slopes = slopes[~np.isnan(slopes)]
    if slopes.size < resamples:
        logging.debug("Bootstrap skipped %d of %d resamples with too few usable radii"
                      % (resamples - slopes.size, resamples))
    stderr = float(np.std(slopes, ddof=1)) if slopes.size > 1 else 0.0

    return FluctuationFit(chi, stderr, tuple(radii.tolist()), tuple(medians.tolist()))
