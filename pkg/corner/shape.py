"""
Shape
Closed-form predictions: the point-to-point shape mu, the shape function p = max(p1, p2),
competition-interface directions, speed maps and the central-limit moments
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

from corner.errors import DomainError, ParameterError

CURVED = "curved"
LEFT_LINEAR = "left-linear"
RIGHT_LINEAR = "right-linear"

# below this gap the central-limit rates are reported as diverging
DIVERGENCE_GAP = 1e-6


@dataclass(frozen=True)
class DensityPair:
    """
    Left density lambda in (0, 1] and right density rho in [0, 1)
    """

    lam: float
    rho: float

    def __post_init__(self):
        try:
            assert 0 < self.lam <= 1, "lambda must be in (0, 1], provided %s" % self.lam
            assert 0 <= self.rho < 1, "rho must be in [0, 1), provided %s" % self.rho
        except AssertionError as e:
            raise ParameterError("Illegal parameters, %s" % e)

    @property
    def d_lambda(self) -> float:
        """
        :return: lambda / (1 - lambda), infinite at lambda = 1
        """
        return math.inf if self.lam == 1 else self.lam / (1 - self.lam)

    @property
    def d_rho(self) -> float:
        return self.rho / (1 - self.rho)

    @property
    def w_star(self) -> float:
        """
        :return: lambda rho / ((1 - lambda)(1 - rho)), the shock direction when lambda <= rho
        """
        if self.lam == 1:
            return math.inf if self.rho > 0 else math.nan
        return self.lam * self.rho / ((1 - self.lam) * (1 - self.rho))

    def p1(self, x: float, y: float) -> float:
        return _p1(x, y, self.lam)

    def p2(self, x: float, y: float) -> float:
        return _p2(x, y, self.rho)


@dataclass(frozen=True)
class ShapeValue:
    p: float
    regime: str
    p1: float
    p2: float


@dataclass(frozen=True)
class DirectionPrediction:
    """
    Deterministic phase: tan_theta and speed are numbers and interval is None.
    Random phase: interval bounds tan(theta), speed_interval bounds the uniform speed U.
    """

    deterministic: bool
    tan_theta: Optional[float]
    interval: Optional[Tuple[float, float]]
    speed: Optional[float]
    speed_interval: Optional[Tuple[float, float]]


@dataclass(frozen=True)
class CltMoments:
    mean_i: float
    mean_j: float
    var_i: float
    var_j: float
    cov: float
    diverging: bool = False


def _check_point(x: float, y: float):
    if x < 0 or y < 0:
        raise DomainError("Shape functions need nonnegative coordinates, got (%s, %s)" % (x, y), (x, y))


def _ratio(x: float, y: float) -> float:
    return math.inf if x == 0 else y / x


def mu(x: float, y: float) -> float:
    """
    Point-to-point shape (sqrt(x) + sqrt(y))^2
    """

    _check_point(x, y)
    return (math.sqrt(x) + math.sqrt(y)) ** 2


def _p2(x: float, y: float, rho: float) -> float:
    # right arm: linear below the ray y/x = (rho / (1 - rho))^2
    if _ratio(x, y) >= (rho / (1 - rho)) ** 2:
        return mu(x, y)
    return x / (1 - rho) + y / rho


def _p1(x: float, y: float, lam: float) -> float:
    # left arm: linear above the ray y/x = (lambda / (1 - lambda))^2
    if lam == 1 or _ratio(x, y) <= (lam / (1 - lam)) ** 2:
        return mu(x, y)
    return x / (1 - lam) + y / lam


def shape_p(x: float, y: float, densities: DensityPair) -> ShapeValue:
    """
    Shape function from the staircase of densities (lambda, rho)
    :return: ShapeValue with p = max(p1, p2) and the regime responsible for the max
    """

    _check_point(x, y)
    if x == 0 and y == 0:
        raise DomainError("Shape function direction undefined at the origin", (x, y))

    p1 = _p1(x, y, densities.lam)
    p2 = _p2(x, y, densities.rho)
    ratio = _ratio(x, y)

    if p1 >= p2 and densities.lam < 1 and ratio > densities.d_lambda ** 2:
        regime = LEFT_LINEAR
    elif p2 > p1 and ratio < densities.d_rho ** 2:
        regime = RIGHT_LINEAR
    else:
        regime = CURVED

    return ShapeValue(max(p1, p2), regime, p1, p2)


def shape_curve(densities: DensityPair, n_angles: int = 181) -> List[Tuple[float, float, float, str]]:
    """
    Points of the level curve {p = 1}
    :return: (angle, x, y, regime) for n_angles angles spread over [0, pi/2]
    """

    res = []
    for i in range(n_angles):
        angle = 0.5 * math.pi * i / (n_angles - 1)
        x = 0.0 if i == n_angles - 1 else math.cos(angle)
        y = 0.0 if i == 0 else math.sin(angle)
        value = shape_p(x, y, densities)
        res.append((angle, x / value.p, y / value.p, value.regime))
    return res


def direction_predictions(densities: DensityPair) -> DirectionPrediction:
    """
    lambda <= rho: the competition interface has the deterministic direction tan(theta) = w*
    and the second-class particle speed 1 - lambda - rho.
    lambda > rho: tan(theta) is random in [d_rho^2, d_lambda^2] and the speed is uniform on [1 - 2 lambda, 1 - 2 rho].
    """

    lam, rho = densities.lam, densities.rho
    if lam <= rho:
        return DirectionPrediction(True, densities.w_star, None, 1 - lam - rho, None)
    return DirectionPrediction(False, None, (densities.d_rho ** 2, densities.d_lambda ** 2),
                               None, (1 - 2 * lam, 1 - 2 * rho))


def u_to_tan_theta(u: float) -> float:
    """
    tan(theta) = ((1 - U) / (1 + U))^2
    """

    if not -1 < u < 1:
        raise DomainError("Speed must lie in (-1, 1), got %s" % u, u)
    return ((1 - u) / (1 + u)) ** 2


def tan_theta_to_u(tan_theta: float) -> float:
    """
    U = (1 - sqrt(tan theta)) / (1 + sqrt(tan theta))
    """

    if not 0 < tan_theta < math.inf:
        raise DomainError("tan(theta) must lie in (0, inf), got %s" % tan_theta, tan_theta)
    s = math.sqrt(tan_theta)
    return (1 - s) / (1 + s)


def interface_speeds(u: float) -> Tuple[float, float]:
    """
    :return: (I, J) = ((1 + U)^2 / 4, (1 - U)^2 / 4), the growth rates of the interface coordinates
    """

    if not -1 < u < 1:
        raise DomainError("Speed must lie in (-1, 1), got %s" % u, u)
    return (1 + u) ** 2 / 4, (1 - u) ** 2 / 4


def u_theta_maps(value: float, to: str = "tan") -> Tuple[float, float, float]:
    """
    :param value: U when to == "tan", tan(theta) when to == "u"
    :return: (mapped value, I, J)
    """

    if to == "tan":
        u = value
        mapped = u_to_tan_theta(value)
    elif to == "u":
        u = mapped = tan_theta_to_u(value)
    else:
        raise ValueError("Unknown map direction %r" % to)
    i, j = interface_speeds(u)
    return mapped, i, j


def clt_moments(densities: DensityPair) -> CltMoments:
    """
    Rates of the mean and (co)variance of psi(t) = (I(t), J(t)) in the shock phase lambda < rho
    """

    lam, rho = densities.lam, densities.rho
    if lam >= rho:
        raise DomainError("Central limit rates need lambda < rho, got lambda=%s rho=%s" % (lam, rho), (lam, rho))

    mean_i = (1 - rho) * (1 - lam)
    mean_j = rho * lam
    gap = rho - lam
    if gap < DIVERGENCE_GAP:
        return CltMoments(mean_i, mean_j, math.inf, math.inf, -math.inf, diverging=True)

    mix = rho * (1 - lam) + lam * (1 - rho)
    return CltMoments(mean_i, mean_j,
                      var_i=(1 - rho) * (1 - lam) * mix / gap,
                      var_j=lam * rho * mix / gap,
                      cov=-2 * lam * (1 - lam) * rho * (1 - rho) / gap)
