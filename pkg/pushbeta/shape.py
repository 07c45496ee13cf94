"""Shape of the pushed beta density.

The slope of the log density has the sign of a quadratic on (0, 1): for the
left push it is Q(x) / (x (1 - x) (1 - x phi)), for the right push
Q(x) / (x (1 - x) (1 - phi + x phi)). Everything here is read off that
quadratic's roots and the signs between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from scipy import optimize

from .distribution import cdf, pdf
from .params import ParameterError, PushBetaParams
from .quadrature import DEFAULT_CONFIG, QuadratureConfig, log_kernel

ROOT_TOLERANCE = 1e-12
HDR_LEVEL_TOL = 1e-12
BRENTQ_RTOL = 4.0 * float(np.finfo(float).eps)


class NoUniqueModeError(ValueError):
    pass


class ShapeClass(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    QUASI_CONCAVE = "quasi_concave"
    QUASI_CONVEX = "quasi_convex"
    NEITHER_UP_DOWN_UP = "neither_up_down_up"
    NEITHER_DOWN_UP_DOWN = "neither_down_up_down"
    FLAT = "flat"


class CriticalKind(str, Enum):
    MODE = "mode"
    ANTIMODE = "antimode"


@dataclass(frozen=True)
class CriticalPoint:
    x: float
    kind: CriticalKind

    def as_dict(self) -> dict[str, Any]:
        return {"x": self.x, "kind": self.kind.value}


@dataclass(frozen=True)
class ShapeReport:
    classification: ShapeClass
    interior_critical_points: tuple[CriticalPoint, ...]
    quadratic_coeffs: tuple[float, float, float]
    boundary_signs: tuple[int, int]

    def as_dict(self) -> dict[str, Any]:
        return {
            "classification": self.classification.value,
            "interior_critical_points": [p.as_dict() for p in self.interior_critical_points],
            "quadratic_coeffs": list(self.quadratic_coeffs),
            "boundary_signs": list(self.boundary_signs),
        }


@dataclass(frozen=True)
class HdrRegion:
    intervals: tuple[tuple[float, float], ...]
    coverage: float
    log_density_level: float = field(default=-math.inf)

    @property
    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def as_dict(self) -> dict[str, Any]:
        return {
            "intervals": [list(pair) for pair in self.intervals],
            "coverage": self.coverage,
            "measure": self.measure,
            "log_density_level": self.log_density_level,
        }


def quadratic_coeffs(params: PushBetaParams) -> tuple[float, float, float]:
    """Coefficients (c0, c1, c2) of the slope quadratic, ascending powers."""
    a1 = params.alpha - 1.0
    b1 = params.beta - 1.0
    g, phi = params.gamma, params.phi
    if params.is_left:
        return a1, -(a1 + b1 + a1 * phi + g * phi), phi * (a1 + b1 + g)
    return a1 * (1.0 - phi), a1 * (2.0 * phi - 1.0) - b1 * (1.0 - phi) + g * phi, -phi * (a1 + b1 + g)


def _evaluate(coeffs: tuple[float, float, float], x: float) -> float:
    c0, c1, c2 = coeffs
    return c0 + x * (c1 + x * c2)


def _sign(value: float) -> int:
    return (value > 0.0) - (value < 0.0)


def _sign_changing_roots(coeffs: tuple[float, float, float]) -> list[float]:
    c0, c1, c2 = coeffs
    if c2 == 0.0:
        if c1 == 0.0:
            return []
        return [-c0 / c1]
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc <= 0.0:
        return []
    q = -0.5 * (c1 + math.copysign(math.sqrt(disc), c1))
    roots = [q / c2]
    if q != 0.0:
        roots.append(c0 / q)
    return sorted(roots)


def classify_shape(params: PushBetaParams) -> ShapeReport:
    coeffs = quadratic_coeffs(params)
    boundary = (_sign(coeffs[0]), _sign(sum(coeffs)))
    if all(c == 0.0 for c in coeffs):
        return ShapeReport(ShapeClass.FLAT, (), coeffs, boundary)

    roots = [r for r in _sign_changing_roots(coeffs) if ROOT_TOLERANCE < r < 1.0 - ROOT_TOLERANCE]
    edges = [0.0, *roots, 1.0]
    signs = [_sign(_evaluate(coeffs, (lo + hi) / 2.0)) for lo, hi in zip(edges[:-1], edges[1:])]

    points: list[CriticalPoint] = []
    pattern: list[int] = []
    for i, s in enumerate(signs):
        if s == 0:
            continue
        if pattern and pattern[-1] == s:
            continue
        if pattern:
            kind = CriticalKind.MODE if pattern[-1] > 0 else CriticalKind.ANTIMODE
            points.append(CriticalPoint(roots[i - 1], kind))
        pattern.append(s)

    classes = {
        (1,): ShapeClass.INCREASING,
        (-1,): ShapeClass.DECREASING,
        (1, -1): ShapeClass.QUASI_CONCAVE,
        (-1, 1): ShapeClass.QUASI_CONVEX,
        (1, -1, 1): ShapeClass.NEITHER_UP_DOWN_UP,
        (-1, 1, -1): ShapeClass.NEITHER_DOWN_UP_DOWN,
    }
    classification = classes.get(tuple(pattern), ShapeClass.FLAT)
    return ShapeReport(classification, tuple(points), coeffs, boundary)


def gamma_thresholds(alpha: float, beta: float, phi: float) -> tuple[float, float]:
    """Push intensities where the discriminant of the left-push quadratic vanishes.

    Defined for alpha > 1, beta < 1 and 0 < phi < 1; above the upper threshold the
    density rises, falls and rises again.
    """
    if not (alpha > 1.0 and 0.0 < beta < 1.0 and 0.0 < phi < 1.0):
        raise ParameterError("gamma_thresholds needs alpha > 1, 0 < beta < 1 and 0 < phi < 1")
    a1, b1 = alpha - 1.0, beta - 1.0
    centre = a1 * (1.0 - phi) - b1
    spread = 2.0 * math.sqrt(-a1 * b1 * (1.0 - phi))
    return (centre - spread) / phi, (centre + spread) / phi


def _boundary_log_kernel(x: float, params: PushBetaParams) -> float:
    value = log_kernel(x, params)
    return value if not math.isnan(value) else -math.inf


def _best_of(candidates: list[float], params: PushBetaParams) -> float:
    scored = sorted(((_boundary_log_kernel(x, params), x) for x in candidates), reverse=True)
    if len(scored) > 1 and scored[0][0] == scored[1][0]:
        raise NoUniqueModeError(f"density maximum is attained at {scored[0][1]} and {scored[1][1]}")
    return scored[0][1]


def mode(params: PushBetaParams) -> float:
    """Global maximiser of the density on [0, 1]."""
    report = classify_shape(params)
    cls = report.classification
    if cls is ShapeClass.FLAT:
        raise NoUniqueModeError("flat density has no unique mode")
    if cls is ShapeClass.INCREASING:
        return 1.0
    if cls is ShapeClass.DECREASING:
        return 0.0
    if cls is ShapeClass.QUASI_CONCAVE:
        return report.interior_critical_points[0].x
    if cls is ShapeClass.QUASI_CONVEX:
        return _best_of([0.0, 1.0], params)
    if cls is ShapeClass.NEITHER_UP_DOWN_UP:
        return _best_of([report.interior_critical_points[0].x, 1.0], params)
    return _best_of([0.0, report.interior_critical_points[1].x], params)


def _pieces(report: ShapeReport) -> list[tuple[float, float, bool]]:
    """Monotone pieces (lo, hi, increasing) of the density."""
    edges = [0.0, *(p.x for p in report.interior_critical_points), 1.0]
    rising = report.classification in (
        ShapeClass.INCREASING,
        ShapeClass.QUASI_CONCAVE,
        ShapeClass.NEITHER_UP_DOWN_UP,
    )
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        pieces.append((lo, hi, rising))
        rising = not rising
    return pieces


def _log_density(x: float, params: PushBetaParams, config: QuadratureConfig) -> float:
    value = pdf(x, params, log_scale=True, config=config)
    return value if not math.isnan(value) else -math.inf


def _superlevel_intervals(
    level: float,
    pieces: list[tuple[float, float, bool]],
    params: PushBetaParams,
    config: QuadratureConfig,
) -> list[tuple[float, float]]:
    def gap(x: float) -> float:
        return max(min(_log_density(x, params, config) - level, 1e3), -1e3)

    intervals: list[tuple[float, float]] = []
    for lo, hi, rising in pieces:
        top, bottom = (hi, lo) if rising else (lo, hi)
        if gap(top) < 0.0:
            continue
        if gap(bottom) >= 0.0:
            cut = bottom
        else:
            cut = optimize.brentq(gap, lo, hi, xtol=1e-15, rtol=BRENTQ_RTOL)
        interval = (cut, hi) if rising else (lo, cut)
        if intervals and abs(intervals[-1][1] - interval[0]) <= 1e-15:
            intervals[-1] = (intervals[-1][0], interval[1])
        else:
            intervals.append(interval)
    return intervals


def _coverage(intervals: list[tuple[float, float]], params: PushBetaParams, config: QuadratureConfig) -> float:
    return sum(float(cdf(hi, params, config=config)) - float(cdf(lo, params, config=config)) for lo, hi in intervals)


def hdr(cover_prob: float, params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> HdrRegion:
    """Highest density region: the density superlevel set with the requested probability."""
    if not 0.0 < cover_prob < 1.0:
        raise ParameterError(f"cover probability must lie in (0, 1), got {cover_prob!r}")
    report = classify_shape(params)
    if report.classification is ShapeClass.FLAT:
        half = (1.0 - cover_prob) / 2.0
        return HdrRegion(((half, 1.0 - half),), cover_prob, 0.0)

    pieces = _pieces(report)
    candidates = [0.0, 1.0, *(p.x for p in report.interior_critical_points)]
    finite = [v for v in (_log_density(x, params, config) for x in candidates) if math.isfinite(v)]
    top = max(finite) if finite else 0.0

    def excess(level: float) -> float:
        return _coverage(_superlevel_intervals(level, pieces, params, config), params, config) - cover_prob

    low, high = top - 1.0, top
    step = 1.0
    while excess(low) < 0.0:
        step *= 2.0
        low = top - step
    step = 1.0
    while excess(high) > 0.0:
        step *= 2.0
        high = top + step
    level = optimize.brentq(excess, low, high, xtol=HDR_LEVEL_TOL, rtol=BRENTQ_RTOL, maxiter=200)
    intervals = _superlevel_intervals(level, pieces, params, config)
    return HdrRegion(tuple(intervals), _coverage(intervals, params, config), level)
