from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
from scipy import optimize, special, stats

from .params import Direction, ParameterError, PushBetaParams
from .quadrature import (
    DEFAULT_CONFIG,
    LogIntegralRequest,
    QuadratureConfig,
    QuadratureMode,
    expectation,
    log1mexp,
    log_integral,
    log_integral_many,
    log_kernel,
    log_segment_integral,
)

__all__ = [
    "Direction",
    "ExpectedLogs",
    "GENERATOR_NAME",
    "ParameterError",
    "PushBetaParams",
    "cdf",
    "entropy_neg_log",
    "expected_logs",
    "log_normalizer",
    "mean_variance",
    "pdf",
    "quantile",
    "raw_moment",
    "reflect",
    "sample",
]

logger = logging.getLogger(__name__)

GENERATOR_NAME = "numpy.PCG64"
VARIANCE_WARN_LEVEL = -1e-12
_TINY = float(np.finfo(float).tiny)
_BELOW_ONE = float(np.nextafter(1.0, 0.0))
_TABLE_SEGMENTS = 256
_TABLE_REFINE_ROUNDS = 4
_GL_NODES, _GL_WEIGHTS = special.roots_legendre(32)
_NEWTON_TOL = 1e-11


@dataclass(frozen=True)
class ExpectedLogs:
    e_log_x: float
    e_log_1mx: float
    e_log_push: float

    def as_dict(self) -> dict[str, float]:
        return {"e_log_x": self.e_log_x, "e_log_1mx": self.e_log_1mx, "e_log_push": self.e_log_push}


def _out(values: np.ndarray) -> Any:
    if np.ndim(values) == 0:
        return float(values)
    return values


@lru_cache(maxsize=256)
def log_normalizer(params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    return log_integral(LogIntegralRequest(1.0, params), config)


def reflect(params: PushBetaParams) -> PushBetaParams:
    """Mirror image under x -> 1 - x: shapes swap and the push changes side."""
    return params.replace(alpha=params.beta, beta=params.alpha, direction=params.direction.flipped())


def pdf(x, params: PushBetaParams, log_scale: bool = False, config: QuadratureConfig = DEFAULT_CONFIG):
    xs = np.asarray(x, dtype=float)
    inside = (xs >= 0.0) & (xs <= 1.0)
    shapes = params.reduced_shapes()
    with np.errstate(divide="ignore", invalid="ignore"):
        if shapes is not None:
            dens = np.where(inside, log_kernel(np.where(inside, xs, 0.5), params) - special.betaln(*shapes), -np.inf)
        else:
            dens = np.where(inside, log_kernel(np.where(inside, xs, 0.5), params) - log_normalizer(params, config), -np.inf)
    if not log_scale:
        dens = np.exp(dens)
    return _out(dens)


def _log_cdf_scalar(x: float, params: PushBetaParams, config: QuadratureConfig) -> float:
    if x <= 0.0:
        return -math.inf
    if x >= 1.0:
        return 0.0
    shapes = params.reduced_shapes()
    if shapes is not None:
        return float(stats.beta.logcdf(x, *shapes))
    value = log_integral(LogIntegralRequest(x, params), config) - log_normalizer(params, config)
    return min(value, 0.0)


def _log_sf_scalar(x: float, params: PushBetaParams, config: QuadratureConfig) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return -math.inf
    shapes = params.reduced_shapes()
    if shapes is not None:
        return float(stats.beta.logsf(x, *shapes))
    lower = _log_cdf_scalar(x, params, config)
    if lower <= -math.log(2.0):
        return log1mexp(lower)
    return _log_cdf_scalar(1.0 - x, reflect(params), config)


def cdf(
    x,
    params: PushBetaParams,
    lower_tail: bool = True,
    log_scale: bool = False,
    config: QuadratureConfig = DEFAULT_CONFIG,
):
    """Distribution function; the upper tail is taken from the mirrored distribution when it is small."""
    xs = np.asarray(x, dtype=float)
    vectorised = (
        config.mode is QuadratureMode.QUANTILE_MIDPOINT
        and params.reduced_shapes() is None
        and xs.ndim > 0
        and xs.size > 1
    )
    if vectorised and lower_tail:
        clipped = np.clip(xs, 0.0, 1.0)
        logs = np.minimum(log_integral_many(clipped, params, config.node_count) - log_normalizer(params, config), 0.0)
        logs = np.where(xs >= 1.0, 0.0, np.where(xs <= 0.0, -np.inf, logs))
    else:
        scalar = _log_cdf_scalar if lower_tail else _log_sf_scalar
        logs = np.vectorize(lambda v: scalar(float(v), params, config), otypes=[float])(xs)
    if not log_scale:
        logs = np.exp(logs)
    return _out(logs)


def _lower_tail_logs(p: float, lower_tail: bool, log_p: bool) -> tuple[float, float]:
    """(log lower-tail probability, log upper-tail probability) for one input probability."""
    if log_p:
        lp = float(p)
        if lp > 0.0 or math.isnan(lp):
            raise ParameterError(f"log probability must be <= 0, got {p!r}")
    else:
        prob = float(p)
        if not 0.0 <= prob <= 1.0:
            raise ParameterError(f"probability must lie in [0, 1], got {p!r}")
        lp = math.log(prob) if prob > 0.0 else -math.inf
    other = log1mexp(lp) if lp > -math.inf else 0.0
    return (lp, other) if lower_tail else (other, lp)


def _solve_lower(target: float, params: PushBetaParams, config: QuadratureConfig) -> float:
    """x with log cdf(x) = target for target <= log(1/2)."""
    if target == -math.inf:
        return 0.0
    shapes = params.reduced_shapes()
    if shapes is not None:
        return float(stats.beta.ppf(math.exp(target), *shapes))

    def gap(v: float) -> float:
        return _log_cdf_scalar(v, params, config) - target

    hi, lo = 1.0, 0.5
    while gap(lo) >= 0.0:
        hi, lo = lo, lo / 2.0
        if lo < _TINY:
            return lo
    return float(optimize.brentq(gap, lo, hi, xtol=_TINY, rtol=4.0 * np.finfo(float).eps, maxiter=200))


def _quantile_scalar(p: float, params: PushBetaParams, lower_tail: bool, log_p: bool, config: QuadratureConfig) -> float:
    lower, upper = _lower_tail_logs(p, lower_tail, log_p)
    if lower == -math.inf:
        return 0.0
    if upper == -math.inf:
        return 1.0
    if lower <= upper:
        return _solve_lower(lower, params, config)
    return 1.0 - _solve_lower(upper, reflect(params), config)


def quantile(
    p,
    params: PushBetaParams,
    lower_tail: bool = True,
    log_p: bool = False,
    config: QuadratureConfig = DEFAULT_CONFIG,
):
    """Inverse of ``cdf`` by bracketed root finding on the log scale.

    The smaller tail is inverted directly, the other one through the mirrored
    distribution, so both ends keep full relative precision.
    """
    ps = np.asarray(p, dtype=float)
    out = np.vectorize(lambda v: _quantile_scalar(float(v), params, lower_tail, log_p, config), otypes=[float])(ps)
    return _out(out)


class _InverseCdfTable:
    """Exact cumulative masses on a breakpoint grid, inverted segment by segment."""

    def __init__(self, params: PushBetaParams, config: QuadratureConfig):
        self.params = params
        self.config = config
        grid = self._initial_grid()
        for round_ in range(_TABLE_REFINE_ROUNDS + 1):
            log_masses = np.array([log_segment_integral(lo, hi, params, config) for lo, hi in zip(grid[:-1], grid[1:])])
            total = float(np.logaddexp.reduce(log_masses))
            masses = np.exp(log_masses - total)
            heavy = np.flatnonzero(masses > 2.0 / _TABLE_SEGMENTS)
            if heavy.size == 0 or round_ == _TABLE_REFINE_ROUNDS:
                break
            midpoints = (grid[heavy] + grid[heavy + 1]) / 2.0
            grid = np.unique(np.concatenate([grid, midpoints]))
        self.grid = grid
        self.log_total = total
        self.cumulative = np.concatenate([[0.0], np.cumsum(masses)])
        self.cumulative[-1] = 1.0

    def _initial_grid(self) -> np.ndarray:
        p = self.params
        if p.is_left:
            a, b = p.alpha, p.beta + p.gamma
        else:
            a, b = p.alpha + p.gamma, p.beta
        probs = (np.arange(1, _TABLE_SEGMENTS) / _TABLE_SEGMENTS)
        inner = stats.beta.ppf(probs, a, b)
        inner = inner[(inner > 0.0) & (inner < 1.0)]
        uniform = np.linspace(0.0, 1.0, _TABLE_SEGMENTS // 4 + 1)
        return np.unique(np.concatenate([uniform, inner]))

    def _segment_mass(self, lo: np.ndarray, x: np.ndarray) -> np.ndarray:
        half = (x - lo) / 2.0
        points = lo[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
        dens = np.exp(log_kernel(points, self.params) - self.log_total)
        return half * (dens @ _GL_WEIGHTS)

    def _exact_cdf(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return 1.0
        j = int(np.searchsorted(self.grid, x, side="right")) - 1
        lo = float(self.grid[j])
        if x <= lo:
            return float(self.cumulative[j])
        inner = math.exp(log_segment_integral(lo, x, self.params, self.config) - self.log_total)
        return float(self.cumulative[j]) + inner

    def invert(self, u: np.ndarray) -> np.ndarray:
        seg = np.clip(np.searchsorted(self.cumulative, u, side="right") - 1, 0, self.grid.size - 2)
        out = np.empty_like(u)
        last = self.grid.size - 2
        ends = (seg == 0) | (seg == last)

        for idx in np.flatnonzero(ends):
            j = seg[idx]
            lo, hi = float(self.grid[j]), float(self.grid[j + 1])
            target = float(u[idx])
            out[idx] = optimize.brentq(lambda v: self._exact_cdf(v) - target, lo, hi, xtol=1e-15, rtol=1e-14)

        inner = np.flatnonzero(~ends)
        if inner.size:
            out[inner] = self._newton(u[inner], seg[inner])
        return out

    def _newton(self, u: np.ndarray, seg: np.ndarray) -> np.ndarray:
        lo = self.grid[seg].astype(float)
        hi = self.grid[seg + 1].astype(float)
        base = self.cumulative[seg]
        span = self.cumulative[seg + 1] - base
        frac = np.where(span > 0.0, (u - base) / np.where(span > 0.0, span, 1.0), 0.5)
        x = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
        left, right = lo.copy(), hi.copy()
        active = np.ones(u.shape, dtype=bool)
        for _ in range(100):
            if not active.any():
                break
            ia = np.flatnonzero(active)
            err = base[ia] + self._segment_mass(lo[ia], x[ia]) - u[ia]
            done = np.abs(err) <= _NEWTON_TOL
            active[ia[done]] = False
            below = err < 0.0
            left[ia] = np.where(below, x[ia], left[ia])
            right[ia] = np.where(below, right[ia], x[ia])
            dens = np.exp(log_kernel(x[ia], self.params) - self.log_total)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = x[ia] - err / dens
            bad = ~np.isfinite(step) | (step <= left[ia]) | (step >= right[ia])
            step = np.where(bad, (left[ia] + right[ia]) / 2.0, step)
            stalled = (right[ia] - left[ia]) <= 4.0 * np.finfo(float).eps * np.maximum(np.abs(x[ia]), _TINY)
            active[ia[stalled]] = False
            x[ia] = np.where(done, x[ia], step)
        return x


@lru_cache(maxsize=8)
def _inverse_table(params: PushBetaParams, config: QuadratureConfig) -> _InverseCdfTable:
    return _InverseCdfTable(params, config)


def sample(n: int, params: PushBetaParams, seed: int | None = None, config: QuadratureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Inverse-transform draws from a seeded ``numpy.random.default_rng`` (PCG64)."""
    if int(n) != n or n < 0:
        raise ParameterError(f"sample size must be a nonnegative integer, got {n!r}")
    rng = np.random.default_rng(seed)
    u = rng.random(int(n))
    if n == 0:
        return np.empty(0)
    shapes = params.reduced_shapes()
    if shapes is not None:
        draws = stats.beta.ppf(u, *shapes)
    else:
        draws = _inverse_table(params, config).invert(u)
    return np.clip(draws, _TINY, _BELOW_ONE)


def raw_moment(k: int, params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    if int(k) != k or k < 1:
        raise ParameterError(f"moment order must be a positive integer, got {k!r}")
    shifted = params.replace(alpha=params.alpha + int(k))
    return math.exp(log_normalizer(shifted, config) - log_normalizer(params, config))


def mean_variance(params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> tuple[float, float]:
    mean = raw_moment(1, params, config)
    variance = raw_moment(2, params, config) - mean * mean
    if variance < 0.0:
        if variance < VARIANCE_WARN_LEVEL:
            logger.warning("variance_clamped", extra={"fields": {"variance": variance, **params.as_dict()}})
            warnings.warn(f"negative variance {variance:.3e} clamped to 0", RuntimeWarning, stacklevel=2)
        variance = 0.0
    return mean, variance


def _digamma_logs(a: float, b: float) -> tuple[float, float]:
    total = special.digamma(a + b)
    return float(special.digamma(a) - total), float(special.digamma(b) - total)


def expected_logs(params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> ExpectedLogs:
    """Means of log X, log(1 - X) and the log push factor."""
    phi = params.phi
    if params.is_left:
        def push(x: float) -> float:
            return math.log1p(-x * phi)

        def push_vec(x: np.ndarray) -> np.ndarray:
            return np.log1p(-x * phi)
    else:
        def push(x: float) -> float:
            return math.log1p(-phi * (1.0 - x))

        def push_vec(x: np.ndarray) -> np.ndarray:
            return np.log1p(-phi * (1.0 - x))

    shapes = params.reduced_shapes()
    if shapes is not None:
        e_x, e_1mx = _digamma_logs(*shapes)
    else:
        log_norm = log_normalizer(params, config)
        e_x = expectation(math.log, params, config, np.log, log_norm)
        e_1mx = expectation(lambda v: math.log1p(-v), params, config, lambda v: np.log1p(-v), log_norm)

    if phi == 0.0:
        e_push = 0.0
    elif phi == 1.0:
        e_push = e_1mx if params.is_left else e_x
    else:
        e_push = expectation(push, params, config, push_vec, log_normalizer(params, config))
    return ExpectedLogs(e_log_x=min(e_x, 0.0), e_log_1mx=min(e_1mx, 0.0), e_log_push=min(e_push, 0.0))


def entropy_neg_log(params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """Mean of -log X, reported as the entropy of the family (not the differential entropy)."""
    return -expected_logs(params, config).e_log_x
