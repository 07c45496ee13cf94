"""Log-scale integrals of the pushed beta kernel.

``log_integral`` returns log of the integral of the kernel over [0, r]. The
adaptive stage uses QUADPACK through scipy. Next to an endpoint where a shape
below one makes the kernel singular it integrates in u = x**alpha or
u = (1 - x)**beta, which leaves a bounded integrand. When the adaptive stage
reports a zero, a non-finite value or a poor error estimate the beta-quantile
midpoint estimator takes over. Its nodes come from the beta proposal that
absorbs the push term, so it stays finite when shapes run into the thousands;
as a fallback it is only accepted when a tenth of the nodes gives the same
value to within MIDPOINT_AGREEMENT on the log scale.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .params import Direction, ParameterError, PushBetaParams

logger = logging.getLogger(__name__)

ADAPTIVE_REL_TOL = 1e-10
FALLBACK_REL_ERROR = 1e-6
MIDPOINT_AGREEMENT = 1e-4
ADAPTIVE_LIMIT = 200
_BREAKPOINT_PROBS = (1e-3, 0.02, 0.16, 0.5, 0.84, 0.98, 0.999)
_PEAK_SAMPLE_COUNT = 65
_BELOW_ONE = float(np.nextafter(1.0, 0.0))
_SPLIT = 0.5
_TINY = float(np.finfo(float).tiny)


class QuadratureError(RuntimeError):
    pass


class QuadratureMode(str, Enum):
    ADAPTIVE = "adaptive"
    QUANTILE_MIDPOINT = "quantile"
    AUTO_FALLBACK = "auto"


@dataclass(frozen=True)
class QuadratureConfig:
    node_count: int = 10**6
    mode: QuadratureMode = QuadratureMode.AUTO_FALLBACK
    underflow_guard: bool = True
    rescale_peak: bool = True

    def __post_init__(self) -> None:
        if isinstance(self.node_count, bool) or int(self.node_count) != self.node_count or self.node_count < 1:
            raise ParameterError(f"node_count must be a positive integer, got {self.node_count!r}")
        object.__setattr__(self, "node_count", int(self.node_count))
        try:
            object.__setattr__(self, "mode", QuadratureMode(self.mode))
        except ValueError as exc:
            raise ParameterError(f"unknown quadrature mode {self.mode!r}") from exc


DEFAULT_CONFIG = QuadratureConfig()


@dataclass(frozen=True)
class LogIntegralRequest:
    upper_limit: float
    params: PushBetaParams

    def __post_init__(self) -> None:
        r = float(self.upper_limit)
        if not 0.0 <= r <= 1.0:
            raise ParameterError(f"upper limit must lie in [0, 1], got {self.upper_limit!r}")
        object.__setattr__(self, "upper_limit", r)


def _exponents(params: PushBetaParams) -> tuple[float, float, float]:
    """(alpha - 1, beta - 1, gamma) with phi = 1 folded into the shapes."""
    if params.is_absorbed_beta():
        a, b = params.reduced_shapes()
        return a - 1.0, b - 1.0, 0.0
    return params.alpha - 1.0, params.beta - 1.0, params.gamma


def log_kernel(x, params: PushBetaParams):
    """Unnormalised log density. -inf where the kernel vanishes, +inf at a singular endpoint."""
    xs = np.asarray(x, dtype=float)
    a1, b1, g = _exponents(params)
    out = special.xlogy(a1, xs) + special.xlog1py(b1, -xs)
    if g != 0.0:
        if params.is_left:
            out = out + special.xlog1py(g, -xs * params.phi)
        else:
            out = out + special.xlog1py(g, -params.phi * (1.0 - xs))
    if out.ndim == 0:
        return float(out)
    return out


def _scalar_log_kernel(params: PushBetaParams) -> Callable[[float], float]:
    a1, b1, g = _exponents(params)
    phi = params.phi
    left = params.is_left

    def fn(x: float) -> float:
        if x <= 0.0 or x >= 1.0:
            return log_kernel(x, params)
        value = a1 * math.log(x) + b1 * math.log1p(-x)
        if g:
            value += g * (math.log1p(-x * phi) if left else math.log1p(-phi * (1.0 - x)))
        return value

    return fn


def log_slope_ratio(x, phi: float):
    """log(1 - x*phi) - log(1 - x); nonnegative on [0, 1)."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs >= 1.0) or np.any(xs < 0.0):
        raise ParameterError("log_slope_ratio is defined for 0 <= x < 1")
    if not 0.0 <= phi <= 1.0:
        raise ParameterError(f"phi must lie in [0, 1], got {phi}")
    out = np.log1p(-xs * phi) - np.log1p(-xs)
    out = np.maximum(out, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


@lru_cache(maxsize=16)
def _cached_nodes(a: float, b: float, m: int) -> np.ndarray:
    probs = (2.0 * np.arange(1, m + 1) - 1.0) / (2.0 * m)
    nodes = stats.beta.ppf(probs, a, b)
    nodes.setflags(write=False)
    return nodes


def beta_quantile_nodes(a: float, b: float, m: int) -> np.ndarray:
    """Beta(a, b) quantiles at the midpoint probabilities (2i - 1) / 2m."""
    if not (a > 0 and b > 0):
        raise ParameterError(f"beta shapes must be positive, got ({a}, {b})")
    if int(m) != m or m < 1:
        raise ParameterError(f"node count must be a positive integer, got {m!r}")
    return _cached_nodes(float(a), float(b), int(m))


def log_weights(nodes: Sequence[float], r: float, side: Direction) -> np.ndarray:
    """Log weights standing in for the indicator of [0, r] (left) or [1 - r, 1] (right).

    Node i owns the cell (q[i-1], q[i]] with q[0] = 0; the weight is the log of the
    share of that cell inside the integration range.
    """
    q = np.asarray(nodes, dtype=float)
    m = q.size
    w = np.full(m, -np.inf)
    if m == 0:
        return w
    side = Direction(side)
    if side is Direction.LEFT:
        k = int(np.searchsorted(q, r, side="right"))
        w[:k] = 0.0
        if k < m:
            prev = q[k - 1] if k > 0 else 0.0
            with np.errstate(divide="ignore"):
                w[k] = np.log(r - prev) - np.log(q[k] - prev)
        return w

    t = 1.0 - r
    j = int(np.searchsorted(q, t, side="left"))
    if j < m:
        prev = q[j - 1] if j > 0 else 0.0
        if prev >= t:
            w[j] = 0.0
        else:
            with np.errstate(divide="ignore"):
                w[j] = np.log(q[j] - t) - np.log(q[j] - prev)
        w[j + 1 :] = 0.0
    return w


def log_sum_exp(values) -> float:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return -math.inf
    if np.any(np.isnan(v)):
        return math.nan
    m = float(np.max(v))
    if m == math.inf:
        return math.inf
    if m == -math.inf:
        return -math.inf
    return float(special.logsumexp(v))


def _proposal(params: PushBetaParams) -> tuple[float, float, float]:
    """Node shapes and log prefactor of the quantile estimator."""
    a, b, g = params.alpha, params.beta, params.gamma
    if params.is_left:
        na, nb = a, b + g
    else:
        na, nb = b, a + g
    return na, nb, float(special.betaln(na, nb))


def _push_logs(nodes: np.ndarray, params: PushBetaParams) -> np.ndarray:
    if params.gamma == 0.0 or params.phi == 1.0:
        return np.zeros_like(nodes)
    return params.gamma * log_slope_ratio(np.minimum(nodes, _BELOW_ONE), params.phi)


def quantile_midpoint_log_integral(r: float, params: PushBetaParams, node_count: int) -> float:
    if r <= 0.0:
        return -math.inf
    na, nb, log_prefactor = _proposal(params)
    nodes = beta_quantile_nodes(na, nb, node_count)
    w = log_weights(nodes, r, params.direction)
    return log_sum_exp(w + _push_logs(nodes, params)) - math.log(node_count) + log_prefactor


def log_integral_many(rs, params: PushBetaParams, node_count: int = DEFAULT_CONFIG.node_count) -> np.ndarray:
    """Quantile-midpoint log integrals for a vector of upper limits sharing one node set."""
    r = np.asarray(rs, dtype=float)
    if np.any((r < 0.0) | (r > 1.0)):
        raise ParameterError("upper limits must lie in [0, 1]")
    na, nb, log_prefactor = _proposal(params)
    q = beta_quantile_nodes(na, nb, node_count)
    s = _push_logs(q, params)
    m = q.size
    out = np.full(r.shape, -np.inf)
    flat_r = r.ravel()
    flat_out = out.reshape(-1)

    if params.is_left:
        head = np.logaddexp.accumulate(s)
        k = np.searchsorted(q, flat_r, side="right")
        for idx, (ri, ki) in enumerate(zip(flat_r, k)):
            if ri <= 0.0:
                continue
            total = head[ki - 1] if ki > 0 else -math.inf
            if ki < m:
                prev = q[ki - 1] if ki > 0 else 0.0
                total = np.logaddexp(total, math.log(ri - prev) - math.log(q[ki] - prev) + s[ki])
            flat_out[idx] = total
    else:
        tail = np.logaddexp.accumulate(s[::-1])[::-1]
        t = 1.0 - flat_r
        j = np.searchsorted(q, t, side="left")
        for idx, (ti, ji) in enumerate(zip(t, j)):
            if ti >= 1.0 or ji >= m:
                continue
            prev = q[ji - 1] if ji > 0 else 0.0
            if prev >= ti:
                flat_out[idx] = tail[ji]
                continue
            total = tail[ji + 1] if ji + 1 < m else -math.inf
            flat_out[idx] = np.logaddexp(total, math.log(q[ji] - ti) - math.log(q[ji] - prev) + s[ji])

    finite = np.isfinite(out)
    out[finite] += log_prefactor - math.log(node_count)
    return out


def _closed_form(r: float, params: PushBetaParams) -> float | None:
    shapes = params.reduced_shapes()
    if shapes is None:
        return None
    a, b = shapes
    if r >= 1.0:
        return float(special.betaln(a, b))
    return float(special.betaln(a, b) + stats.beta.logcdf(r, a, b))


def _x_space_proposal(params: PushBetaParams) -> tuple[float, float]:
    na, nb, _ = _proposal(params)
    if params.is_left:
        return na, nb
    return nb, na


def _exp_shifted(value: float) -> float:
    if value > 700.0:
        return math.inf
    return math.exp(value)


def _peak(lo: float, hi: float, params: PushBetaParams, fn: Callable[[float], float]) -> tuple[float, float]:
    """Largest log kernel over interior sample points of (lo, hi] and where it sits."""
    a, b = _x_space_proposal(params)
    probs = np.linspace(0.5, _PEAK_SAMPLE_COUNT - 0.5, _PEAK_SAMPLE_COUNT) / _PEAK_SAMPLE_COUNT
    samples = np.concatenate([stats.beta.ppf(probs, a, b), lo + (hi - lo) * probs, [hi]])
    samples = samples[(samples > lo) & (samples <= hi) & (samples > 0.0) & (samples < 1.0)]
    best_value, best_x = -math.inf, (lo + hi) / 2.0
    for x in samples:
        value = fn(float(x))
        if math.isfinite(value) and value > best_value:
            best_value, best_x = value, float(x)
    if not math.isfinite(best_value):
        return 0.0, best_x
    return best_value, best_x


def _breakpoints(lo: float, hi: float, params: PushBetaParams, peak_at: float) -> list[float]:
    a, b = _x_space_proposal(params)
    points = {float(p) for p in stats.beta.ppf(_BREAKPOINT_PROBS, a, b)}
    points.add(peak_at)
    return sorted(p for p in points if lo < p < hi)


def _xlog(coef: float, value: float) -> float:
    if coef == 0.0:
        return 0.0
    if value <= 0.0:
        return -math.inf if coef > 0.0 else math.inf
    return coef * math.log(value)


def _log_factor(params: PushBetaParams, lower: bool, upper: bool) -> Callable[[float, float], float]:
    """Log kernel at (x, 1 - x) keeping only the requested endpoint factors."""
    a1, b1, g = _exponents(params)
    phi = params.phi
    left = params.is_left

    def fn(x: float, y: float) -> float:
        value = 0.0
        if lower:
            value += _xlog(a1, x)
        if upper:
            value += _xlog(b1, y)
        if g:
            value += g * (math.log1p(-x * phi) if left else math.log1p(-phi * y))
        return value

    return fn


def _quad(integrand: Callable[[float], float], lo: float, hi: float, points: list[float]) -> tuple[float, float]:
    result = integrate.quad(
        integrand,
        lo,
        hi,
        points=points or None,
        epsabs=0.0,
        epsrel=ADAPTIVE_REL_TOL,
        limit=ADAPTIVE_LIMIT,
        full_output=1,
    )
    value, abserr = float(result[0]), float(result[1])
    if len(result) > 3:
        logger.debug("quadpack_warning", extra={"fields": {"message": str(result[3]).strip(), "abserr": abserr}})
    return value, abserr


def _plain_piece(
    lo: float,
    hi: float,
    params: PushBetaParams,
    config: QuadratureConfig,
    transform: Callable[[float], float] | None,
) -> tuple[float, float, float]:
    fn = _scalar_log_kernel(params)
    shift, peak_at = _peak(lo, hi, params, fn) if config.rescale_peak else (0.0, (lo + hi) / 2.0)

    def integrand(x: float) -> float:
        weight = _exp_shifted(fn(x) - shift)
        return weight if transform is None else transform(x) * weight

    value, abserr = _quad(integrand, lo, hi, _breakpoints(lo, hi, params, peak_at))
    return value, abserr, shift


def _mapped_piece(
    lo: float,
    hi: float,
    params: PushBetaParams,
    config: QuadratureConfig,
    transform: Callable[[float], float] | None,
    at_zero: bool,
) -> tuple[float, float, float]:
    """Piece with a singular endpoint, integrated in u = x**a (at_zero) or u = (1 - x)**b.

    The substitution absorbs the endpoint power, leaving a bounded integrand in u.
    """
    a1, b1, _ = _exponents(params)
    power = a1 + 1.0 if at_zero else b1 + 1.0
    rest = _log_factor(params, lower=not at_zero, upper=at_zero)
    if at_zero:
        u_lo, u_hi = lo**power, hi**power

        def coords(u: float) -> tuple[float, float]:
            x = u ** (1.0 / power)
            return x, 1.0 - x
    else:
        u_lo, u_hi = (1.0 - hi) ** power, (1.0 - lo) ** power

        def coords(u: float) -> tuple[float, float]:
            y = u ** (1.0 / power)
            return 1.0 - y, y

    def log_rest(u: float) -> float:
        return rest(*coords(u))

    shift = 0.0
    if config.rescale_peak:
        samples = [log_rest(float(u)) for u in np.linspace(u_lo, u_hi, _PEAK_SAMPLE_COUNT)]
        finite = [v for v in samples if math.isfinite(v)]
        shift = max(finite) if finite else 0.0

    def integrand(u: float) -> float:
        x, y = coords(u)
        weight = _exp_shifted(rest(x, y) - shift)
        if transform is None or weight == 0.0:
            return weight
        return transform(min(max(x, _TINY), _BELOW_ONE)) * weight

    mapped = [(p**power if at_zero else (1.0 - p) ** power) for p in _breakpoints(lo, hi, params, (lo + hi) / 2.0)]
    points = sorted(u for u in mapped if u_lo < u < u_hi)
    value, abserr = _quad(integrand, u_lo, u_hi, points)
    return value / power, abserr / power, shift


def _adaptive(
    lo: float,
    hi: float,
    params: PushBetaParams,
    config: QuadratureConfig,
    transform: Callable[[float], float] | None = None,
) -> tuple[float, float, float]:
    """QUADPACK integral of transform(x) * exp(log_kernel(x) - shift) over [lo, hi].

    Returns (value, abserr, shift). Pieces next to an endpoint where the kernel
    is singular go through ``_mapped_piece``.
    """
    a1, b1, _ = _exponents(params)
    singular_zero = a1 < 0.0 and lo < _SPLIT
    singular_one = b1 < 0.0 and hi > _SPLIT
    if not (singular_zero or singular_one):
        return _plain_piece(lo, hi, params, config, transform)
    if not singular_one:
        return _mapped_piece(lo, hi, params, config, transform, at_zero=True)
    if not singular_zero:
        return _mapped_piece(lo, hi, params, config, transform, at_zero=False)

    pieces = [
        _mapped_piece(lo, _SPLIT, params, config, transform, at_zero=True),
        _mapped_piece(_SPLIT, hi, params, config, transform, at_zero=False),
    ]
    shift = max(s for _, _, s in pieces)
    value = sum(v * math.exp(s - shift) for v, _, s in pieces)
    abserr = sum(e * math.exp(s - shift) for _, e, s in pieces)
    return value, abserr, shift


def _adaptive_rejection(value: float, abserr: float, config: QuadratureConfig) -> str | None:
    if config.underflow_guard:
        if not math.isfinite(value):
            return "non_finite"
        if value <= 0.0:
            return "zero"
    if value > 0.0 and abserr > FALLBACK_REL_ERROR * value:
        return "error_estimate"
    return None


def _log_event(event: str, reason: str, r: float, params: PushBetaParams, level: int) -> None:
    logger.log(level, event, extra={"fields": {"reason": reason, "r": r, **params.as_dict()}})


def _midpoint_stage(r: float, params: PushBetaParams, config: QuadratureConfig) -> float:
    """Quantile-midpoint log integral; as a fallback it must agree with the estimate on a tenth of the nodes."""
    estimate = quantile_midpoint_log_integral(r, params, config.node_count)
    if not math.isfinite(estimate):
        _log_event("quadrature_failure", "quantile_estimate", r, params, logging.ERROR)
        raise QuadratureError(f"quantile-midpoint quadrature failed for r={r} and {params.as_dict()}")
    coarse_count = config.node_count // 10
    if config.mode is QuadratureMode.QUANTILE_MIDPOINT or coarse_count < 1:
        return estimate
    coarse = quantile_midpoint_log_integral(r, params, coarse_count)
    if not abs(coarse - estimate) <= MIDPOINT_AGREEMENT:
        _log_event("quadrature_failure", "quantile_disagreement", r, params, logging.ERROR)
        raise QuadratureError(
            f"quantile-midpoint estimates with {coarse_count} and {config.node_count} nodes disagree "
            f"({coarse} vs {estimate}) for r={r} and {params.as_dict()}"
        )
    return estimate


def log_integral(request: LogIntegralRequest, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """log of the kernel integral over [0, r].

    Raises QuadratureError when neither stage produces a usable value.
    """
    r, params = request.upper_limit, request.params
    if r <= 0.0:
        return -math.inf
    exact = _closed_form(r, params)
    if exact is not None:
        return exact

    if config.mode is not QuadratureMode.QUANTILE_MIDPOINT:
        value, abserr, shift = _adaptive(0.0, r, params, config)
        reason = _adaptive_rejection(value, abserr, config)
        if reason is None:
            return math.log(value) + shift if value > 0.0 else -math.inf
        if config.mode is QuadratureMode.ADAPTIVE:
            _log_event("quadrature_failure", reason, r, params, logging.ERROR)
            raise QuadratureError(f"adaptive quadrature failed ({reason}) for r={r} and {params.as_dict()}")
        _log_event("quadrature_fallback", reason, r, params, logging.INFO)

    return _midpoint_stage(r, params, config)


def _weighted_mean(vector_fn: Callable[[np.ndarray], np.ndarray], params: PushBetaParams, node_count: int) -> float:
    na, nb, _ = _proposal(params)
    nodes = beta_quantile_nodes(na, nb, node_count)
    x = nodes if params.is_left else 1.0 - nodes
    x = np.clip(x, np.finfo(float).tiny, _BELOW_ONE)
    logw = _push_logs(nodes, params)
    weights = np.exp(logw - np.max(logw))
    return float(np.sum(weights * vector_fn(x)) / np.sum(weights))


def expectation(
    fn: Callable[[float], float],
    params: PushBetaParams,
    config: QuadratureConfig = DEFAULT_CONFIG,
    vector_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    log_norm: float | None = None,
) -> float:
    """Mean of fn(X) under the pushed beta distribution.

    ``vector_fn`` is the numpy form of ``fn`` used by the quantile-midpoint stage;
    it defaults to ``np.vectorize(fn)``.
    """
    if config.mode is not QuadratureMode.QUANTILE_MIDPOINT:
        numerator, abserr, shift = _adaptive(0.0, 1.0, params, config, transform=fn)
        if log_norm is None:
            log_norm = log_integral(LogIntegralRequest(1.0, params), config)
        scale = math.exp(log_norm - shift) if math.isfinite(log_norm - shift) else math.inf
        usable = math.isfinite(numerator) and 0.0 < scale < math.inf
        if usable and (abserr <= FALLBACK_REL_ERROR * abs(numerator) or abserr <= 1e-9 * scale):
            return numerator / scale
        if config.mode is QuadratureMode.ADAPTIVE:
            _log_event("quadrature_failure", "expectation", 1.0, params, logging.ERROR)
            raise QuadratureError(f"adaptive expectation failed for {params.as_dict()}")
        _log_event("quadrature_fallback", "expectation", 1.0, params, logging.INFO)

    vector_fn = vector_fn or np.vectorize(fn, otypes=[float])
    result = _weighted_mean(vector_fn, params, config.node_count)
    if not math.isfinite(result):
        _log_event("quadrature_failure", "expectation", 1.0, params, logging.ERROR)
        raise QuadratureError(f"quantile-midpoint expectation failed for {params.as_dict()}")
    coarse_count = config.node_count // 10
    if config.mode is QuadratureMode.AUTO_FALLBACK and coarse_count >= 1:
        coarse = _weighted_mean(vector_fn, params, coarse_count)
        if not abs(coarse - result) <= MIDPOINT_AGREEMENT * max(1.0, abs(result)):
            _log_event("quadrature_failure", "quantile_disagreement", 1.0, params, logging.ERROR)
            raise QuadratureError(
                f"quantile-midpoint expectations disagree ({coarse} vs {result}) for {params.as_dict()}"
            )
    return result


def log1mexp(value: float) -> float:
    """log(1 - exp(value)) for value <= 0."""
    if value >= 0.0:
        return -math.inf
    if value > -math.log(2.0):
        return math.log(-math.expm1(value))
    return math.log1p(-math.exp(value))


def _log_difference(upper: float, lower: float) -> float:
    if lower == -math.inf:
        return upper
    return upper + log1mexp(min(lower - upper, 0.0))


def log_segment_integral(
    lo: float,
    hi: float,
    params: PushBetaParams,
    config: QuadratureConfig = DEFAULT_CONFIG,
) -> float:
    """log of the kernel integral over [lo, hi] for 0 <= lo < hi <= 1."""
    if not 0.0 <= lo < hi <= 1.0:
        raise ParameterError(f"segment must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")
    if params.reduced_shapes() is not None or config.mode is QuadratureMode.QUANTILE_MIDPOINT:
        upper = log_integral(LogIntegralRequest(hi, params), config)
        lower = log_integral(LogIntegralRequest(lo, params), config)
        return _log_difference(upper, lower)

    value, abserr, shift = _adaptive(lo, hi, params, config)
    reason = _adaptive_rejection(value, abserr, config)
    if reason is None and value > 0.0:
        return math.log(value) + shift
    if config.mode is QuadratureMode.ADAPTIVE:
        _log_event("quadrature_failure", reason or "zero", hi, params, logging.ERROR)
        raise QuadratureError(f"adaptive quadrature failed on [{lo}, {hi}] for {params.as_dict()}")
    _log_event("quadrature_fallback", reason or "zero", hi, params, logging.INFO)
    lower = _midpoint_stage(lo, params, config) if lo > 0.0 else -math.inf
    return _log_difference(_midpoint_stage(hi, params, config), lower)
