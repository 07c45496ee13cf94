from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from scipy import special

from .distribution import expected_logs, pdf
from .params import Direction, ParameterError, PushBetaParams
from .quadrature import DEFAULT_CONFIG, QuadratureConfig, QuadratureError, expectation, log_kernel

logger = logging.getLogger(__name__)

ARMIJO_SLOPE = 1e-4
MAX_HALVINGS = 40
MAX_STEP = 5.0
_EDGE = 1e-12


class FitError(RuntimeError):
    pass


class StepControl(str, Enum):
    BACKTRACKING_LINE_SEARCH = "backtracking"


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-6
    step_control: StepControl = StepControl.BACKTRACKING_LINE_SEARCH
    fix_phi: float | None = None

    def __post_init__(self) -> None:
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ParameterError(f"max_iterations must be a positive integer, got {self.max_iterations!r}")
        if not self.gradient_tolerance > 0:
            raise ParameterError(f"gradient_tolerance must be positive, got {self.gradient_tolerance!r}")
        if self.fix_phi is not None and not 0.0 <= self.fix_phi <= 1.0:
            raise ParameterError(f"fix_phi must lie in [0, 1], got {self.fix_phi!r}")
        object.__setattr__(self, "step_control", StepControl(self.step_control))


@dataclass(frozen=True)
class ScoreVector:
    d_alpha: float
    d_beta: float
    d_gamma: float
    d_phi: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.d_alpha, self.d_beta, self.d_gamma, self.d_phi

    def as_dict(self) -> dict[str, float]:
        return {"d_alpha": self.d_alpha, "d_beta": self.d_beta, "d_gamma": self.d_gamma, "d_phi": self.d_phi}


@dataclass(frozen=True)
class MomentResiduals:
    r1: float
    r2: float
    r3: float

    def as_dict(self) -> dict[str, float]:
        return {"r1": self.r1, "r2": self.r2, "r3": self.r3}


@dataclass(frozen=True)
class FitResult:
    params: PushBetaParams
    log_likelihood: float
    converged: bool
    iterations: int
    gradient_norm: float
    score_norm: float = math.nan

    def as_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.as_dict(),
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "score_norm": self.score_norm,
        }


def _as_data(data: Sequence[float]) -> np.ndarray:
    xs = np.asarray(data, dtype=float).ravel()
    if xs.size == 0:
        raise ParameterError("data must not be empty")
    if np.any(~np.isfinite(xs)) or np.any((xs < 0.0) | (xs > 1.0)):
        raise ParameterError("data values must lie in [0, 1]")
    return xs


def _interior(data: Sequence[float]) -> np.ndarray:
    xs = _as_data(data)
    if np.any((xs <= 0.0) | (xs >= 1.0)):
        raise ParameterError("score needs data strictly inside (0, 1)")
    return xs


def _push_feature(xs: np.ndarray, params: PushBetaParams) -> np.ndarray:
    if params.is_left:
        return np.log1p(-xs * params.phi)
    return np.log1p(-params.phi * (1.0 - xs))


def _phi_feature(xs: np.ndarray, params: PushBetaParams) -> np.ndarray:
    """Derivative of the log push factor in phi, per unit of gamma."""
    if params.is_left:
        return -xs / (1.0 - xs * params.phi)
    return (xs - 1.0) / (1.0 - params.phi + xs * params.phi)


def log_likelihood(data: Sequence[float], params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    xs = _as_data(data)
    edges = xs[(xs == 0.0) | (xs == 1.0)]
    if edges.size and np.any(np.asarray(log_kernel(edges, params)) == math.inf):
        raise ParameterError("boundary observation has infinite density under these parameters")
    return float(np.sum(pdf(xs, params, log_scale=True, config=config)))


def _phi_expectation(params: PushBetaParams, config: QuadratureConfig) -> float:
    phi = params.phi
    if params.is_left:
        return expectation(lambda v: -v / (1.0 - v * phi), params, config, lambda v: -v / (1.0 - v * phi))
    return expectation(
        lambda v: (v - 1.0) / (1.0 - phi + v * phi),
        params,
        config,
        lambda v: (v - 1.0) / (1.0 - phi + v * phi),
    )


def _observation_scores(xs: np.ndarray, params: PushBetaParams, config: QuadratureConfig) -> np.ndarray:
    """Per-observation score rows (alpha, beta, gamma, phi)."""
    logs = expected_logs(params, config)
    rows = np.empty((xs.size, 4))
    rows[:, 0] = np.log(xs) - logs.e_log_x
    rows[:, 1] = np.log1p(-xs) - logs.e_log_1mx
    rows[:, 2] = _push_feature(xs, params) - logs.e_log_push
    if params.gamma == 0.0:
        rows[:, 3] = 0.0
    else:
        rows[:, 3] = params.gamma * (_phi_feature(xs, params) - _phi_expectation(params, config))
    return rows


def score(data: Sequence[float], params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> ScoreVector:
    """Gradient of the log-likelihood in (alpha, beta, gamma, phi)."""
    xs = _interior(data)
    total = _observation_scores(xs, params, config).sum(axis=0)
    d_phi = 0.0 if params.gamma == 0.0 else float(total[3])
    return ScoreVector(float(total[0]), float(total[1]), float(total[2]), d_phi)


def mom_residuals(data: Sequence[float], params: PushBetaParams, config: QuadratureConfig = DEFAULT_CONFIG) -> MomentResiduals:
    """Sample log moments minus their expectations; zero at the MLE for fixed phi."""
    xs = _interior(data)
    logs = expected_logs(params, config)
    return MomentResiduals(
        r1=float(np.mean(np.log(xs)) - logs.e_log_x),
        r2=float(np.mean(np.log1p(-xs)) - logs.e_log_1mx),
        r3=float(np.mean(_push_feature(xs, params)) - logs.e_log_push),
    )


def default_init(data: Sequence[float], direction: Direction = Direction.LEFT, fix_phi: float | None = None) -> PushBetaParams:
    """Method-of-moments beta start with gamma = 0.5 and phi = 0.5 unless phi is fixed."""
    xs = _as_data(data)
    mean = float(np.mean(xs))
    var = float(np.var(xs))
    common = mean * (1.0 - mean) / var - 1.0 if var > 0.0 else -1.0
    if common > 0.0 and 0.0 < mean < 1.0:
        alpha, beta = mean * common, (1.0 - mean) * common
    else:
        alpha, beta = 1.0, 1.0
    phi = 0.5 if fix_phi is None else fix_phi
    return PushBetaParams(alpha, beta, 0.5, phi, Direction(direction))


class _Transform:
    """log for alpha, beta, gamma and logit for phi; phi drops out when fixed."""

    def __init__(self, direction: Direction, fix_phi: float | None):
        self.direction = direction
        self.fix_phi = fix_phi

    @property
    def size(self) -> int:
        return 3 if self.fix_phi is not None else 4

    def to_free(self, params: PushBetaParams) -> np.ndarray:
        gamma = max(params.gamma, 1e-3)
        values = [math.log(params.alpha), math.log(params.beta), math.log(gamma)]
        if self.fix_phi is None:
            values.append(float(special.logit(min(max(params.phi, 1e-3), 1.0 - 1e-3))))
        return np.array(values)

    def to_params(self, u: np.ndarray) -> PushBetaParams:
        phi = self.fix_phi if self.fix_phi is not None else float(special.expit(u[3]))
        phi = min(max(phi, 0.0), 1.0)
        if self.fix_phi is None:
            phi = min(max(phi, _EDGE), 1.0 - _EDGE)
        return PushBetaParams(math.exp(u[0]), math.exp(u[1]), math.exp(u[2]), phi, self.direction)

    def jacobian(self, params: PushBetaParams) -> np.ndarray:
        scale = [params.alpha, params.beta, params.gamma]
        if self.fix_phi is None:
            scale.append(params.phi * (1.0 - params.phi))
        return np.array(scale)


def _safe_log_likelihood(xs: np.ndarray, params: PushBetaParams, config: QuadratureConfig) -> float:
    try:
        value = log_likelihood(xs, params, config)
    except (QuadratureError, ParameterError, OverflowError):
        return -math.inf
    return value if not math.isnan(value) else -math.inf


def fit_mle(
    data: Sequence[float],
    init: PushBetaParams | None = None,
    config: FitConfig = FitConfig(),
    quadrature: QuadratureConfig = DEFAULT_CONFIG,
) -> FitResult:
    """Maximum likelihood by ascent in log/logit coordinates.

    Directions come from the outer product of per-observation scores, each step is
    accepted by an Armijo backtracking search, and convergence is judged on the mean
    score in the free coordinates. ``score_norm`` reports the norm of the summed
    score in the natural coordinates of the fitted parameters.
    """
    xs = _interior(data)
    if config.fix_phi is None and xs.size < 4:
        raise FitError(f"need at least 4 observations to fit four parameters, got {xs.size}")
    if init is None:
        init = default_init(xs, fix_phi=config.fix_phi)
    transform = _Transform(init.direction, config.fix_phi)
    u = transform.to_free(init)
    params = transform.to_params(u)
    current = _safe_log_likelihood(xs, params, quadrature)
    if not math.isfinite(current):
        raise FitError(f"log-likelihood is not finite at the initial point {params.as_dict()}")

    n = xs.size
    converged = False
    grad_norm = math.inf
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        natural = _observation_scores(xs, params, quadrature)[:, : transform.size]
        rows = natural * transform.jacobian(params)
        grad = rows.sum(axis=0)
        grad_norm = float(np.linalg.norm(grad / n))
        logger.debug(
            "fit_iteration",
            extra={"fields": {"iteration": iterations, "log_likelihood": current, "gradient_norm": grad_norm}},
        )
        if grad_norm <= config.gradient_tolerance:
            converged = True
            break

        outer = rows.T @ rows
        try:
            direction = np.linalg.solve(outer + 1e-10 * np.trace(outer) * np.eye(transform.size), grad)
        except np.linalg.LinAlgError:
            direction = grad / n
        if not np.all(np.isfinite(direction)) or float(grad @ direction) <= 0.0:
            direction = grad / n
        largest = float(np.max(np.abs(direction)))
        if largest > MAX_STEP:
            direction = direction * (MAX_STEP / largest)

        slope = float(grad @ direction)
        step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            trial_u = u + step * direction
            trial = transform.to_params(trial_u)
            value = _safe_log_likelihood(xs, trial, quadrature)
            if value >= current + ARMIJO_SLOPE * step * slope:
                u, params, current = trial_u, trial, value
                accepted = True
                break
            step /= 2.0
        if not accepted:
            break
    else:
        natural = _observation_scores(xs, params, quadrature)[:, : transform.size]
        grad_norm = float(np.linalg.norm((natural * transform.jacobian(params)).sum(axis=0) / n))
        converged = grad_norm <= config.gradient_tolerance
    score_norm = float(np.linalg.norm(natural.sum(axis=0)))

    logger.info(
        "fit_finished",
        extra={
            "fields": {
                "converged": converged,
                "iterations": iterations,
                "log_likelihood": current,
                "gradient_norm": grad_norm,
                "score_norm": score_norm,
                **params.as_dict(),
            }
        },
    )
    return FitResult(params, current, converged, iterations, grad_norm, score_norm)
