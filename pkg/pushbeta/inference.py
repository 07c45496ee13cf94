"""Bayesian updating for contaminated binary data.

Each observation is the product of the indicator of interest and an
independent contaminating indicator that passes with known probability phi.
Under the primary model an observed one means both events happened (success
probability theta * phi); under the absence model an observed one means the
event is absent and the contaminator passed (success probability
(1 - theta) * phi). The pushed beta family is conjugate to both.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from scipy import special

from .distribution import mean_variance
from .params import Direction, ParameterError, PushBetaParams
from .quadrature import DEFAULT_CONFIG, QuadratureConfig

logger = logging.getLogger(__name__)


class ModelVariant(str, Enum):
    PRIMARY_CONJUNCTION = "primary"
    ABSENCE_CONJUNCTION = "absence"

    @property
    def direction(self) -> Direction:
        return Direction.LEFT if self is ModelVariant.PRIMARY_CONJUNCTION else Direction.RIGHT

    def success_probability(self, theta: float, phi: float) -> float:
        if self is ModelVariant.PRIMARY_CONJUNCTION:
            return theta * phi
        return (1.0 - theta) * phi


@dataclass(frozen=True)
class BinarySample:
    n: int
    sum: int

    def __post_init__(self) -> None:
        for name in ("n", "sum"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ParameterError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not 0 <= self.sum <= self.n:
            raise ParameterError(f"need 0 <= sum <= n, got sum={self.sum}, n={self.n}")

    @classmethod
    def from_observations(cls, values: Iterable[int]) -> BinarySample:
        data = list(values)
        if any(v not in (0, 1) for v in data):
            raise ParameterError("binary observations must be 0 or 1")
        return cls(n=len(data), sum=sum(data))

    def pooled(self, other: BinarySample) -> BinarySample:
        return BinarySample(self.n + other.n, self.sum + other.sum)

    def as_dict(self) -> dict[str, int]:
        return {"n": self.n, "sum": self.sum}


@dataclass(frozen=True)
class KlProfile:
    theta0: float
    phi0: float
    phi: float
    n: int
    theta_star: float
    variant: ModelVariant
    divergence_at_star: float = 0.0
    curve: tuple[tuple[float, float], ...] = ()

    def as_dict(self) -> dict[str, Any]:
        return {
            "theta0": self.theta0,
            "phi0": self.phi0,
            "phi": self.phi,
            "n": self.n,
            "theta_star": self.theta_star,
            "variant": self.variant.value,
            "divergence_at_star": self.divergence_at_star,
        }


@dataclass(frozen=True)
class TrajectoryRecord:
    replication: int
    n: int
    post_mean: float
    post_sd: float
    theta_star: float
    abs_err: float

    def as_dict(self) -> dict[str, Any]:
        return {
            "replication": self.replication,
            "n": self.n,
            "post_mean": self.post_mean,
            "post_sd": self.post_sd,
            "theta_star": self.theta_star,
            "abs_err": self.abs_err,
        }


def _unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def posterior(prior: PushBetaParams, sample: BinarySample, variant: ModelVariant) -> PushBetaParams:
    """Conjugate update; ones feed the shape parameter and zeros feed the push intensity."""
    variant = ModelVariant(variant)
    if prior.direction is not variant.direction:
        raise ParameterError(
            f"{variant.value} model needs a {variant.direction.value}-pushed prior, got {prior.direction.value}"
        )
    zeros = sample.n - sample.sum
    if variant is ModelVariant.PRIMARY_CONJUNCTION:
        return prior.replace(alpha=prior.alpha + sample.sum, gamma=prior.gamma + zeros)
    return prior.replace(beta=prior.beta + sample.sum, gamma=prior.gamma + zeros)


def predictive_probability(
    post: PushBetaParams,
    variant: ModelVariant,
    config: QuadratureConfig = DEFAULT_CONFIG,
) -> float:
    """Probability that the next observation is a one."""
    mean, _ = mean_variance(post, config)
    return ModelVariant(variant).success_probability(mean, post.phi)


def survey_posterior(
    yes: int,
    no: int,
    truthful_probability: float,
    prior: PushBetaParams | None = None,
) -> PushBetaParams:
    """Posterior for a forced-response survey where a "No" can only come from a truthful respondent.

    Respondents answer truthfully with probability ``truthful_probability`` and say
    "Yes" otherwise, so a "No" has probability (1 - theta) * phi.
    """
    phi = _unit("truthful_probability", truthful_probability)
    if prior is None:
        prior = PushBetaParams(1.0, 1.0, 0.0, phi, Direction.RIGHT)
    elif prior.phi != phi:
        raise ParameterError("prior push proportion must equal the truthful-answer probability")
    sample = BinarySample(n=int(yes) + int(no), sum=int(no))
    return posterior(prior, sample, ModelVariant.ABSENCE_CONJUNCTION)


def kl_divergence(
    theta0: float,
    phi0: float,
    theta: float,
    phi: float,
    n: int,
    variant: ModelVariant,
) -> float:
    """KL divergence of n draws under (theta0, phi0) from n draws under (theta, phi)."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n!r}")
    variant = ModelVariant(variant)
    p0 = variant.success_probability(_unit("theta0", theta0), _unit("phi0", phi0))
    p = variant.success_probability(_unit("theta", theta), _unit("phi", phi))
    per_draw = float(special.rel_entr(p0, p) + special.rel_entr(1.0 - p0, 1.0 - p))
    return int(n) * max(per_draw, 0.0)


def kl_minimizer(theta0: float, phi0: float, phi: float, variant: ModelVariant) -> float:
    """Pseudo-true theta: the KL minimiser, clamped to [0, 1]."""
    theta0, phi0, phi = _unit("theta0", theta0), _unit("phi0", phi0), _unit("phi", phi)
    if phi == 0.0:
        raise ParameterError("theta is not identifiable when phi = 0")
    if ModelVariant(variant) is ModelVariant.PRIMARY_CONJUNCTION:
        raw = theta0 * phi0 / phi
    else:
        raw = (phi - phi0 + theta0 * phi0) / phi
    return min(max(raw, 0.0), 1.0)


def kl_profile(
    theta0: float,
    phi0: float,
    phi: float,
    n: int,
    variant: ModelVariant,
    grid_size: int = 101,
) -> KlProfile:
    variant = ModelVariant(variant)
    star = kl_minimizer(theta0, phi0, phi, variant)
    thetas = np.linspace(0.0, 1.0, int(grid_size)) if grid_size > 1 else np.array([star])
    curve = tuple((float(t), kl_divergence(theta0, phi0, float(t), phi, n, variant)) for t in thetas)
    return KlProfile(
        theta0=float(theta0),
        phi0=float(phi0),
        phi=float(phi),
        n=int(n),
        theta_star=star,
        variant=variant,
        divergence_at_star=kl_divergence(theta0, phi0, star, phi, n, variant),
        curve=curve,
    )


def _replication(
    index: int,
    seed_seq: np.random.SeedSequence,
    p0: float,
    theta_star: float,
    prior: PushBetaParams,
    variant: ModelVariant,
    schedule: Sequence[int],
    config: QuadratureConfig,
) -> list[TrajectoryRecord]:
    rng = np.random.default_rng(seed_seq)
    records = []
    seen, ones = 0, 0
    for n in schedule:
        ones += int(rng.binomial(n - seen, p0))
        seen = n
        post = posterior(prior, BinarySample(n, ones), variant)
        mean, variance = mean_variance(post, config)
        records.append(TrajectoryRecord(index, n, mean, math.sqrt(variance), theta_star, abs(mean - theta_star)))
        logger.debug("consistency_replication", extra={"fields": {"replication": index, "n": n, "post_mean": mean}})
    return records


def simulate_consistency(
    theta0: float,
    phi0: float,
    phi: float,
    variant: ModelVariant,
    prior: PushBetaParams,
    n_schedule: Sequence[int],
    replications: int,
    seed: int,
    workers: int = 1,
    config: QuadratureConfig = DEFAULT_CONFIG,
) -> list[TrajectoryRecord]:
    """Monte Carlo posterior trajectories along a growing sample.

    Each replication draws one data stream: the count of ones at a larger n extends
    the count at the previous n by an independent binomial increment.
    """
    variant = ModelVariant(variant)
    schedule = [int(n) for n in n_schedule]
    if not schedule:
        raise ParameterError("n_schedule must not be empty")
    if schedule[0] < 0 or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ParameterError("n_schedule must be strictly increasing and nonnegative")
    if replications < 1:
        raise ParameterError(f"replications must be positive, got {replications!r}")
    if prior.direction is not variant.direction:
        raise ParameterError(f"{variant.value} model needs a {variant.direction.value}-pushed prior")
    if prior.phi != float(phi):
        prior = prior.replace(phi=phi)

    p0 = variant.success_probability(_unit("theta0", theta0), _unit("phi0", phi0))
    star = kl_minimizer(theta0, phi0, phi, variant)
    streams = np.random.SeedSequence(seed).spawn(int(replications))

    def run(index: int) -> list[TrajectoryRecord]:
        return _replication(index, streams[index], p0, star, prior, variant, schedule, config)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(run, range(len(streams))))
    else:
        batches = [run(i) for i in range(len(streams))]
    return [record for batch in batches for record in batch]
