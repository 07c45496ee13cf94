from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any


class ParameterError(ValueError):
    pass


class Direction(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def kappa(self) -> int:
        return 1 if self is Direction.RIGHT else 0

    def flipped(self) -> Direction:
        return Direction.LEFT if self is Direction.RIGHT else Direction.RIGHT


def _finite(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"{name} must be a real number, got {value!r}") from exc
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class PushBetaParams:
    """Pushed beta parameters.

    The kernel is x^(alpha-1) (1-x)^(beta-1) times (1 - x*phi)^gamma for the
    left push or (1 - phi + x*phi)^gamma for the right push.
    """

    alpha: float
    beta: float
    gamma: float = 0.0
    phi: float = 0.0
    direction: Direction = Direction.LEFT

    def __post_init__(self) -> None:
        alpha = _finite("alpha", self.alpha)
        beta = _finite("beta", self.beta)
        gamma = _finite("gamma", self.gamma)
        phi = _finite("phi", self.phi)
        if alpha <= 0:
            raise ParameterError(f"alpha must be > 0, got {alpha}")
        if beta <= 0:
            raise ParameterError(f"beta must be > 0, got {beta}")
        if gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {gamma}")
        if not 0.0 <= phi <= 1.0:
            raise ParameterError(f"phi must lie in [0, 1], got {phi}")
        try:
            direction = Direction(self.direction)
        except ValueError as exc:
            raise ParameterError(f"unknown direction {self.direction!r}") from exc
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "direction", direction)

    @property
    def kappa(self) -> int:
        return self.direction.kappa

    @property
    def is_left(self) -> bool:
        return self.direction is Direction.LEFT

    def is_plain_beta(self) -> bool:
        return self.gamma == 0.0 or self.phi == 0.0

    def is_absorbed_beta(self) -> bool:
        return self.phi == 1.0

    def reduced_shapes(self) -> tuple[float, float] | None:
        """Plain beta shapes equivalent to these params, or None when no reduction applies."""
        if self.is_plain_beta():
            return self.alpha, self.beta
        if self.is_absorbed_beta():
            k = self.kappa
            return self.alpha + k * self.gamma, self.beta + (1 - k) * self.gamma
        return None

    def replace(self, **changes: Any) -> PushBetaParams:
        fields = self.as_dict()
        fields.update(changes)
        return PushBetaParams(**fields)

    def as_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "phi": self.phi,
            "direction": self.direction.value,
        }
