from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Any

from .config import AppPaths, ensure_dirs
from .fitting import FitConfig
from .quadrature import QuadratureConfig, QuadratureMode


@dataclass(frozen=True)
class NumericSettings:
    node_count: int = 10**6
    method: str = QuadratureMode.AUTO_FALLBACK.value
    gradient_tolerance: float = 1e-6
    max_iterations: int = 200

    def quadrature_config(self) -> QuadratureConfig:
        return QuadratureConfig(node_count=self.node_count, mode=QuadratureMode(self.method))

    def fit_config(self, fix_phi: float | None = None) -> FitConfig:
        return FitConfig(
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            fix_phi=fix_phi,
        )

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


DEFAULTS = NumericSettings()


def _positive_int(raw: Any, default: int) -> int:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or int(raw) != raw or raw < 1:
        return default
    return int(raw)


def _positive_float(raw: Any, default: float) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or not raw > 0:
        return default
    return float(raw)


def _method(raw: Any, default: str) -> str:
    try:
        return QuadratureMode(raw).value
    except ValueError:
        return default


def load_settings(paths: AppPaths) -> NumericSettings:
    ensure_dirs(paths)
    if not paths.settings_file.exists():
        return NumericSettings()

    try:
        raw = json.loads(paths.settings_file.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, TypeError):
        return NumericSettings()
    if not isinstance(raw, dict):
        return NumericSettings()

    return NumericSettings(
        node_count=_positive_int(raw.get("node_count"), DEFAULTS.node_count),
        method=_method(raw.get("method"), DEFAULTS.method),
        gradient_tolerance=_positive_float(raw.get("gradient_tolerance"), DEFAULTS.gradient_tolerance),
        max_iterations=_positive_int(raw.get("max_iterations"), DEFAULTS.max_iterations),
    )


def save_settings(paths: AppPaths, settings: NumericSettings) -> None:
    ensure_dirs(paths)
    tmp = paths.settings_file.with_suffix(".tmp")
    tmp.write_text(json.dumps(settings.as_dict(), indent=2), encoding="utf-8")
    tmp.replace(paths.settings_file)
