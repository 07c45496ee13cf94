from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class AppPaths:
    base_dir: Path
    settings_file: Path


def project_root() -> Path:
    return Path(__file__).resolve().parents[1]


def _default_base_dir() -> Path:
    override = os.environ.get("PUSHBETA_HOME")
    if override:
        return Path(override).expanduser().resolve()
    return (project_root() / "data").resolve()


def get_paths() -> AppPaths:
    base = _default_base_dir()
    return AppPaths(base_dir=base, settings_file=base / "settings.json")


def ensure_dirs(paths: AppPaths) -> None:
    paths.base_dir.mkdir(parents=True, exist_ok=True)
