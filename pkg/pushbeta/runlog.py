"""JSON-lines event log for the pushbeta logger tree.

Library modules log an event name as the message and pass structured fields
through ``extra={"fields": {...}}``. Nothing is emitted until ``configure``
attaches a handler.
"""

from __future__ import annotations

import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Any

UTC = timezone.utc

ROOT_LOGGER = "pushbeta"

_HANDLER_MARK = "_pushbeta_runlog"

logging.getLogger(ROOT_LOGGER).addHandler(logging.NullHandler())


def _now_iso() -> str:
    return datetime.now(UTC).isoformat()


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if hasattr(value, "value") and not isinstance(value, (int, float, str)):
        return value.value
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


class JsonLinesFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "time": _now_iso(),
            "event": record.getMessage(),
            "level": record.levelname,
            "logger": record.name,
        }
        fields = getattr(record, "fields", None)
        if isinstance(fields, dict):
            for key, value in fields.items():
                payload[key] = _jsonable(value)
        if record.exc_info:
            payload["error"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False)


def configure(
    stream: IO[str] | None = None,
    log_file: Path | str | None = None,
    level: int = logging.INFO,
) -> logging.Logger:
    """Attach JSON-lines handlers to the package logger, replacing earlier ones."""
    logger = logging.getLogger(ROOT_LOGGER)
    for handler in list(logger.handlers):
        if getattr(handler, _HANDLER_MARK, False):
            logger.removeHandler(handler)
            handler.close()

    handlers: list[logging.Handler] = []
    if stream is not None:
        handlers.append(logging.StreamHandler(stream))
    if log_file is not None:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(path, encoding="utf-8"))

    for handler in handlers:
        setattr(handler, _HANDLER_MARK, True)
        handler.setFormatter(JsonLinesFormatter())
        logger.addHandler(handler)
    logger.setLevel(level if handlers else logging.WARNING)
    return logger
