"""
Structured Logging Configuration

Pruning runs last hours; per-iteration search records and per-epoch
training metrics are logged with a ``metadata`` payload so they can be
parsed back out of a JSON log stream.
"""

import json
import logging
import sys
from datetime import datetime, timezone

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class JSONFormatter(logging.Formatter):
    """
    One JSON object per record.

    ``extra={"metadata": {...}}`` lands under ``metadata``; ERROR and above
    also carry the source location.
    """

    def format(self, record: logging.LogRecord) -> str:
        created = datetime.fromtimestamp(record.created, tz=timezone.utc)
        entry = {
            "timestamp": created.strftime("%Y-%m-%dT%H:%M:%S.%fZ"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        metadata = getattr(record, "metadata", None)
        if metadata is not None:
            entry["metadata"] = metadata
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        if record.levelno >= logging.ERROR:
            entry["location"] = f"{record.pathname}:{record.lineno} in {record.funcName}"
        # tensors and numpy scalars show up in metadata
        return json.dumps(entry, default=str)


def setup_logging(log_level: str = "INFO", use_json: bool = False) -> None:
    """
    Configure the root logger once per process.

    Logs go to stderr so CLI results printed on stdout stay machine-readable.

    Args:
        log_level: Logging level name; unknown names fall back to INFO
        use_json: Emit JSON lines instead of plain text
    """
    level = logging.getLevelName(log_level.upper())
    if not isinstance(level, int):
        level = logging.INFO

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JSONFormatter() if use_json else logging.Formatter(TEXT_FORMAT))

    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.debug("Logging configured", extra={"metadata": {"log_level": log_level, "json_format": use_json}})
