"""
Unit tests for structured logging
"""

import json
import logging

from lib.utils.logging import JSONFormatter, setup_logging


def _record(level: int, metadata=None) -> logging.LogRecord:
    record = logging.LogRecord("lib.search", level, "searcher.py", 42, "Iteration %d", (3,), None)
    if metadata is not None:
        record.metadata = metadata
    return record


class TestJSONFormatter:
    def test_metadata_emitted(self):
        entry = json.loads(JSONFormatter().format(_record(logging.INFO, {"layer": 2, "flops": 1024})))
        assert entry["message"] == "Iteration 3"
        assert entry["logger"] == "lib.search"
        assert entry["metadata"] == {"layer": 2, "flops": 1024}
        assert entry["timestamp"].endswith("Z")
        assert "location" not in entry

    def test_error_carries_location(self):
        entry = json.loads(JSONFormatter().format(_record(logging.ERROR)))
        assert entry["location"].startswith("searcher.py:42")
        assert "metadata" not in entry

    def test_unserializable_metadata_stringified(self):
        entry = json.loads(JSONFormatter().format(_record(logging.INFO, {"rate": object()})))
        assert isinstance(entry["metadata"]["rate"], str)


def test_setup_logging_replaces_handlers():
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    try:
        setup_logging("debug", use_json=True)
        setup_logging("nonsense", use_json=True)
        assert len(root.handlers) == 1
        assert isinstance(root.handlers[0].formatter, JSONFormatter)
        assert root.level == logging.INFO
    finally:
        root.handlers[:] = saved_handlers
        root.setLevel(saved_level)
