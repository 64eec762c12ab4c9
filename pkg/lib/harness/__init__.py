"""
Run orchestration: configuration, manifests, pipeline, reports and sweeps.

Only the configuration layer is imported here; import
``lib.harness.pipeline``, ``lib.harness.report`` and ``lib.harness.sweep``
directly.
"""

from lib.harness.config import RunConfig, Settings, config_hash, get_settings, load_config
from lib.harness.manifest import PHASES, RunManifest

__all__ = [
    "PHASES",
    "RunConfig",
    "RunManifest",
    "Settings",
    "config_hash",
    "get_settings",
    "load_config",
]
