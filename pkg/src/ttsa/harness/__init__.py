"""Configuration-driven experiment runner and command-line interface."""

from .config import ConfigError, ExperimentConfig, parse_config
from .runner import RunManifest, compare_projection, execute, execute_manifest

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "RunManifest",
           "compare_projection", "execute", "execute_manifest"]
