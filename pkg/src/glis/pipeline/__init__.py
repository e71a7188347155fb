"""Data formats, configuration, and the stage-chaining CLI."""

from .config import BackendConfig, Config, ConfigError, Paths, SynthSettings, load_config, parse_config
from .schemas import (
    SCHEMA_NAMES,
    SCHEMA_VERSION,
    SchemaViolationError,
    Violation,
    ensure_valid,
    validate_doc,
    validate_file,
)
from .stages import (
    EXIT_ERROR,
    EXIT_MISSING_INPUT,
    EXIT_OK,
    EXIT_SCHEMA,
    EXIT_TRANSPORT,
    STAGE_NAMES,
    MissingInputError,
    StageResult,
    run_stage,
)

__all__ = [
    "BackendConfig",
    "Config",
    "ConfigError",
    "EXIT_ERROR",
    "EXIT_MISSING_INPUT",
    "EXIT_OK",
    "EXIT_SCHEMA",
    "EXIT_TRANSPORT",
    "MissingInputError",
    "Paths",
    "SCHEMA_NAMES",
    "SCHEMA_VERSION",
    "STAGE_NAMES",
    "SchemaViolationError",
    "StageResult",
    "SynthSettings",
    "Violation",
    "ensure_valid",
    "load_config",
    "parse_config",
    "run_stage",
    "validate_doc",
    "validate_file",
]
