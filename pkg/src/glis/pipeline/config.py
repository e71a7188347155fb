"""Run configuration: thresholds, backends, paths, seeds.

Loaded from a JSON file where every field is optional; omitted fields take
the published defaults. Validation failures name the offending field.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

from ..losses import LossWeights

ENV_ENDPOINT = "GLIS_ENDPOINT"
ENV_TIMEOUT = "GLIS_TIMEOUT"


class ConfigError(ValueError):
    """A configuration field is missing, mistyped, or out of range."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # llm: mock | http; scorer: file | http
    endpoint: str | None = None
    timeout: float = 10.0
    retries: int = 2


@dataclass(frozen=True)
class Paths:
    scenes: str | None = None
    detections_2d: str | None = None
    scores: str | None = None
    kb: str | None = None
    out_dir: str = "out"


@dataclass(frozen=True)
class SynthSettings:
    num_scenes: int = 4
    objects_min: int = 3
    objects_max: int = 6
    feature_noise: float = 0.02
    noise: dict = field(default_factory=dict)  # NoiseModel field overrides


@dataclass(frozen=True)
class Config:
    phi_clip: float = 0.5
    phi_obj: float = 0.1
    phi_low: float = 0.25
    phi_high: float = 0.6
    phi_keep: float = 0.75
    trim: float = 0.05
    weights: LossWeights = field(default_factory=LossWeights)
    llm_backend: BackendConfig = field(default_factory=BackendConfig)
    scorer_backend: BackendConfig = field(default_factory=lambda: BackendConfig(kind="file"))
    paths: Paths = field(default_factory=Paths)
    synth: SynthSettings = field(default_factory=SynthSettings)
    seed: int = 0
    workers: int = 1


_THRESHOLD_FIELDS = ("phi_clip", "phi_obj", "phi_low", "phi_high", "phi_keep")


def _require(doc: dict, allowed: set[str], prefix: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown field")


def _number(doc: dict, key: str, default, prefix: str = "") -> float:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{prefix}{key}", f"must be a finite number, got {value!r}")
    return float(value)


def _integer(doc: dict, key: str, default, prefix: str = "") -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{prefix}{key}", f"must be an integer, got {value!r}")
    return value


def _parse_backend(doc: dict, default: BackendConfig, prefix: str, kinds: tuple[str, ...]) -> BackendConfig:
    _require(doc, {"kind", "endpoint", "timeout", "retries"}, prefix)
    kind = doc.get("kind", default.kind)
    if kind not in kinds:
        raise ConfigError(f"{prefix}kind", f"must be one of {kinds}, got {kind!r}")
    endpoint = doc.get("endpoint", default.endpoint)
    if endpoint is not None and not isinstance(endpoint, str):
        raise ConfigError(f"{prefix}endpoint", "must be a string or null")
    timeout = _number(doc, "timeout", default.timeout, prefix)
    if timeout <= 0:
        raise ConfigError(f"{prefix}timeout", f"must be positive, got {timeout}")
    retries = _integer(doc, "retries", default.retries, prefix)
    if retries < 0:
        raise ConfigError(f"{prefix}retries", f"must be nonnegative, got {retries}")
    if kind == "http" and not endpoint:
        raise ConfigError(f"{prefix}endpoint", "required when kind is 'http'")
    return BackendConfig(kind, endpoint, timeout, retries)


def parse_config(doc: dict) -> Config:
    defaults = Config()
    _require(
        doc,
        {*_THRESHOLD_FIELDS, "trim", "weights", "llm_backend", "scorer_backend",
         "paths", "synth", "seed", "workers"},
        "",
    )

    thresholds = {}
    for name in _THRESHOLD_FIELDS:
        value = _number(doc, name, getattr(defaults, name))
        if not 0.0 <= value <= 1.0:
            raise ConfigError(name, f"must be in [0, 1], got {value}")
        thresholds[name] = value

    trim = _number(doc, "trim", defaults.trim)
    if not 0.0 <= trim < 0.5:
        raise ConfigError("trim", f"must be in [0, 0.5), got {trim}")

    weights_doc = doc.get("weights", {})
    _require(weights_doc, {"lambda_conf", "lambda1", "lambda2", "lambda3", "lambda4"}, "weights.")
    try:
        weights = LossWeights(
            lambda_conf=_number(weights_doc, "lambda_conf", 0.2, "weights."),
            lambda1=_number(weights_doc, "lambda1", 4.0, "weights."),
            lambda2=_number(weights_doc, "lambda2", 10.0, "weights."),
            lambda3=_number(weights_doc, "lambda3", 1.0, "weights."),
            lambda4=_number(weights_doc, "lambda4", 1.0, "weights."),
        )
    except ValueError as exc:
        raise ConfigError("weights", str(exc))

    llm = _parse_backend(doc.get("llm_backend", {}), defaults.llm_backend,
                         "llm_backend.", ("mock", "http"))
    scorer = _parse_backend(doc.get("scorer_backend", {}), defaults.scorer_backend,
                            "scorer_backend.", ("file", "http"))

    paths_doc = doc.get("paths", {})
    _require(paths_doc, {"scenes", "detections_2d", "scores", "kb", "out_dir"}, "paths.")
    for key, value in paths_doc.items():
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"paths.{key}", "must be a string or null")
    paths = Paths(
        scenes=paths_doc.get("scenes"),
        detections_2d=paths_doc.get("detections_2d"),
        scores=paths_doc.get("scores"),
        kb=paths_doc.get("kb"),
        out_dir=paths_doc.get("out_dir", "out"),
    )

    synth_doc = doc.get("synth", {})
    _require(synth_doc, {"num_scenes", "objects_min", "objects_max", "feature_noise", "noise"}, "synth.")
    synth = SynthSettings(
        num_scenes=_integer(synth_doc, "num_scenes", 4, "synth."),
        objects_min=_integer(synth_doc, "objects_min", 3, "synth."),
        objects_max=_integer(synth_doc, "objects_max", 6, "synth."),
        feature_noise=_number(synth_doc, "feature_noise", 0.02, "synth."),
        noise=dict(synth_doc.get("noise", {})),
    )
    if synth.num_scenes < 1:
        raise ConfigError("synth.num_scenes", "must be at least 1")
    if not 1 <= synth.objects_min <= synth.objects_max:
        raise ConfigError("synth.objects_min", "need 1 <= objects_min <= objects_max")
    if synth.feature_noise < 0:
        raise ConfigError("synth.feature_noise", "must be nonnegative")

    seed = _integer(doc, "seed", defaults.seed)
    workers = _integer(doc, "workers", defaults.workers)
    if workers < 1:
        raise ConfigError("workers", f"must be at least 1, got {workers}")

    return Config(
        **thresholds,
        trim=trim,
        weights=weights,
        llm_backend=llm,
        scorer_backend=scorer,
        paths=paths,
        synth=synth,
        seed=seed,
        workers=workers,
    )


def _apply_env_overrides(config: Config) -> Config:
    endpoint = os.environ.get(ENV_ENDPOINT)
    timeout = os.environ.get(ENV_TIMEOUT)
    if endpoint is None and timeout is None:
        return config
    backend = config.llm_backend
    if endpoint is not None:
        backend = BackendConfig(backend.kind, endpoint, backend.timeout, backend.retries)
    if timeout is not None:
        try:
            value = float(timeout)
        except ValueError:
            raise ConfigError("llm_backend.timeout", f"{ENV_TIMEOUT} must be a number, got {timeout!r}")
        if value <= 0:
            raise ConfigError("llm_backend.timeout", f"{ENV_TIMEOUT} must be positive")
        backend = BackendConfig(backend.kind, backend.endpoint, value, backend.retries)
    return Config(
        **{name: getattr(config, name) for name in _THRESHOLD_FIELDS},
        trim=config.trim,
        weights=config.weights,
        llm_backend=backend,
        scorer_backend=config.scorer_backend,
        paths=config.paths,
        synth=config.synth,
        seed=config.seed,
        workers=config.workers,
    )


def load_config(path) -> Config:
    """Parse and validate a config file; blank files mean all defaults.

    GLIS_ENDPOINT / GLIS_TIMEOUT environment variables override the LLM
    endpoint and timeout after the file is read.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        doc = {}
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError("<file>", "top level must be a JSON object")
    return _apply_env_overrides(parse_config(doc))
