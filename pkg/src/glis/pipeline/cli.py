"""Command-line entry point chaining the pipeline stages.

Usage: glis <stage> --config <path> [--scene <id>] [--backend mock|http]
The last stdout line of every stage run is a machine-readable JSON summary.
Exit codes: 0 ok, 2 schema violation, 3 transport failure, 4 missing input.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import BackendConfig, Config, ConfigError, load_config
from .schemas import SCHEMA_NAMES, validate_file
from .stages import EXIT_SCHEMA, STAGE_NAMES, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glis", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in STAGE_NAMES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", required=True, help="path to the JSON config file")
        if stage not in ("experiment", "losses-check"):
            p.add_argument("--scene", default=None, help="process only this scene id")
        p.add_argument(
            "--backend", choices=("mock", "http"), default=None,
            help="override the configured LLM backend",
        )
        if stage == "experiment":
            p.add_argument("--trials", type=int, default=50, help="number of trials")

    v = sub.add_parser("validate", help="validate a file against a named schema")
    v.add_argument("path")
    v.add_argument("--schema", required=True, choices=sorted(SCHEMA_NAMES))
    return parser


def _override_backend(config: Config, kind: str) -> Config:
    backend = config.llm_backend
    if kind == backend.kind:
        return config
    if kind == "http" and not backend.endpoint:
        raise ConfigError("llm_backend.endpoint", "required to switch to the http backend")
    from dataclasses import replace

    return replace(config, llm_backend=BackendConfig(
        kind, backend.endpoint, backend.timeout, backend.retries))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "validate":
        violations = validate_file(args.path, args.schema)
        for violation in violations:
            print(violation)
        print(json.dumps({"path": args.path, "schema": args.schema,
                          "violations": len(violations)}))
        return 0 if not violations else EXIT_SCHEMA

    try:
        config = load_config(args.config)
        if getattr(args, "backend", None):
            config = _override_backend(config, args.backend)
    except FileNotFoundError as exc:
        print(json.dumps({"stage": args.command, "error": str(exc)}))
        return 4
    except ConfigError as exc:
        print(json.dumps({"stage": args.command, "error": str(exc)}))
        return EXIT_SCHEMA

    result = run_stage(
        args.command,
        config,
        scene=getattr(args, "scene", None),
        trials=getattr(args, "trials", 50),
    )
    print(json.dumps(result.summary, ensure_ascii=False))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
