"""Experiment driver.

Each subcommand maps one-to-one onto an experiment config; flags mirror the
config fields and a JSON config file (or a previously written manifest) can
seed the defaults. Outputs land in --out, or under $PRODFORM_OUTPUT_DIR,
or ./prodform-results/<experiment>. Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .errors import ProdformError
from .experiments import EXPERIMENTS, ConfigError, config_from_dict, run_and_write

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_config_flags(parser: argparse.ArgumentParser, config_cls):
    for f in dataclasses.fields(config_cls):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool) or isinstance(f.default, bool):
            parser.add_argument(
                flag, type=_parse_bool, default=None, metavar="BOOL"
            )
        elif isinstance(f.default, tuple):
            parser.add_argument(flag, type=str, default=None, metavar="CSV")
        elif isinstance(f.default, float):
            parser.add_argument(flag, type=float, default=None)
        elif isinstance(f.default, int):
            parser.add_argument(flag, type=int, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _coerce(field: dataclasses.Field, raw):
    if raw is None:
        return None
    if isinstance(field.default, tuple) and isinstance(raw, str):
        parts = [p for p in raw.split(",") if p.strip()]
        if all(_is_number(p) for p in parts):
            return tuple(float(p) if "." in p or "e" in p.lower() else int(p) for p in parts)
        return tuple(p.strip() for p in parts)
    return raw


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prodform",
        description="Reproducible product-form estimator experiments",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, (config_cls, _, _) in EXPERIMENTS.items():
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        p.add_argument("--config", type=str, default=None, help="JSON config file or a prior manifest")
        _add_config_flags(p, config_cls)
    return parser


def _load_config_file(path: str, experiment: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    if "experiment" in data and "config" in data:  # a manifest
        if data["experiment"] != experiment:
            raise ConfigError(
                f"manifest is for experiment {data['experiment']!r}, not {experiment!r}"
            )
        data = data["config"]
    return data


def _build_config(args, experiment: str):
    config_cls = EXPERIMENTS[experiment][0]
    base = {}
    if args.config:
        base.update(_load_config_file(args.config, experiment))
    for f in dataclasses.fields(config_cls):
        raw = getattr(args, f.name, None)
        value = _coerce(f, raw)
        if value is not None:
            base[f.name] = value
    if "methods" in base and isinstance(base["methods"], (list, tuple)):
        base["methods"] = tuple(str(m) for m in base["methods"])
    for key, value in list(base.items()):
        if isinstance(value, list):
            base[key] = tuple(value)
    return config_from_dict(config_cls, base)


def _default_outdir(experiment: str) -> Path:
    root = os.environ.get("PRODFORM_OUTPUT_DIR")
    if root:
        return Path(root) / experiment
    return Path("prodform-results") / experiment


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    experiment = args.experiment
    try:
        config = _build_config(args, experiment)
        outdir = Path(args.out) if args.out else _default_outdir(experiment)
        run_and_write(experiment, config, outdir, force=args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProdformError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {experiment} artifacts to {outdir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
