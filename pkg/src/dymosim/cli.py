"""Command-line front end. Thin shell over runner.run and
validate.validate_estimators; every behavior here is reachable through the
library with identical results."""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from .controller import load_mcs_table
from .runner import ConfigError, RunConfig, run
from .validate import validate_estimators

_FIELD_TYPES = {
    "scenario": str,
    "m": int,
    "p": float,
    "r": float,
    "duration": int,
    "interval_seconds": float,
    "seed": int,
    "L": float,
    "alpha": float,
    "instances": int,
    "warmup_intervals": int,
    "sigma_db": float,
    "snr_offset_db": float,
    "failure_start": int,
    "failure_end": int,
    "out_dir": str,
    "parallel": int,
}


def parse_config_file(path: str) -> dict:
    """Read `key = value` lines; '#' starts a comment."""
    values: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "schemes":
            values["schemes"] = tuple(s.strip() for s in value.split(",") if s.strip())
        elif key == "sweep_axis":
            values["sweep_axis"] = value
        elif key == "sweep_values":
            values["sweep_values"] = tuple(float(v) for v in value.split(","))
        elif key in _FIELD_TYPES:
            try:
                values[key] = _FIELD_TYPES[key](value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        else:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dymosim")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="simulate scenarios and write CSV artifacts")
    runp.add_argument("--config", help="config file (key = value lines); flags win")
    runp.add_argument("--scenario", choices=["homogeneous", "stadium", "failure"])
    runp.add_argument("--m", type=int)
    runp.add_argument("--p", type=float)
    runp.add_argument("--r", type=float)
    runp.add_argument("--duration", type=int)
    runp.add_argument("--seed", type=int)
    runp.add_argument("--sweep", nargs=2, metavar=("AXIS", "CSV_LIST"),
                      help="axis in {m,p,r} and comma-separated values")
    runp.add_argument("--instances", type=int)
    runp.add_argument("--schemes", help="comma-separated scheme names")
    runp.add_argument("--mcs-table", help="CSV file (mcs_index,min_snr_dB,spectral_efficiency)")
    runp.add_argument("--out", help="output directory (default: $DYMOSIM_OUT or ./runs)")
    runp.add_argument("--parallel", type=int)

    valp = sub.add_parser("validate", help="run the estimator validation suite")
    valp.add_argument("--runs", type=int, default=500)
    valp.add_argument("--seed", type=int, default=2024)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {}
    if args.config:
        overrides.update(parse_config_file(args.config))
    for flag, key in [
        ("scenario", "scenario"), ("m", "m"), ("p", "p"), ("r", "r"),
        ("duration", "duration"), ("seed", "seed"), ("instances", "instances"),
        ("out", "out_dir"), ("parallel", "parallel"),
    ]:
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.schemes is not None:
        overrides["schemes"] = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    if args.sweep is not None:
        axis, csv_list = args.sweep
        overrides["sweep_axis"] = axis
        try:
            overrides["sweep_values"] = tuple(float(v) for v in csv_list.split(","))
        except ValueError as exc:
            raise ConfigError(f"sweep: bad value list {csv_list!r}: {exc}") from exc
    if args.mcs_table is not None:
        with open(args.mcs_table, encoding="utf-8") as fp:
            overrides["mcs_table"] = load_mcs_table(fp)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        results = validate_estimators(seed=args.seed, runs=args.runs)
        for res in results:
            print(f"{'PASS' if res.passed else 'FAIL'}  {res.name}  [{res.detail}]")
        return 0 if all(res.passed for res in results) else 1
    try:
        config = _config_from_args(args).validated()
        out_dir = run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
