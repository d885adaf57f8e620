"""``bosonic-ot`` command line entry point."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channels import QualityGateError
from .experiments import EXPERIMENTS, ConfigError, RunConfig, RunResult, parse_override, run

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_QUALITY = 0, 2, 3, 4


def _cell(value) -> str:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(path: Path, result: RunResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result.columns)
        for row in result.rows:
            writer.writerow([_cell(v) for v in row])


def _json_safe(obj):
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")


def _timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def load_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
    for item in args.override or []:
        key, value = parse_override(item)
        raw[key] = value
    if args.seed is not None:
        raw["seed"] = args.seed
    return RunConfig.from_dict(raw, experiment=args.command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bosonic-ot", description="Optimal-transport bounds for noisy oscillators and qubits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (default: runs/<command>)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--override", action="append", metavar="KEY=VALUE", help="override one config entry")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg["out"] or Path("runs") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": args.command, "tool_version": __version__, "config": cfg.to_dict(),
                "started": _timestamp(), "status": "running"}
    _write_json(out / "manifest.json", manifest)
    try:
        result = run(cfg)
    except ConfigError as exc:
        code, message = EXIT_CONFIG, f"configuration error: {exc}"
    except QualityGateError as exc:
        code, message = EXIT_QUALITY, f"quality gate failed: {exc}"
    else:
        write_csv(out / "results.csv", result)
        code = EXIT_OK if result.passed else EXIT_CHECK_FAILED
        message = "all checks passed" if result.passed else "inequality check failed"
        manifest.update(checks=[c.to_dict() for c in result.checks], summary=result.summary,
                        outputs=["results.csv"])
        for key, value in result.summary.items():
            print(f"{key} = {value:.6g}" if isinstance(value, float) else f"{key} = {value}")
        for c in result.checks:
            if not c.passed:
                print(f"FAIL {c.name}: measured {c.measured:.6g} vs bound {c.bound:.6g} (+{c.tolerance:g})")
    manifest.update(finished=_timestamp(), status=message, exit_code=code)
    _write_json(out / "manifest.json", manifest)
    print(message, file=sys.stderr if code else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
