"""Command line entry point: one subcommand per experiment kind, plus ``replay``.

Exit codes: 0 success, 2 invalid config or input, 3 cap exceeded,
4 non-convergence, 5 replay mismatch or refusal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .config import KINDS, ConfigError, ExperimentConfig
from .runner import EXIT_CONFIG, replay, run


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hitlab", description="Hitting-time statistics experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", help="JSON config file (defaults are used for missing fields)")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--exact", dest="exact", action="store_true", default=None, help="rational arithmetic")
        mode.add_argument("--float", dest="exact", action="store_false", help="floating-point arithmetic")
        p.add_argument("--threads", type=int, help="worker threads for independent grid points")
    r = sub.add_parser("replay", help="re-run a record and compare its results")
    r.add_argument("record", help="path of a JSON run record")
    r.add_argument("--seed", type=int, help="refuse unless equal to the recorded seed")
    return ap


def _load(args) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if data.get("kind", args.command) != args.command:
        raise ConfigError(f"config kind {data['kind']!r} does not match subcommand {args.command!r}")
    data["kind"] = args.command
    for key, value in (("out_dir", args.out), ("master_seed", args.seed), ("exact", args.exact), ("threads", args.threads)):
        if value is not None:
            data[key] = value
    return ExperimentConfig.from_dict(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "replay":
        try:
            code, msg = replay(args.record, args.seed)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            print(f"error: unreadable record: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except ConfigError as exc:
            print(f"error: invalid config in record: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(msg, file=sys.stderr if code else sys.stdout)
        return code
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    record = run(cfg)
    for w in record.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{cfg.kind}: {record.status} in {record.wall_time:.2f}s; wrote {', '.join(record.outputs)}")
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
