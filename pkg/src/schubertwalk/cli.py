"""
Command line entry point.

    schubertwalk run --config cfg.json [--seed N] [--threads N] [--out DIR] [--check]
    schubertwalk validate --config cfg.json
    schubertwalk list-presets
    schubertwalk pin --config cfg.json --name NAME --field path [--field ...]
    schubertwalk schema

Exit codes: 0 pass, 1 check failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys

from . import runner


def _load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise runner.ConfigError(f"cannot read config {path}: {exc}") from exc


def build_parser():
    ap = argparse.ArgumentParser(prog="schubertwalk", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--out")
    r.add_argument("--check", action="store_true", help="compare against the expected-results file")
    v = sub.add_parser("validate", help="validate a config without running it")
    v.add_argument("--config", required=True)
    sub.add_parser("list-presets", help="list named measures")
    sub.add_parser("schema", help="print the config JSON schema")
    p = sub.add_parser("pin", help="record an oracle run in the expected-results file")
    p.add_argument("--config", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--field", action="append", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--checksums", action="store_true")
    p.add_argument("--out", default="runs/pin")
    return ap


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-presets":
            print(runner.list_presets())
            return 0
        if args.command == "schema":
            print(json.dumps(runner.schema(), indent=2))
            return 0
        config = _load(args.config)
        if args.command == "validate":
            errors = runner.validate(config)
            for e in errors:
                print(e, file=sys.stderr)
            print("ok" if not errors else f"{len(errors)} error(s)")
            return 2 if errors else 0
        if args.command == "pin":
            cmd = "schubertwalk " + " ".join(shlex.quote(a) for a in argv)
            entry = runner.pin(args.name, config, args.field, cmd, tol=args.tol, csv_checksums=args.checksums, out=args.out)
            print(json.dumps(entry["values"], indent=2))
            return 0
        manifest = runner.run(config, seed=args.seed, threads=args.threads, out=args.out, check=args.check)
    except runner.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except runner.CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({k: manifest[k] for k in ("summary", "summary_sha256", "csv_sha256", "wall_time_s")}, indent=2))
    if args.check:
        print("check passed")
    return 0
