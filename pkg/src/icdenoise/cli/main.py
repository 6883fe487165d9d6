"""``icdenoise <experiment> [--config F] [--out D] [--seed S,...] [--ideal] [--set k=v ...]``"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from ..errors import InvalidArgument
from .config import EXPERIMENTS, ConfigError, load_config_file, resolve_config
from .experiments import run_experiment

OUT_ENV = "ICDENOISE_OUT"


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError("--seed", f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icdenoise", description="In-context denoising experiments.")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--out", help=f"output directory (default: ${OUT_ENV})")
        s.add_argument("--seed", help="comma-separated seed list")
        s.add_argument("--ideal", action="store_true", default=None, help="use analytic weights, skip training")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(kind: str, message: str, field: str | None = None, code: int = 1) -> int:
    err = {"error": kind, "message": message}
    if field is not None:
        err["field"] = field
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        data = load_config_file(args.config) if args.config else None
        seeds = _seeds(args.seed) if args.seed is not None else None
        cfg = resolve_config(args.experiment, data, args.overrides, seeds=seeds, ideal=args.ideal,
                             out=args.out)
        if cfg.out is None:
            cfg = cfg.model_copy(update={"out": os.environ.get(OUT_ENV)})
        if cfg.out is None:
            raise ConfigError("out", f"no output directory; pass --out or set {OUT_ENV}")
    except ConfigError as err:
        return _fail("config", err.message, err.field, code=2)
    try:
        run = run_experiment(cfg)
    except InvalidArgument as err:
        return _fail("invalid_argument", str(err))
    except (ArithmeticError, RuntimeError, OSError) as err:
        return _fail(type(err).__name__, str(err))
    print(json.dumps({"out": str(run.out_dir), "files": sorted(run.files),
                      "wall_time_s": round(run.wall_time, 3)}))
    return 0
