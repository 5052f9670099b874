"""Command-line driver: train | eval | sweep-gamma | guided | morph | rank | serve.

Every subcommand takes ``--config <path>`` (JSON) plus repeatable
``--set dotted.key=value`` overrides applied to the raw config structure
before parsing.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import commands
from .checkpoint import load_checkpoint
from .config import ConfigError, parse_config, validate_files


def _apply_override(raw: dict, dotted: str, value: str) -> None:
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    try:
        node[keys[-1]] = json.loads(value)
    except json.JSONDecodeError:
        node[keys[-1]] = value


def _load_config(args) -> "commands.RunConfig":
    raw = json.loads(Path(args.config).read_text())
    for override in args.set or []:
        dotted, _, value = override.partition("=")
        _apply_override(raw, dotted, value)
    return parse_config(raw)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (dotted path, JSON value)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sae",
        description="structured-latent autoencoder training, evaluation, and labeling tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test dataset")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("sweep-gamma", help="run the loss-weight sweep")
    _add_common(p)
    p.add_argument("--gammas", required=True,
                   help="comma-separated gamma values, e.g. 0,0.5,1")

    p = sub.add_parser("guided", help="guided vs random labeling experiment")
    _add_common(p)

    p = sub.add_parser("morph", help="decode a class transition for one sample")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample-id", type=int, required=True)
    p.add_argument("--pair", required=True, help="class pair, e.g. 0,1")
    p.add_argument("--steps", type=int, default=11)

    p = sub.add_parser("rank", help="write the margin ranking of the unlabeled pool")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("serve", help="run the labeling service")
    _add_common(p)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--checkpoint", help="start from an existing checkpoint")
    p.add_argument("--static-dir", help="serve a built web UI from this directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 2

    if args.command == "train":
        result = commands.cmd_train(cfg)
        print(f"checkpoint: {result.checkpoint_path}")
        print(f"metrics:    {result.metrics_path}")
        print(f"latent:     {result.latent_path}")
    elif args.command == "eval":
        report = commands.cmd_eval(cfg, args.checkpoint)
        print(f"classification_error: {report.classification_error:.6f}")
        print(f"recon_rmse:           {report.recon_rmse:.6f}")
        print(f"calibration:          {report.calibration_path}")
        print(f"score_histogram:      {report.histogram_path}")
    elif args.command == "sweep-gamma":
        gammas = [float(g) for g in args.gammas.split(",")]
        print(f"sweep: {commands.cmd_sweep_gamma(cfg, gammas)}")
    elif args.command == "guided":
        print(f"experiment: {commands.cmd_guided(cfg)}")
    elif args.command == "morph":
        pair = tuple(int(c) for c in args.pair.split(","))
        if len(pair) != 2:
            print("--pair needs exactly two classes", file=sys.stderr)
            return 2
        paths = commands.cmd_morph(cfg, args.checkpoint, args.sample_id, pair, args.steps)
        for p in paths:
            print(p)
    elif args.command == "rank":
        print(f"ranking: {commands.cmd_rank(cfg, args.checkpoint)}")
    elif args.command == "serve":
        from .service import serve

        validate_files(cfg)
        ds = commands.load_dataset(cfg)
        model = None
        if args.checkpoint:
            model = load_checkpoint(args.checkpoint).model
        serve(cfg, port=args.port, ds=ds, model=model, host=args.host,
              static_dir=args.static_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
