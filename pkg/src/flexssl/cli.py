"""Command-line interface: train | compare | sweep | dump-discriminator."""
from __future__ import annotations

import argparse
import sys

from .game import GameConfig
from .harness import (ExperimentSpec, SpecError, cmd_compare, cmd_dump_discriminator,
                      cmd_sweep, cmd_train, load_spec)
from .metrics import DivergenceError


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=["two-moons", "tabular"], default="two-moons")
    p.add_argument("--n", type=int, default=1000, help="sample count")
    p.add_argument("--d", type=int, default=8, help="tabular feature count")
    p.add_argument("--noise-sigma", type=float, default=0.2,
                   help="two-moons Gaussian noise scale")
    p.add_argument("--missing-rate", type=float, default=0.9)
    p.add_argument("--noise-rate", type=float, default=0.0,
                   help="fraction of observed labels to corrupt")
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--variant", choices=["bce", "exp", "logistic"], default="bce")
    p.add_argument("--clip", type=float, default=10.0, help="weight clip bound")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--refresh-interval", type=int, default=10)
    p.add_argument("--tau", type=float, default=0.95,
                   help="self-training admission threshold")
    p.add_argument("--lr-f", type=float, default=0.01)
    p.add_argument("--lr-d", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--input-dropout", type=float, default=0.0)
    p.add_argument("--seeds", type=_int_list, default=[0],
                   help="comma-separated seed list")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--no-timing", action="store_true",
                   help="leave wall_ms cells empty for byte-stable output")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel runs in sweeps and comparisons")
    p.add_argument("--spec", default=None,
                   help="JSON experiment spec; overrides the flags above")


def _spec_from_args(args, methods: list[str]) -> ExperimentSpec:
    if args.spec is not None:
        return load_spec(args.spec)
    game = GameConfig(alpha=args.alpha, variant=args.variant, clip_h=args.clip,
                      refresh_interval=args.refresh_interval, epochs=args.epochs,
                      batch_size=args.batch_size, lr_f=args.lr_f, lr_d=args.lr_d,
                      seed=args.seeds[0] if args.seeds else 0)
    return ExperimentSpec(dataset=args.dataset, n=args.n, d=args.d,
                          noise_sigma=args.noise_sigma,
                          missing_rate=args.missing_rate,
                          noise_rate=args.noise_rate, methods=tuple(methods),
                          game=game, tau=args.tau,
                          input_dropout=args.input_dropout,
                          seeds=tuple(args.seeds), out=args.out,
                          no_timing=args.no_timing,
                          figures=not args.no_figures, workers=args.workers)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexssl",
        description="Semi-supervised learning lab: discriminator-weighted "
                    "soft labeling against supervised and self-training arms.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one method over the seed list")
    p_train.add_argument("--method", choices=["supervised", "self-training", "flexssl"],
                         default="flexssl")
    _add_common(p_train)

    p_cmp = sub.add_parser("compare", help="run several methods and summarize")
    p_cmp.add_argument("--methods", default="supervised,self-training,flexssl",
                       help="comma-separated method list")
    _add_common(p_cmp)

    p_sweep = sub.add_parser("sweep", help="repeat a comparison along one axis")
    p_sweep.add_argument("--axis", choices=["missing-rate", "alpha"], required=True)
    p_sweep.add_argument("--values", type=_float_list, required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--methods", default="supervised,self-training,flexssl",
                         help="comma-separated method list")
    _add_common(p_sweep)

    p_dump = sub.add_parser("dump-discriminator",
                            help="snapshot discriminator confidences")
    p_dump.add_argument("--snapshots", type=_int_list, default=None,
                        help="comma-separated snapshot epochs "
                             "(default 0, mid-run, final)")
    _add_common(p_dump)
    return parser


def _report(outputs: dict) -> None:
    for key, value in outputs.items():
        if key.endswith("_data") or key == "finals":
            continue
        paths = value if isinstance(value, list) else [value]
        for path in paths:
            print(f"wrote {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            spec = _spec_from_args(args, [args.method])
            outputs = cmd_train(spec)
        elif args.command == "compare":
            spec = _spec_from_args(args, args.methods.split(","))
            outputs = cmd_compare(spec)
        elif args.command == "sweep":
            spec = _spec_from_args(args, args.methods.split(","))
            axis = args.axis.replace("-", "_")
            outputs = cmd_sweep(spec, axis, args.values)
        else:
            spec = _spec_from_args(args, ["flexssl"])
            snaps = args.snapshots
            if snaps is None:
                snaps = sorted({0, spec.game.epochs // 2, spec.game.epochs})
            outputs = cmd_dump_discriminator(spec, snaps)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _report(outputs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
