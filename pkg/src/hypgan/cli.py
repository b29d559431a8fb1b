"""``hypgan`` command line: train-evaluator, run, sweep, sample, radius-hist."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .data import default_mnist_dir, load_mnist
from .estimators import HyperbolicGAN
from .evaluator import MIN_TEST_ACCURACY, EvaluatorQualityError, train_evaluator
from .experiment import (
    STATUS_DIVERGED,
    STATUS_OK,
    ExperimentConfig,
    SweepSpec,
    emit_sample_grid,
    run_experiment,
    run_sweep,
)
from .metrics import radius_distribution
from .rng import Rng

log = logging.getLogger("hypgan")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="plain-text file of 'key = value' lines; flags override it")
    group = parser.add_argument_group("experiment settings")
    for f in dataclasses.fields(ExperimentConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar=f.name.upper())


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(ExperimentConfig)}
    return cfg.with_overrides(overrides)


def _data_dir(value) -> Path:
    directory = value or default_mnist_dir()
    if directory is None:
        raise SystemExit("no MNIST directory: pass --data-dir or set HYPGAN_MNIST_DIR")
    return Path(directory)


def cmd_train_evaluator(args) -> int:
    directory = _data_dir(args.data_dir)
    train, test = load_mnist(directory, "train"), load_mnist(directory, "test")
    try:
        est = train_evaluator(train, test, seed=args.seed, min_accuracy=args.min_accuracy)
    except EvaluatorQualityError as exc:
        log.error("%s", exc)
        return 1
    est.save(args.out)
    print(f"test accuracy {est.test_accuracy_:.4f}; saved to {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = run_experiment(cfg, resume=args.resume)
    last = result.records[-1]
    print(f"{result.status}: epoch {last.epoch}, fid {result.final_fid}, is {result.final_is}")
    return 0 if result.status in (STATUS_OK, STATUS_DIVERGED) else 1


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def cmd_sweep(args) -> int:
    base = _config_from_args(args)
    spec = SweepSpec(
        variants=args.variants.split(","),
        archs=args.arch_list or [base.arch],
        curvatures=_floats(args.curvatures),
        seeds=_ints(args.seeds),
        include_baseline=not args.no_baseline,
    )
    sweep = run_sweep(spec, base, workers=args.workers)
    print(sweep.pivot("fid"), end="")
    return 0 if sweep.all_clean else 1


def cmd_sample(args) -> int:
    model = HyperbolicGAN.load(args.checkpoint)
    emit_sample_grid(model, Rng(args.seed), args.rows, args.cols, args.out)
    print(f"wrote {args.rows}x{args.cols} grid to {args.out}")
    return 0


def cmd_radius_hist(args) -> int:
    ds = load_mnist(_data_dir(args.data_dir), args.split)
    if args.subset:
        ds = ds.subset(args.subset)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c in _floats(args.c):
        hist = radius_distribution(ds.images, c, bins=args.bins)
        hist.to_csv(out / f"radius_c{c:g}.csv")
        q = " ".join(f"q{k:g}={v:.4f}" for k, v in hist.quantiles.items())
        print(f"c={c:g} mean={hist.mean:.4f} {q}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypgan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-evaluator", help="train the MNIST classifier used for IS and FID")
    p.add_argument("--data-dir")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-accuracy", type=float, default=MIN_TEST_ACCURACY)
    p.set_defaults(func=cmd_train_evaluator)

    p = sub.add_parser("run", help="train and evaluate one configuration")
    _add_config_flags(p)
    p.add_argument("--resume", action="store_true", help="continue from <out_dir>/model.ckpt if present")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over variants, architectures, curvatures and seeds")
    _add_config_flags(p)
    p.add_argument("--variants", default="gan")
    p.add_argument("--arch-list", action="append", help="repeatable; defaults to --arch")
    p.add_argument("--curvatures", default="10,1,0.1,0.01,1e-3,1e-4,1e-5")
    p.add_argument("--seeds", default="0")
    p.add_argument("--no-baseline", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sample", help="write a PGM grid from a saved model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("radius-hist", help="normalized ball-radius histograms of MNIST images")
    p.add_argument("--data-dir")
    p.add_argument("--split", default="train", choices=["train", "test"])
    p.add_argument("--subset", type=int)
    p.add_argument("--c", default="10,1,0.1,0.01,1e-3,1e-4,1e-5")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_radius_hist)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
