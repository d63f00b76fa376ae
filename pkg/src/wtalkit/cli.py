"""Command-line entry point: gen, train, gradcheck, localize, eval, ablate.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
failure (training blow-up or failed gradient certification). The default
config path comes from $WTALKIT_CONFIG when --config is not given.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import replace

import numpy as np

from .config import MODE_NAMES, Config, load_config
from .errors import ConfigError, DataFormatError, NumericError
from .evaluate import evaluate, format_summary, write_report_csv
from .localize import read_proposals, write_proposals
from .losses import CERTIFIED_MODES, GradMode, certify_gradients
from .model import load_checkpoint, save_checkpoint
from .synth import generate, read_dataset, training_view, write_dataset
from .trainer import (
    COMPONENT_GRID,
    AblationRow,
    ablate,
    format_ablation,
    localize_dataset,
    train,
)

ENV_CONFIG = "WTALKIT_CONFIG"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load(args) -> Config:
    path = args.config
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    return load_config(path)


def cmd_gen(args) -> int:
    cfg = _load(args)
    synth = cfg.synth
    if args.seed is not None:
        synth = replace(synth, seed=args.seed)
    if args.confound is not None:
        synth = replace(synth, confound_strength=args.confound)
    if args.noise is not None:
        synth = replace(synth, noise_sigma=args.noise)
    train_recs, test_recs = generate(synth)
    os.makedirs(args.out, exist_ok=True)
    train_path = os.path.join(args.out, "train.bin")
    test_path = os.path.join(args.out, "test.bin")
    write_dataset(train_path, train_recs, num_classes=synth.num_classes)
    write_dataset(test_path, test_recs, num_classes=synth.num_classes)
    print(f"wrote {train_path} ({len(train_recs)} videos) sha256={_sha256(train_path)}")
    print(f"wrote {test_path} ({len(test_recs)} videos) sha256={_sha256(test_path)}")
    return 0


def _run_overrides(args, cfg: Config):
    run = cfg.run
    hp = run.hp
    if args.mode is not None:
        run = replace(run, grad_mode=MODE_NAMES[args.mode])
    if args.ten is not None:
        run = replace(run, use_ten=args.ten)
    if args.iterations is not None:
        run = replace(run, iterations=args.iterations)
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    if getattr(args, "lam", None) is not None:
        hp = replace(hp, lam=args.lam)
        run = replace(run, hp=hp)
    return run


def cmd_train(args) -> int:
    cfg = _load(args)
    run = _run_overrides(args, cfg)
    dataset = read_dataset(args.data)
    videos = training_view(dataset.records)
    run = replace(run, checkpoint_path=args.out, log_path=args.log)
    result = train(videos, run)
    last = result.log[-1].losses if result.log else None
    if args.out is None:
        print("training finished (no checkpoint path given)")
    else:
        print(f"wrote {args.out}")
    if last is not None:
        print(f"final losses: fg={last.fg:.4f} bg={last.bg:.4f} att={last.att:.4f} "
              f"kl={last.kl:.4f} total={last.total:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    modes = CERTIFIED_MODES
    if args.modes:
        modes = tuple(MODE_NAMES[m] for m in args.modes.split(","))
    results = certify_gradients(num_instances=args.instances,
                                tolerance=args.tolerance,
                                modes=modes, fd_epsilon=args.eps,
                                flip_block=args.inject_bug)
    print(f"certifying {args.instances} instances per mode, "
          f"tolerance {args.tolerance:g}, step {args.eps:g}")
    failed = False
    for mode in modes:
        of_mode = [r for r in results if r.mode == mode.value]
        worst = max(r.max_rel_error for r in of_mode)
        ok = all(r.passed for r in of_mode)
        failed |= not ok
        print(f"{mode.value:10s} worst relative error {worst:.3e} "
              f"{'PASS' if ok else 'FAIL'}")
    if args.inject_bug:
        print(f"note: analytic gradient of block {args.inject_bug!r} was "
              "negated before comparison")
    return 3 if failed else 0


def cmd_localize(args) -> int:
    params = load_checkpoint(args.checkpoint)
    cfg = _load(args)
    dataset = read_dataset(args.data)
    proposals = localize_dataset(dataset.records, params, cfg.run.hp)
    write_proposals(args.out, proposals,
                    frames_per_snippet=dataset.frames_per_snippet,
                    fps=dataset.fps)
    total = sum(len(v) for v in proposals.values())
    print(f"wrote {args.out}: {total} proposals over {len(proposals)} videos")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    dataset = read_dataset(args.data)
    proposals = read_proposals(args.proposals)
    report = evaluate(proposals, dataset.records,
                      iou_thresholds=cfg.eval_thresholds,
                      num_classes=dataset.num_classes)
    if args.out:
        write_report_csv(args.out, report)
        print(f"wrote {args.out}")
    print(format_summary(report))
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    run = cfg.run
    if args.iterations is not None:
        run = replace(run, iterations=args.iterations)
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    train_ds = read_dataset(args.data)
    test_ds = read_dataset(args.test)
    videos = training_view(train_ds.records)

    if args.grid == "components":
        grid = COMPONENT_GRID
    else:
        if not args.values:
            raise ConfigError(f"--values is required for --grid {args.grid}")
        values = args.values.split(",")
        if args.grid == "k":
            grid = []
            for v in values:
                k = int(v)
                grid.append((f"k={k}", run.grad_mode, True))
        else:  # lambda sweep
            grid = [(f"lambda={float(v):g}", run.grad_mode, run.use_ten)
                    for v in values]

    rows = []
    for (label, mode, use_ten), raw in zip(grid, (args.values.split(",")
                                                  if args.values else
                                                  [None] * len(grid))):
        hp = run.hp
        if args.grid == "k":
            hp = replace(hp, k=int(raw))
        elif args.grid == "lambda":
            hp = replace(hp, lam=float(raw))
        cfg_row = replace(run, grad_mode=mode, use_ten=use_ten, hp=hp,
                          checkpoint_path=None, log_path=None)
        result = train(videos, cfg_row)
        proposals = localize_dataset(test_ds.records, result.params, hp)
        report = evaluate(proposals, test_ds.records,
                          iou_thresholds=cfg.eval_thresholds,
                          num_classes=test_ds.num_classes)
        rows.append(AblationRow(label=label, report=report,
                                final_loss=result.log[-1].losses.total))
    table = format_ablation(rows)
    print(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("label,map_at_05,avg_01_05,avg_03_07,avg_01_07\n")
            for row in rows:
                r = row.report
                fh.write(f"{row.label},{r.map_by_threshold.get(0.5, float('nan')):.6f},"
                         f"{r.averages.get('0.1:0.5', float('nan')):.6f},"
                         f"{r.averages.get('0.3:0.7', float('nan')):.6f},"
                         f"{r.averages.get('0.1:0.7', float('nan')):.6f}\n")
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wtalkit",
        description="Weakly supervised temporal action localization toolkit: "
                    "synthetic data, training with background-gradient "
                    "strategies, inference, and mAP evaluation.")
    parser.add_argument("--config", default=None,
                        help=f"INI config path (default: ${ENV_CONFIG})")
    sub = parser.add_subparsers(dest="command", required=True)
    formatter = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen", formatter_class=formatter,
                       help="generate a synthetic dataset pair")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override synth seed")
    p.add_argument("--confound", type=float, default=None,
                   help="override confound_strength")
    p.add_argument("--noise", type=float, default=None, help="override noise_sigma")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", formatter_class=formatter, help="train a model")
    p.add_argument("--data", required=True, help="training dataset file")
    p.add_argument("--out", default=None, help="checkpoint output path")
    p.add_argument("--log", default=None, help="per-step loss CSV path")
    p.add_argument("--mode", choices=sorted(MODE_NAMES), default=None,
                   help="background gradient mode")
    ten = p.add_mutually_exclusive_group()
    ten.add_argument("--ten", dest="ten", action="store_true", default=None,
                     help="enable the temporal continuity branch")
    ten.add_argument("--no-ten", dest="ten", action="store_false",
                     help="disable the temporal continuity branch")
    p.add_argument("--iterations", type=int, default=None,
                   help="training steps (default: from config)")
    p.add_argument("--seed", type=int, default=None,
                   help="training seed (default: from config)")
    p.add_argument("--lam", type=float, default=None,
                   help="background loss weight override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", formatter_class=formatter,
                       help="certify analytic gradients against finite differences")
    p.add_argument("--instances", type=int, default=20,
                   help="random tiny instances per mode")
    p.add_argument("--tolerance", type=float, default=1e-5,
                   help="max allowed relative error")
    p.add_argument("--eps", type=float, default=1e-5,
                   help="finite-difference step")
    p.add_argument("--modes", default=None,
                   help="comma list, default standard,bges,bvl")
    p.add_argument("--inject-bug", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("localize", formatter_class=formatter,
                       help="run inference and write proposals")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="proposal file path")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", formatter_class=formatter,
                       help="score proposals against ground truth")
    p.add_argument("--proposals", required=True)
    p.add_argument("--data", required=True, help="dataset file with annotations")
    p.add_argument("--out", default=None, help="report CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", formatter_class=formatter,
                       help="train/evaluate a grid of configurations")
    p.add_argument("--data", required=True, help="training dataset file")
    p.add_argument("--test", required=True, help="test dataset file")
    p.add_argument("--grid", choices=("components", "k", "lambda"),
                   default="components")
    p.add_argument("--values", default=None,
                   help="comma list for k/lambda grids, e.g. 2,3,4,5")
    p.add_argument("--iterations", type=int, default=None,
                   help="training steps per grid row (default: from config)")
    p.add_argument("--seed", type=int, default=None,
                   help="training seed (default: from config)")
    p.add_argument("--out", default=None, help="summary CSV path")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
