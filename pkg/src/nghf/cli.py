"""Command-line front end.

Subcommands: generate (materialize the corpus), pretrain (frame
cross-entropy warm-up checkpoint), train (one full run), compare
(methods x seeds sweep with summary), report (re-summarize saved run
logs). Exit codes: 0 success, 2 configuration problems, 3 numerical
failure during a solve.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

import numpy as np

from . import harness
from .harness import ConfigError, ExperimentConfig
from .params import save_checkpoint
from .solver import NumericalError


def _config(args):
    if args.config:
        return ExperimentConfig.from_file(args.config)
    return ExperimentConfig.from_overrides()


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_generate(args):
    config = _config(args)
    world = config.world()
    corpus = config.corpus(world)
    out = _outdir(args)
    arrays = {"count": np.array(len(corpus))}
    for i, utt in enumerate(corpus):
        arrays[f"frames_{i}"] = utt.frames
        arrays[f"phones_{i}"] = utt.ref_phones
        arrays[f"durations_{i}"] = utt.ref_durations
        arrays[f"states_{i}"] = utt.ref_states
    path = os.path.join(out, "corpus.npz")
    np.savez(path, **arrays)
    frames = sum(u.num_frames for u in corpus)
    print(f"wrote {path}: {len(corpus)} utterances, {frames} frames, "
          f"{world.num_states} states")
    return 0


def cmd_pretrain(args):
    config = _config(args)
    _, theta = harness.build_problem(config, args.seed)
    out = _outdir(args)
    path = os.path.join(out, f"pretrained_seed{args.seed}.ckpt")
    save_checkpoint(path, theta)
    print(f"wrote {path}: {theta.size} parameters")
    return 0


def cmd_train(args):
    config = _config(args)
    result = harness.run_experiment(config, args.seed, method=args.method)
    out = _outdir(args)
    method = result.rows[-1].method
    log_path = os.path.join(out, f"runlog_{method}_seed{args.seed}.csv")
    harness.write_runlog(log_path, result.rows)
    ckpt_path = os.path.join(out, f"final_{method}_seed{args.seed}.ckpt")
    save_checkpoint(ckpt_path, result.theta)
    last = result.rows[-1]
    print(f"wrote {log_path} and {ckpt_path}")
    print(
        f"final: train {last.train_criterion:.4f} valid {last.valid_criterion:.4f} "
        f"ser {last.valid_error_rate:.4f} entropy {last.entropy:.4f} "
        f"({result.seconds:.1f}s)"
    )
    return 0


def cmd_compare(args):
    config = _config(args)
    out = _outdir(args)
    methods = config["compare.methods"]
    seeds = config["compare.seeds"]
    all_rows = []
    timing = []
    failed = 0
    for method in methods:
        for seed in seeds:
            # one diverged run must not sink the rest of the sweep
            try:
                result = harness.run_experiment(config, seed, method=method)
            except NumericalError as exc:
                failed += 1
                print(f"{method:<6} seed {seed}: FAILED ({exc})")
                continue
            path = os.path.join(out, f"runlog_{method}_seed{seed}.csv")
            harness.write_runlog(path, result.rows)
            all_rows.extend(result.rows)
            timing.append((method, seed, result.seconds))
            last = result.rows[-1]
            print(
                f"{method:<6} seed {seed}: valid {last.valid_criterion:.4f} "
                f"ser {last.valid_error_rate:.4f} ({result.seconds:.1f}s)"
            )
    if not timing:
        print("all runs failed", file=sys.stderr)
        return 3
    summary = harness.summarize(all_rows)
    harness.write_summary(os.path.join(out, "summary.csv"), summary)
    harness.emit_plots_data(all_rows, out)
    print()
    print(harness.format_summary(summary))
    total = sum(t for _, _, t in timing)
    tail = f", {failed} failed" if failed else ""
    print(f"total {total:.1f}s over {len(timing)} runs{tail}")
    return 0


def cmd_report(args):
    out = _outdir(args)
    paths = sorted(glob.glob(os.path.join(out, "runlog_*.csv")))
    if not paths:
        raise ConfigError(f"no runlog_*.csv files under {out}")
    rows = []
    for path in paths:
        rows.extend(harness.read_runlog(path))
    summary = harness.summarize(rows)
    harness.write_summary(os.path.join(out, "summary.csv"), summary)
    harness.emit_plots_data(rows, out)
    print(harness.format_summary(summary))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nghf", description="Matrix-free second-order sequence training testbed."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("generate", cmd_generate),
        ("pretrain", cmd_pretrain),
        ("train", cmd_train),
        ("compare", cmd_compare),
        ("report", cmd_report),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="config file (defaults built in)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--method", default=None, choices=("sgd", "ng", "hf", "nghf"))
        p.add_argument("--out", default=".", help="output directory")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
