"""``dmtnet`` command-line interface.

Subcommands: ``train``, ``eval``, ``verify`` and ``gen-data``.  Exit
codes: 0 success, 1 usage or configuration error, 2 verification
failure, 3 I/O error.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import plotting
from .config import build_run_config, format_config, read_config_file
from .metrics import build_eval_report
from .model import ABLATIONS, init_params
from .skeleton import (
    ACTION_FAMILIES,
    SkeletonFormatError,
    class_margins,
    generate_synthetic,
    load_skeleton_file,
    save_skeleton_file,
)
from .train import (
    OptimState,
    accuracy,
    check_params_match,
    fit,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .verify import run_all

log = logging.getLogger("dmtnet")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_IO = 3

TEST_SUBJECT_OFFSET = 10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def class_names(k):
    names = []
    for i in range(k):
        base = ACTION_FAMILIES[i % len(ACTION_FAMILIES)]
        names.append(base if i < len(ACTION_FAMILIES) else f"{base}{i // len(ACTION_FAMILIES) + 1}")
    return names


def synthetic_split(run, split):
    """Synthetic data for ``split``; train and test come from disjoint seeds and subjects."""
    m = run.model
    if split == "train":
        rng = np.random.default_rng(run.seed)
        return generate_synthetic(m.classes, run.per_class, m.joints, run.frames, rng)
    rng = np.random.default_rng([run.seed, 1])
    return generate_synthetic(m.classes, run.test_per_class, m.joints, run.frames, rng, TEST_SUBJECT_OFFSET)


def load_split(run, split):
    path = run.data if split == "train" else (run.test_data or "")
    if path:
        data = load_skeleton_file(path)
        if not data:
            raise UsageError(f"{path}: no usable sequences")
        return data
    return synthetic_split(run, split)


def _report_dir(run):
    os.makedirs(run.report, exist_ok=True)
    return run.report


def _write_config_echo(run, directory, name):
    with open(os.path.join(directory, name), "w") as fh:
        fh.write(format_config(run))


def cmd_train(run):
    out = _report_dir(run)
    train_data = load_split(run, "train")
    test_data = load_split(run, "test")
    cfg = run.model
    params = init_params(cfg)
    opt = OptimState(
        learning_rate=run.lr,
        momentum=run.momentum,
        clip_norm=run.clip_norm,
        decay=run.decay,
        decay_every=run.decay_every,
    )
    log_path = os.path.join(out, "train_log.jsonl")
    start = time.perf_counter()
    with open(log_path, "w") as fh:

        def record(metrics, current):
            metrics["test_accuracy"] = accuracy(cfg, current, test_data)
            fh.write(json.dumps(metrics, sort_keys=True) + "\n")
            log.info("epoch %d loss %.4f train %.3f test %.3f", metrics["epoch"], metrics["loss"],
                     metrics["accuracy"], metrics["test_accuracy"])

        params, history = fit(cfg, params, train_data, opt, run.epochs, run.seed, run.batch_size, run.augment, record)
    elapsed = time.perf_counter() - start
    save_checkpoint(run.checkpoint, cfg, params)
    summary = {
        "epochs": run.epochs,
        "final_loss": history[-1]["loss"] if history else None,
        "train_accuracy": accuracy(cfg, params, train_data),
        "test_accuracy": accuracy(cfg, params, test_data),
        "skipped_steps": opt.skipped,
        "wall_clock_seconds": elapsed,
        "config": run.to_dict(),
    }
    with open(os.path.join(out, "train_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_config_echo(run, out, "train_config.txt")
    if history:
        plotting.plot_training_log(history, os.path.join(out, "training.png"))
    print(f"trained {run.epochs} epochs in {elapsed:.1f}s: train accuracy {summary['train_accuracy']:.3f}, "
          f"held-out accuracy {summary['test_accuracy']:.3f}")
    print(f"checkpoint: {run.checkpoint}")
    return EXIT_OK


def cmd_eval(run, params):
    out = _report_dir(run)
    cfg = run.model
    check_params_match(cfg, params)
    data = load_split(run, run.split)
    start = time.perf_counter()
    preds = predict(cfg, params, data)
    elapsed = time.perf_counter() - start
    labels = np.array([s.label for s in data])
    report = build_eval_report(labels, preds, class_names(cfg.classes), elapsed, run.to_dict())
    report.write_json(os.path.join(out, "eval_report.json"))
    report.write_confusion_csv(os.path.join(out, "confusion.csv"))
    report.write_metrics_csv(os.path.join(out, "metrics.csv"))
    _write_config_echo(run, out, "eval_config.txt")
    plotting.plot_confusion(report, os.path.join(out, "confusion.png"))
    print(report.format_table())
    return EXIT_OK


def cmd_verify(run):
    out = _report_dir(run)
    report = run_all(run.trials, run.seed, run.inject_fault, config=run.to_dict())
    table = report.format_table()
    with open(os.path.join(out, "verify_report.txt"), "w") as fh:
        fh.write(table + "\n\n# config\n" + format_config(run))
    report.write_json(os.path.join(out, "verify_summary.json"))
    plotting.plot_verification(report, os.path.join(out, "verify.png"))
    print(table)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_gen_data(run):
    if not run.data:
        raise UsageError("gen-data needs --data <output path>")
    m = run.model
    data = generate_synthetic(m.classes, run.per_class, m.joints, run.frames, np.random.default_rng(run.seed))
    save_skeleton_file(run.data, data)
    margins = class_margins(data)
    names = class_names(m.classes)
    print(f"wrote {len(data)} sequences ({m.classes} classes x {run.per_class}) to {run.data}")
    print("class margins (RMS distance between class-mean trajectories):")
    width = max(len(n) for n in names)
    print(" " * width + "  " + "  ".join(f"{n:>{width}}" for n in names))
    for name, row in zip(names, margins):
        print(f"{name:>{width}}  " + "  ".join(f"{v:>{width}.4f}" for v in row))
    return EXIT_OK


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--data", help="skeleton file (input; output for gen-data)")
    common.add_argument("--test-data", dest="test_data", help="held-out skeleton file")
    common.add_argument("--checkpoint")
    common.add_argument("--report", help="output directory for reports and figures")
    common.add_argument("--ablation", choices=ABLATIONS)
    common.add_argument("--trials", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("--classes", type=int)
    common.add_argument("--joints", type=int)
    common.add_argument("--per-class", dest="per_class", type=int)
    common.add_argument("--test-per-class", dest="test_per_class", type=int)
    common.add_argument("--frames", type=int)
    common.add_argument("--split", choices=("train", "test"))
    common.add_argument("--inject-fault", dest="inject_fault", action="store_const", const=True)
    common.add_argument("--no-augment", dest="augment", action="store_const", const=False)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="dmtnet", description="SPD manifold-to-manifold network: train, evaluate, verify.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train a model and write a checkpoint")
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    sub.add_parser("verify", parents=[common], help="run the randomized SPD certification suites")
    sub.add_parser("gen-data", parents=[common], help="write a synthetic skeleton dataset")
    return parser


_NON_CONFIG = {"command", "config", "verbose"}


def _overrides(args):
    return {k: v for k, v in vars(args).items() if k not in _NON_CONFIG and v is not None}


def run_command(args):
    file_values = read_config_file(args.config) if args.config else {}
    overrides = _overrides(args)
    run = build_run_config(file_values, overrides)
    if args.command == "train":
        return cmd_train(run)
    if args.command == "verify":
        return cmd_verify(run)
    if args.command == "gen-data":
        return cmd_gen_data(run)
    ckpt_config, params = load_checkpoint(run.checkpoint)
    model_keys = set(run.model.to_dict())
    explicit = {k: v for k, v in {**file_values, **overrides}.items() if k in model_keys}
    merged = {k: v for k, v in ckpt_config.items() if k in model_keys}
    merged.update({k: v for k, v in file_values.items() if k not in model_keys})
    merged.update(explicit)
    run = build_run_config(merged, {k: v for k, v in overrides.items() if k not in model_keys})
    return cmd_eval(run, params)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run_command(args)
    except (OSError, SkeletonFormatError) as exc:
        print(f"dmtnet: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, UsageError) as exc:
        print(f"dmtnet: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
