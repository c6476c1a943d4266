"""Command line front end: gen-data, train, attack, certify, run."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .attacks import AttackConfig, perturb_batch
from .dataset import (
    SCHEMES,
    DatasetMeta,
    LabeledRecord,
    generate,
    read_container,
    split,
    stack_records,
    write_container,
)
from .errors import ConfigurationError, FrsError
from .filters import FilterSpec
from .harness import ExperimentConfig, run_experiment
from .model import TrainConfig, evaluate_accuracy, load_checkpoint, save_checkpoint, train
from .smoothing import ABSTAIN, SmoothingConfig, certify


def _parse_snr_grid(text: str) -> tuple[int, ...]:
    """Parse "start:step:stop" (inclusive) or a single value."""
    if ":" not in text:
        return (int(text),)
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected start:step:stop, got {text!r}")
    start, step, stop = (int(v) for v in parts)
    if step <= 0:
        raise argparse.ArgumentTypeError("snr step must be positive")
    return tuple(range(start, stop + 1, step))


def _parse_classes(text: str) -> tuple[str, ...]:
    wanted = []
    for name in text.split(","):
        canon = name.strip().upper()
        if canon:
            wanted.append(canon)
    return tuple(wanted)


def _cmd_gen_data(args) -> int:
    meta = DatasetMeta(class_names=args.classes, window_width=args.width,
                       snr_grid_db=args.snr,
                       records_per_class_per_snr=args.per_stratum,
                       seed=args.seed)
    records = generate(meta)
    write_container(args.out, meta, records)
    print(f"wrote {len(records)} records "
          f"({meta.n_classes} classes x {len(meta.snr_grid_db)} SNRs) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    with open(args.config) as fh:
        raw = json.load(fh)
    meta, records = read_container(args.data)
    train_recs, val_recs, _ = split(records, seed=int(raw.pop("split_seed", 0)))
    pre_filter = raw.pop("pre_filter", None)
    if pre_filter is not None:
        pre_filter = FilterSpec.from_dict(pre_filter, meta.window_width)
    attack_for_at = raw.pop("attack_for_at", None)
    if attack_for_at is not None:
        attack_for_at = AttackConfig.from_dict(attack_for_at)
    try:
        config = TrainConfig(pre_filter=pre_filter, attack_for_at=attack_for_at,
                             **raw)
    except TypeError as err:
        raise ConfigurationError(f"bad training config: {err}") from err
    params = train(train_recs, config, n_classes=meta.n_classes,
                   validation=val_recs)
    save_checkpoint(args.out, params)
    acc = evaluate_accuracy(params, val_recs, pre_filter=config.pre_filter)
    print(f"saved checkpoint to {args.out} (val accuracy {acc:.4f})")
    return 0


def _cmd_attack(args) -> int:
    params = load_checkpoint(args.ckpt)
    meta, records = read_container(args.data)
    config = AttackConfig(kind=args.kind, epsilon=args.epsilon,
                          pgd_steps=args.steps)
    x, y, _ = stack_records(records)
    out_records = []
    for start in range(0, x.shape[0], 256):
        stop = start + 256
        delta = perturb_batch(params, x[start:stop], y[start:stop], config)
        for row, rec in zip(delta, records[start:stop]):
            out_records.append(LabeledRecord(window=row.astype(np.float32),
                                             label=rec.label, snr_db=rec.snr_db))
    write_container(args.out, meta, out_records)
    print(f"wrote {len(out_records)} {args.kind} deltas "
          f"(epsilon {args.epsilon}) to {args.out}")
    return 0


_MODE_NAMES = {"pre": "pre_filter", "post": "post_filter", "none": "none"}


def _cmd_certify(args) -> int:
    params = load_checkpoint(args.ckpt)
    meta, records = read_container(args.data)
    if args.limit is not None:
        records = records[:args.limit]
    mode = _MODE_NAMES[args.frs_mode]
    spec = None
    if mode != "none":
        spec = FilterSpec(order=args.filter_order,
                          cutoff_index=args.filter_cutoff,
                          window_width=meta.window_width)
    config = SmoothingConfig(sigma=args.sigma, alpha=args.alpha, n0=args.n0,
                             n=args.n, seed=args.seed, frs_mode=mode,
                             filter_spec=spec)
    abstained = 0
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("input_index", "true_label", "predicted",
                         "p_a_lower", "radius", "abstained"))
        for i, rec in enumerate(records):
            res = certify(params, rec.window, config, input_index=i)
            abstained += res.predicted == ABSTAIN
            writer.writerow((i, rec.label, res.predicted, res.p_a_lower,
                             res.radius, res.abstained))
    print(f"wrote {len(records)} certification rows to {args.out} "
          f"({abstained} abstained)")
    return 0


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.experiment != config.experiment:
        raise FrsError(
            f"--experiment {args.experiment} does not match config "
            f"experiment {config.experiment!r}")
    path = run_experiment(config)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frs",
        description="Low-pass filtered randomized smoothing for I/Q "
                    "modulation classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--classes", type=_parse_classes,
                   default=SCHEMES, help="comma separated scheme names")
    g.add_argument("--snr", type=_parse_snr_grid, default=(0, 18),
                   metavar="START:STEP:STOP", help="inclusive SNR grid in dB")
    g.add_argument("--per-stratum", type=int, default=200)
    g.add_argument("--width", type=int, default=128)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_data)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=_cmd_train)

    a = sub.add_parser("attack", help="write per-record deltas as a container")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--kind", default="pgd_l2")
    a.add_argument("--epsilon", type=float, required=True)
    a.add_argument("--steps", type=int, default=10)
    a.add_argument("--out", required=True)
    a.set_defaults(func=_cmd_attack)

    c = sub.add_parser("certify", help="certify records and write a CSV")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--sigma", type=float, required=True)
    c.add_argument("--alpha", type=float, default=0.001)
    c.add_argument("--n", type=int, default=10000)
    c.add_argument("--n0", type=int, default=100)
    c.add_argument("--frs-mode", choices=sorted(_MODE_NAMES), default="none")
    c.add_argument("--filter-cutoff", type=float, default=20.0)
    c.add_argument("--filter-order", type=int, default=2)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--limit", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_certify)

    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("--experiment", required=True)
    r.add_argument("--config", required=True)
    r.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FrsError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
