#!/usr/bin/env python3
"""Render a harness CSV as an SVG figure.

Usage: plot_csv.py --kind <name> <in.csv> <out.svg>

Kinds and the schemas they expect:
  spectrum   bin_index, clean_amp, fgsm_amp, pgd_amp
  sweep      k, eta_benign_db, eta_pert_db, spr_db, accuracy_* ...
  attack     kind, snr_db, epsilon, accuracy, n
  bars       defense, attack, epsilon, accuracy
  classes    class, eta_be_db, eta_pe_db, spr_db
  certified  model, sigma, frs_mode, r, certified_accuracy
"""

from __future__ import annotations

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


class SchemaError(Exception):
    pass


REQUIRED = {
    "spectrum": ("bin_index", "clean_amp", "fgsm_amp", "pgd_amp"),
    "sweep": ("k", "eta_benign_db", "eta_pert_db", "spr_db"),
    "attack": ("kind", "snr_db", "epsilon", "accuracy"),
    "bars": ("defense", "attack", "epsilon", "accuracy"),
    "classes": ("class", "eta_be_db", "eta_pe_db", "spr_db"),
    "certified": ("model", "sigma", "frs_mode", "r", "certified_accuracy"),
}


def read_rows(path, kind):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in REQUIRED[kind]:
            if column not in header:
                raise SchemaError(
                    f"CSV is missing column {column!r} required by kind {kind!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError("CSV has no data rows")
    return header, rows


def plot_spectrum(ax, header, rows):
    bins = [int(r["bin_index"]) for r in rows]
    for col, style in (("clean_amp", "-"), ("fgsm_amp", "--"), ("pgd_amp", ":")):
        ax.plot(bins, [float(r[col]) for r in rows], style, label=col)
    ax.set_xlabel("DFT bin")
    ax.set_ylabel("average amplitude")
    ax.set_yscale("log")
    ax.legend()


def plot_sweep(ax, header, rows):
    ks = [float(r["k"]) for r in rows]
    ax.plot(ks, [float(r["eta_benign_db"]) for r in rows], label="eta_benign_db")
    ax.plot(ks, [float(r["eta_pert_db"]) for r in rows], label="eta_pert_db")
    ax.plot(ks, [float(r["spr_db"]) for r in rows], label="spr_db")
    ax.set_xlabel("cutoff index k")
    ax.set_ylabel("dB")
    acc_cols = [c for c in header if c.startswith("accuracy")]
    if acc_cols:
        twin = ax.twinx()
        for col in acc_cols:
            twin.plot(ks, [float(r[col]) for r in rows], ":", label=col)
        twin.set_ylabel("accuracy")
        twin.set_ylim(0.0, 1.0)
        twin.legend(loc="lower right")
    ax.legend(loc="upper left")


def plot_attack(ax, header, rows):
    series = sorted({(r["kind"], float(r["epsilon"])) for r in rows})
    for kind, eps in series:
        pts = sorted((int(r["snr_db"]), float(r["accuracy"])) for r in rows
                     if r["kind"] == kind and float(r["epsilon"]) == eps)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                label=f"{kind} eps={eps:g}")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize="small")


def plot_bars(ax, header, rows):
    cells = sorted({(r["attack"], float(r["epsilon"])) for r in rows})
    defenses = sorted({r["defense"] for r in rows})
    width = 1.0 / (len(defenses) + 1)
    for j, defense in enumerate(defenses):
        vals = []
        for attack, eps in cells:
            match = [float(r["accuracy"]) for r in rows
                     if r["defense"] == defense and r["attack"] == attack
                     and float(r["epsilon"]) == eps]
            vals.append(match[0] if match else 0.0)
        xs = [i + j * width for i in range(len(cells))]
        ax.bar(xs, vals, width=width, label=defense)
    ax.set_xticks([i + width * (len(defenses) - 1) / 2 for i in range(len(cells))])
    ax.set_xticklabels([f"{a}\neps={e:g}" for a, e in cells], fontsize="small")
    ax.set_ylabel("accuracy")
    ax.legend(fontsize="small")


def plot_classes(ax, header, rows):
    names = [r["class"] for r in rows]
    xs = range(len(names))
    width = 0.27
    for j, col in enumerate(("eta_be_db", "eta_pe_db", "spr_db")):
        ax.bar([x + j * width for x in xs], [float(r[col]) for r in rows],
               width=width, label=col)
    ax.set_xticks([x + width for x in xs])
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize="small")
    ax.set_ylabel("dB")
    ax.legend()


def plot_certified(ax, header, rows):
    series = sorted({(r["model"], r["sigma"], r["frs_mode"]) for r in rows})
    for model, sigma, mode in series:
        pts = sorted((float(r["r"]), float(r["certified_accuracy"]))
                     for r in rows if (r["model"], r["sigma"], r["frs_mode"])
                     == (model, sigma, mode))
        ax.step([p[0] for p in pts], [p[1] for p in pts], where="post",
                label=f"{model} sigma={sigma} {mode}")
    ax.set_xlabel("radius r")
    ax.set_ylabel("certified accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize="small")


PLOTTERS = {
    "spectrum": plot_spectrum,
    "sweep": plot_sweep,
    "attack": plot_attack,
    "bars": plot_bars,
    "classes": plot_classes,
    "certified": plot_certified,
}


def render(csv_path, kind, out_path) -> None:
    if kind not in PLOTTERS:
        raise SchemaError(
            f"unknown kind {kind!r}; expected one of {', '.join(sorted(PLOTTERS))}")
    header, rows = read_rows(csv_path, kind)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    PLOTTERS[kind](ax, header, rows)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", required=True)
    parser.add_argument("csv_path")
    parser.add_argument("out_path")
    args = parser.parse_args(argv)
    try:
        render(args.csv_path, args.kind, args.out_path)
    except (SchemaError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {args.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
