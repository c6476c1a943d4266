#!/usr/bin/env python3
"""Convert a RadioML 2016.10a pickle archive into an FRSD container.

The archive is a dict keyed by (modulation name, snr_db) holding float32
arrays of shape (n_windows, 2, 128).  Records are written sorted by class
name, then SNR, then original index, so the output is deterministic.
Amplitudes are passed through untouched; the report carries a warning
with the observed per-class energy statistics, because the upstream
normalization is not documented.

Usage: convert_rml.py <in.pkl> <out.frsd>
"""

from __future__ import annotations

import argparse
import pickle
import struct
import sys
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"FRSD"
VERSION = 1
HEADER = struct.Struct("<4sIIIQ")


class ConversionError(Exception):
    pass


@dataclass
class ConversionReport:
    classes_found: list
    records_written: int
    snr_grid: list
    warnings: list = field(default_factory=list)


def _name(key) -> str:
    """Archive keys from the original python2 pickle may be bytes."""
    mod = key[0]
    return mod.decode("utf-8") if isinstance(mod, bytes) else str(mod)


def load_archive(path) -> dict:
    with open(path, "rb") as fh:
        # the upstream archive was pickled under python2
        return pickle.load(fh, encoding="latin1")


def convert(pickle_path, out_path) -> ConversionReport:
    archive = load_archive(pickle_path)
    if not isinstance(archive, dict):
        raise ConversionError(
            f"expected a dict archive, got {type(archive).__name__}")
    if not archive:
        raise ConversionError("archive holds no records; nothing written")

    bad = []
    width = None
    for key, payload in archive.items():
        if not (isinstance(key, tuple) and len(key) == 2):
            bad.append(repr(key))
            continue
        arr = np.asarray(payload)
        if arr.ndim != 3 or arr.shape[1] != 2:
            bad.append(repr(key))
            continue
        if width is None:
            width = arr.shape[2]
        elif arr.shape[2] != width:
            bad.append(repr(key))
    if bad:
        raise ConversionError(
            "unusable archive entries: " + ", ".join(sorted(bad)))

    classes = sorted({_name(k) for k in archive})
    index = {name: i for i, name in enumerate(classes)}
    snrs = sorted({int(k[1]) for k in archive})
    ordered = sorted(archive, key=lambda k: (_name(k), int(k[1])))

    count = sum(np.asarray(archive[k]).shape[0] for k in ordered)
    energy_by_class: dict[str, list] = {name: [] for name in classes}

    with open(out_path, "wb") as out:
        out.write(HEADER.pack(MAGIC, VERSION, len(classes), width, count))
        for name in classes:
            raw = name.encode("utf-8")
            out.write(struct.pack("<I", len(raw)))
            out.write(raw)
        for key in ordered:
            name = _name(key)
            snr = int(key[1])
            windows = np.ascontiguousarray(archive[key], dtype="<f4")
            energy_by_class[name].append(
                np.mean(np.sum(windows.astype(np.float64) ** 2, axis=(1, 2))))
            head = struct.pack("<Bh", index[name], snr)
            for window in windows:
                out.write(head)
                out.write(window.tobytes())

    stats = ", ".join(
        f"{name}={np.mean(v):.4g}" for name, v in energy_by_class.items())
    report = ConversionReport(classes_found=classes, records_written=count,
                              snr_grid=snrs)
    report.warnings.append(
        "amplitudes passed through unnormalized; "
        f"mean window energy by class: {stats}")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("pickle_path")
    parser.add_argument("out_path")
    args = parser.parse_args(argv)
    try:
        report = convert(args.pickle_path, args.out_path)
    except (ConversionError, OSError, pickle.UnpicklingError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {report.records_written} records, "
          f"{len(report.classes_found)} classes, "
          f"SNR {report.snr_grid[0]}..{report.snr_grid[-1]} dB")
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
