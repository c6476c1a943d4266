"""Synthetic modulation dataset generation, splits, and the FRSD container.

Windows are drawn per (class, snr) stratum from an independent seeded
stream, so strata can be produced in any order or in parallel without
changing the result.  Clean windows are normalized to unit energy before
complex white Gaussian noise is added at the requested SNR.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, FormatError

SAMPLES_PER_SYMBOL = 8
RRC_ROLLOFF = 0.35
RRC_SPAN_SYMBOLS = 8
FSK_MOD_INDEX = 0.5
GFSK_BT = 0.3

CONTAINER_MAGIC = b"FRSD"
CONTAINER_VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")

_QAM16_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0])

#: Constellations for the linearly modulated schemes, unit average symbol
#: energy.  CPFSK and GFSK are handled by the phase-continuous path below.
CONSTELLATIONS = {
    "BPSK": np.array([1.0 + 0.0j, -1.0 + 0.0j]),
    "QPSK": np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4))),
    "8PSK": np.exp(2j * np.pi * np.arange(8) / 8),
    "PAM4": (2.0 * np.arange(4) - 3.0).astype(complex) / math.sqrt(5.0),
    "QAM16": ((_QAM16_LEVELS[:, None] + 1j * _QAM16_LEVELS[None, :]).ravel()
              / math.sqrt(10.0)),
}

SCHEMES = tuple(sorted(list(CONSTELLATIONS) + ["CPFSK", "GFSK"]))


@dataclass(frozen=True)
class DatasetMeta:
    """Shape and provenance of a dataset: class names, window width, SNR grid.

    ``records_per_class_per_snr`` and ``seed`` are None for containers read
    back from disk, where only the realized records are known.
    """

    class_names: tuple[str, ...]
    window_width: int
    snr_grid_db: tuple[int, ...]
    records_per_class_per_snr: int | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "snr_grid_db",
                           tuple(int(s) for s in self.snr_grid_db))
        if len(self.class_names) < 2:
            raise ConfigurationError("need at least two classes")
        w = self.window_width
        if w < 2 or w & (w - 1):
            raise ConfigurationError(f"window width must be a power of two, got {w}")
        grid = self.snr_grid_db
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("snr grid must be strictly increasing")
        if self.records_per_class_per_snr is not None \
                and self.records_per_class_per_snr < 1:
            raise ConfigurationError("records_per_class_per_snr must be positive")
        if self.seed is not None and self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class LabeledRecord:
    """One I/Q window with its class label and the SNR it was drawn at."""

    window: np.ndarray
    label: int
    snr_db: int


def _rrc_taps(sps: int, rolloff: float, span: int) -> np.ndarray:
    """Root-raised-cosine pulse sampled at sps, span symbols each side."""
    t = np.arange(-span * sps, span * sps + 1) / sps
    b = rolloff
    taps = np.empty_like(t)
    # generic points; the two removable singularities are patched below
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.sin(np.pi * t * (1 - b)) + 4 * b * t * np.cos(np.pi * t * (1 + b))
        taps = num / (np.pi * t * (1 - (4 * b * t) ** 2))
    taps[t == 0.0] = 1.0 - b + 4 * b / np.pi
    edge = np.isclose(np.abs(t), 1.0 / (4 * b))
    taps[edge] = (b / math.sqrt(2)) * (
        (1 + 2 / np.pi) * math.sin(np.pi / (4 * b))
        + (1 - 2 / np.pi) * math.cos(np.pi / (4 * b)))
    return taps


def _gfsk_pulse(sps: int, bt: float) -> np.ndarray:
    """Gaussian-smoothed rectangular frequency pulse, area 1/2."""
    sigma = sps * math.sqrt(math.log(2.0)) / (2.0 * np.pi * bt)
    half = int(math.ceil(4 * sigma))
    u = np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (u / sigma) ** 2)
    pulse = np.convolve(np.ones(sps), kernel)
    return pulse * (0.5 / pulse.sum())


_RRC = _rrc_taps(SAMPLES_PER_SYMBOL, RRC_ROLLOFF, RRC_SPAN_SYMBOLS)
_CPFSK_PULSE = np.full(SAMPLES_PER_SYMBOL, 0.5 / SAMPLES_PER_SYMBOL)
_GFSK_PULSE = _gfsk_pulse(SAMPLES_PER_SYMBOL, GFSK_BT)


def _symbol_count(width: int, pad: int) -> int:
    return -(-(width + 2 * pad + SAMPLES_PER_SYMBOL) // SAMPLES_PER_SYMBOL)


def clean_window(scheme: str, width: int, rng: np.random.Generator) -> np.ndarray:
    """One unit-energy complex baseband window of the given scheme.

    Linear schemes are RRC pulse-shaped at SAMPLES_PER_SYMBOL; CPFSK and
    GFSK are phase-continuous with modulation index FSK_MOD_INDEX.  The
    window starts at a random timing offset and carries a random initial
    carrier phase.
    """
    sps = SAMPLES_PER_SYMBOL
    if scheme in CONSTELLATIONS:
        points = CONSTELLATIONS[scheme]
        pad = len(_RRC) - 1
        n_sym = _symbol_count(width, pad)
        symbols = points[rng.integers(0, len(points), n_sym)]
        up = np.zeros(n_sym * sps, dtype=complex)
        up[::sps] = symbols
        base = np.convolve(up, _RRC)
    elif scheme in ("CPFSK", "GFSK"):
        pulse = _CPFSK_PULSE if scheme == "CPFSK" else _GFSK_PULSE
        pad = len(pulse) - 1
        n_sym = _symbol_count(width, pad)
        bits = 2.0 * rng.integers(0, 2, n_sym) - 1.0
        up = np.zeros(n_sym * sps)
        up[::sps] = bits
        phase = 2 * np.pi * FSK_MOD_INDEX * np.cumsum(np.convolve(up, pulse))
        base = np.exp(1j * phase)
    else:
        raise ConfigurationError(f"unknown modulation scheme {scheme!r}")
    offset = int(rng.integers(0, sps))
    z = base[pad + offset:pad + offset + width]
    z = z * np.exp(1j * rng.uniform(0.0, 2 * np.pi))
    return z / math.sqrt(np.sum(z.real ** 2 + z.imag ** 2))


def _stratum(meta: DatasetMeta, label: int, snr_index: int):
    """All windows of one (class, snr) cell plus their clean/noise parts."""
    rng = np.random.default_rng(
        np.random.SeedSequence((meta.seed, label, snr_index)))
    scheme = meta.class_names[label]
    snr = meta.snr_grid_db[snr_index]
    w = meta.window_width
    count = meta.records_per_class_per_snr
    noise_scale = math.sqrt(10.0 ** (-snr / 10.0) / (2 * w))
    records, cleans, noises = [], [], []
    for _ in range(count):
        z = clean_window(scheme, w, rng)
        clean = np.stack([z.real, z.imag])
        noise = noise_scale * rng.standard_normal((2, w))
        records.append(LabeledRecord(
            window=(clean + noise).astype(np.float32), label=label, snr_db=snr))
        cleans.append(clean)
        noises.append(noise)
    return records, cleans, noises


def generate_with_components(meta: DatasetMeta, threads: int | None = None):
    """Like generate, but also returns the clean and noise parts.

    Returns (records, clean, noise) where clean and noise are float64
    arrays of shape (B, 2, W) and each record window is the float32 cast
    of clean + noise.  Useful for measuring the realized per-window SNR.
    """
    if meta.records_per_class_per_snr is None or meta.seed is None:
        raise ConfigurationError(
            "generation needs records_per_class_per_snr and seed")
    for name in meta.class_names:
        if name not in SCHEMES:
            raise ConfigurationError(f"unknown modulation scheme {name!r}")
    cells = [(lab, si) for lab in range(meta.n_classes)
             for si in range(len(meta.snr_grid_db))]
    if threads is None:
        threads = int(os.environ.get("FRS_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _stratum(meta, *c), cells))
    else:
        parts = [_stratum(meta, *c) for c in cells]
    records = [r for p in parts for r in p[0]]
    clean = np.array([c for p in parts for c in p[1]])
    noise = np.array([n for p in parts for n in p[2]])
    return records, clean, noise


def generate(meta: DatasetMeta, threads: int | None = None) -> list[LabeledRecord]:
    """Generate the full stratified dataset described by meta."""
    return generate_with_components(meta, threads=threads)[0]


def split(records, fractions=(0.50, 0.05, 0.45), seed: int = 0):
    """Stratified (train, val, test) split by (label, snr_db).

    Within each stratum the records are shuffled with a seed-derived
    stream and cut at the rounded fractions; strata are processed in
    sorted order so the result does not depend on dict iteration order.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"fractions must sum to 1, got {fractions}")
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ConfigurationError("need three non-negative fractions")
    strata: dict[tuple[int, int], list[LabeledRecord]] = {}
    for rec in records:
        strata.setdefault((rec.label, rec.snr_db), []).append(rec)
    rng = np.random.default_rng(seed)
    out: tuple[list, list, list] = ([], [], [])
    for key in sorted(strata):
        group = strata[key]
        order = rng.permutation(len(group))
        n_train = int(round(fractions[0] * len(group)))
        n_val = int(round(fractions[1] * len(group)))
        for pos, idx in enumerate(order):
            bucket = 0 if pos < n_train else 1 if pos < n_train + n_val else 2
            out[bucket].append(group[idx])
    return out


def stack_records(records):
    """Stack a record sequence into (windows, labels, snrs) arrays."""
    x = np.stack([np.asarray(r.window, dtype=np.float64) for r in records])
    y = np.array([r.label for r in records], dtype=np.int64)
    snr = np.array([r.snr_db for r in records], dtype=np.int64)
    return x, y, snr


def write_container(path, meta: DatasetMeta, records) -> None:
    """Write records to the FRSD binary container format.

    Layout: magic "FRSD", u32 version, u32 K, u32 W, u64 count, then K
    class names (u32 byte length + UTF-8 each), then per record one u8
    label, one i16 snr_db, and 2*W little-endian float32 values (I row
    then Q row).
    """
    records = list(records)
    w = meta.window_width
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CONTAINER_MAGIC, CONTAINER_VERSION,
                              meta.n_classes, w, len(records)))
        for name in meta.class_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        for rec in records:
            window = np.ascontiguousarray(rec.window, dtype="<f4")
            if window.shape != (2, w):
                raise ConfigurationError(
                    f"record window shape {window.shape} does not match W={w}")
            if not np.all(np.isfinite(window)):
                raise DomainError("record window contains non-finite values")
            if not 0 <= rec.label < meta.n_classes:
                raise ConfigurationError(f"label {rec.label} out of range")
            if not -32768 <= rec.snr_db <= 32767:
                raise ConfigurationError(f"snr_db {rec.snr_db} does not fit i16")
            fh.write(struct.pack("<Bh", rec.label, rec.snr_db))
            fh.write(window.tobytes())


def read_container(path):
    """Read an FRSD container; returns (meta, records).

    Raises FormatError naming the byte offset on bad magic, unsupported
    version, or a truncated payload.  The reconstructed meta carries the
    observed SNR grid but no generation seed.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError("truncated header", offset=len(blob))
    magic, version, k, w, count = _HEADER.unpack_from(blob, 0)
    if magic != CONTAINER_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if k < 2:
        raise FormatError(f"class count {k} below minimum", offset=8)
    if w < 2 or w & (w - 1):
        raise FormatError(f"window width {w} not a power of two", offset=12)
    pos = _HEADER.size
    names = []
    for _ in range(k):
        if pos + 4 > len(blob):
            raise FormatError("truncated class-name table", offset=pos)
        (length,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + length > len(blob):
            raise FormatError("truncated class name", offset=pos)
        names.append(blob[pos:pos + length].decode("utf-8"))
        pos += length
    record_dtype = np.dtype([("label", "u1"), ("snr", "<i2"),
                             ("iq", "<f4", (2, w))])
    payload = count * record_dtype.itemsize
    if len(blob) - pos < payload:
        raise FormatError(
            f"payload needs {payload} bytes, found {len(blob) - pos}",
            offset=pos)
    if len(blob) - pos > payload:
        raise FormatError("trailing bytes after last record", offset=pos + payload)
    raw = np.frombuffer(blob, dtype=record_dtype, count=count, offset=pos)
    records = []
    for i in range(count):
        label = int(raw["label"][i])
        if label >= k:
            raise FormatError(f"label {label} out of range for K={k}",
                              offset=pos + i * record_dtype.itemsize)
        records.append(LabeledRecord(window=raw["iq"][i].copy(), label=label,
                                     snr_db=int(raw["snr"][i])))
    grid = tuple(sorted({r.snr_db for r in records}))
    meta = DatasetMeta(class_names=tuple(names), window_width=w,
                       snr_grid_db=grid)
    return meta, records
