"""Experiment orchestration: JSON configs in, CSV tables plus manifests out.

Each runner loads its inputs, computes one table, and writes
``<experiment>.csv`` with a ``<experiment>.manifest.json`` beside it.  The
manifest records the config hash, package version, wall time, and row
count, so results are diffable and attributable.  Rows are sorted before
writing, so the output is identical under any FRS_THREADS setting.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackConfig, evaluate_under_attack, perturb_batch
from .dataset import read_container, split, stack_records
from .errors import ConfigurationError
from .filters import FilterResponse, FilterSpec, apply_batch, design
from .model import load_checkpoint, predict
from .smoothing import (
    SmoothingConfig,
    _input_rng,
    _pipeline,
    _vote_counts,
    certify,
    curve_from_results,
)
from .spectral import average_spectrum, eta_db, spr_db

EXPERIMENTS = (
    "spectrum_report",
    "cutoff_sweep",
    "attack_eval",
    "defense_compare",
    "per_class_filter_metrics",
    "certified_curve",
)

DEFENSES = ("rt", "at", "ga", "filter_only",
            "filter_noise_before", "filter_noise_after")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment request: which runner, where to write, and its knobs."""

    experiment: str
    output_dir: str
    params: dict
    sha256: str

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"unknown experiment {self.experiment!r}; "
                f"expected one of {', '.join(EXPERIMENTS)}")

    @classmethod
    def from_dict(cls, raw: dict, sha256: str | None = None) -> "ExperimentConfig":
        d = dict(raw)
        experiment = d.pop("experiment", None)
        output_dir = d.pop("output_dir", None)
        if experiment is None or output_dir is None:
            raise ConfigurationError(
                "config needs 'experiment' and 'output_dir' keys")
        if sha256 is None:
            canon = json.dumps(raw, sort_keys=True).encode()
            sha256 = hashlib.sha256(canon).hexdigest()
        return cls(experiment=experiment, output_dir=str(output_dir),
                   params=d, sha256=sha256)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        blob = Path(path).read_bytes()
        return cls.from_dict(json.loads(blob),
                             sha256=hashlib.sha256(blob).hexdigest())


def thread_count() -> int:
    return max(1, int(os.environ.get("FRS_THREADS", "1")))


def _pmap(fn, items):
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _require(params: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in params]
    if missing:
        raise ConfigurationError(
            f"config missing required keys: {', '.join(missing)}")


def _load_ckpt(path):
    if not Path(path).exists():
        raise ConfigurationError(f"missing checkpoint {path}")
    return load_checkpoint(path)


def _test_records(p: dict):
    """Load the container, keep the test split, apply slice and subsample."""
    _require(p, "data")
    meta, records = read_container(p["data"])
    _, _, test = split(records, seed=int(p.get("split_seed", 0)))
    snr = p.get("snr_db")
    if snr is not None:
        test = [r for r in test if r.snr_db == int(snr)]
    sub = p.get("subsample")
    if sub is not None and int(sub) < len(test):
        rng = np.random.default_rng(int(p.get("subsample_seed", 0)))
        keep = sorted(rng.choice(len(test), size=int(sub), replace=False))
        test = [test[i] for i in keep]
    if not test:
        raise ConfigurationError("no test records left after slicing")
    return meta, test


def _emit(config: ExperimentConfig, header, rows, started: float) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{config.experiment}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    manifest = {
        "experiment": config.experiment,
        "config_sha256": config.sha256,
        "package_version": __version__,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "created_utc": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "rows": len(rows),
        "csv": csv_path.name,
    }
    with open(out / f"{config.experiment}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path


def _delta_for(params, x, y, kind: str, epsilon: float) -> np.ndarray:
    """Perturbations for one attack cell; epsilon 0 means no attack."""
    if epsilon == 0.0:
        return np.zeros_like(x)
    return perturb_batch(params, x, y, AttackConfig(kind=kind, epsilon=epsilon))


def run_spectrum_report(config: ExperimentConfig) -> Path:
    """Average amplitude spectrum of clean windows and of FGSM/PGD deltas.

    Uses the highest-SNR stratum of the container, where the clean
    occupied band is sharpest.
    """
    started = time.perf_counter()
    p = config.params
    _require(p, "data", "checkpoint", "epsilon")
    meta, records = read_container(p["data"])
    if not meta.snr_grid_db:
        raise ConfigurationError("container has no records")
    top = max(meta.snr_grid_db)
    records = [r for r in records if r.snr_db == top]
    sub = p.get("subsample")
    if sub is not None and int(sub) < len(records):
        records = records[:int(sub)]
    params = _load_ckpt(p["checkpoint"])
    x, y, _ = stack_records(records)
    eps = float(p["epsilon"])
    clean = average_spectrum(x)
    fgsm = average_spectrum(_delta_for(params, x, y, "fgsm_l2", eps))
    pgd = average_spectrum(_delta_for(params, x, y, "pgd_l2", eps))
    rows = [(j, clean[j], fgsm[j], pgd[j]) for j in range(meta.window_width)]
    return _emit(config, ("bin_index", "clean_amp", "fgsm_amp", "pgd_amp"),
                 rows, started)


def run_cutoff_sweep(config: ExperimentConfig) -> Path:
    """Energy ratios and filtered accuracy as the cutoff index sweeps 1..W/2.

    eta_pert_db and spr_db are computed from the first attack kind's
    deltas; spr_db compares the filtered clean set against the filtered
    deltas.  Accuracy columns report the filtered classifier on clean
    inputs and under each attack.
    """
    started = time.perf_counter()
    p = config.params
    _require(p, "data", "checkpoint", "epsilon")
    meta, test = _test_records(p)
    params = _load_ckpt(p["checkpoint"])
    x, y, _ = stack_records(test)
    eps = float(p["epsilon"])
    kinds = list(p.get("attacks", ["fgsm_l2", "pgd_l2"]))
    if not kinds:
        raise ConfigurationError("cutoff sweep needs at least one attack kind")
    order = int(p.get("filter_order", 2))
    deltas = {k: _delta_for(params, x, y, k, eps) for k in kinds}
    lead = deltas[kinds[0]]

    def one_k(k: int):
        resp = design(FilterSpec(order=order, cutoff_index=float(k),
                                 window_width=meta.window_width))
        fx = apply_batch(x, resp)
        fd = apply_batch(lead, resp)
        row = [k, eta_db(x, fx), eta_db(lead, fd), spr_db(fx, fd),
               float(np.mean(predict(params, fx) == y))]
        for kind in kinds:
            adv = apply_batch(x + deltas[kind], resp)
            row.append(float(np.mean(predict(params, adv) == y)))
        return tuple(row)

    rows = sorted(_pmap(one_k, range(1, meta.window_width // 2 + 1)))
    header = ("k", "eta_benign_db", "eta_pert_db", "spr_db",
              "accuracy_benign") + tuple(f"accuracy_{k}" for k in kinds)
    return _emit(config, header, rows, started)


def run_attack_eval(config: ExperimentConfig) -> Path:
    """Accuracy by SNR and epsilon for each configured attack.

    With a "filter" entry the classifier runs behind the low-pass filter;
    with "attack_checkpoint" the deltas come from that surrogate model
    instead (transfer setting).
    """
    started = time.perf_counter()
    p = config.params
    _require(p, "data", "checkpoint", "attacks")
    meta, test = _test_records(p)
    params = _load_ckpt(p["checkpoint"])
    attack_params = None
    if p.get("attack_checkpoint"):
        attack_params = _load_ckpt(p["attack_checkpoint"])
    pre_filter = None
    if p.get("filter"):
        pre_filter = FilterSpec.from_dict(p["filter"], meta.window_width)
    configs = [AttackConfig.from_dict(d) for d in p["attacks"]]
    cells = evaluate_under_attack(params, test, configs, pre_filter=pre_filter,
                                  attack_params=attack_params)
    rows = sorted((c.kind, c.snr_db, c.epsilon, c.accuracy, c.n) for c in cells)
    return _emit(config, ("kind", "snr_db", "epsilon", "accuracy", "n"),
                 rows, started)


def _majority_vote(params, window, scfg: SmoothingConfig, index: int) -> int:
    """Plurality class over noisy votes; test-time defenses never abstain."""
    base, response, _ = _pipeline(window, scfg)
    rng = _input_rng(scfg, index, 1)
    counts = _vote_counts(params, base, response, scfg.sigma, scfg.n0, rng)
    return int(np.argmax(counts))


def run_defense_compare(config: ExperimentConfig) -> Path:
    """Accuracy grid over defenses x attacks x epsilon.

    Defenses: the three training regimes bare (rt, at, ga), the filter
    alone, and the filter combined with noise voting on either side
    (noise_before = noise enters the filter, noise_after = noise is added
    to the filtered input).  Deltas are white-box against the classifier
    inside each defense: at and ga rows attack their own weights, all
    other rows attack the rt weights; no attack differentiates through a
    filter or the voting.
    """
    started = time.perf_counter()
    p = config.params
    _require(p, "data", "checkpoints", "filter", "sigma", "epsilons")
    ckpts = p["checkpoints"]
    _require(ckpts, "rt", "at", "ga")
    meta, test = _test_records(p)
    models = {name: _load_ckpt(ckpts[name]) for name in ("rt", "at", "ga")}
    spec = FilterSpec.from_dict(p["filter"], meta.window_width)
    resp = design(spec)
    sigma = float(p["sigma"])
    n_votes = int(p.get("n_votes", 32))
    seed = int(p.get("seed", 0))
    kinds = list(p.get("attacks", ["fgsm_l2", "pgd_l2"]))
    epsilons = [float(e) for e in p["epsilons"]]
    x, y, _ = stack_records(test)

    smooth_cfg = {
        "filter_noise_before": SmoothingConfig(
            sigma=sigma, alpha=0.001, n0=n_votes, n=n_votes, seed=seed,
            frs_mode="post_filter", filter_spec=spec),
        "filter_noise_after": SmoothingConfig(
            sigma=sigma, alpha=0.001, n0=n_votes, n=n_votes, seed=seed,
            frs_mode="pre_filter", filter_spec=spec),
    }
    delta_cache: dict[tuple, np.ndarray] = {}

    def attacked(defense: str, kind: str, eps: float) -> np.ndarray:
        source = defense if defense in ("at", "ga") else "rt"
        key = (source, kind, eps)
        if key not in delta_cache:
            delta_cache[key] = _delta_for(models[source], x, y, kind, eps)
        return x + delta_cache[key]

    def accuracy(defense: str, adv: np.ndarray) -> float:
        if defense in ("rt", "at", "ga"):
            preds = predict(models[defense], adv)
        elif defense == "filter_only":
            preds = predict(models["rt"], apply_batch(adv, resp))
        else:
            scfg = smooth_cfg[defense]
            preds = np.array(_pmap(
                lambda i: _majority_vote(models["rt"], adv[i], scfg, i),
                range(adv.shape[0])))
        return float(np.mean(preds == y))

    cells = [("none", 0.0)] + [(k, e) for k in kinds for e in epsilons]
    rows = []
    for defense in DEFENSES:
        for kind, eps in cells:
            adv = x if kind == "none" else attacked(defense, kind, eps)
            rows.append((defense, kind, eps, accuracy(defense, adv)))
    rows.sort()
    return _emit(config, ("defense", "attack", "epsilon", "accuracy"),
                 rows, started)


def run_per_class_filter_metrics(config: ExperimentConfig) -> Path:
    """Per-class energy ratios through the filter, plus an Averaged row.

    eta columns measure how much benign signal and perturbation the
    filter keeps; spr_db is the clean-to-delta ratio before filtering.
    The Averaged row is the arithmetic mean of the per-class dB values.
    The filter entry "allpass" selects an identity response, the natural
    no-filter baseline.
    """
    started = time.perf_counter()
    p = config.params
    _require(p, "data", "checkpoint", "filter", "attack")
    meta, test = _test_records(p)
    params = _load_ckpt(p["checkpoint"])
    if p["filter"] == "allpass":
        resp = FilterResponse(gains=np.ones(meta.window_width), lipschitz=1.0)
    else:
        resp = design(FilterSpec.from_dict(p["filter"], meta.window_width))
    atk = p["attack"]
    x, y, _ = stack_records(test)
    delta = _delta_for(params, x, y, atk["kind"], float(atk["epsilon"]))
    rows = []
    for label, name in enumerate(meta.class_names):
        mask = y == label
        if not np.any(mask):
            raise ConfigurationError(f"no test records for class {name!r}")
        xc, dc = x[mask], delta[mask]
        rows.append((name, eta_db(xc, apply_batch(xc, resp)),
                     eta_db(dc, apply_batch(dc, resp)), spr_db(xc, dc)))
    averaged = tuple(float(np.mean([r[i] for r in rows])) for i in (1, 2, 3))
    rows.append(("Averaged",) + averaged)
    return _emit(config, ("class", "eta_be_db", "eta_pe_db", "spr_db"),
                 rows, started)


def run_certified_curve(config: ExperimentConfig) -> Path:
    """Certified accuracy at each radius for every (model, sigma, mode) cell."""
    started = time.perf_counter()
    p = config.params
    _require(p, "data", "cells", "radii")
    meta, test = _test_records(p)
    radii = [float(r) for r in p["radii"]]
    labels = [r.label for r in test]
    rows = []
    for cell in p["cells"]:
        _require(cell, "model", "checkpoint", "sigma")
        params = _load_ckpt(cell["checkpoint"])
        mode = cell.get("frs_mode", "none")
        spec = None
        if mode != "none":
            _require(cell, "filter")
            spec = FilterSpec.from_dict(cell["filter"], meta.window_width)
        scfg = SmoothingConfig(
            sigma=float(cell["sigma"]), alpha=float(p.get("alpha", 0.001)),
            n0=int(p.get("n0", 100)), n=int(p.get("n", 1000)),
            seed=int(p.get("seed", 0)), frs_mode=mode, filter_spec=spec)
        results = _pmap(
            lambda i: certify(params, test[i].window, scfg, input_index=i),
            range(len(test)))
        curve = curve_from_results(results, labels, radii)
        for r, acc in zip(radii, curve):
            rows.append((cell["model"], scfg.sigma, mode, r, float(acc)))
    rows.sort()
    return _emit(config, ("model", "sigma", "frs_mode", "r",
                          "certified_accuracy"), rows, started)


_RUNNERS = {
    "spectrum_report": run_spectrum_report,
    "cutoff_sweep": run_cutoff_sweep,
    "attack_eval": run_attack_eval,
    "defense_compare": run_defense_compare,
    "per_class_filter_metrics": run_per_class_filter_metrics,
    "certified_curve": run_certified_curve,
}


def run_experiment(config) -> Path:
    """Dispatch a config (an ExperimentConfig or a JSON path) to its runner."""
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_file(config)
    return _RUNNERS[config.experiment](config)
