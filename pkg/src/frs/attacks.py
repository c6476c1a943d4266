"""White-box l2 evasion attacks against the window classifier.

All attacks are generated against the bare classifier; any defense-side
filter is applied only at evaluation time and is never differentiated
through.  Budgets are l2 over the full 2xW window, matching the energy
convention in :mod:`frs.spectral` (||delta||_2^2 equals its energy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .filters import FilterSpec, apply_batch, design
from .model import ModelParams, batch_loss_and_grads, predict

ATTACK_KINDS = ("fgsm_l2", "fgsm_linf", "pgd_l2")

#: gradient norms below this are treated as vanished
_NORM_FLOOR = 1e-300


@dataclass(frozen=True)
class AttackConfig:
    """Attack family plus its budget and PGD schedule.

    pgd_step_size defaults to 2.5 * epsilon / pgd_steps when left None.
    """

    kind: str
    epsilon: float
    pgd_steps: int = 10
    pgd_step_size: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError(f"unknown attack kind {self.kind!r}")
        if self.epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.pgd_steps < 1:
            raise ConfigurationError(f"pgd_steps must be >= 1, got {self.pgd_steps}")
        if self.pgd_step_size is not None and self.pgd_step_size <= 0.0:
            raise ConfigurationError("pgd_step_size must be positive")

    @property
    def step_size(self) -> float:
        if self.pgd_step_size is not None:
            return self.pgd_step_size
        return 2.5 * self.epsilon / self.pgd_steps

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "pgd_steps": self.pgd_steps,
            "pgd_step_size": self.pgd_step_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        return cls(
            kind=d["kind"],
            epsilon=float(d["epsilon"]),
            pgd_steps=int(d.get("pgd_steps", 10)),
            pgd_step_size=d.get("pgd_step_size"),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class Perturbation:
    """One generated delta with its bookkeeping.

    ``vacuous`` is set when the loss gradient vanished: FGSM then returns
    a zero delta, PGD stops early at whatever it had accumulated.
    """

    delta: np.ndarray
    l2_norm: float
    source_kind: str
    loss_before: float
    loss_after: float
    vacuous: bool = False


def _row_norms(delta: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(delta * delta, axis=(1, 2)))


def _project_l2(delta: np.ndarray, epsilon: float) -> np.ndarray:
    """Rescale rows with ||delta|| > epsilon back onto the epsilon sphere."""
    norms = _row_norms(delta)
    over = norms > epsilon
    if np.any(over):
        delta = delta.copy()
        delta[over] *= (epsilon / norms[over])[:, np.newaxis, np.newaxis]
    return delta


def _fgsm_batch(params: ModelParams, xb: np.ndarray, yb: np.ndarray,
                config: AttackConfig):
    loss_before, _, gx = batch_loss_and_grads(params, xb, yb, need_theta=False, need_x=True)
    delta = np.zeros_like(xb)
    if config.kind == "fgsm_linf":
        width = xb.shape[-1]
        raw = (config.epsilon / np.sqrt(2.0 * width)) * np.sign(gx)
    else:
        raw = gx
    norms = _row_norms(raw)
    live = norms > _NORM_FLOOR
    if np.any(live):
        delta[live] = raw[live] * (config.epsilon / norms[live])[:, np.newaxis, np.newaxis]
    vacuous = ~live
    loss_after, _, _ = batch_loss_and_grads(params, xb + delta, yb,
                                            need_theta=False, need_x=False)
    return delta, loss_before, loss_after, vacuous


def _pgd_batch(params: ModelParams, xb: np.ndarray, yb: np.ndarray,
               config: AttackConfig):
    loss_before, _, _ = batch_loss_and_grads(params, xb, yb, need_theta=False, need_x=False)
    delta = np.zeros_like(xb)
    active = np.ones(xb.shape[0], dtype=bool)
    vacuous = np.zeros(xb.shape[0], dtype=bool)
    step = config.step_size
    for _ in range(config.pgd_steps):
        if not np.any(active):
            break
        _, _, gx = batch_loss_and_grads(params, xb[active] + delta[active], yb[active],
                                        need_theta=False, need_x=True)
        norms = _row_norms(gx)
        dead = norms <= _NORM_FLOOR
        if np.any(dead):
            idx = np.flatnonzero(active)[dead]
            vacuous[idx] = True
            active[idx] = False
            gx = gx[~dead]
            if gx.size == 0:
                continue
        moved = delta[active] + gx * (step / _row_norms(gx))[:, np.newaxis, np.newaxis]
        delta[active] = _project_l2(moved, config.epsilon)
    loss_after, _, _ = batch_loss_and_grads(params, xb + delta, yb,
                                            need_theta=False, need_x=False)
    return delta, loss_before, loss_after, vacuous


def perturb_batch(params: ModelParams, xb, yb, config: AttackConfig) -> np.ndarray:
    """Deltas only, for callers that do their own bookkeeping (training, harness)."""
    xb = np.asarray(xb, dtype=np.float64)
    yb = np.asarray(yb, dtype=np.intp)
    if config.kind in ("fgsm_l2", "fgsm_linf"):
        delta, _, _, _ = _fgsm_batch(params, xb, yb, config)
    else:
        delta, _, _, _ = _pgd_batch(params, xb, yb, config)
    return delta


def _single(params: ModelParams, x, label: int, config: AttackConfig) -> Perturbation:
    xb = np.asarray(x, dtype=np.float64)[np.newaxis]
    yb = np.asarray([int(label)], dtype=np.intp)
    if config.kind in ("fgsm_l2", "fgsm_linf"):
        delta, lb, la, vac = _fgsm_batch(params, xb, yb, config)
    else:
        delta, lb, la, vac = _pgd_batch(params, xb, yb, config)
    return Perturbation(
        delta=delta[0],
        l2_norm=float(np.linalg.norm(delta[0])),
        source_kind=config.kind,
        loss_before=float(lb[0]),
        loss_after=float(la[0]),
        vacuous=bool(vac[0]),
    )


def fgsm(params: ModelParams, x, label: int, config: AttackConfig) -> Perturbation:
    """One-shot gradient attack, l2- or sign-based depending on config.kind."""
    if config.kind not in ("fgsm_l2", "fgsm_linf"):
        raise ConfigurationError(f"fgsm called with kind {config.kind!r}")
    return _single(params, x, label, config)


def pgd(params: ModelParams, x, label: int, config: AttackConfig) -> Perturbation:
    """Iterated projected gradient attack starting from a zero delta."""
    if config.kind != "pgd_l2":
        raise ConfigurationError(f"pgd called with kind {config.kind!r}")
    return _single(params, x, label, config)


@dataclass(frozen=True)
class AccuracyCell:
    """One cell of the attack accuracy table."""

    kind: str
    snr_db: int
    epsilon: float
    accuracy: float
    n: int


def evaluate_under_attack(params: ModelParams, records, configs,
                          pre_filter: FilterSpec | None = None,
                          attack_params: ModelParams | None = None,
                          batch: int = 256) -> list[AccuracyCell]:
    """Accuracy by SNR and epsilon, with a benign epsilon=0 row per SNR.

    Attacks are generated against ``attack_params`` (the evaluated model
    by default).  With ``pre_filter`` set, every classified input, clean
    or attacked, passes through the filter first; the attack itself never
    sees the filter.
    """
    if isinstance(configs, AttackConfig):
        configs = [configs]
    configs = list(configs)
    records = list(records)
    if not records:
        raise ConfigurationError("empty evaluation set")
    gen_params = attack_params if attack_params is not None else params
    response = design(pre_filter) if pre_filter is not None else None

    x = np.stack([np.asarray(r.window, dtype=np.float64) for r in records])
    y = np.asarray([r.label for r in records], dtype=np.intp)
    snrs = np.asarray([r.snr_db for r in records])

    def accuracy_of(inputs, labels):
        hits = 0
        for start in range(0, inputs.shape[0], batch):
            view = inputs[start:start + batch]
            if response is not None:
                view = apply_batch(view, response)
            hits += int(np.sum(predict(params, view) == labels[start:start + batch]))
        return hits / inputs.shape[0]

    cells = []
    for snr in sorted(set(int(s) for s in snrs)):
        mask = snrs == snr
        xs, ys = x[mask], y[mask]
        cells.append(AccuracyCell("none", snr, 0.0, accuracy_of(xs, ys), int(mask.sum())))
        for config in configs:
            deltas = np.empty_like(xs)
            for start in range(0, xs.shape[0], batch):
                deltas[start:start + batch] = perturb_batch(
                    gen_params, xs[start:start + batch], ys[start:start + batch], config
                )
            cells.append(AccuracyCell(
                config.kind, snr, config.epsilon, accuracy_of(xs + deltas, ys), int(mask.sum())
            ))
    return cells


def pooled_accuracy(cells: list[AccuracyCell], kind: str, epsilon: float | None = None) -> float:
    """Record-weighted accuracy over all SNR rows of one attack kind."""
    picked = [c for c in cells if c.kind == kind and (epsilon is None or c.epsilon == epsilon)]
    if not picked:
        raise ConfigurationError(f"no cells for kind {kind!r} epsilon {epsilon!r}")
    total = sum(c.n for c in picked)
    return sum(c.accuracy * c.n for c in picked) / total
