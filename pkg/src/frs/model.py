"""Small convolutional classifier for (2, W) I/Q windows.

Forward and backward passes are written out by hand in numpy so the
toolkit controls every gradient exactly: attacks need d(loss)/d(input),
training needs d(loss)/d(parameters), and both come from one backward
sweep.  Architecture, in order: conv of 16 1x3 kernels, conv of 8 2x3
kernels over 16 channels, a 64-unit dense layer, a K-way dense layer,
with ReLU after each hidden layer and softmax cross-entropy on top.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, FormatError, TrainingError
from .filters import FilterSpec, apply_batch, design

CONV1_CHANNELS = 16
CONV2_CHANNELS = 8
HIDDEN_UNITS = 64
KERNEL_WIDTH = 3

CHECKPOINT_MAGIC = b"FRSM"
CHECKPOINT_VERSION = 1

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


@dataclass
class ModelParams:
    """All trainable arrays, float64, in declaration order."""

    w1: np.ndarray  # (16, 3)
    b1: np.ndarray  # (16,)
    w2: np.ndarray  # (8, 16, 2, 3)
    b2: np.ndarray  # (8,)
    w3: np.ndarray  # (64, 8*(W-4))
    b3: np.ndarray  # (64,)
    w4: np.ndarray  # (K, 64)
    b4: np.ndarray  # (K,)

    @property
    def n_classes(self) -> int:
        return self.w4.shape[0]

    @property
    def width(self) -> int:
        return self.w3.shape[1] // CONV2_CHANNELS + 4

    def arrays(self):
        return [getattr(self, name) for name in PARAM_NAMES]

    def copy(self) -> "ModelParams":
        return ModelParams(*(a.copy() for a in self.arrays()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    @classmethod
    def zeros(cls, width: int, n_classes: int) -> "ModelParams":
        flat = CONV2_CHANNELS * (width - 4)
        return cls(
            w1=np.zeros((CONV1_CHANNELS, KERNEL_WIDTH)),
            b1=np.zeros(CONV1_CHANNELS),
            w2=np.zeros((CONV2_CHANNELS, CONV1_CHANNELS, 2, KERNEL_WIDTH)),
            b2=np.zeros(CONV2_CHANNELS),
            w3=np.zeros((HIDDEN_UNITS, flat)),
            b3=np.zeros(HIDDEN_UNITS),
            w4=np.zeros((n_classes, HIDDEN_UNITS)),
            b4=np.zeros(n_classes),
        )


def init_params(width: int, n_classes: int, seed) -> ModelParams:
    """Uniform fan-in initialization of the weights; biases start at zero."""
    if width < 8:
        raise ConfigurationError(f"window width must be at least 8, got {width}")
    if n_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
    rng = np.random.default_rng(seed)
    params = ModelParams.zeros(width, n_classes)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params.w1 = uniform(params.w1.shape, KERNEL_WIDTH)
    params.w2 = uniform(params.w2.shape, CONV1_CHANNELS * 2 * KERNEL_WIDTH)
    params.w3 = uniform(params.w3.shape, params.w3.shape[1])
    params.w4 = uniform(params.w4.shape, HIDDEN_UNITS)
    return params


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return arr[np.newaxis], True
    if arr.ndim != 3 or arr.shape[1] != 2:
        raise ConfigurationError(f"expected (2, W) or (B, 2, W) input, got {arr.shape}")
    return arr, False


def _forward_cache(params: ModelParams, xb: np.ndarray) -> dict:
    xw = sliding_window_view(xb, KERNEL_WIDTH, axis=2)
    z1 = np.einsum("bhwk,ok->bohw", xw, params.w1, optimize=True)
    z1 += params.b1[np.newaxis, :, np.newaxis, np.newaxis]
    a1 = np.maximum(z1, 0.0)
    aw = sliding_window_view(a1, KERNEL_WIDTH, axis=3)
    z2 = np.einsum("bchwk,ochk->bow", aw, params.w2, optimize=True)
    z2 += params.b2[np.newaxis, :, np.newaxis]
    a2 = np.maximum(z2, 0.0)
    flat = a2.reshape(xb.shape[0], -1)
    z3 = flat @ params.w3.T + params.b3
    a3 = np.maximum(z3, 0.0)
    logits = a3 @ params.w4.T + params.b4
    return {
        "x": xb, "xw": xw, "z1": z1, "a1": a1, "aw": aw,
        "z2": z2, "flat": flat, "z3": z3, "a3": a3, "logits": logits,
    }


def forward(params: ModelParams, x) -> np.ndarray:
    """Logits for one window (K,) or a batch (B, K)."""
    xb, single = _as_batch(x)
    logits = _forward_cache(params, xb)["logits"]
    return logits[0] if single else logits


def predict(params: ModelParams, x):
    """Argmax class index; ties resolve to the lowest index."""
    logits = forward(params, x)
    return int(np.argmax(logits)) if logits.ndim == 1 else np.argmax(logits, axis=1)


def predict_proba(params: ModelParams, x) -> np.ndarray:
    logits = forward(params, x)
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _loss_and_dlogits(logits: np.ndarray, labels: np.ndarray):
    z = logits - np.max(logits, axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1))
    idx = np.arange(logits.shape[0])
    loss = lse - z[idx, labels]
    dlogits = np.exp(z - lse[:, np.newaxis])
    dlogits[idx, labels] -= 1.0
    return loss, dlogits


def _backward(params: ModelParams, cache: dict, labels: np.ndarray,
              need_theta: bool = True, need_x: bool = True):
    """Per-sample losses, summed parameter gradients, per-sample input gradients."""
    loss, dlogits = _loss_and_dlogits(cache["logits"], labels)
    grads = None
    gx = None

    da3 = dlogits @ params.w4
    dz3 = da3 * (cache["z3"] > 0.0)
    dflat = dz3 @ params.w3
    b, c2w = dflat.shape
    width_out = c2w // CONV2_CHANNELS
    da2 = dflat.reshape(b, CONV2_CHANNELS, width_out)
    dz2 = da2 * (cache["z2"] > 0.0)

    da1 = np.zeros_like(cache["a1"])
    for k in range(KERNEL_WIDTH):
        da1[:, :, :, k:k + width_out] += np.einsum(
            "bow,och->bchw", dz2, params.w2[:, :, :, k], optimize=True
        )
    dz1 = da1 * (cache["z1"] > 0.0)

    if need_theta:
        grads = ModelParams(
            w1=np.einsum("bohw,bhwk->ok", dz1, cache["xw"], optimize=True),
            b1=dz1.sum(axis=(0, 2, 3)),
            w2=np.einsum("bow,bchwk->ochk", dz2, cache["aw"], optimize=True),
            b2=dz2.sum(axis=(0, 2)),
            w3=dz3.T @ cache["flat"],
            b3=dz3.sum(axis=0),
            w4=dlogits.T @ cache["a3"],
            b4=dlogits.sum(axis=0),
        )
    if need_x:
        gx = np.zeros_like(cache["x"])
        inner = cache["x"].shape[-1] - KERNEL_WIDTH + 1
        for k in range(KERNEL_WIDTH):
            gx[:, :, k:k + inner] += np.einsum(
                "bohw,o->bhw", dz1, params.w1[:, k], optimize=True
            )
    return loss, grads, gx


def batch_loss_and_grads(params: ModelParams, x, labels,
                         need_theta: bool = True, need_x: bool = True):
    """Vectorized version over a batch; parameter gradients come back summed."""
    xb, single = _as_batch(x)
    y = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if y.shape[0] != xb.shape[0]:
        raise ConfigurationError("labels do not match batch size")
    if np.any(y < 0) or np.any(y >= params.n_classes):
        raise ConfigurationError("label outside [0, n_classes)")
    cache = _forward_cache(params, xb)
    loss, grads, gx = _backward(params, cache, y, need_theta, need_x)
    if single:
        return float(loss[0]), grads, (None if gx is None else gx[0])
    return loss, grads, gx


def loss_and_grads(params: ModelParams, x, label: int):
    """Cross-entropy loss with gradients wrt parameters and the input window."""
    return batch_loss_and_grads(params, x, [int(label)], True, True)


class _Adam:
    """Adam with the usual bias correction; lr 1e-3, betas (0.9, 0.999)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] | None = None
        self.v: dict[str, np.ndarray] | None = None

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        if self.m is None:
            self.m = {n: np.zeros_like(getattr(params, n)) for n in PARAM_NAMES}
            self.v = {n: np.zeros_like(getattr(params, n)) for n in PARAM_NAMES}
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in PARAM_NAMES:
            g = getattr(grads, name)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            getattr(params, name)[...] -= update


REGIMES = ("regular", "adversarial", "gaussian")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters and the augmentation regime.

    regime "regular" trains on the data as-is; "adversarial" mixes each
    batch with attacked copies weighted gamma/(1-gamma); "gaussian" adds
    fresh N(0, sigma_train^2) noise to every sample every epoch.  When
    pre_filter is set the low-pass filter runs on each model input
    (after any noise or attack) right before the forward pass.
    """

    regime: str = "regular"
    gamma: float = 0.5
    sigma_train: float = 0.001
    attack_for_at: object | None = None
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 10
    seed: int = 0
    pre_filter: FilterSpec | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.sigma_train < 0.0:
            raise ConfigurationError(f"sigma_train must be >= 0, got {self.sigma_train}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.learning_rate <= 0.0:
            raise ConfigurationError("learning rate must be positive")
        if self.regime == "adversarial" and self.gamma < 1.0 and self.attack_for_at is None:
            raise ConfigurationError("adversarial regime needs attack_for_at")


def _draw_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Single choke point for augmentation noise so tests can count draws."""
    return rng.standard_normal(shape)


def _mean_loss(params: ModelParams, x: np.ndarray, y: np.ndarray, batch: int = 512) -> float:
    total = 0.0
    for start in range(0, x.shape[0], batch):
        xb = x[start:start + batch]
        yb = y[start:start + batch]
        loss, _, _ = batch_loss_and_grads(params, xb, yb, need_theta=False, need_x=False)
        total += float(np.sum(loss))
    return total / x.shape[0]


def train(records, config: TrainConfig, n_classes: int | None = None,
          validation=()) -> ModelParams:
    """Train a model; returns the best parameters under early stopping.

    ``records`` is a sequence with .window and .label attributes.  With a
    nonempty ``validation`` sequence, training stops once validation loss
    has not improved for ``config.patience`` epochs and the best snapshot
    is returned.  A non-finite loss or parameter aborts with
    TrainingError carrying the last finite epoch-end checkpoint.
    """
    records = list(records)
    if not records:
        raise ConfigurationError("training set is empty")
    x = np.stack([np.asarray(r.window, dtype=np.float64) for r in records])
    y = np.asarray([r.label for r in records], dtype=np.intp)
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    width = x.shape[-1]

    val = list(validation)
    xv = yv = None
    if val:
        xv = np.stack([np.asarray(r.window, dtype=np.float64) for r in val])
        yv = np.asarray([r.label for r in val], dtype=np.intp)

    root = np.random.SeedSequence(config.seed)
    ss_init, ss_shuffle, ss_noise = root.spawn(3)
    shuffle_rng = np.random.default_rng(ss_shuffle)
    noise_rng = np.random.default_rng(ss_noise)

    params = init_params(width, k, ss_init)
    adam = _Adam(config.learning_rate)
    response = design(config.pre_filter) if config.pre_filter is not None else None

    if config.regime == "adversarial" and config.gamma < 1.0:
        from . import attacks as _attacks  # deferred to avoid an import cycle
        attack_fn = lambda p, xb, yb: _attacks.perturb_batch(p, xb, yb, config.attack_for_at)
    else:
        attack_fn = None

    def run_forward_input(xb):
        return apply_batch(xb, response) if response is not None else xb

    best_loss = np.inf
    best_params = params.copy()
    last_good = params.copy()
    epochs_since_best = 0

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = x[idx]
            yb = y[idx]
            bsz = xb.shape[0]

            if config.regime == "gaussian":
                noisy = xb + config.sigma_train * _draw_noise(noise_rng, xb.shape)
                loss_vec, grads, _ = batch_loss_and_grads(
                    params, run_forward_input(noisy), yb, need_theta=True, need_x=False
                )
                loss = float(np.mean(loss_vec))
                for name in PARAM_NAMES:
                    getattr(grads, name)[...] /= bsz
            elif config.regime == "adversarial" and attack_fn is not None:
                delta = attack_fn(params, xb, yb)
                lc, gc, _ = batch_loss_and_grads(
                    params, run_forward_input(xb), yb, need_theta=True, need_x=False
                )
                la, ga, _ = batch_loss_and_grads(
                    params, run_forward_input(xb + delta), yb, need_theta=True, need_x=False
                )
                loss = float(config.gamma * np.mean(lc) + (1.0 - config.gamma) * np.mean(la))
                grads = gc
                for name in PARAM_NAMES:
                    arr = getattr(grads, name)
                    arr *= config.gamma / bsz
                    arr += (1.0 - config.gamma) / bsz * getattr(ga, name)
            else:
                loss_vec, grads, _ = batch_loss_and_grads(
                    params, run_forward_input(xb), yb, need_theta=True, need_x=False
                )
                loss = float(np.mean(loss_vec))
                for name in PARAM_NAMES:
                    getattr(grads, name)[...] /= bsz

            if not np.isfinite(loss):
                raise TrainingError(
                    "training loss diverged", last_params=last_good,
                    diagnostics={"epoch": epoch, "batch_start": int(start), "loss": loss},
                )
            adam.step(params, grads)
            if not params.all_finite():
                raise TrainingError(
                    "parameters became non-finite", last_params=last_good,
                    diagnostics={"epoch": epoch, "batch_start": int(start)},
                )

        last_good = params.copy()
        if xv is not None:
            val_input = apply_batch(xv, response) if response is not None else xv
            val_loss = _mean_loss(params, val_input, yv)
            if val_loss < best_loss:
                best_loss = val_loss
                best_params = params.copy()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= config.patience:
                    return best_params

    return best_params if xv is not None else params


def evaluate_accuracy(params: ModelParams, records, pre_filter: FilterSpec | None = None,
                      batch: int = 512) -> float:
    """Plain top-1 accuracy, optionally filtering inputs first."""
    records = list(records)
    if not records:
        raise ConfigurationError("empty evaluation set")
    x = np.stack([np.asarray(r.window, dtype=np.float64) for r in records])
    y = np.asarray([r.label for r in records], dtype=np.intp)
    if pre_filter is not None:
        x = apply_batch(x, design(pre_filter))
    hits = 0
    for start in range(0, x.shape[0], batch):
        preds = predict(params, x[start:start + batch])
        hits += int(np.sum(preds == y[start:start + batch]))
    return hits / x.shape[0]


def save_checkpoint(path, params: ModelParams) -> None:
    """Write parameters as magic FRSM, version, shape header, float32 blobs."""
    header = struct.pack(
        "<4sIIIIII",
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
        params.n_classes, params.width,
        CONV1_CHANNELS, CONV2_CHANNELS, HIDDEN_UNITS,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelParams:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head_size = struct.calcsize("<4sIIIIII")
    if len(blob) < head_size:
        raise FormatError("checkpoint shorter than its header", offset=len(blob))
    magic, version, k, width, c1, c2, hidden = struct.unpack_from("<4sIIIIII", blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", offset=0)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    if (c1, c2, hidden) != (CONV1_CHANNELS, CONV2_CHANNELS, HIDDEN_UNITS):
        raise FormatError(f"unexpected architecture header {(c1, c2, hidden)}", offset=8)
    shapes = ModelParams.zeros(width, k)
    offset = head_size
    loaded = []
    for name, ref in zip(PARAM_NAMES, shapes.arrays()):
        nbytes = ref.size * 4
        if offset + nbytes > len(blob):
            raise FormatError(f"checkpoint truncated in {name}", offset=offset)
        arr = np.frombuffer(blob, dtype="<f4", count=ref.size, offset=offset)
        loaded.append(arr.astype(np.float64).reshape(ref.shape))
        offset += nbytes
    if offset != len(blob):
        raise FormatError("trailing bytes after parameter blobs", offset=offset)
    return ModelParams(*loaded)
