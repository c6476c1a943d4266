"""Shared fixtures: small and desk-scale workspaces with trained checkpoints."""

from __future__ import annotations

import pytest

from frs.attacks import AttackConfig
from frs.dataset import SCHEMES, DatasetMeta, generate, split, write_container
from frs.filters import FilterSpec
from frs.model import TrainConfig, save_checkpoint, train

SMALL_W = 32
DESK_W = 128
DESK_CUTOFF = FilterSpec(order=2, cutoff_index=20.0, window_width=DESK_W)


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    """A 240-record 3-class dataset plus rt/at/ga checkpoints on disk.

    Small enough to train in seconds; shared by the harness and CLI
    tests, which only need plumbing to be exact, not high accuracy.
    """
    root = tmp_path_factory.mktemp("small_world")
    meta = DatasetMeta(class_names=("BPSK", "QPSK", "GFSK"), window_width=SMALL_W,
                       snr_grid_db=(0, 18), records_per_class_per_snr=40, seed=21)
    records = generate(meta)
    data = root / "data.frsd"
    write_container(data, meta, records)
    train_recs, val_recs, _ = split(records, seed=3)
    configs = {
        "rt": TrainConfig(epochs=10, batch_size=32, seed=1),
        "at": TrainConfig(regime="adversarial", gamma=0.5,
                          attack_for_at=AttackConfig(kind="fgsm_l2", epsilon=0.01),
                          epochs=6, batch_size=32, seed=1),
        "ga": TrainConfig(regime="gaussian", sigma_train=0.02, epochs=6,
                          batch_size=32, seed=1),
    }
    ckpts = {}
    for name, cfg in configs.items():
        params = train(train_recs, cfg, n_classes=meta.n_classes,
                       validation=val_recs)
        path = root / f"{name}.ckpt"
        save_checkpoint(path, params)
        ckpts[name] = path
    return {"root": root, "meta": meta, "data": data, "ckpts": ckpts,
            "records": records}


@pytest.fixture(scope="session")
def desk_world():
    """The full 7-class desk-scale dataset with four trained models.

    14,000 windows at W=128 over SNR 0..18 dB, split 7,000/700/6,300,
    and models for each training regime plus a filtered variant.  Takes
    a few minutes to build; only the end-to-end behavioral tests use it.
    """
    meta = DatasetMeta(class_names=SCHEMES, window_width=DESK_W,
                       snr_grid_db=tuple(range(0, 19, 2)),
                       records_per_class_per_snr=200, seed=2026)
    records = generate(meta)
    train_recs, val_recs, test_recs = split(records, seed=7)
    configs = {
        "rt": TrainConfig(epochs=30, batch_size=64, seed=1),
        "filt": TrainConfig(epochs=30, batch_size=64, seed=1,
                            pre_filter=DESK_CUTOFF),
        "ga": TrainConfig(regime="gaussian", sigma_train=0.02, epochs=30,
                          batch_size=64, seed=1),
        "at": TrainConfig(regime="adversarial", gamma=0.0, epochs=30,
                          batch_size=64, seed=1,
                          attack_for_at=AttackConfig(kind="fgsm_l2",
                                                     epsilon=0.01)),
    }
    params = {name: train(train_recs, cfg, n_classes=meta.n_classes,
                          validation=val_recs)
              for name, cfg in configs.items()}
    return {"meta": meta, "records": records, "train": train_recs,
            "val": val_recs, "test": test_recs, "params": params,
            "filter_spec": DESK_CUTOFF}
