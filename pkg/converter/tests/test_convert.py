"""Converter tests against synthetic pickle archives.

The round-trip checks read the produced container back through the
primary package's reader, which is the contract the converter has to
honor byte for byte.
"""

from __future__ import annotations

import os
import pickle

import numpy as np
import pytest

import convert_rml
from convert_rml import ConversionError, convert
from frs.dataset import read_container


def make_archive(rng, width=16):
    archive = {}
    for mod in ("QPSK", "BPSK", "GFSK"):
        for snr in (-4, 6):
            archive[(mod, snr)] = rng.standard_normal(
                (5, 2, width)).astype(np.float32)
    return archive


@pytest.fixture()
def archive_path(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "rml.pkl"
    with open(path, "wb") as fh:
        pickle.dump(make_archive(rng), fh)
    return path


def test_convert_report_counts(archive_path, tmp_path):
    out = tmp_path / "out.frsd"
    report = convert(archive_path, out)
    assert report.classes_found == ["BPSK", "GFSK", "QPSK"]
    assert report.records_written == 30
    assert report.snr_grid == [-4, 6]
    assert any("unnormalized" in w for w in report.warnings)


def test_round_trip_bitwise_through_primary_reader(archive_path, tmp_path):
    out = tmp_path / "out.frsd"
    convert(archive_path, out)
    with open(archive_path, "rb") as fh:
        archive = pickle.load(fh)
    meta, records = read_container(out)
    assert meta.class_names == ("BPSK", "GFSK", "QPSK")
    assert meta.window_width == 16
    # deterministic ordering: class name, then snr, then original index
    pos = 0
    for name in meta.class_names:
        for snr in (-4, 6):
            block = archive[(name, snr)]
            for i in range(block.shape[0]):
                rec = records[pos]
                assert rec.label == meta.class_names.index(name)
                assert rec.snr_db == snr
                assert rec.window.tobytes() == block[i].tobytes()
                pos += 1
    assert pos == len(records)


def test_bytes_keys_are_decoded(tmp_path):
    rng = np.random.default_rng(2)
    archive = {(b"AM-DSB", 0): rng.standard_normal((3, 2, 8)).astype(np.float32),
               ("BPSK", 0): rng.standard_normal((2, 2, 8)).astype(np.float32)}
    path = tmp_path / "a.pkl"
    with open(path, "wb") as fh:
        pickle.dump(archive, fh)
    out = tmp_path / "a.frsd"
    report = convert(path, out)
    assert report.classes_found == ["AM-DSB", "BPSK"]
    meta, records = read_container(out)
    assert meta.class_names == ("AM-DSB", "BPSK")
    assert len(records) == 5


def test_empty_archive_writes_nothing(tmp_path):
    path = tmp_path / "empty.pkl"
    with open(path, "wb") as fh:
        pickle.dump({}, fh)
    out = tmp_path / "out.frsd"
    with pytest.raises(ConversionError):
        convert(path, out)
    assert not out.exists()


def test_bad_shapes_listed(tmp_path):
    rng = np.random.default_rng(3)
    archive = {("BPSK", 0): rng.standard_normal((4, 2, 8)).astype(np.float32),
               ("QPSK", 2): rng.standard_normal((4, 3, 8)).astype(np.float32)}
    path = tmp_path / "bad.pkl"
    with open(path, "wb") as fh:
        pickle.dump(archive, fh)
    with pytest.raises(ConversionError, match="QPSK"):
        convert(path, tmp_path / "out.frsd")


def test_non_dict_archive_rejected(tmp_path):
    path = tmp_path / "odd.pkl"
    with open(path, "wb") as fh:
        pickle.dump([1, 2, 3], fh)
    with pytest.raises(ConversionError, match="dict"):
        convert(path, tmp_path / "out.frsd")


def test_cli_reports_and_exits(archive_path, tmp_path, capsys):
    out = tmp_path / "o.frsd"
    assert convert_rml.main([str(archive_path), str(out)]) == 0
    captured = capsys.readouterr()
    assert "30 records" in captured.out
    assert "warning:" in captured.err
    assert convert_rml.main([str(tmp_path / "missing.pkl"), str(out)]) == 2


@pytest.mark.skipif("RML_PICKLE" not in os.environ,
                    reason="full archive not available")
def test_full_archive_conversion(tmp_path):
    out = tmp_path / "full.frsd"
    report = convert(os.environ["RML_PICKLE"], out)
    assert report.records_written == 220000
    assert len(report.classes_found) == 11
    meta, records = read_container(out)
    assert meta.window_width == 128
    assert len(records) == 220000
