import numpy as np
import pytest

from mfcim.checkpoint import MAGIC, CheckpointError, load_model, save_model
from mfcim.network import build_model, mlp_config


@pytest.fixture
def model():
    return build_model(mlp_config(12, 6, 3), seed=42)


def test_round_trip_is_lossless(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(model, path, metadata={"epochs": 3, "seed": 42})
    loaded, meta = load_model(path)
    assert meta == {"epochs": 3, "seed": 42}
    for (k1, _, _, v1), (k2, _, _, v2) in zip(model.parameters(),
                                              loaded.parameters()):
        assert k1 == k2
        assert np.array_equal(v1, v2)


def test_round_trip_evaluates_identically(model, tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(0, 1, (8, 12))
    path = tmp_path / "m.ckpt"
    save_model(model, path)
    loaded, _ = load_model(path)
    assert np.array_equal(model.forward(x), loaded.forward(x))


def test_version_mismatch_refused(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(model, path)
    raw = path.read_bytes()
    tampered = raw.replace(b'"format_version": 1', b'"format_version": 9', 1)
    path.write_bytes(tampered)
    with pytest.raises(CheckpointError, match="version"):
        load_model(path)


def test_corrupted_blob_fails_checksum(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(model, path)
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        load_model(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint\n{}")
    with pytest.raises(CheckpointError, match="magic"):
        load_model(path)


def test_magic_is_text_header(model, tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(model, path)
    assert path.read_bytes().startswith(MAGIC)
