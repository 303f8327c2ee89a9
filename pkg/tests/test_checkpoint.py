import numpy as np
import pytest

from deeplau.checkpoint import (CheckpointError, assign, decode_archive, encode_archive, load, save,
                                vocab_fingerprint)


def _tensors(rng):
    return {"a": rng.standard_normal((3, 4)), "b.view": rng.standard_normal((5, 8))[:, 2:5],
            "c": rng.standard_normal((1, 2)).astype(np.float32)}


def test_round_trip_is_byte_exact(tmp_path, rng):
    manifest = {"model": {"hidden": 4}, "seed": 3, "big": 2**70}
    save(tmp_path / "x.ckpt", manifest, _tensors(rng))
    m, t = load(tmp_path / "x.ckpt")
    assert m == manifest
    assert t["c"].dtype == np.float32 and t["b.view"].shape == (5, 3)
    save(tmp_path / "y.ckpt", m, t)
    assert (tmp_path / "x.ckpt").read_bytes() == (tmp_path / "y.ckpt").read_bytes()
    assert not (tmp_path / "x.ckpt.tmp").exists()


def test_corrupt_archives_are_rejected(rng):
    data = encode_archive({"k": 1}, _tensors(rng))
    with pytest.raises(CheckpointError):
        decode_archive(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError):
        decode_archive(data[:-3])
    with pytest.raises(CheckpointError):
        decode_archive(data + b"\0")
    with pytest.raises(CheckpointError):
        encode_archive({}, {"bad": np.zeros(3)})
    with pytest.raises(CheckpointError):
        encode_archive({}, {"bad": np.zeros((2, 2), dtype=np.int32)})


def test_assign_checks_names_and_shapes(rng):
    loaded = {"p.a": np.ones((2, 2))}
    dst = {"a": np.zeros((2, 2))}
    assign(dst, loaded, "p.")
    assert np.all(dst["a"] == 1.0)
    with pytest.raises(CheckpointError):
        assign({"b": np.zeros((2, 2))}, loaded, "p.")
    with pytest.raises(CheckpointError):
        assign({"a": np.zeros((3, 2))}, loaded, "p.")


def test_vocab_fingerprint():
    assert vocab_fingerprint(["a", "b"]) == vocab_fingerprint(["a", "b"])
    assert vocab_fingerprint(["a", "b"]) != vocab_fingerprint(["b", "a"])
