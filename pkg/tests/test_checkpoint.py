"""Checkpoint file format: exact round-trips and strict failure modes."""
import numpy as np
import pytest

from pursuitlab.checkpoint import MAGIC, CheckpointError, read_checkpoint, write_checkpoint


def sample_payload():
    rng = np.random.default_rng(0)
    arrays = [
        ("net/p0", rng.normal(size=(3, 4))),
        ("net/p1", rng.normal(size=5)),
        ("memory/obs", np.zeros((0, 12))),
    ]
    meta = {
        "episode_index": 17,
        "rng_state": {"bit_generator": "PCG64",
                      "state": {"state": 2 ** 100 + 7, "inc": 2 ** 99 + 1},
                      "has_uint32": 0, "uinteger": 0},
        "slots": [{"agent_id": "drone_0", "pool": ["PPO"]}],
    }
    return arrays, meta


def test_round_trip_is_exact(tmp_path):
    arrays, meta = sample_payload()
    path = tmp_path / "run.ckpt"
    write_checkpoint(path, arrays, meta)
    loaded, loaded_meta = read_checkpoint(path)
    assert set(loaded) == {"net/p0", "net/p1", "memory/obs"}
    for name, original in arrays:
        assert np.array_equal(loaded[name], original)
        assert loaded[name].dtype == np.float64
    assert loaded_meta == meta  # big integers survive the JSON manifest
    assert not (tmp_path / "run.ckpt.tmp").exists()


def test_write_casts_to_float64(tmp_path):
    path = tmp_path / "cast.ckpt"
    write_checkpoint(path, [("counts", np.arange(6, dtype=np.int64).reshape(2, 3))], {})
    loaded, _ = read_checkpoint(path)
    assert loaded["counts"].dtype == np.float64
    assert np.array_equal(loaded["counts"], np.arange(6).reshape(2, 3))


def test_duplicate_names_rejected(tmp_path):
    with pytest.raises(ValueError, match="duplicate"):
        write_checkpoint(tmp_path / "d.ckpt",
                         [("a", np.zeros(1)), ("a", np.ones(1))], {})


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT\n12\n")
    with pytest.raises(CheckpointError) as err:
        read_checkpoint(path)
    assert err.value.offset == 0


def test_truncated_array_reports_offset(tmp_path):
    arrays, meta = sample_payload()
    path = tmp_path / "t.ckpt"
    write_checkpoint(path, arrays, meta)
    whole = path.read_bytes()
    path.write_bytes(whole[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        read_checkpoint(path)


def test_truncated_manifest(tmp_path):
    arrays, meta = sample_payload()
    path = tmp_path / "m.ckpt"
    write_checkpoint(path, arrays, meta)
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(CheckpointError):
        read_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    arrays, meta = sample_payload()
    path = tmp_path / "x.ckpt"
    write_checkpoint(path, arrays, meta)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        read_checkpoint(path)


def test_garbage_length_line(tmp_path):
    path = tmp_path / "len.ckpt"
    path.write_bytes(MAGIC + b"notanumber\n{}")
    with pytest.raises(CheckpointError, match="length"):
        read_checkpoint(path)


def test_manifest_must_be_json(tmp_path):
    blob = b"{{{{"
    path = tmp_path / "json.ckpt"
    path.write_bytes(MAGIC + str(len(blob)).encode() + b"\n" + blob)
    with pytest.raises(CheckpointError, match="JSON"):
        read_checkpoint(path)
