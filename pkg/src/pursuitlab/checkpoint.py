"""Single-file checkpoint format.

Layout: the magic line `RPTCKPT1`, a line with the manifest byte length,
the manifest JSON (array names and shapes plus a free-form meta object),
then the arrays concatenated as little-endian float64 in manifest order.
Reads are strict: wrong magic, short reads, or trailing bytes raise
CheckpointError carrying the byte offset, and nothing partial is returned.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

MAGIC = b"RPTCKPT1\n"


class CheckpointError(Exception):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def write_checkpoint(path: str | Path, arrays: list[tuple[str, np.ndarray]],
                     meta: dict) -> None:
    """Atomically write arrays plus a JSON-able meta dict."""
    names = [name for name, _ in arrays]
    if len(set(names)) != len(names):
        raise ValueError("duplicate array names in checkpoint")
    converted = [(name, np.ascontiguousarray(a, dtype="<f8")) for name, a in arrays]
    manifest = {
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in converted],
        "meta": meta,
    }
    blob = json.dumps(manifest).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(str(len(blob)).encode("ascii") + b"\n")
        f.write(blob)
        for _, a in converted:
            f.write(a.tobytes())
    os.replace(tmp, path)


def _read_exact(f, n: int, what: str) -> bytes:
    offset = f.tell()
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}", offset)
    return data


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC), "magic") != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)", 0)
        offset = f.tell()
        line = f.readline(32)
        if not line.endswith(b"\n") or not line[:-1].isdigit():
            raise CheckpointError("malformed manifest length line", offset)
        manifest_len = int(line[:-1])
        offset = f.tell()
        blob = _read_exact(f, manifest_len, "manifest")
        try:
            manifest = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise CheckpointError("manifest is not valid JSON", offset) from None
        if not isinstance(manifest, dict) or "arrays" not in manifest or "meta" not in manifest:
            raise CheckpointError("manifest missing required fields", offset)
        arrays: dict[str, np.ndarray] = {}
        for entry in manifest["arrays"]:
            name, shape = entry["name"], tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = _read_exact(f, count * 8, f"array {name}")
            arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        offset = f.tell()
        if f.read(1):
            raise CheckpointError("trailing bytes after final array", offset)
    return arrays, manifest["meta"]
