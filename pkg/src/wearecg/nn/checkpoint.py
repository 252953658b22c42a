"""Parameter checkpoints: a JSON manifest next to a raw float32 blob.

The manifest lists ``(name, shape, offset)`` per tensor, where ``offset`` counts
float32 elements into the blob, plus the blob's SHA-256. Extra metadata
(architecture, configs) rides along under ``"meta"``.
"""
from __future__ import annotations

import hashlib
import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_checkpoint(path: str | Path, state: "OrderedDict[str, np.ndarray]", meta: dict | None = None) -> Path:
    manifest_path, blob_path = _paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, arr in state.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    blob = b"".join(chunks)
    manifest = {
        "version": FORMAT_VERSION,
        "dtype": "float32",
        "blob": blob_path.name,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "tensors": entries,
        "meta": meta or {},
    }
    blob_path.write_bytes(blob)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_checkpoint(path: str | Path) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    manifest_path, _ = _paths(path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')}")
    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise CheckpointError("checkpoint blob checksum mismatch")
    flat = np.frombuffer(blob, dtype="<f4")
    state = OrderedDict()
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        chunk = flat[e["offset"]:e["offset"] + n]
        if chunk.size != n:
            raise CheckpointError(f"blob too short for tensor {e['name']}")
        state[e["name"]] = chunk.reshape(e["shape"]).astype(np.float32)
    return state, manifest["meta"]


def state_hash(state: "OrderedDict[str, np.ndarray]") -> str:
    h = hashlib.sha256()
    for name, arr in state.items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()
