"""Versioned checkpoint files: parameters, buffers, optimizer moments and a config snapshot."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from ..errors import CompatibilityError, DataError

CHECKPOINT_VERSION = 1


def save_checkpoint(path, arrays: dict, meta: dict) -> Path:
    """Write ``arrays`` (name -> ndarray) and JSON-able ``meta`` into one .npz blob."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {f"a/{k}": np.asarray(v) for k, v in arrays.items()}
    payload["meta"] = np.frombuffer(
        json.dumps({"version": CHECKPOINT_VERSION, **meta}, sort_keys=True).encode(), dtype=np.uint8
    )
    buf = io.BytesIO()
    np.savez(buf, **payload)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)
    return path


def load_checkpoint(path):
    """Return ``(arrays, meta)``."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            arrays = {k[2:]: data[k] for k in data.files if k.startswith("a/")}
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CompatibilityError(f"{path}: checkpoint version {meta.get('version')} is not {CHECKPOINT_VERSION}")
    return arrays, meta
