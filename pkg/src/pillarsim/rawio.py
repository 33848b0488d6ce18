"""Raw binary export helpers.

Gridded outputs (permittivity volumes, far-field maps, field slices) are
written as little-endian float32 with a JSON sidecar describing shape, axis
order and physical spacing, so they can be reloaded without guessing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

RAW_SUFFIX = ".raw"
META_SUFFIX = ".json"


def save_raw(path: str | Path, data: np.ndarray, meta: dict | None = None) -> Path:
    """Write `data` as little-endian float32 plus a `<path>.json` sidecar.

    `path` may be given with or without the `.raw` suffix. Returns the path
    of the raw file.
    """
    path = Path(path)
    if path.suffix == RAW_SUFFIX:
        path = path.with_suffix("")
    raw_path = path.with_suffix(RAW_SUFFIX)
    arr = np.ascontiguousarray(data, dtype="<f4")
    raw_path.write_bytes(arr.tobytes())
    sidecar = {
        "dtype": "<f4",
        "order": "C",
        "shape": list(arr.shape),
    }
    if meta:
        sidecar.update(meta)
    path.with_suffix(META_SUFFIX).write_text(json.dumps(sidecar, indent=2) + "\n")
    return raw_path


def load_raw(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    if path.suffix == RAW_SUFFIX:
        path = path.with_suffix("")
    meta = json.loads(path.with_suffix(META_SUFFIX).read_text())
    raw = np.frombuffer(path.with_suffix(RAW_SUFFIX).read_bytes(), dtype=meta["dtype"])
    arr = raw.reshape(meta["shape"])
    return arr, meta
