"""Binary container: a zip with a JSON manifest plus named .npy tensors.

Used for both the windowed-dataset cache and model checkpoints. Zip entry
timestamps are pinned so identical content produces byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def write_container(path: str | Path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write manifest + tensors to ``path`` atomically (tmp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = dict(manifest)
    manifest["tensors"] = {
        name: {"shape": list(arr.shape), "dtype": str(arr.dtype)} for name, arr in tensors.items()
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        _write_entry(zf, MANIFEST_NAME, json.dumps(manifest, indent=2, sort_keys=True).encode())
        for name, arr in tensors.items():
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
            _write_entry(zf, f"tensors/{name}.npy", buf.getvalue())
    tmp.replace(path)


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"container not found: {path}")
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read(MANIFEST_NAME))
        tensors = {}
        for name in manifest.get("tensors", {}):
            with zf.open(f"tensors/{name}.npy") as fh:
                tensors[name] = np.load(io.BytesIO(fh.read()), allow_pickle=False)
    return manifest, tensors


def _write_entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, data)
