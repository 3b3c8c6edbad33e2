"""Checkpoints: ``manifest.json`` (name -> shape, dtype, offset) plus a flat
little-endian ``params.bin`` blob."""
import json
import os

import numpy as np

from ..errors import CheckpointError

MANIFEST = "manifest.json"
BLOB = "params.bin"
FORMAT = "ctrl-hin-checkpoint/1"


def save_checkpoint(path, arrays, meta=None):
    """Write ``arrays`` (name -> ndarray or Tensor) under directory ``path``."""
    os.makedirs(path, exist_ok=True)
    entries = []
    offset = 0
    with open(os.path.join(path, BLOB), "wb") as fh:
        for name in sorted(arrays):
            a = arrays[name]
            a = getattr(a, "data", a)
            buf = np.ascontiguousarray(a, dtype="<f8").tobytes()
            entries.append({"name": name, "shape": list(a.shape), "dtype": "float64",
                            "offset": offset, "nbytes": len(buf)})
            fh.write(buf)
            offset += len(buf)
    manifest = {"format": FORMAT, "byteorder": "little", "tensors": entries, "meta": meta or {}}
    with open(os.path.join(path, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_checkpoint(path):
    """Return ``(arrays, meta)``; raises CheckpointError naming the path on failure."""
    mpath = os.path.join(path, MANIFEST)
    bpath = os.path.join(path, BLOB)
    if not os.path.isfile(mpath) or not os.path.isfile(bpath):
        raise CheckpointError(f"no checkpoint at {path!r} (expected {MANIFEST} and {BLOB})")
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt manifest {mpath!r}: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{mpath!r}: unsupported format {manifest.get('format')!r}")
    with open(bpath, "rb") as fh:
        blob = fh.read()
    arrays = {}
    for e in manifest["tensors"]:
        if e["dtype"] != "float64":
            raise CheckpointError(f"{e['name']}: unsupported dtype {e['dtype']}")
        count = int(np.prod(e["shape"], dtype=np.int64))
        end = e["offset"] + 8 * count
        if end > len(blob):
            raise CheckpointError(f"{bpath!r}: truncated blob for {e['name']}")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=e["offset"])
        arrays[e["name"]] = arr.astype(np.float64).reshape(e["shape"])
    return arrays, manifest.get("meta", {})
