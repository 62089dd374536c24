"""Checkpoint persistence.

A checkpoint is a directory with two files:

* ``manifest.txt`` — UTF-8 ``key=value`` lines (config snapshot, format
  version, step count, and one ``param.<name>.shape`` entry per blob).
* ``params.bin`` — a sequence of records, all little-endian:
  name length (u32), name bytes, rank (u32), dims (u32 x rank), then the
  payload as f32.

Round-tripping float32 parameters is bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.txt"
PARAMS_NAME = "params.bin"


class CheckpointError(Exception):
    """Corrupt, truncated, or inconsistent checkpoint."""


def _shape_str(shape) -> str:
    return "x".join(str(d) for d in shape) if shape else "scalar"


def save_checkpoint(params: dict[str, np.ndarray], manifest: dict[str, str], path) -> None:
    """Write ``params`` (converted to float32) and ``manifest`` under ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    manifest = dict(manifest)
    manifest["format_version"] = str(FORMAT_VERSION)
    for name, arr in params.items():
        manifest[f"param.{name}.shape"] = _shape_str(np.shape(arr))

    lines = [f"{k}={v}" for k, v in sorted(manifest.items())]
    (path / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")

    with open(path / PARAMS_NAME, "wb") as fh:
        for name, arr in params.items():
            # asarray, not ascontiguousarray: the latter promotes 0-d scalars
            # to shape (1,), breaking the manifest's "scalar" entry
            arr = np.asarray(arr, dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_manifest(path) -> dict[str, str]:
    mpath = Path(path) / MANIFEST_NAME
    if not mpath.exists():
        raise CheckpointError(f"missing {MANIFEST_NAME} in {path}")
    manifest = {}
    for lineno, line in enumerate(mpath.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise CheckpointError(f"{MANIFEST_NAME} line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        manifest[key] = value
    return manifest


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read a checkpoint directory back into (params, manifest)."""
    path = Path(path)
    manifest = load_manifest(path)

    version = manifest.get("format_version")
    if version != str(FORMAT_VERSION):
        raise CheckpointError(f"format version mismatch: got {version}, expected {FORMAT_VERSION}")

    blob = (path / PARAMS_NAME).read_bytes()
    params: dict[str, np.ndarray] = {}
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"truncated {PARAMS_NAME}: while reading {what}")
        chunk = blob[off:off + n]
        off += n
        return chunk

    while off < len(blob):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "dims")) if rank else ()
        count = int(np.prod(shape)) if shape else 1
        payload = take(4 * count, f"payload of {name}")
        params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()

        want = manifest.get(f"param.{name}.shape")
        if want is None:
            raise CheckpointError(f"parameter {name} absent from manifest")
        if want != _shape_str(shape):
            raise CheckpointError(f"shape mismatch for {name}: blob {_shape_str(shape)}, manifest {want}")

    declared = {k[len("param."):-len(".shape")] for k in manifest if k.startswith("param.")}
    missing = declared - params.keys()
    if missing:
        raise CheckpointError(f"blobs missing for manifest parameters: {sorted(missing)}")
    return params, manifest
