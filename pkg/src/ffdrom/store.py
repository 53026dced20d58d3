"""On-disk snapshot store.

Layout::

    <store>/manifest.json
    <store>/fields/*.f64     snapshot and result fields
    <store>/basis/*.f64      POD modes and PODI coefficient tables

Binary blocks are raw little-endian float64; their length and SHA-256 live in
the manifest.  Every file is written to a temporary name and renamed into
place, so a crash never leaves a half-written block under its final name.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import IntegrityError

FORMAT = "ffdrom-store"
FORMAT_VERSION = 1
_LE = np.dtype("<f8")


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dump_manifest(manifest: dict) -> bytes:
    return (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode()


class Store:
    """A store directory.  Single writer; readers may open a complete store."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def exists(self) -> bool:
        return self.manifest_path.is_file()

    def write_block(self, rel: str, array: np.ndarray) -> dict:
        """Write ``array`` (any shape) as little-endian f64; returns its manifest entry."""
        arr = np.ascontiguousarray(array, dtype=_LE)
        data = arr.tobytes()
        _atomic_write(self.root / rel, data)
        return {"file": rel, "shape": list(arr.shape), "length": int(arr.size), "sha256": sha256(data)}

    def read_block(self, entry: dict) -> np.ndarray:
        path = self.root / entry["file"]
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise IntegrityError(f"{entry['file']}: referenced block is missing") from None
        if len(data) != 8 * int(entry["length"]):
            raise IntegrityError(f"{entry['file']}: expected {entry['length']} values, found {len(data) // 8}")
        if sha256(data) != entry["sha256"]:
            raise IntegrityError(f"{entry['file']}: checksum mismatch")
        arr = np.frombuffer(data, dtype=_LE).astype(float)
        return arr.reshape(entry.get("shape", [arr.size]))

    def write_text(self, rel: str, text: str) -> None:
        _atomic_write(self.root / rel, text.encode())

    def save_manifest(self, manifest: dict, bump: bool = True) -> dict:
        """Write the manifest; ``bump`` advances its revision counter."""
        manifest = dict(manifest)
        manifest["format"] = FORMAT
        manifest["format_version"] = FORMAT_VERSION
        manifest["revision"] = int(manifest.get("revision", 0)) + (1 if bump else 0)
        _atomic_write(self.manifest_path, dump_manifest(manifest))
        return manifest

    def load_manifest(self, verify: bool = True) -> dict:
        try:
            manifest = json.loads(self.manifest_path.read_text())
        except FileNotFoundError:
            raise IntegrityError(f"no manifest in {self.root}") from None
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"manifest.json is corrupt: {exc}") from None
        if manifest.get("format") != FORMAT:
            raise IntegrityError(f"{self.manifest_path} is not an ffdrom store manifest")
        if int(manifest.get("format_version", 0)) > FORMAT_VERSION:
            raise IntegrityError(f"store format {manifest['format_version']} is newer than supported")
        if verify:
            for entry in iter_blocks(manifest):
                self.read_block(entry)
        return manifest


def iter_blocks(manifest: dict):
    """Every binary-block entry referenced by a manifest."""
    for snap in manifest.get("snapshots", []):
        yield snap["field"]
    if manifest.get("mesh"):
        yield manifest["mesh"]["vertices"]
    for basis in manifest.get("bases", {}).values():
        yield basis["modes"]
    podi = manifest.get("models", {}).get("podi")
    if podi:
        yield podi["coefficients"]
