"""Disk cache and checkpointing for long-running family scans.

Layout: one directory (default ``~/.cache/nldensity``, override with
``NLD_CACHE_DIR``) holding

* ``<key>.json``      — finished results, keyed by a hash of the full
  parameter payload (which includes a kernel version and backend name, so
  stale entries are never read after an algorithm change);
* ``<key>.ckpt.npz``  — in-progress per-modulus partial arrays plus a block
  done-mask, written periodically so an interrupted scan resumes instead of
  restarting.

Set ``NLD_NO_CACHE=1`` to disable both reads and writes (checkpoints
included); useful for determinism tests that must recompute from scratch.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "cache_dir",
    "cache_enabled",
    "payload_key",
    "get_result",
    "put_result",
    "load_checkpoint",
    "save_checkpoint",
]


def cache_enabled() -> bool:
    return os.environ.get("NLD_NO_CACHE", "") not in ("1", "true", "yes")


def cache_dir() -> Path:
    root = os.environ.get("NLD_CACHE_DIR")
    if root:
        path = Path(root)
    else:
        path = Path.home() / ".cache" / "nldensity"
    path.mkdir(parents=True, exist_ok=True)
    return path


def payload_key(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def get_result(payload: dict) -> Optional[dict]:
    if not cache_enabled():
        return None
    path = cache_dir() / (payload_key(payload) + ".json")
    if not path.exists():
        return None
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return None
    if doc.get("payload") != payload:
        return None  # hash-prefix collision or corrupted entry
    return doc.get("result")


def put_result(payload: dict, result: dict) -> None:
    if not cache_enabled():
        return
    path = cache_dir() / (payload_key(payload) + ".json")
    doc = {"payload": payload, "result": result}
    _atomic_write(path, json.dumps(doc, indent=1, sort_keys=True).encode())


def _atomic_write(path: Path, blob: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _ckpt_path(key: str) -> Path:
    return cache_dir() / (key + ".ckpt.npz")


def load_checkpoint(key: str) -> Optional[dict]:
    if not cache_enabled():
        return None
    path = _ckpt_path(key)
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as npz:
            data = {name: npz[name].copy() for name in npz.files}
    except (OSError, ValueError):
        return None
    if data.get("key") is None or str(data["key"]) != key:
        return None
    return data


def save_checkpoint(key: str, arrays: dict) -> None:
    if not cache_enabled():
        return
    path = _ckpt_path(key)
    payload = dict(arrays)
    payload["key"] = np.array(key)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".npz.tmp")
    os.close(fd)
    try:
        with open(tmp, "wb") as fh:
            np.savez(fh, **payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
