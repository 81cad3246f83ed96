"""Single-file dataset container.

Layout: the magic line ``RTSDE-ENSEMBLE\\n``, an 8-byte little-endian manifest
length, a UTF-8 JSON manifest, then the payload of little-endian float64
values in trajectory, time, dimension order. The manifest records the payload
SHA-256.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ChecksumMismatch, ParseError, ValidationError, VersionMismatch
from ..simulator import Ensemble, PermutationRecord

MAGIC = b"RTSDE-ENSEMBLE\n"
FORMAT_VERSION = "1"


def save_ensemble(path, e: Ensemble, perm: Optional[PermutationRecord] = None, seed=None,
                  extra: Optional[dict] = None) -> None:
    """Write ``e``; ``perm`` records the true time index at each stored position."""
    payload = np.ascontiguousarray(e.data, dtype="<f8").tobytes()
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_traj": e.n_traj,
        "n_steps": e.n_steps,
        "dim": e.dim,
        "dt": e.dt,
        "kind": e.kind,
        "perm_mode": perm.mode if perm is not None else None,
        "perms": perm.perms.tolist() if perm is not None else None,
        "seed": seed,
        "extra": extra or {},
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(payload)


def read_manifest(blob: bytes, source: str = "<bytes>") -> tuple[dict, bytes]:
    if not blob.startswith(MAGIC):
        raise ParseError(f"{source}: not a dataset container")
    off = len(MAGIC)
    if len(blob) < off + 8:
        raise ChecksumMismatch(f"{source}: truncated header")
    (n,) = struct.unpack("<Q", blob[off:off + 8])
    off += 8
    if len(blob) < off + n:
        raise ChecksumMismatch(f"{source}: truncated manifest")
    try:
        manifest = json.loads(blob[off:off + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{source}: bad manifest: {exc}") from None
    return manifest, blob[off + n:]


def load_ensemble(path) -> tuple[Ensemble, Optional[PermutationRecord], dict]:
    """Inverse of :func:`save_ensemble`; returns ``(ensemble, perm, manifest)``."""
    blob = Path(path).read_bytes()
    m, payload = read_manifest(blob, str(path))
    if m.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format_version {m.get('format_version')!r}, expected {FORMAT_VERSION!r}")
    if hashlib.sha256(payload).hexdigest() != m.get("sha256"):
        raise ChecksumMismatch(f"{path}: payload checksum mismatch")
    N, T, d = (int(m[k]) for k in ("n_traj", "n_steps", "dim"))
    if len(payload) != N * T * d * 8:
        raise ValidationError(f"{path}: payload holds {len(payload) // 8} values, manifest says {N}x{T}x{d}")
    data = np.frombuffer(payload, dtype="<f8").reshape(N, T, d).astype(float)
    perm = None
    if m.get("perms") is not None:
        perm = PermutationRecord(m["perm_mode"], np.asarray(m["perms"], dtype=np.int64))
        if perm.n_steps != T:
            raise ValidationError(f"{path}: permutation length {perm.n_steps} != n_steps {T}")
    return Ensemble(data, float(m["dt"]), m["kind"]), perm, m
