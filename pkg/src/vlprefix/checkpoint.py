"""Deterministic binary checkpoints: manifest JSON + named float32 arrays.

Layout: an 8-byte magic, a u32 little-endian manifest length, the manifest
(sorted-key JSON: run config, vocab, step, phase, metrics history, and the
parameter index with shapes), then each parameter's raw little-endian
float32 bytes in index order, then a trailing CRC32 of everything before
it. Writing the same state twice produces identical bytes; float64 ->
float32 rounding is idempotent, so save(load(save(x))) == save(x).
"""

from __future__ import annotations

import json
import zlib

import numpy as np

MAGIC = b"VLPFXCK1"


class CheckpointError(ValueError):
    """Malformed or corrupted checkpoint file."""


def save_checkpoint(path, params: dict, manifest_extra: dict) -> None:
    """params maps name -> np.ndarray; manifest_extra carries run state."""
    index = [{"name": name, "shape": list(params[name].shape)}
             for name in sorted(params)]
    manifest = dict(manifest_extra, params=index)
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray()
    body += MAGIC
    body += np.uint32(len(blob)).tobytes()
    body += blob
    for entry in index:
        arr = np.ascontiguousarray(params[entry["name"]], dtype="<f4")
        body += arr.tobytes()
    body += np.uint32(zlib.crc32(bytes(body))).tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_checkpoint(path):
    """-> (manifest, params dict of float64 arrays)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    stored_crc = int(np.frombuffer(raw[-4:], dtype="<u4")[0])
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch, file corrupted")
    cursor = len(MAGIC)
    blob_len = int(np.frombuffer(raw[cursor:cursor + 4], dtype="<u4")[0])
    cursor += 4
    try:
        manifest = json.loads(raw[cursor:cursor + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: bad manifest: {e}") from e
    cursor += blob_len
    params = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if cursor + nbytes > len(raw) - 4:
            raise CheckpointError(
                f"{path}: array {entry['name']!r} extends past end of file")
        arr = np.frombuffer(raw[cursor:cursor + nbytes], dtype="<f4")
        params[entry["name"]] = arr.reshape(shape).astype(np.float64)
        cursor += nbytes
    if cursor != len(raw) - 4:
        raise CheckpointError(f"{path}: {len(raw) - 4 - cursor} trailing bytes")
    return manifest, params
