"""Binary container for named float arrays plus JSON metadata.

Used for trainer checkpoints and feature-extractor weight assets.  Layout:

    magic "ARRC" | version u32 LE | header length u64 LE | header JSON
    | concatenated raw array payloads (C-order, little-endian)

The header records kind, metadata, and an array table of
(name, dtype, shape, nbytes) in payload order, plus a CRC32 of the whole
payload.  Loading verifies magic, version, exact payload length, and the
checksum, so truncation and corruption fail loudly.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .exceptions import CheckpointError

MAGIC = b"ARRC"
VERSION = 1

_ALLOWED_DTYPES = {"float32", "float64", "int64", "uint8"}


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    table = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.name not in _ALLOWED_DTYPES:
            raise CheckpointError(f"array {name!r} has unsupported dtype {arr.dtype}")
        blob = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        table.append(
            {"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape), "nbytes": len(blob)}
        )
        blobs.append(blob)
    payload = b"".join(blobs)
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": table, "payload_crc32": zlib.crc32(payload)}
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(payload)


def read_container(path, expected_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Load (meta, arrays); raises CheckpointError on any inconsistency."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an array container (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: container version {version}, expected {VERSION}")
    (header_len,) = struct.unpack_from("<Q", raw, 8)
    header_end = 16 + header_len
    if header_end > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    payload = raw[header_end:]
    expected = sum(entry["nbytes"] for entry in header["arrays"])
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected} (truncated?)"
        )
    if zlib.crc32(payload) != header["payload_crc32"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    if expected_kind is not None and header["kind"] != expected_kind:
        raise CheckpointError(f"{path}: contains {header['kind']!r}, expected {expected_kind!r}")
    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        if entry["dtype"] not in _ALLOWED_DTYPES:
            raise CheckpointError(f"{path}: unsupported dtype {entry['dtype']}")
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        arr = np.frombuffer(payload, dtype=dtype, count=int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1, offset=offset)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])
        offset += entry["nbytes"]
    return header["meta"], arrays
