"""
Versioned binary container shared by dataset files and model checkpoints.

Layout (little-endian)::

    magic        4 bytes
    version      u16
    header_len   u32
    header       JSON, utf-8, header_len bytes
    payload      raw bytes (f64/i64 blocks), length and sha256 recorded in the header
"""

import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from .exceptions import FormatError

PREFIX = struct.Struct("<4sHI")


def write_container(path: Path, magic: bytes, version: int, header: Dict[str, Any], payload: bytes) -> None:
    header = dict(header)
    header["payload_bytes"] = len(payload)
    header["sha256"] = hashlib.sha256(payload).hexdigest()
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(PREFIX.pack(magic, version, len(encoded)))
        f.write(encoded)
        f.write(payload)


def read_container(path: Path, magic: bytes, version: int) -> Tuple[Dict[str, Any], bytes]:
    with open(path, "rb") as f:
        raw = f.read()

    if len(raw) < PREFIX.size:
        raise FormatError(f"File {path} is shorter than the container prefix", offset=len(raw))
    found_magic, found_version, header_len = PREFIX.unpack_from(raw, 0)
    if found_magic != magic:
        raise FormatError(f"Bad magic {found_magic!r}, expected {magic!r}", offset=0)
    if found_version != version:
        raise FormatError(f"Unsupported version {found_version}, expected {version}", offset=4)

    header_end = PREFIX.size + header_len
    if len(raw) < header_end:
        raise FormatError("Truncated header", offset=len(raw))
    try:
        header = json.loads(raw[PREFIX.size:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Malformed header: {e}", offset=PREFIX.size) from e

    payload = raw[header_end:]
    expected = header.get("payload_bytes")
    if expected is None or len(payload) != expected:
        raise FormatError(f"Payload has {len(payload)} bytes, header declares {expected}", offset=len(raw))
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise FormatError("Payload checksum mismatch", offset=header_end)

    return header, payload


def pack_arrays(arrays: List[np.ndarray], dtype: str = "<f8") -> bytes:
    """Concatenate arrays in row-major order with the given little-endian dtype."""
    return b"".join(np.ascontiguousarray(a, dtype=dtype).tobytes(order="C") for a in arrays)


def unpack_arrays(payload: bytes, shapes: List[Tuple[int, ...]], dtype: str = "<f8", offset: int = 0) -> Tuple[List[np.ndarray], int]:
    """Read arrays of the given shapes starting at ``offset``; returns the arrays and the end offset."""
    itemsize = np.dtype(dtype).itemsize
    native = np.dtype(dtype).newbyteorder("=")
    out = []
    for shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        if count == 0:
            out.append(np.empty(shape, dtype=native))
            continue
        end = offset + count * itemsize
        if end > len(payload):
            raise FormatError(f"Payload too short for tensor of shape {shape}", offset=offset)
        out.append(np.frombuffer(payload, dtype=dtype, count=count, offset=offset).reshape(shape).astype(native))
        offset = end
    return out, offset
