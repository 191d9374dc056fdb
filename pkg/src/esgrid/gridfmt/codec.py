"""ESGN v1 container codec.

Layout: bytes 0-3 magic "ESGN"; byte 4 version 0x01; bytes 5-8 header length
(uint32, little-endian); then a UTF-8 JSON header with fixed key order;
then the payload of little-endian row-major variable data at the offsets the
header declares (relative to payload start, 8-byte aligned).

The header key order is canonical — dimensions, variables, attributes at the
top level; name/size/unlimited per dimension; name/dims/dtype/attributes/
offset/length per variable; attribute maps sorted by key — so writing is
bit-exact and deterministic for a given dataset.
"""

from __future__ import annotations

import hashlib
import json
import struct

from ..errors import ValidationError
from .model import Dimension, GridDataset, Variable

MAGIC = b"ESGN"
VERSION = 1
_PREFIX_LEN = 9  # magic + version + header length


class FormatError(ValidationError):
    code = "bad_format"


def checksum(data: bytes) -> str:
    """Hex SHA-256 digest of a byte sequence."""
    return hashlib.sha256(data).hexdigest()


def _align8(n: int) -> int:
    return (n + 7) & ~7


def _pack(var: Variable) -> bytes:
    if var.dtype == "f64":
        return struct.pack(f"<{len(var.data)}d", *(float(x) for x in var.data))
    return struct.pack(f"<{len(var.data)}q", *var.data)


def _unpack(dtype: str, raw: bytes) -> list:
    count = len(raw) // 8
    if dtype == "f64":
        return list(struct.unpack(f"<{count}d", raw))
    return list(struct.unpack(f"<{count}q", raw))


def write_dataset(ds: GridDataset) -> bytes:
    """Serialize a validated dataset to canonical ESGN v1 bytes."""
    ds.validate()
    payload = bytearray()
    var_entries = []
    for var in ds.variables:
        offset = _align8(len(payload))
        payload.extend(b"\x00" * (offset - len(payload)))
        raw = _pack(var)
        payload.extend(raw)
        var_entries.append({
            "name": var.name,
            "dims": list(var.dims),
            "dtype": var.dtype,
            "attributes": dict(sorted(var.attributes.items())),
            "offset": offset,
            "length": len(raw),
        })
    header_obj = {
        "dimensions": [
            {"name": d.name, "size": d.size, "unlimited": d.unlimited}
            for d in ds.dimensions
        ],
        "variables": var_entries,
        "attributes": dict(sorted(ds.global_attributes.items())),
    }
    header = json.dumps(header_obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return MAGIC + bytes([VERSION]) + struct.pack("<I", len(header)) + header + bytes(payload)


def read_dataset(data: bytes) -> GridDataset:
    """Parse ESGN v1 bytes back into a validated GridDataset."""
    if len(data) < _PREFIX_LEN:
        raise FormatError("truncated prefix")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic: {data[:4]!r}")
    if data[4] != VERSION:
        raise FormatError(f"unsupported version: {data[4]}")
    header_len = struct.unpack("<I", data[5:9])[0]
    if len(data) < _PREFIX_LEN + header_len:
        raise FormatError("truncated header")
    try:
        header = json.loads(data[_PREFIX_LEN:_PREFIX_LEN + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed header: {exc}") from exc
    for key in ("dimensions", "variables", "attributes"):
        if key not in header:
            raise FormatError(f"header missing {key!r}")

    payload = data[_PREFIX_LEN + header_len:]
    dims = [Dimension(d["name"], d["size"], bool(d["unlimited"])) for d in header["dimensions"]]
    variables = []
    end = 0
    for entry in header["variables"]:
        offset, length = entry["offset"], entry["length"]
        if length % 8 != 0 or offset % 8 != 0:
            raise FormatError(f"variable {entry['name']!r}: misaligned segment")
        if offset + length > len(payload):
            raise FormatError("truncated payload")
        end = max(end, offset + length)
        variables.append(Variable(
            name=entry["name"],
            dims=list(entry["dims"]),
            dtype=entry["dtype"],
            attributes=dict(entry["attributes"]),
            data=_unpack(entry["dtype"], payload[offset:offset + length]),
        ))
    if len(payload) != end:
        raise FormatError(
            f"header/payload length disagreement: payload {len(payload)}, declared {end}")
    return GridDataset(
        dimensions=dims,
        variables=variables,
        global_attributes=dict(header["attributes"]),
    ).validate()
