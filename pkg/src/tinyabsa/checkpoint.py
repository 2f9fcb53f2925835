"""Checkpoint container: text header plus little-endian raw tensor buffers.

Layout, all header text UTF-8 with "\n" line ends::

    tinyabsa-ckpt 1
    tensor <name> <dtype> <d0,d1,...|-> <byte-offset> <byte-length>
    ...
    end
    <raw little-endian buffers, concatenated in header order>

Tensor names carry no whitespace; entries are written in sorted-name order so
the same tensors always produce the same bytes. Round-trips are bit-exact.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigurationError, ParseError

MAGIC = "tinyabsa-ckpt"
VERSION = 1

_WIRE_DTYPES = {
    "float32": "<f4",
    "float64": "<f8",
    "int64": "<i8",
    "uint8": "|u1",
}
_NAME_BY_KIND = {np.dtype(v): k for k, v in _WIRE_DTYPES.items()}


def save_tensors(path: str, tensors: dict[str, np.ndarray]) -> None:
    lines = [f"{MAGIC} {VERSION}"]
    blobs = []
    offset = 0
    for name in sorted(tensors):
        if not name or any(ch.isspace() for ch in name):
            raise ConfigurationError(f"tensor name {name!r} must be non-empty without whitespace")
        arr = np.asarray(tensors[name])  # tobytes() below always emits C order
        wire = _NAME_BY_KIND.get(arr.dtype.newbyteorder("="))
        if wire is None:
            raise ConfigurationError(f"tensor {name} has unsupported dtype {arr.dtype}")
        raw = arr.astype(_WIRE_DTYPES[wire], copy=False).tobytes()
        shape = ",".join(str(d) for d in arr.shape) if arr.ndim else "-"
        lines.append(f"tensor {name} {wire} {shape} {offset} {len(raw)}")
        blobs.append(raw)
        offset += len(raw)
    lines.append("end")
    payload = "\n".join(lines).encode("utf-8") + b"\n" + b"".join(blobs)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def load_tensors(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw.startswith(b"end\n"):
        raise ParseError(f"{path}: missing container header")
    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise ParseError(f"{path}: missing container header terminator")
    header = raw[:cut].decode("utf-8")
    body = raw[cut + len(marker):]
    lines = header.split("\n")
    first = lines[0].split()
    if len(first) != 2 or first[0] != MAGIC:
        raise ParseError(f"{path}: not a {MAGIC} container")
    if first[1] != str(VERSION):
        raise ParseError(f"{path}: unsupported container version {first[1]}")
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if len(fields) != 6 or fields[0] != "tensor":
            raise ParseError(f"{path}:{lineno}: malformed tensor entry {line!r}")
        _, name, wire, shape_str, offset_str, nbytes_str = fields
        if wire not in _WIRE_DTYPES:
            raise ParseError(f"{path}:{lineno}: unknown dtype {wire}")
        shape = () if shape_str == "-" else tuple(int(d) for d in shape_str.split(","))
        offset, nbytes = int(offset_str), int(nbytes_str)
        if offset + nbytes > len(body):
            raise ParseError(f"{path}:{lineno}: tensor {name} overruns the data section")
        dt = np.dtype(_WIRE_DTYPES[wire])
        count = nbytes // dt.itemsize
        arr = np.frombuffer(body, dtype=dt, count=count, offset=offset).reshape(shape)
        out[name] = arr.astype(dt.newbyteorder("="), copy=True)
    return out
