"""MDLW weight files.

Layout::

    b"MDLWv001"
    u64 little-endian header length
    UTF-8 JSON header (layers, input shape, numeric width, seed, block shapes)
    raw little-endian weight then bias of every block, in layer order

The JSON header is emitted with sorted keys and no whitespace so equal models
serialise to equal bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError, FormatError
from ..fileio import atomic_write_bytes
from .model import Model, ParamBlock

MAGIC = b"MDLWv001"


def to_bytes(model: Model, extra: dict | None = None) -> bytes:
    header = {
        "name": model.name,
        "layers": [s.to_dict() for s in model.layers],
        "input_shape": list(model.input_shape),
        "bits": model.bits,
        "seed": model.seed,
        "blocks": [{"layer": p.layer, "weight": list(p.weight.shape), "bias": list(p.bias.shape)}
                   for p in model.params],
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    le = np.dtype(model.dtype).newbyteorder("<")
    parts = [MAGIC, struct.pack("<Q", len(hbytes)), hbytes]
    for p in model.params:
        parts.append(np.ascontiguousarray(p.weight, dtype=le).tobytes())
        parts.append(np.ascontiguousarray(p.bias, dtype=le).tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> tuple[Model, dict]:
    if len(data) < 16 or data[:8] != MAGIC:
        raise FormatError("not an MDLW file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if 16 + hlen > len(data):
        raise FormatError("truncated MDLW header")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        model = Model(header["layers"], header["input_shape"], seed=header["seed"],
                      bits=header["bits"], name=header.get("name", "model"))
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed MDLW header: {exc}") from exc
    le = np.dtype(model.dtype).newbyteorder("<")
    offset = 16 + hlen
    params = []
    for blk in header["blocks"]:
        arrays = []
        for key in ("weight", "bias"):
            shape = tuple(blk[key])
            nbytes = int(np.prod(shape)) * le.itemsize
            if offset + nbytes > len(data):
                raise FormatError("truncated MDLW weight payload")
            arrays.append(np.frombuffer(data, dtype=le, count=int(np.prod(shape)),
                                        offset=offset).reshape(shape).astype(model.dtype))
            offset += nbytes
        params.append(ParamBlock(blk["layer"], *arrays))
    if offset != len(data):
        raise FormatError("trailing bytes after MDLW payload")
    expected = [(p.layer, p.weight.shape, p.bias.shape) for p in model.params]
    if expected != [(p.layer, p.weight.shape, p.bias.shape) for p in params]:
        raise FormatError("MDLW block shapes disagree with the layer chain")
    model.params = params
    return model, header.get("extra", {})


def save_weights(path, model: Model, extra: dict | None = None) -> Path:
    return atomic_write_bytes(path, to_bytes(model, extra))


def load_weights(path) -> Model:
    path = Path(path)
    if not path.exists():
        raise DataError(f"weight file not found: {path}")
    return from_bytes(path.read_bytes())[0]
