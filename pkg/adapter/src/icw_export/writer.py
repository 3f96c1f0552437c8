"""Standalone .icw v1 writer implementing the published container format.

Kept free of any dependency on the consumer package on purpose: the file
format is the interface. Layout: magic "ICWEIGHT", LE u32 version, LE
u64 header length, canonical JSON header, then raw little-endian float32
blobs at 64-byte-aligned offsets in declaration order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .extract import ExtractedLayer

MAGIC = b"ICWEIGHT"
VERSION = 1
ALIGN = 64


def _layer_dict(layer: ExtractedLayer) -> dict:
    e = layer.entry
    return {
        "name": e.layer,
        "k": e.k,
        "d_max": e.d_max,
        "c_in": layer.c_in,
        "c_out": layer.c_out,
        "groups": e.groups,
        "stride": [e.stride[0], e.stride[1]],
        "affine": layer.scale is not None,
        "plan": None,
    }


def container_bytes(layers: list[ExtractedLayer], kind: str,
                    provenance: str) -> bytes:
    tensors: dict[str, np.ndarray] = {}
    for layer in layers:
        tensors[f"{layer.entry.layer}.weight"] = layer.weight
        if layer.scale is not None:
            tensors[f"{layer.entry.layer}.scale"] = layer.scale
            tensors[f"{layer.entry.layer}.bias"] = layer.bias
    header_doc = {
        "version": VERSION,
        "kind": kind,
        "provenance": provenance,
        "layers": [_layer_dict(l) for l in layers],
        "final_output_perm": None,
        "tensors": [
            {"name": name, "dims": list(arr.shape)}
            for name, arr in tensors.items()
        ],
    }
    header = json.dumps(header_doc, indent=2).encode("utf-8") + b"\n"
    out = bytearray()
    out += MAGIC
    out += struct.pack("<IQ", VERSION, len(header))
    out += header
    for arr in tensors.values():
        out += b"\x00" * ((ALIGN - len(out) % ALIGN) % ALIGN)
        out += np.ascontiguousarray(arr).astype("<f4", copy=False).tobytes()
    return bytes(out)


def write_container(layers: list[ExtractedLayer], kind: str, provenance: str,
                    path: str | Path) -> None:
    Path(path).write_bytes(container_bytes(layers, kind, provenance))
