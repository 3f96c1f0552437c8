"""The .icw weight container: a self-describing bundle for conv chains.

Layout: 8-byte magic ``ICWEIGHT``, little-endian u32 version (= 1),
little-endian u64 header length, a UTF-8 JSON header, then one raw blob
per declared tensor, each starting at a 64-byte-aligned file offset,
little-endian float32, row-major. Serialization is canonical (fixed key
order, fixed field formatting, blobs in declaration order), so write is
deterministic and write-read round-trips are byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    BadVersion,
    DimensionError,
    HeaderError,
    TruncatedBlob,
)
from .rearrange import ChannelPermutation, GroupedPlan, PlanGroup, entry_execution
from .search import DilationPattern, LayerSpec
from .tensor import Tensor4

__all__ = [
    "MAGIC",
    "VERSION",
    "ContainerLayer",
    "ModelContainer",
    "read_container",
    "write_container",
]

MAGIC = b"ICWEIGHT"
VERSION = 1
ALIGN = 64
KINDS = ("supernet", "inception")


@dataclass(frozen=True)
class ContainerLayer:
    spec: LayerSpec
    has_affine: bool = False
    plan: GroupedPlan | None = None


@dataclass
class ModelContainer:
    """Validated in-memory form of an .icw file.

    ``tensors`` maps declared tensor names to read-only float32 arrays in
    blob declaration order (per layer: weight, then scale and bias when
    the layer carries an affine).
    """

    kind: str
    layers: list[ContainerLayer]
    tensors: dict[str, np.ndarray]
    provenance: str = ""
    final_output_perm: tuple[int, ...] | None = None
    _by_name: dict[str, ContainerLayer] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._normalize_tensors()
        self._validate()
        self._by_name = {l.spec.name: l for l in self.layers}

    def _normalize_tensors(self) -> None:
        norm: dict[str, np.ndarray] = {}
        for name, arr in self.tensors.items():
            a = np.ascontiguousarray(arr, dtype=np.float32)
            if a is arr and a.flags.writeable:
                a = a.copy()
            a.flags.writeable = False
            norm[name] = a
        self.tensors = norm

    def _expected_side(self, spec: LayerSpec) -> int:
        return spec.kernel_side if self.kind == "supernet" else spec.compact_side

    def _validate(self) -> None:
        if self.kind not in KINDS:
            raise HeaderError(f"unknown container kind {self.kind!r}")
        if not self.layers:
            raise HeaderError("container declares no layers")
        names = [l.spec.name for l in self.layers]
        if len(set(names)) != len(names):
            raise HeaderError(f"duplicate layer names in {names}")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.spec.c_out != cur.spec.c_in:
                raise HeaderError(
                    f"chain mismatch: layer {prev.spec.name} emits "
                    f"{prev.spec.c_out} channels but layer {cur.spec.name} "
                    f"expects {cur.spec.c_in}"
                )
        expected_order: list[str] = []
        for layer in self.layers:
            spec = layer.spec
            wname = f"{spec.name}.weight"
            expected_order.append(wname)
            if wname not in self.tensors:
                raise HeaderError(f"missing tensor {wname}")
            side = self._expected_side(spec)
            shape = self.tensors[wname].shape
            want = (spec.c_out, spec.c_in // spec.groups, side, side)
            if shape != want:
                if shape[:2] == want[:2]:
                    raise HeaderError(
                        f"layer {spec.name}: expected side {side}, "
                        f"got {shape[2]}x{shape[3]}"
                    )
                raise HeaderError(
                    f"layer {spec.name}: tensor {wname} has dims {shape}, "
                    f"expected {want}"
                )
            if layer.has_affine:
                for part in ("scale", "bias"):
                    tname = f"{spec.name}.{part}"
                    expected_order.append(tname)
                    if tname not in self.tensors:
                        raise HeaderError(f"missing tensor {tname}")
                    if self.tensors[tname].shape != (spec.c_out,):
                        raise HeaderError(
                            f"layer {spec.name}: tensor {tname} has dims "
                            f"{self.tensors[tname].shape}, expected ({spec.c_out},)"
                        )
            self._validate_plan(layer)
        extra = [t for t in self.tensors if t not in expected_order]
        if extra:
            raise HeaderError(f"undeclared tensors {extra}")
        self.tensors = {name: self.tensors[name] for name in expected_order}
        if self.kind == "inception":
            if self.final_output_perm is None:
                raise HeaderError("inception container lacks final_output_perm")
            ChannelPermutation(tuple(self.final_output_perm))
            if len(self.final_output_perm) != self.layers[-1].spec.c_out:
                raise HeaderError(
                    f"final_output_perm has {len(self.final_output_perm)} "
                    f"entries, last layer emits {self.layers[-1].spec.c_out}"
                )
        elif self.final_output_perm is not None:
            raise HeaderError("supernet container cannot carry final_output_perm")

    def _validate_plan(self, layer: ContainerLayer) -> None:
        spec = layer.spec
        if self.kind == "supernet":
            if layer.plan is not None:
                raise HeaderError(
                    f"layer {spec.name}: supernet container cannot carry a plan"
                )
            return
        if not spec.searchable:
            if layer.plan is not None:
                raise HeaderError(
                    f"layer {spec.name}: pointwise layer cannot carry a plan"
                )
            return
        plan = layer.plan
        if plan is None:
            raise HeaderError(f"layer {spec.name}: inception container needs a plan")
        if len(plan.perm) != spec.c_out:
            raise HeaderError(
                f"layer {spec.name}: plan permutation length {len(plan.perm)} "
                f"!= c_out {spec.c_out}"
            )
        depthwise = spec.groups > 1 and spec.c_in // spec.groups == 1
        if not depthwise and not plan.perm.preserves_ranges(
            spec.c_out // spec.groups
        ):
            raise HeaderError(
                f"layer {spec.name}: plan permutation crosses conv-group ranges"
            )
        rng = spec.c_out // spec.groups
        prev_by_range: dict[int, DilationPattern] = {}
        for entry in plan.groups:
            entry.pattern.validate(spec.d_max)
            entry_execution(spec, entry.start, entry.count)
            gi = entry.start // rng
            prev = prev_by_range.get(gi)
            if prev is not None and not (prev < entry.pattern):
                raise HeaderError(
                    f"layer {spec.name}: plan patterns not strictly increasing "
                    f"within conv-group range {gi}"
                )
            prev_by_range[gi] = entry.pattern
        w = self.tensors[f"{spec.name}.weight"]
        if not np.array_equal(plan.compact.data, w):
            raise HeaderError(
                f"layer {spec.name}: plan kernels disagree with tensor "
                f"{spec.name}.weight"
            )

    def weight(self, layer_name: str) -> Tensor4:
        return Tensor4(self.tensors[f"{layer_name}.weight"])

    def affine(self, layer_name: str) -> tuple[np.ndarray, np.ndarray] | None:
        layer = self._by_name[layer_name]
        if not layer.has_affine:
            return None
        return (
            self.tensors[f"{layer_name}.scale"],
            self.tensors[f"{layer_name}.bias"],
        )


def _spec_to_dict(layer: ContainerLayer) -> dict:
    spec = layer.spec
    d = {
        "name": spec.name,
        "k": spec.k,
        "d_max": spec.d_max,
        "c_in": spec.c_in,
        "c_out": spec.c_out,
        "groups": spec.groups,
        "stride": [spec.stride[0], spec.stride[1]],
        "affine": layer.has_affine,
        "plan": None,
    }
    if layer.plan is not None:
        d["plan"] = {
            "groups": [
                {
                    "dy": g.pattern.dy,
                    "dx": g.pattern.dx,
                    "start": g.start,
                    "count": g.count,
                }
                for g in layer.plan.groups
            ],
            "perm": list(layer.plan.perm.perm),
        }
    return d


def _layer_from_dict(d: dict, weight: np.ndarray) -> ContainerLayer:
    try:
        spec = LayerSpec(
            name=str(d["name"]),
            k=int(d["k"]),
            d_max=int(d["d_max"]),
            c_in=int(d["c_in"]),
            c_out=int(d["c_out"]),
            groups=int(d["groups"]),
            stride=(int(d["stride"][0]), int(d["stride"][1])),
        )
    except (KeyError, TypeError, IndexError) as e:
        raise HeaderError(f"malformed layer entry {d!r}: {e}") from None
    plan = None
    if d.get("plan") is not None:
        p = d["plan"]
        try:
            groups = tuple(
                PlanGroup(
                    DilationPattern(int(g["dy"]), int(g["dx"])),
                    int(g["start"]),
                    int(g["count"]),
                )
                for g in p["groups"]
            )
            perm = ChannelPermutation(tuple(int(v) for v in p["perm"]))
        except (KeyError, TypeError, DimensionError) as e:
            raise HeaderError(
                f"layer {spec.name}: malformed plan: {e}"
            ) from None
        plan = GroupedPlan(groups, perm, Tensor4(weight))
    return ContainerLayer(spec, bool(d.get("affine", False)), plan)


def _header_dict(model: ModelContainer) -> dict:
    return {
        "version": VERSION,
        "kind": model.kind,
        "provenance": model.provenance,
        "layers": [_spec_to_dict(l) for l in model.layers],
        "final_output_perm": (
            list(model.final_output_perm)
            if model.final_output_perm is not None
            else None
        ),
        "tensors": [
            {"name": name, "dims": list(arr.shape)}
            for name, arr in model.tensors.items()
        ],
    }


def _pad_to(n: int, align: int) -> int:
    return (align - n % align) % align


def write_container(model: ModelContainer, path: str | Path) -> None:
    """Canonical serialization; identical containers yield identical bytes."""
    header = json.dumps(_header_dict(model), indent=2).encode("utf-8") + b"\n"
    out = bytearray()
    out += MAGIC
    out += struct.pack("<IQ", VERSION, len(header))
    out += header
    for arr in model.tensors.values():
        out += b"\x00" * _pad_to(len(out), ALIGN)
        out += arr.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(bytes(out))


def read_container(path: str | Path) -> ModelContainer:
    """Parse and fully validate an .icw file."""
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:8] != MAGIC:
        raise BadMagic(f"{path}: not an ICWEIGHT container")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise BadVersion(f"{path}: unsupported version {version}")
    if 20 + hlen > len(raw):
        raise TruncatedBlob(f"{path}: header extends past end of file")
    try:
        header = json.loads(raw[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise HeaderError(f"{path}: header is not valid JSON: {e}") from None
    if header.get("version") != VERSION:
        raise BadVersion(
            f"{path}: header version {header.get('version')} != {VERSION}"
        )
    try:
        tensor_decls = [(str(t["name"]), [int(v) for v in t["dims"]])
                        for t in header["tensors"]]
        layer_dicts = list(header["layers"])
        kind = str(header["kind"])
        provenance = str(header.get("provenance", ""))
        fop = header.get("final_output_perm")
    except (KeyError, TypeError) as e:
        raise HeaderError(f"{path}: malformed header: {e}") from None

    offset = 20 + hlen
    tensors: dict[str, np.ndarray] = {}
    for name, dims in tensor_decls:
        if any(d < 0 for d in dims):
            raise HeaderError(f"tensor {name}: negative dims {dims}")
        offset += _pad_to(offset, ALIGN)
        nbytes = 4 * int(np.prod(dims, dtype=np.int64)) if dims else 4
        if offset + nbytes > len(raw):
            raise TruncatedBlob(f"truncated tensor {name}")
        arr = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=offset)
        tensors[name] = arr.reshape(dims).copy()
        offset += nbytes

    by_name = dict(tensors)
    layers = []
    for d in layer_dicts:
        wname = f"{d.get('name')}.weight"
        if wname not in by_name:
            raise HeaderError(f"missing tensor {wname}")
        layers.append(_layer_from_dict(d, by_name[wname]))
    return ModelContainer(
        kind=kind,
        layers=layers,
        tensors=tensors,
        provenance=provenance,
        final_output_perm=tuple(int(v) for v in fop) if fop is not None else None,
    )
