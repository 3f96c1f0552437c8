"""Manifest schema: which checkpoint tensors become which container layers.

The manifest author explicitly selects a sequential conv chain; nothing
is traced or inferred from a graph. See the "Exporter manifest" section
of the container format document for the on-disk schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError

DEFAULT_EPSILON = 1e-5


@dataclass(frozen=True)
class BnNames:
    gamma: str
    beta: str
    mean: str
    var: str


@dataclass(frozen=True)
class LayerEntry:
    layer: str
    weight: str
    k: int
    d_max: int
    groups: int = 1
    stride: tuple[int, int] = (1, 1)
    bn: BnNames | None = None

    @property
    def expected_side(self) -> int:
        return 2 * self.k * self.d_max + 1


@dataclass(frozen=True)
class Manifest:
    source: Path
    layers: tuple[LayerEntry, ...]
    epsilon: float = DEFAULT_EPSILON
    kind: str = "supernet"


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: not valid JSON: {e}") from None
    try:
        entries = []
        for raw in doc["layers"]:
            bn = None
            if raw.get("bn") is not None:
                b = raw["bn"]
                bn = BnNames(str(b["gamma"]), str(b["beta"]),
                             str(b["mean"]), str(b["var"]))
            entries.append(LayerEntry(
                layer=str(raw["layer"]),
                weight=str(raw["weight"]),
                k=int(raw["k"]),
                d_max=int(raw["d_max"]),
                groups=int(raw.get("groups", 1)),
                stride=tuple(int(v) for v in raw.get("stride", [1, 1])),
                bn=bn,
            ))
        manifest = Manifest(
            source=path.parent / str(doc["source"]),
            layers=tuple(entries),
            epsilon=float(doc.get("epsilon", DEFAULT_EPSILON)),
            kind=str(doc.get("kind", "supernet")),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ManifestError(f"{path}: malformed manifest: {e}") from None
    if not manifest.layers:
        raise ManifestError(f"{path}: manifest declares no layers")
    names = [e.layer for e in manifest.layers]
    if len(set(names)) != len(names):
        raise ManifestError(f"{path}: duplicate layer names {names}")
    for e in manifest.layers:
        if e.k < 0 or e.d_max < 1 or e.groups < 1:
            raise ManifestError(
                f"layer {e.layer}: k must be >= 0, d_max and groups >= 1"
            )
        if e.stride[0] < 1 or e.stride[1] < 1:
            raise ManifestError(f"layer {e.layer}: stride must be positive")
    return manifest
