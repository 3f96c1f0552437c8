"""Seeded synthetic supernet containers.

Stands in for actual pretraining: all declared tensors are filled from a
single SplitMix64 stream in blob declaration order (per layer: weight,
then scale and bias when affine is requested), which makes ``generate``
reproducible byte-for-byte from the seed alone.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .container import ContainerLayer, ModelContainer
from .prng import Gaussian, SplitMix64, Uniform, fill
from .search import LayerSpec

__all__ = ["generate"]


def generate(
    seed: int,
    layers: Sequence[tuple[LayerSpec, bool]],
    dist: Uniform | Gaussian,
) -> ModelContainer:
    """Supernet container with deterministic weights.

    ``layers`` pairs each LayerSpec with its affine flag.
    """
    rng = SplitMix64(seed)
    tensors: dict[str, np.ndarray] = {}
    entries: list[ContainerLayer] = []
    for spec, affine in layers:
        side = spec.kernel_side
        shape = (spec.c_out, spec.c_in // spec.groups, side, side)
        tensors[f"{spec.name}.weight"] = fill(rng, shape, dist)
        if affine:
            tensors[f"{spec.name}.scale"] = fill(rng, (spec.c_out,), dist)
            tensors[f"{spec.name}.bias"] = fill(rng, (spec.c_out,), dist)
        entries.append(ContainerLayer(spec, affine, None))
    return ModelContainer(
        kind="supernet",
        layers=entries,
        tensors=tensors,
        provenance=f"generated seed={seed} dist={json.dumps(dist.to_dict())}",
    )
