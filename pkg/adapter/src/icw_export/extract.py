"""Pull the declared chain out of a checkpoint and fold batch norm.

Checkpoints are .npz archives of named float arrays: rank-4 weights in
[c_out, c_in/groups, side, side] order, rank-1 batch-norm vectors. The
fold is scale = gamma / sqrt(var + eps), bias = beta - mean * scale, the
exact per-channel affine the container format carries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingTensor, ShapeMismatch, TopologyError
from .manifest import LayerEntry, Manifest


@dataclass(frozen=True)
class ExtractedLayer:
    entry: LayerEntry
    weight: np.ndarray
    scale: np.ndarray | None
    bias: np.ndarray | None

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1] * self.entry.groups


def fold_batch_norm(
    gamma: np.ndarray,
    beta: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    epsilon: float,
) -> tuple[np.ndarray, np.ndarray]:
    scale = gamma.astype(np.float64) / np.sqrt(var.astype(np.float64) + epsilon)
    bias = beta.astype(np.float64) - mean.astype(np.float64) * scale
    return scale.astype(np.float32), bias.astype(np.float32)


def _get(source: dict, name: str, rank: int, layer: str) -> np.ndarray:
    if name not in source:
        raise MissingTensor(f"layer {layer}: tensor {name!r} not in checkpoint")
    arr = np.asarray(source[name])
    if arr.ndim != rank:
        raise ShapeMismatch(
            f"layer {layer}: tensor {name!r} has rank {arr.ndim}, expected {rank}"
        )
    return arr


def extract_layers(source: dict, manifest: Manifest) -> list[ExtractedLayer]:
    out: list[ExtractedLayer] = []
    for entry in manifest.layers:
        w = _get(source, entry.weight, 4, entry.layer)
        side = entry.expected_side
        if w.shape[2] != side or w.shape[3] != side:
            raise ShapeMismatch(
                f"layer {entry.layer}: tensor {entry.weight!r} is "
                f"{w.shape[2]}x{w.shape[3]}, expected side {side} "
                f"(k={entry.k}, d_max={entry.d_max})"
            )
        c_out = w.shape[0]
        if c_out % entry.groups:
            raise ShapeMismatch(
                f"layer {entry.layer}: c_out={c_out} not divisible by "
                f"groups={entry.groups}"
            )
        scale = bias = None
        if entry.bn is not None:
            parts = [
                _get(source, n, 1, entry.layer)
                for n in (entry.bn.gamma, entry.bn.beta,
                          entry.bn.mean, entry.bn.var)
            ]
            for name, arr in zip(
                (entry.bn.gamma, entry.bn.beta, entry.bn.mean, entry.bn.var),
                parts,
            ):
                if arr.shape != (c_out,):
                    raise ShapeMismatch(
                        f"layer {entry.layer}: tensor {name!r} has shape "
                        f"{arr.shape}, expected ({c_out},)"
                    )
            scale, bias = fold_batch_norm(*parts, manifest.epsilon)
        out.append(ExtractedLayer(entry, w.astype(np.float32), scale, bias))
    for prev, cur in zip(out, out[1:]):
        if prev.c_out != cur.c_in:
            raise TopologyError(
                f"not a sequential chain: layer {prev.entry.layer} emits "
                f"{prev.c_out} channels, layer {cur.entry.layer} expects "
                f"{cur.c_in}"
            )
    return out
