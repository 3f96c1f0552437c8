"""Per-filter dilation pattern selection from enlarged-kernel weights.

A layer trained with kernel side ``2*k*d_max + 1`` subsumes every dilated
(2k+1)-kernel with per-axis rates in ``[1, d_max]``. For each output
channel we score every candidate pattern by the response error a constant
input would see when the unsampled weights are dropped, and keep the
argmin. That closed form is simply the absolute signed sum of the
unsampled weights, so the whole search is a cheap traversal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator

import numpy as np

from .errors import DimensionError, GeometryError
from .tensor import Tensor4

if TYPE_CHECKING:  # pragma: no cover
    from .container import ModelContainer

__all__ = [
    "DilationPattern",
    "LayerSpec",
    "Assignment",
    "SearchResult",
    "all_patterns",
    "sampled_positions",
    "pattern_mask",
    "mask_filter",
    "pattern_error",
    "select_pattern",
    "search_layer",
    "search_model",
]


@dataclass(frozen=True, order=True)
class DilationPattern:
    """Per-axis dilation rates of one filter. ``dy`` is rows, ``dx`` cols.

    Field order makes tuple comparison agree with the normative tie-break
    and enumeration order, which is lexicographic on (dy, dx).
    """

    dy: int
    dx: int

    def __post_init__(self) -> None:
        if self.dy < 1 or self.dx < 1:
            raise GeometryError(f"dilation rates must be >= 1, got {self}")

    def validate(self, d_max: int) -> None:
        if self.dy > d_max or self.dx > d_max:
            raise GeometryError(f"{self} exceeds d_max={d_max}")

    def as_pair(self) -> list[int]:
        """Wire form: [dy, dx]."""
        return [self.dy, self.dx]


def all_patterns(d_max: int) -> Iterator[DilationPattern]:
    """All d_max^2 patterns, dy outer, dx inner (the normative order)."""
    for dy in range(1, d_max + 1):
        for dx in range(1, d_max + 1):
            yield DilationPattern(dy, dx)


@dataclass(frozen=True)
class LayerSpec:
    """Static geometry of one convolution layer.

    ``k`` is the base kernel half-width (base kernel is (2k+1) square,
    k=0 meaning a pointwise layer that takes no part in the search);
    the enlarged training kernel has side ``2*k*d_max + 1``.
    """

    name: str
    k: int
    d_max: int
    c_in: int
    c_out: int
    groups: int = 1
    stride: tuple[int, int] = (1, 1)

    def __post_init__(self) -> None:
        if self.k < 0:
            raise GeometryError(f"layer {self.name}: k must be >= 0, got {self.k}")
        if self.d_max < 1:
            raise GeometryError(f"layer {self.name}: d_max must be >= 1")
        if self.c_in < 1 or self.c_out < 1:
            raise GeometryError(f"layer {self.name}: channel counts must be positive")
        if self.groups < 1 or self.c_in % self.groups or self.c_out % self.groups:
            raise GeometryError(
                f"layer {self.name}: c_in={self.c_in}, c_out={self.c_out} "
                f"not divisible by groups={self.groups}"
            )
        if self.stride[0] < 1 or self.stride[1] < 1:
            raise GeometryError(f"layer {self.name}: stride must be positive")

    @property
    def kernel_side(self) -> int:
        """Side of the enlarged (search-time) kernel."""
        return 2 * self.k * self.d_max + 1

    @property
    def compact_side(self) -> int:
        """Side of the dense per-pattern kernel."""
        return 2 * self.k + 1

    @property
    def searchable(self) -> bool:
        return self.k > 0


@dataclass(frozen=True)
class Assignment:
    """Selected pattern and its error for every output channel of a layer."""

    layer: str
    d_max: int
    patterns: tuple[DilationPattern, ...]
    errors: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.patterns) != len(self.errors):
            raise DimensionError(
                f"assignment for {self.layer}: {len(self.patterns)} patterns "
                f"vs {len(self.errors)} errors"
            )
        for p in self.patterns:
            p.validate(self.d_max)


@dataclass(frozen=True)
class SearchResult:
    """Assignments for all searchable layers plus the skipped pointwise ones."""

    assignments: tuple[Assignment, ...]
    skipped: tuple[str, ...] = field(default_factory=tuple)

    def by_layer(self) -> dict[str, Assignment]:
        return {a.layer: a for a in self.assignments}


def sampled_positions(
    k: int, d_max: int, p: DilationPattern
) -> frozenset[tuple[int, int]]:
    """(row, col) grid coordinates a pattern samples in the enlarged kernel.

    The (2k+1)^2 coordinates are centred at c = k*d_max and stepped by
    (dy, dx); all of them land inside the enlarged grid.
    """
    p.validate(d_max)
    c = k * d_max
    return frozenset(
        (c + i * p.dy, c + j * p.dx)
        for i in range(-k, k + 1)
        for j in range(-k, k + 1)
    )


def pattern_mask(k: int, d_max: int, p: DilationPattern) -> np.ndarray:
    """Boolean [S, S] mask, True at the pattern's sampled positions."""
    side = 2 * k * d_max + 1
    mask = np.zeros((side, side), dtype=bool)
    for r, col in sampled_positions(k, d_max, p):
        mask[r, col] = True
    return mask


def _check_filter(filt: np.ndarray, k: int, d_max: int) -> np.ndarray:
    filt = np.asarray(filt)
    side = 2 * k * d_max + 1
    if filt.ndim != 3 or filt.shape[1] != side or filt.shape[2] != side:
        raise DimensionError(
            f"filter shape {filt.shape} does not match [C, {side}, {side}]"
        )
    return filt


def mask_filter(
    filt: np.ndarray, p: DilationPattern, k: int, d_max: int
) -> np.ndarray:
    """Copy of a [C, S, S] filter with every unsampled position zeroed.

    Applied identically across input channels.
    """
    filt = _check_filter(filt, k, d_max)
    mask = pattern_mask(k, d_max, p)
    out = np.zeros_like(filt)
    out[:, mask] = filt[:, mask]
    return out


def pattern_error(filt: np.ndarray, p: DilationPattern, k: int, d_max: int) -> float:
    """Constant-input response error of dropping the unsampled weights.

    Returns |sum of all unsampled weights| across input channels and
    positions, accumulated in float64 in (c, row, col) declaration order
    so the value is bit-reproducible and matches the naive oracle.
    """
    filt = _check_filter(filt, k, d_max)
    residual = filt.astype(np.float64) - mask_filter(filt, p, k, d_max).astype(
        np.float64
    )
    acc = 0.0
    for v in residual.ravel().tolist():
        acc += v
    return abs(acc)


def select_pattern(
    filt: np.ndarray, k: int, d_max: int
) -> tuple[DilationPattern, float]:
    """Argmin of pattern_error over all d_max^2 patterns.

    Enumeration is dy-outer/dx-inner and only strictly smaller errors
    displace the incumbent, so ties resolve to the lexicographically
    smallest (dy, dx).
    """
    best: tuple[DilationPattern, float] | None = None
    for p in all_patterns(d_max):
        err = pattern_error(filt, p, k, d_max)
        if best is None or err < best[1]:
            best = (p, err)
    assert best is not None
    return best


def search_layer(weights: Tensor4, spec: LayerSpec) -> Assignment:
    """Independent per-filter pattern selection for one layer."""
    c_out, c_wg, kh, kw = weights.dims
    side = spec.kernel_side
    if kh != side or kw != side:
        raise GeometryError(
            f"layer {spec.name}: expected side {side} "
            f"(k={spec.k}, d_max={spec.d_max}), got {kh}x{kw}"
        )
    if c_out != spec.c_out or c_wg != spec.c_in // spec.groups:
        raise DimensionError(
            f"layer {spec.name}: weight dims {weights.dims} do not match spec"
        )
    patterns: list[DilationPattern] = []
    errors: list[float] = []
    for o in range(c_out):
        p, err = select_pattern(weights.data[o], spec.k, spec.d_max)
        patterns.append(p)
        errors.append(err)
    return Assignment(spec.name, spec.d_max, tuple(patterns), tuple(errors))


def search_model(model: "ModelContainer", d_max: int) -> SearchResult:
    """Pattern selection for every searchable layer of a container.

    Pointwise (k=0) layers are skipped and reported by name. A layer
    whose declared d_max or kernel side disagrees with ``d_max`` is a
    hard error naming the layer.
    """
    assignments: list[Assignment] = []
    skipped: list[str] = []
    for layer in model.layers:
        spec = layer.spec
        if not spec.searchable:
            skipped.append(spec.name)
            continue
        if spec.d_max != d_max:
            raise GeometryError(
                f"layer {spec.name}: declared d_max={spec.d_max} "
                f"does not match requested d_max={d_max}"
            )
        weights = model.weight(spec.name)
        assignments.append(search_layer(weights, spec))
    return SearchResult(tuple(assignments), tuple(skipped))
