"""Brute-force ground truth for tests and ``verify --exact``.

Everything here is deliberately unoptimized and independent of the fast
paths it checks: plain nested loops over Python floats, 64-bit all the
way through, single-threaded. Reproducibility beats speed.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from typing import TYPE_CHECKING

import numpy as np

from .errors import EnumerationGuard, GeometryError
from .search import (
    Assignment,
    DilationPattern,
    LayerSpec,
    all_patterns,
    mask_filter,
    _check_filter,
)
from .tensor import ConvGeometry, Tensor4, _check_conv_shapes

if TYPE_CHECKING:  # pragma: no cover
    from .rearrange import GroupedPlan

__all__ = [
    "conv2d_naive",
    "constant_input_error",
    "exhaustive_layer_search",
    "reference_full_naive",
    "run_inception_naive",
]

JOINT_GUARD = 1_000_000


def _as_array(t: Tensor4 | np.ndarray) -> np.ndarray:
    return t.data if isinstance(t, Tensor4) else np.asarray(t)


def conv2d_naive(
    input: Tensor4 | np.ndarray,
    weights: Tensor4 | np.ndarray,
    geom: ConvGeometry,
) -> np.ndarray:
    """Seven nested loops, float64, accumulation in declaration order.

    Loop order is (n, o, y, x) outer and (c, i, j) inner; every fast path
    in the package is measured against this function. Returns float64 so
    64-bit comparisons stay exact.
    """
    x_arr = _as_array(input)
    w_arr = _as_array(weights)
    _check_conv_shapes(x_arr.shape, w_arr.shape, geom)
    n, c_in, h, w = x_arr.shape
    c_out, c_wg, kh, kw = w_arr.shape
    g = geom.groups
    sy, sx = geom.stride
    py, px = geom.padding
    dy, dx = geom.dilation
    h_out, w_out = geom.out_spatial(h, w, kh, kw)

    padded = np.zeros((n, c_in, h + 2 * py, w + 2 * px), dtype=np.float64)
    padded[:, :, py:py + h, px:px + w] = x_arr
    xl = padded.tolist()
    wl = w_arr.astype(np.float64).tolist()

    o_per_g = c_out // g
    c_per_g = c_in // g
    out = np.empty((n, c_out, h_out, w_out), dtype=np.float64)
    for ni in range(n):
        for o in range(c_out):
            base = (o // o_per_g) * c_per_g
            for y in range(h_out):
                for xo in range(w_out):
                    acc = 0.0
                    for c in range(c_wg):
                        row = xl[ni][base + c]
                        wrow = wl[o][c]
                        for i in range(kh):
                            xr = row[y * sy + i * dy]
                            wr = wrow[i]
                            for j in range(kw):
                                acc += wr[j] * xr[xo * sx + j * dx]
                    out[ni, o, y, xo] = acc
    return out


def constant_input_error(
    filt: np.ndarray,
    p: DilationPattern,
    k: int,
    d_max: int,
    input_side: int,
) -> float:
    """Literal constant-input evaluation of a pattern's response error.

    Builds the masked filter, subtracts, convolves (valid) against an
    all-ones input of the given side, and averages the absolute response
    over output positions. The average is taken in exact rational
    arithmetic: every position carries the bit-identical residual sum, so
    the result equals pattern_error exactly for any admissible side.
    """
    filt = _check_filter(filt, k, d_max)
    side = 2 * k * d_max + 1
    if input_side < side:
        raise GeometryError(
            f"input side {input_side} smaller than kernel side {side}"
        )
    residual = filt - mask_filter(filt, p, k, d_max)
    c = filt.shape[0]
    ones = np.ones((1, c, input_side, input_side), dtype=np.float64)
    out = conv2d_naive(ones, residual[np.newaxis], ConvGeometry(groups=1))
    total = Fraction(0)
    for v in out.ravel().tolist():
        total += Fraction(abs(v))
    return float(total / out.size)


def exhaustive_layer_search(weights: Tensor4, spec: LayerSpec) -> Assignment:
    """Joint argmin over all (d_max)^(2*c_out) assignments of a layer.

    Refuses to run past JOINT_GUARD candidates. Agrees with the
    per-filter search whenever it runs, which is the point.
    """
    candidates = spec.d_max ** (2 * spec.c_out)
    if candidates > JOINT_GUARD:
        raise EnumerationGuard(
            f"layer {spec.name}: {candidates} joint assignments exceed "
            f"guard {JOINT_GUARD}"
        )
    side = spec.kernel_side
    if weights.dims[2] != side or weights.dims[3] != side:
        raise GeometryError(
            f"layer {spec.name}: expected side {side}, got {weights.dims[2]}"
        )
    patterns = list(all_patterns(spec.d_max))
    table = [
        [
            constant_input_error(weights.data[o], p, spec.k, spec.d_max, side)
            for p in patterns
        ]
        for o in range(spec.c_out)
    ]
    best_sum: float | None = None
    best: tuple[int, ...] | None = None
    for combo in product(range(len(patterns)), repeat=spec.c_out):
        s = 0.0
        for o, pi in enumerate(combo):
            s += table[o][pi]
        if best_sum is None or s < best_sum:
            best_sum, best = s, combo
    assert best is not None
    return Assignment(
        spec.name,
        spec.d_max,
        tuple(patterns[pi] for pi in best),
        tuple(table[o][pi] for o, pi in enumerate(best)),
    )


def reference_full_naive(
    input: Tensor4 | np.ndarray, weights_s: Tensor4 | np.ndarray, spec: LayerSpec
) -> np.ndarray:
    """Naive execution of the enlarged-kernel layer ("same" padding)."""
    pad = spec.k * spec.d_max
    geom = ConvGeometry(
        stride=spec.stride, padding=(pad, pad), dilation=(1, 1), groups=spec.groups
    )
    return conv2d_naive(input, weights_s, geom)


def run_inception_naive(
    input: Tensor4 | np.ndarray, plan: "GroupedPlan", spec: LayerSpec
) -> np.ndarray:
    """Naive per-group dilated execution of a rearranged layer."""
    from .rearrange import entry_execution

    x = _as_array(input)
    n = x.shape[0]
    h_out, w_out = ConvGeometry(stride=spec.stride, padding=(spec.k, spec.k)).out_spatial(
        x.shape[2], x.shape[3], spec.compact_side, spec.compact_side
    )
    out = np.empty((n, spec.c_out, h_out, w_out), dtype=np.float64)
    compact = _as_array(plan.compact)
    for entry in plan.groups:
        p = entry.pattern
        in_lo, in_hi, conv_groups = entry_execution(spec, entry.start, entry.count)
        geom = ConvGeometry(
            stride=spec.stride,
            padding=(spec.k * p.dy, spec.k * p.dx),
            dilation=(p.dy, p.dx),
            groups=conv_groups,
        )
        out[:, entry.start:entry.start + entry.count] = conv2d_naive(
            x[:, in_lo:in_hi], compact[entry.start:entry.start + entry.count], geom
        )
    return out
