"""Grouped dilated execution, the full-kernel reference, and the cost model.

A rearranged layer runs as one dilated sub-convolution per pattern group,
each padded "same"-style by (k*dy, k*dx) so every group produces the same
spatial dims as a standard (2k+1) convolution at the layer's stride. The
reference path executes the zero-embedded full-size kernels instead; the
two must agree elementwise.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionError, GeometryError
from .rearrange import GroupedPlan, entry_execution
from .search import LayerSpec
from .tensor import ConvGeometry, Tensor4, conv2d

if TYPE_CHECKING:  # pragma: no cover
    from .container import ModelContainer

__all__ = [
    "CostReport",
    "run_inception",
    "reference_full",
    "cost_model",
    "plan_macs",
    "bench_layer",
    "run_model",
    "apply_affine",
]

THREADS_ENV = "ICDILATE_THREADS"


def _max_workers(items: int) -> int:
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        v = int(raw)
    except ValueError:
        v = 0
    if v < 0:
        v = 0
    if v == 0:
        v = os.cpu_count() or 1
    return max(1, min(v, items))


def run_inception(input: Tensor4, plan: GroupedPlan, spec: LayerSpec) -> Tensor4:
    """Execute a rearranged layer as per-group dilated convolutions.

    Groups cover disjoint output channel ranges and may run concurrently
    (capped by ICDILATE_THREADS); the result does not depend on the
    schedule.
    """
    n, c_in, h, w = input.dims
    if c_in != spec.c_in:
        raise DimensionError(
            f"layer {spec.name}: input has {c_in} channels, spec says {spec.c_in}"
        )
    if plan.compact.dims[0] != spec.c_out:
        raise GeometryError(
            f"layer {spec.name}: plan covers {plan.compact.dims[0]} channels, "
            f"spec says {spec.c_out}"
        )
    cs = spec.compact_side
    if plan.compact.dims[2] != cs or plan.compact.dims[3] != cs:
        raise GeometryError(
            f"layer {spec.name}: compact kernels are "
            f"{plan.compact.dims[2]}x{plan.compact.dims[3]}, expected {cs}x{cs}"
        )
    h_out, w_out = ConvGeometry(
        stride=spec.stride, padding=(spec.k, spec.k)
    ).out_spatial(h, w, cs, cs)

    def one(entry):
        in_lo, in_hi, _ = entry_execution(spec, entry.start, entry.count)
        p = entry.pattern
        geom = ConvGeometry(
            stride=spec.stride,
            padding=(spec.k * p.dy, spec.k * p.dx),
            dilation=(p.dy, p.dx),
            groups=1,
        )
        return conv2d(
            Tensor4(input.data[:, in_lo:in_hi]),
            Tensor4(plan.compact.data[entry.start:entry.start + entry.count]),
            geom,
        )

    out = np.empty((n, spec.c_out, h_out, w_out), dtype=np.float32)
    workers = _max_workers(len(plan.groups))
    if workers == 1:
        results = [one(entry) for entry in plan.groups]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, plan.groups))
    for entry, res in zip(plan.groups, results):
        out[:, entry.start:entry.start + entry.count] = res.data
    return Tensor4(out)


def reference_full(input: Tensor4, weights_s: Tensor4, spec: LayerSpec) -> Tensor4:
    """Standard execution of the enlarged kernels ("same" padding)."""
    side = spec.kernel_side
    if weights_s.dims[2] != side or weights_s.dims[3] != side:
        raise GeometryError(
            f"layer {spec.name}: expected side {side}, "
            f"got {weights_s.dims[2]}x{weights_s.dims[3]}"
        )
    pad = spec.k * spec.d_max
    geom = ConvGeometry(
        stride=spec.stride, padding=(pad, pad), dilation=(1, 1), groups=spec.groups
    )
    return conv2d(input, weights_s, geom)


@dataclass(frozen=True)
class CostReport:
    """Multiply-accumulate counts for the executable and search-time layers."""

    macs_standard: int
    macs_inception: int
    macs_supernet: int
    macs_darts_style: int
    ratio_edo_over_darts: float

    def to_dict(self) -> dict:
        return {
            "macs_standard": self.macs_standard,
            "macs_inception": self.macs_inception,
            "macs_supernet": self.macs_supernet,
            "macs_darts_style": self.macs_darts_style,
            "ratio_edo_over_darts": self.ratio_edo_over_darts,
        }


def cost_model(spec: LayerSpec, h: int, w: int) -> CostReport:
    """MAC counts for one layer on an h x w input.

    The rearranged execution touches exactly the same number of weights
    as a standard (2k+1) convolution, pattern-independent; the enlarged
    search-time kernel costs (2k*d_max+1)^2 per tap pair versus a
    try-every-pattern scheme's (2k+1)^2 * d_max^2.
    """
    if h < 1 or w < 1:
        raise GeometryError(f"input dims must be positive, got {h}x{w}")
    sy, sx = spec.stride
    h_out = (h - 1) // sy + 1
    w_out = (w - 1) // sx + 1
    per_pos = (spec.c_in // spec.groups) * spec.c_out
    base = per_pos * h_out * w_out
    std = base * spec.compact_side**2
    sup = base * spec.kernel_side**2
    darts = base * spec.compact_side**2 * spec.d_max**2
    return CostReport(
        macs_standard=std,
        macs_inception=std,
        macs_supernet=sup,
        macs_darts_style=darts,
        ratio_edo_over_darts=sup / darts,
    )


def plan_macs(plan: GroupedPlan, spec: LayerSpec, h: int, w: int) -> int:
    """MACs actually executed by run_inception on an h x w input."""
    sy, sx = spec.stride
    h_out = (h - 1) // sy + 1
    w_out = (w - 1) // sx + 1
    per_channel = (spec.c_in // spec.groups) * spec.compact_side**2
    return sum(g.count * per_channel for g in plan.groups) * h_out * w_out


def _percentile(sorted_vals: list[float], q: float) -> float:
    if len(sorted_vals) == 1:
        return sorted_vals[0]
    pos = q * (len(sorted_vals) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(sorted_vals) - 1)
    frac = pos - lo
    return sorted_vals[lo] * (1 - frac) + sorted_vals[hi] * frac


def bench_layer(
    plan: GroupedPlan,
    spec: LayerSpec,
    input: Tensor4,
    repetitions: int,
) -> dict:
    """Wall-time comparison of rearranged vs standard execution.

    The standard side runs the same compact kernels undilated, so both
    sides execute the identical MAC count; timings are machine-dependent
    and reported separately from the deterministic fields.
    """
    if repetitions < 3:
        raise ValueError(f"repetitions must be >= 3, got {repetitions}")
    std_geom = ConvGeometry(
        stride=spec.stride, padding=(spec.k, spec.k), dilation=(1, 1), groups=spec.groups
    )

    def timed(fn) -> list[float]:
        out = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            fn()
            out.append((time.perf_counter() - t0) * 1e3)
        return sorted(out)

    inc = timed(lambda: run_inception(input, plan, spec))
    std = timed(lambda: conv2d(input, plan.compact, std_geom))
    h, w = input.dims[2], input.dims[3]
    macs = cost_model(spec, h, w)

    def summary(ms: list[float]) -> dict:
        return {
            "median_ms": _percentile(ms, 0.5),
            "p10_ms": _percentile(ms, 0.1),
            "p90_ms": _percentile(ms, 0.9),
        }

    return {
        "layer": spec.name,
        "macs_standard": macs.macs_standard,
        "macs_inception": macs.macs_inception,
        "mac_ratio": macs.macs_inception / macs.macs_standard,
        "timings": {
            "standard": summary(std),
            "inception": summary(inc),
            "ratio_inception_over_standard": (
                _percentile(inc, 0.5) / _percentile(std, 0.5)
            ),
        },
    }


def apply_affine(y: Tensor4, scale: np.ndarray, bias: np.ndarray) -> Tensor4:
    """Per-output-channel scale and shift."""
    out = y.data * scale[np.newaxis, :, np.newaxis, np.newaxis] + bias[
        np.newaxis, :, np.newaxis, np.newaxis
    ]
    return Tensor4(out.astype(np.float32))


def run_model(
    model: "ModelContainer",
    x: Tensor4,
    patterns_by_layer: dict | None = None,
) -> Tensor4:
    """Forward pass through a sequential chain container.

    A supernet container runs its full-size kernels directly; passing
    ``patterns_by_layer`` (layer name -> per-original-channel patterns)
    zero-embeds each filter first, which is the unpermuted reference for
    a rearranged model. An inception container runs its plans.
    """
    from .search import mask_filter

    for layer in model.layers:
        spec = layer.spec
        if model.kind == "inception" and layer.plan is not None:
            y = run_inception(x, layer.plan, spec)
        else:
            w = model.weight(spec.name)
            if patterns_by_layer and spec.name in patterns_by_layer:
                pats = patterns_by_layer[spec.name]
                emb = np.empty_like(w.data)
                for o in range(spec.c_out):
                    emb[o] = mask_filter(w.data[o], pats[o], spec.k, spec.d_max)
                w = Tensor4(emb)
            y = reference_full(x, w, spec)
        affine = model.affine(spec.name)
        if affine is not None:
            y = apply_affine(y, *affine)
        x = y
    return x
