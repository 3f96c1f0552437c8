"""Dense rank-4 tensors and exact 2-D convolution.

Conventions used throughout the package:

* Activations are NCHW, weights are OIHW, both stored as float32 in
  row-major order.
* "Convolution" means cross-correlation (no kernel flip), the usual
  deep-learning reading.
* A kernel index ``[i, j]`` is ``[row, col]``; the ``dy`` component of a
  dilation applies to rows (height), ``dx`` to columns (width).
* Values are stored in 32-bit but accumulated in 64-bit, then rounded
  back to 32-bit on output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import DimensionError, GeometryError

__all__ = ["Tensor4", "ConvGeometry", "conv2d", "constant_tensor", "l1_norm"]


@dataclass(frozen=True)
class Tensor4:
    """Immutable dense rank-4 float32 tensor.

    Wraps a C-contiguous read-only ndarray. Constructors reject NaN and
    infinity so downstream arithmetic never has to re-check.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise DimensionError(f"Tensor4 requires 4 dims, got shape {arr.shape}")
        if arr.dtype != np.float32 or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("Tensor4 admits finite values only")
        arr = arr.copy() if arr.flags.writeable and arr is self.data else arr
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def size(self) -> int:
        return self.data.size

    def astype64(self) -> np.ndarray:
        """Exact widening copy used by 64-bit accumulation paths."""
        return self.data.astype(np.float64)


def constant_tensor(dims: tuple[int, int, int, int], value: float) -> Tensor4:
    """Tensor of the given dims with every element equal to ``value``."""
    if len(dims) != 4 or any(int(d) != d or d < 0 for d in dims):
        raise DimensionError(f"dims must be four non-negative integers, got {dims}")
    return Tensor4(np.full(tuple(int(d) for d in dims), value, dtype=np.float32))


def l1_norm(t: Tensor4) -> float:
    """Sum of absolute values over all elements; 0.0 for empty tensors."""
    if t.size == 0:
        return 0.0
    return float(np.abs(t.astype64()).sum())


@dataclass(frozen=True)
class ConvGeometry:
    """Stride, zero padding, per-axis dilation and channel groups.

    ``stride``/``padding``/``dilation`` are (row, col) pairs, i.e.
    ``(sy, sx)``, ``(py, px)``, ``(dy, dx)``.
    """

    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    dilation: tuple[int, int] = (1, 1)
    groups: int = 1

    def __post_init__(self) -> None:
        sy, sx = self.stride
        py, px = self.padding
        dy, dx = self.dilation
        if sy < 1 or sx < 1:
            raise GeometryError(f"stride must be positive, got {self.stride}")
        if py < 0 or px < 0:
            raise GeometryError(f"padding must be non-negative, got {self.padding}")
        if dy < 1 or dx < 1:
            raise GeometryError(f"dilation must be positive, got {self.dilation}")
        if self.groups < 1:
            raise GeometryError(f"groups must be positive, got {self.groups}")

    def out_spatial(self, h: int, w: int, kh: int, kw: int) -> tuple[int, int]:
        """Output (H', W'); raises if either dimension would be < 1."""
        sy, sx = self.stride
        py, px = self.padding
        dy, dx = self.dilation
        h_out = (h + 2 * py - dy * (kh - 1) - 1) // sy + 1
        w_out = (w + 2 * px - dx * (kw - 1) - 1) // sx + 1
        if h_out < 1 or w_out < 1:
            raise GeometryError(
                f"non-positive output dims {h_out}x{w_out} for input {h}x{w}, "
                f"kernel {kh}x{kw}, {self}"
            )
        return h_out, w_out


def _check_conv_shapes(
    input_shape: tuple[int, ...], weight_shape: tuple[int, ...], geom: ConvGeometry
) -> None:
    if len(input_shape) != 4 or len(weight_shape) != 4:
        raise DimensionError(
            f"conv2d needs rank-4 input and weights, got {input_shape} and {weight_shape}"
        )
    n, c_in, h, w = input_shape
    c_out, c_wg, kh, kw = weight_shape
    g = geom.groups
    if c_in % g != 0 or c_out % g != 0:
        raise DimensionError(
            f"channels ({c_in} in, {c_out} out) not divisible by groups={g}"
        )
    if c_wg != c_in // g:
        raise DimensionError(
            f"weight input depth {c_wg} does not match C_in/groups = {c_in}//{g}"
        )


def conv2d(input: Tensor4, weights: Tensor4, geom: ConvGeometry) -> Tensor4:
    """Grouped 2-D cross-correlation with stride, zero padding and dilation.

    out[n,o,y,x] = sum_{c,i,j} weights[o,c,i,j] *
                   padded[n, base(o)+c, y*sy + i*dy, x*sx + j*dx]

    Accumulation happens in float64 via a fixed-order einsum, so results
    are bit-identical across runs and thread counts; the output is
    rounded to float32.
    """
    _check_conv_shapes(input.dims, weights.dims, geom)
    n, c_in, h, w = input.dims
    c_out, c_wg, kh, kw = weights.dims
    g = geom.groups
    sy, sx = geom.stride
    py, px = geom.padding
    dy, dx = geom.dilation
    h_out, w_out = geom.out_spatial(h, w, kh, kw)

    x = np.zeros((n, c_in, h + 2 * py, w + 2 * px), dtype=np.float64)
    x[:, :, py:py + h, px:px + w] = input.data
    sn, sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(n, c_in, h_out, w_out, kh, kw),
        strides=(sn, sc, sh * sy, sw * sx, sh * dy, sw * dx),
        writeable=False,
    )
    w64 = weights.astype64()

    out = np.empty((n, c_out, h_out, w_out), dtype=np.float64)
    c_per_g = c_in // g
    o_per_g = c_out // g
    for gi in range(g):
        ci, co = gi * c_per_g, gi * o_per_g
        out[:, co:co + o_per_g] = np.einsum(
            "ncyxij,ocij->noyx",
            windows[:, ci:ci + c_per_g],
            w64[co:co + o_per_g],
            optimize=False,
        )
    return Tensor4(out.astype(np.float32))
