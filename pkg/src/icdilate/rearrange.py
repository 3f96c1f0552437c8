"""Turning a pattern assignment into an executable rearranged layer.

Output channels are stable-sorted by pattern inside each conv-group
range, the sampled weights of every filter are gathered into a dense
(2k+1) kernel, and the resulting permutation is pushed through the rest
of the chain (output-side affine, successor input channels) so the
network function is preserved. Only sequential chains are supported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping

import numpy as np

from .errors import DimensionError, GeometryError, PropagationError
from .search import Assignment, DilationPattern, LayerSpec
from .tensor import Tensor4

if TYPE_CHECKING:  # pragma: no cover
    from .container import ModelContainer

__all__ = [
    "ChannelPermutation",
    "PlanGroup",
    "GroupedPlan",
    "build_permutation",
    "extract_compact",
    "expand_compact",
    "entry_execution",
    "propagate",
]


@dataclass(frozen=True)
class ChannelPermutation:
    """Bijection on output channels; ``perm[new] = old``."""

    perm: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.perm)
        if sorted(self.perm) != list(range(n)):
            raise DimensionError(f"not a permutation of [0, {n}): {self.perm}")

    def __len__(self) -> int:
        return len(self.perm)

    @property
    def is_identity(self) -> bool:
        return all(p == i for i, p in enumerate(self.perm))

    def inverse(self) -> "ChannelPermutation":
        inv = [0] * len(self.perm)
        for new, old in enumerate(self.perm):
            inv[old] = new
        return ChannelPermutation(tuple(inv))

    def preserves_ranges(self, range_size: int) -> bool:
        """True if every aligned block of ``range_size`` maps onto itself."""
        return all(old // range_size == new // range_size
                   for new, old in enumerate(self.perm))

    @staticmethod
    def identity(n: int) -> "ChannelPermutation":
        return ChannelPermutation(tuple(range(n)))


@dataclass(frozen=True)
class PlanGroup:
    """One contiguous run of output channels sharing a dilation pattern."""

    pattern: DilationPattern
    start: int
    count: int


@dataclass(frozen=True)
class GroupedPlan:
    """Executable form of a rearranged layer.

    ``compact`` holds the dense per-pattern kernels in the rearranged
    channel order; ``perm`` maps rearranged channel -> original channel.
    """

    groups: tuple[PlanGroup, ...]
    perm: ChannelPermutation
    compact: Tensor4

    def __post_init__(self) -> None:
        c_out = self.compact.dims[0]
        if len(self.perm) != c_out:
            raise DimensionError(
                f"perm length {len(self.perm)} != c_out {c_out}"
            )
        pos = 0
        for grp in self.groups:
            if grp.start != pos or grp.count < 1:
                raise DimensionError(
                    f"plan groups do not partition [0, {c_out}): "
                    f"group at {grp.start} (expected {pos})"
                )
            pos += grp.count
        if pos != c_out:
            raise DimensionError(
                f"plan groups cover {pos} channels, expected {c_out}"
            )

    def pattern_of(self, channel: int) -> DilationPattern:
        for grp in self.groups:
            if grp.start <= channel < grp.start + grp.count:
                return grp.pattern
        raise IndexError(channel)

    def patterns(self) -> tuple[DilationPattern, ...]:
        """Per rearranged channel."""
        out: list[DilationPattern] = []
        for grp in self.groups:
            out.extend([grp.pattern] * grp.count)
        return tuple(out)


def build_permutation(a: Assignment, groups: int) -> ChannelPermutation:
    """Stable sort of channels by (dy, dx) within each conv-group range."""
    n = len(a.patterns)
    if groups < 1 or n % groups:
        raise DimensionError(
            f"assignment length {n} not divisible by groups={groups}"
        )
    rng = n // groups
    perm: list[int] = []
    for g in range(groups):
        block = range(g * rng, (g + 1) * rng)
        perm.extend(sorted(block, key=lambda i: a.patterns[i]))
    return ChannelPermutation(tuple(perm))


def _gather_compact(
    filt: np.ndarray, p: DilationPattern, k: int, d_max: int
) -> np.ndarray:
    """[C, S, S] filter -> [C, 2k+1, 2k+1] values at the sampled positions."""
    side = 2 * k + 1
    c0 = k * d_max
    out = np.empty((filt.shape[0], side, side), dtype=filt.dtype)
    for i in range(side):
        for j in range(side):
            out[:, i, j] = filt[:, c0 + (i - k) * p.dy, c0 + (j - k) * p.dx]
    return out


def expand_compact(
    compact: np.ndarray, p: DilationPattern, k: int, d_max: int
) -> np.ndarray:
    """Inverse of the gather: place dense kernel values on the enlarged grid."""
    side = 2 * k * d_max + 1
    c0 = k * d_max
    out = np.zeros((compact.shape[0], side, side), dtype=compact.dtype)
    for i in range(2 * k + 1):
        for j in range(2 * k + 1):
            out[:, c0 + (i - k) * p.dy, c0 + (j - k) * p.dx] = compact[:, i, j]
    return out


def extract_compact(
    weights: Tensor4, a: Assignment, spec: LayerSpec
) -> GroupedPlan:
    """Build the rearranged plan for one layer from its full-size weights."""
    side = spec.kernel_side
    c_out, c_wg, kh, kw = weights.dims
    if kh != side or kw != side:
        raise GeometryError(
            f"layer {spec.name}: expected side {side}, got {kh}x{kw}"
        )
    if c_out != len(a.patterns) or c_out != spec.c_out:
        raise DimensionError(
            f"layer {spec.name}: assignment covers {len(a.patterns)} channels, "
            f"weights have {c_out}"
        )
    perm = build_permutation(a, spec.groups)
    cs = spec.compact_side
    compact = np.empty((c_out, c_wg, cs, cs), dtype=np.float32)
    for new, old in enumerate(perm.perm):
        compact[new] = _gather_compact(
            weights.data[old], a.patterns[old], spec.k, spec.d_max
        )
    groups: list[PlanGroup] = []
    for new, old in enumerate(perm.perm):
        p = a.patterns[old]
        if groups and groups[-1].pattern == p and _same_range(
            spec, groups[-1].start, new
        ):
            last = groups[-1]
            groups[-1] = PlanGroup(p, last.start, last.count + 1)
        else:
            groups.append(PlanGroup(p, new, 1))
    return GroupedPlan(tuple(groups), perm, Tensor4(compact))


def _same_range(spec: LayerSpec, a: int, b: int) -> bool:
    rng = spec.c_out // spec.groups
    return a // rng == b // rng


def entry_execution(spec: LayerSpec, start: int, count: int) -> tuple[int, int, int]:
    """Input-channel window and conv groups for one plan entry.

    Every entry lives inside a single conv-group range, so it executes as
    an ungrouped convolution over that range's input channels.
    """
    o_per_g = spec.c_out // spec.groups
    gi = start // o_per_g
    if (start + count - 1) // o_per_g != gi:
        raise GeometryError(
            f"layer {spec.name}: plan entry [{start}, {start + count}) "
            f"crosses a conv-group boundary"
        )
    if spec.groups == 1:
        return 0, spec.c_in, 1
    c_per_g = spec.c_in // spec.groups
    return gi * c_per_g, (gi + 1) * c_per_g, 1


def _absorb_input_perm(
    w: np.ndarray, carry: ChannelPermutation, c_in: int, groups: int
) -> np.ndarray:
    """Reorder the (grouped, local) input axis by a global permutation."""
    c_per_g = c_in // groups
    if carry.is_identity or c_per_g == 1:
        return w
    out = np.empty_like(w)
    # output channel o reads global inputs [gbase, gbase + c_per_g)
    o_per_g = w.shape[0] // groups
    for o in range(w.shape[0]):
        gbase = (o // o_per_g) * c_per_g
        for c in range(c_per_g):
            out[o, c] = w[o, carry.perm[gbase + c] - gbase]
    return out


def propagate(
    model: "ModelContainer", plans: Mapping[str, GroupedPlan]
) -> "ModelContainer":
    """Apply per-layer rearrangement to a sequential chain.

    Each layer's output permutation is absorbed by the successor's input
    channels; the last one is recorded in the header instead of applied.
    Depthwise layers cannot absorb a permutation on their input axis, so
    the permutation passes through them (their filters, affine and plan
    are reordered to follow their inputs').
    """
    from .container import ContainerLayer, ModelContainer

    new_layers: list[ContainerLayer] = []
    tensors: dict[str, np.ndarray] = {}
    carry = ChannelPermutation.identity(model.layers[0].spec.c_in)
    prev_name = "<input>"
    for layer in model.layers:
        spec = layer.spec
        plan = plans.get(spec.name)
        if spec.searchable and plan is None:
            raise PropagationError(f"layer {spec.name}: no plan supplied")
        w = model.weight(spec.name).data
        affine = model.affine(spec.name)
        c_per_g_in = spec.c_in // spec.groups
        depthwise_pass = (
            spec.groups > 1 and c_per_g_in == 1 and not carry.is_identity
        )
        if depthwise_pass:
            if spec.c_out != spec.c_in:
                raise PropagationError(
                    f"cannot push permutation from {prev_name} through "
                    f"{spec.name}: depthwise with channel multiplier"
                )
            tau = carry
            src = plan.compact.data if plan is not None else w
            new_w = src[list(tau.perm)]
            new_plan = None
            if plan is not None:
                if not plan.perm.is_identity:
                    raise PropagationError(
                        f"layer {spec.name}: depthwise plan expected identity "
                        f"permutation"
                    )
                pats = plan.patterns()
                groups = tuple(
                    PlanGroup(pats[old], j, 1) for j, old in enumerate(tau.perm)
                )
                new_plan = GroupedPlan(groups, tau, Tensor4(new_w))
        else:
            if not carry.preserves_ranges(c_per_g_in):
                raise PropagationError(
                    f"permutation from {prev_name} crosses conv-group "
                    f"boundaries of {spec.name} (groups={spec.groups})"
                )
            src = plan.compact.data if plan is not None else w
            absorbed = _absorb_input_perm(src, carry, spec.c_in, spec.groups)
            if plan is not None:
                tau = plan.perm
                new_w = absorbed  # output axis already reordered by the plan
                new_plan = GroupedPlan(plan.groups, tau, Tensor4(new_w))
            else:
                tau = ChannelPermutation.identity(spec.c_out)
                new_w = absorbed
                new_plan = None
        tensors[f"{spec.name}.weight"] = np.ascontiguousarray(new_w)
        if affine is not None:
            scale, bias = affine
            idx = list(tau.perm)
            tensors[f"{spec.name}.scale"] = scale[idx].copy()
            tensors[f"{spec.name}.bias"] = bias[idx].copy()
        new_layers.append(ContainerLayer(spec, layer.has_affine, new_plan))
        carry = tau
        prev_name = spec.name
    return ModelContainer(
        kind="inception",
        layers=new_layers,
        tensors=tensors,
        provenance=model.provenance + " | rearranged",
        final_output_perm=tuple(carry.perm),
    )
