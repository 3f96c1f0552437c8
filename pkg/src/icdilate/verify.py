"""Equivalence and oracle suites behind ``icdilate verify``.

Checks a rearranged container against the supernet it came from:

* structural agreement (same chain, plans present, permutations sane),
* kernel bytes: every compact filter must be an exact gather of the
  matching supernet filter under the recorded permutations,
* argmin: the recorded pattern of every channel must be what the search
  (and, with ``--exact``, the literal constant-input oracle) selects,
* execution: grouped dilated runs must match the embedded full-kernel
  reference on random inputs, per layer and end-to-end,
* MAC parity between the rearranged execution and a standard layer.

The 32-bit fast path is compared with a looser-of tolerance (1e-5
relative or 1e-7 absolute per element); ``--exact`` reruns the layer
equivalence through the 64-bit naive path and requires bit equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import ModelContainer
from .errors import VerificationFailure
from .executor import cost_model, plan_macs, reference_full, run_inception, run_model
from .oracle import constant_input_error, reference_full_naive, run_inception_naive
from .prng import SplitMix64, Uniform, fill
from .rearrange import ChannelPermutation, expand_compact
from .search import DilationPattern, all_patterns, mask_filter, select_pattern
from .tensor import Tensor4

__all__ = ["REL_TOL", "ABS_TOL", "close", "max_mismatch", "verify_containers"]

REL_TOL = 1e-5
ABS_TOL = 1e-7


def close(actual: np.ndarray, reference: np.ndarray,
          rel: float = REL_TOL, abs_tol: float = ABS_TOL) -> bool:
    """Per-element |a - r| <= max(rel * |r|, abs_tol), all elements."""
    a = np.asarray(actual, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    return bool(np.all(np.abs(a - r) <= np.maximum(rel * np.abs(r), abs_tol)))


def max_mismatch(actual: np.ndarray, reference: np.ndarray) -> float:
    """Largest |a - r| / max(|r|, 1e-30) over all elements; 0 for empty."""
    a = np.asarray(actual, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - r) / np.maximum(np.abs(r), 1e-30)))


@dataclass
class VerifyReport:
    layers_checked: int = 0
    channels_checked: int = 0
    trials: int = 0
    max_layer_rel_err: float = 0.0
    max_model_rel_err: float = 0.0
    exact: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "layers_checked": self.layers_checked,
            "channels_checked": self.channels_checked,
            "trials": self.trials,
            "max_layer_rel_err": f"{self.max_layer_rel_err:.3e}",
            "max_model_rel_err": f"{self.max_model_rel_err:.3e}",
            "exact": self.exact,
            "notes": self.notes,
        }


def _original_patterns(ic: ModelContainer) -> dict[str, list[DilationPattern]]:
    """Per layer: pattern of each channel in the supernet's original order."""
    out: dict[str, list[DilationPattern]] = {}
    for layer in ic.layers:
        if layer.plan is None:
            continue
        pats = layer.plan.patterns()
        orig: list[DilationPattern | None] = [None] * len(pats)
        for new, old in enumerate(layer.plan.perm.perm):
            orig[old] = pats[new]
        out[layer.spec.name] = orig  # type: ignore[assignment]
    return out


def _input_carries(ic: ModelContainer) -> dict[str, ChannelPermutation]:
    """Permutation each layer's input channels arrived in."""
    carries: dict[str, ChannelPermutation] = {}
    carry = ChannelPermutation.identity(ic.layers[0].spec.c_in)
    for layer in ic.layers:
        carries[layer.spec.name] = carry
        if layer.plan is not None:
            carry = layer.plan.perm
        else:
            carry = ChannelPermutation.identity(layer.spec.c_out)
    return carries


def _check_structure(sup: ModelContainer, ic: ModelContainer) -> None:
    if sup.kind != "supernet":
        raise VerificationFailure("--supernet container is not kind=supernet")
    if ic.kind != "inception":
        raise VerificationFailure("--ic container is not kind=inception")
    if len(sup.layers) != len(ic.layers):
        raise VerificationFailure(
            f"layer count differs: {len(sup.layers)} vs {len(ic.layers)}"
        )
    for a, b in zip(sup.layers, ic.layers):
        if a.spec != b.spec or a.has_affine != b.has_affine:
            raise VerificationFailure(
                f"layer {a.spec.name}: specs differ between containers"
            )


def _check_kernels_and_argmin(
    sup: ModelContainer,
    ic: ModelContainer,
    report: VerifyReport,
    exact: bool,
) -> None:
    carries = _input_carries(ic)
    for layer in ic.layers:
        spec = layer.spec
        plan = layer.plan
        if plan is None:
            continue
        sup_w = sup.weight(spec.name).data
        carry = carries[spec.name]
        pats = plan.patterns()
        c_per_g = spec.c_in // spec.groups
        o_per_g = spec.c_out // spec.groups
        for new, old in enumerate(plan.perm.perm):
            p = pats[new]
            src = sup_w[old]
            if not carry.is_identity and c_per_g > 1:
                gbase = (old // o_per_g) * c_per_g
                idx = [carry.perm[gbase + c] - gbase for c in range(c_per_g)]
                src = src[idx]
            want = expand_compact(
                plan.compact.data[new], p, spec.k, spec.d_max
            )
            got = mask_filter(src, p, spec.k, spec.d_max)
            if not np.array_equal(want, got):
                raise VerificationFailure(
                    f"layer {spec.name} channel {new}: compact kernel is not a "
                    f"gather of supernet filter {old}"
                )
            sel, _ = select_pattern(sup_w[old], spec.k, spec.d_max)
            if sel != p:
                raise VerificationFailure(
                    f"layer {spec.name} channel {old}: recorded pattern "
                    f"({p.dy},{p.dx}) but search selects ({sel.dy},{sel.dx})"
                )
            if exact:
                side = spec.kernel_side
                best = min(
                    all_patterns(spec.d_max),
                    key=lambda q: (
                        constant_input_error(sup_w[old], q, spec.k, spec.d_max, side),
                        (q.dy, q.dx),
                    ),
                )
                if best != p:
                    raise VerificationFailure(
                        f"layer {spec.name} channel {old}: oracle argmin "
                        f"({best.dy},{best.dx}) != recorded ({p.dy},{p.dx})"
                    )
            report.channels_checked += 1
        report.layers_checked += 1


def _layer_trials(
    ic: ModelContainer,
    rng: SplitMix64,
    trials: int,
    report: VerifyReport,
    exact: bool,
) -> None:
    dist = Uniform(1.0)
    for layer in ic.layers:
        spec = layer.spec
        plan = layer.plan
        if plan is None:
            continue
        side = max(spec.kernel_side, 8)
        full = Tensor4(
            np.stack(
                [
                    expand_compact(plan.compact.data[o], plan.pattern_of(o),
                                   spec.k, spec.d_max)
                    for o in range(spec.c_out)
                ]
            )
        )
        for t in range(trials):
            x = Tensor4(fill(rng, (1, spec.c_in, side + t % 3, side + t % 3), dist))
            got = run_inception(x, plan, spec)
            ref = reference_full(x, full, spec)
            report.max_layer_rel_err = max(
                report.max_layer_rel_err, max_mismatch(got.data, ref.data)
            )
            if not close(got.data, ref.data):
                raise VerificationFailure(
                    f"layer {spec.name} trial {t}: grouped execution deviates "
                    f"from full-kernel reference"
                )
            if exact:
                got64 = run_inception_naive(x, plan, spec)
                ref64 = reference_full_naive(x, full, spec)
                if not np.array_equal(got64, ref64):
                    raise VerificationFailure(
                        f"layer {spec.name} trial {t}: 64-bit naive paths differ"
                    )
        h, w = side, side
        if plan_macs(plan, spec, h, w) != cost_model(spec, h, w).macs_standard:
            raise VerificationFailure(
                f"layer {spec.name}: MAC count differs from standard convolution"
            )


def _model_trials(
    sup: ModelContainer,
    ic: ModelContainer,
    rng: SplitMix64,
    trials: int,
    report: VerifyReport,
) -> None:
    patterns = _original_patterns(ic)
    fop = list(ic.final_output_perm)
    dist = Uniform(1.0)
    side = max(max(l.spec.kernel_side for l in sup.layers), 12)
    for t in range(trials):
        x = Tensor4(fill(rng, (1, sup.layers[0].spec.c_in, side, side), dist))
        y_ref = run_model(sup, x, patterns_by_layer=patterns)
        y_ic = run_model(ic, x)
        y_unperm = y_ref.data[:, fop]
        report.max_model_rel_err = max(
            report.max_model_rel_err, max_mismatch(y_ic.data, y_unperm)
        )
        if not close(y_ic.data, y_unperm):
            raise VerificationFailure(
                f"model trial {t}: rearranged output does not match the "
                f"un-permuted reference"
            )
        report.trials += 1


def verify_containers(
    sup: ModelContainer,
    ic: ModelContainer,
    trials: int,
    seed: int,
    exact: bool = False,
) -> VerifyReport:
    """Run all suites; raises VerificationFailure at the first failure."""
    report = VerifyReport(exact=exact)
    _check_structure(sup, ic)
    _check_kernels_and_argmin(sup, ic, report, exact)
    rng = SplitMix64(seed)
    _layer_trials(ic, rng, trials, report, exact)
    _model_trials(sup, ic, rng, trials, report)
    report.notes.append("all suites passed")
    return report
