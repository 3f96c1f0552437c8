import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icdilate import (
    Assignment,
    ChannelPermutation,
    DilationPattern,
    LayerSpec,
    Tensor4,
    Uniform,
    build_permutation,
    expand_compact,
    extract_compact,
    generate,
    mask_filter,
    propagate,
    read_container,
    run_model,
    sampled_positions,
    write_container,
)
from icdilate.container import ContainerLayer, ModelContainer
from icdilate.errors import DimensionError, PropagationError

from conftest import assert_close, build_plans, rand_tensor, seeded_chain


def mk_assignment(layer, d_max, pattern_pairs):
    pats = tuple(DilationPattern(dy, dx) for dy, dx in pattern_pairs)
    return Assignment(layer, d_max, pats, tuple(0.0 for _ in pats))


class TestChannelPermutation:
    def test_rejects_non_bijection(self):
        with pytest.raises(DimensionError):
            ChannelPermutation((0, 0, 2))

    def test_inverse_round_trip(self):
        p = ChannelPermutation((2, 0, 3, 1))
        inv = p.inverse()
        rng = np.random.default_rng(0)
        w = rng.uniform(size=(4, 2, 3, 3))
        again = w[list(p.perm)][list(inv.perm)]
        assert np.array_equal(w[list(inv.perm)][list(p.perm)], w)
        assert np.array_equal(again, w)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 9999), n=st.integers(1, 12))
    def test_property_inverse_composes_to_identity(self, seed, n):
        rng = np.random.default_rng(seed)
        p = ChannelPermutation(tuple(rng.permutation(n).tolist()))
        inv = p.inverse()
        assert [p.perm[inv.perm[i]] for i in range(n)] == list(range(n))


class TestBuildPermutation:
    def test_stable_sort_example(self):
        a = mk_assignment("x", 2, [(2, 1), (1, 1), (2, 1), (1, 1)])
        assert build_permutation(a, 1).perm == (1, 3, 0, 2)

    def test_all_equal_gives_identity(self):
        a = mk_assignment("x", 2, [(2, 2)] * 4)
        assert build_permutation(a, 1).is_identity

    def test_sort_confined_to_conv_groups(self):
        a = mk_assignment("x", 2, [(2, 2), (1, 1), (1, 1), (2, 2)])
        assert build_permutation(a, 2).perm == (1, 0, 2, 3)

    def test_indivisible_length_rejected(self):
        a = mk_assignment("x", 2, [(1, 1)] * 3)
        with pytest.raises(DimensionError):
            build_permutation(a, 2)


class TestExtractCompact:
    def test_dense_pattern_is_center_crop(self):
        rng = np.random.default_rng(2)
        w = rand_tensor(rng, (1, 2, 5, 5))
        a = mk_assignment("x", 2, [(1, 1)])
        plan = extract_compact(w, a, LayerSpec("x", 1, 2, 2, 1))
        assert np.array_equal(plan.compact.data[0], w.data[0][:, 1:4, 1:4])

    def test_maximal_pattern_gathers_stride2_grid(self):
        rng = np.random.default_rng(3)
        w = rand_tensor(rng, (1, 1, 5, 5))
        a = mk_assignment("x", 2, [(2, 2)])
        plan = extract_compact(w, a, LayerSpec("x", 1, 2, 1, 1))
        assert np.array_equal(plan.compact.data[0, 0], w.data[0, 0][::2, ::2])

    def test_zero_filter_zero_compact(self):
        w = Tensor4(np.zeros((1, 1, 5, 5), dtype=np.float32))
        a = mk_assignment("x", 2, [(2, 1)])
        plan = extract_compact(w, a, LayerSpec("x", 1, 2, 1, 1))
        assert not plan.compact.data.any()

    def test_groups_are_sorted_runs(self):
        rng = np.random.default_rng(4)
        w = rand_tensor(rng, (4, 1, 5, 5))
        a = mk_assignment("x", 2, [(2, 1), (1, 1), (2, 1), (1, 1)])
        plan = extract_compact(w, a, LayerSpec("x", 1, 2, 1, 4))
        assert [(g.pattern.dy, g.pattern.dx, g.start, g.count)
                for g in plan.groups] == [(1, 1, 0, 2), (2, 1, 2, 2)]

    def test_expand_round_trip(self):
        """expand(gather(w)) == mask(w) and gather(expand(c)) == c."""
        rng = np.random.default_rng(5)
        k, d_max = 1, 3
        w = rand_tensor(rng, (1, 2, 7, 7))
        for p in [DilationPattern(1, 2), DilationPattern(3, 3)]:
            a = Assignment("x", d_max, (p,), (0.0,))
            plan = extract_compact(w, a, LayerSpec("x", k, d_max, 2, 1))
            emb = expand_compact(plan.compact.data[0], p, k, d_max)
            assert np.array_equal(emb, mask_filter(w.data[0], p, k, d_max))
            nonzero_budget = (2 * k + 1) ** 2 * 2
            assert np.count_nonzero(emb) <= nonzero_budget
            pos = sampled_positions(k, d_max, p)
            rows, cols = np.nonzero(emb.any(axis=0))
            assert set(zip(rows.tolist(), cols.tolist())) <= pos


class TestPropagate:
    def test_single_layer_records_final_perm(self):
        model = generate(
            3, [(LayerSpec("only", 1, 2, 2, 4), True)], Uniform(1.0)
        )
        result, plans = build_plans(model, 2)
        ic = propagate(model, plans)
        assert ic.kind == "inception"
        plan = plans["only"]
        assert ic.final_output_perm == plan.perm.perm
        # weights and affine follow the permutation
        assert np.array_equal(
            ic.weight("only").data, plan.compact.data
        )
        scale, _ = model.affine("only")
        nscale, _ = ic.affine("only")
        assert np.array_equal(nscale, scale[list(plan.perm.perm)])

    @pytest.mark.parametrize("seed", range(5))
    def test_function_preserved_on_chains(self, seed):
        model = seeded_chain(seed)
        result, plans = build_plans(model, 2)
        ic = propagate(model, plans)
        patterns = {a.layer: list(a.patterns) for a in result.assignments}
        rng = np.random.default_rng(1000 + seed)
        x = rand_tensor(rng, (2, model.layers[0].spec.c_in, 12, 12))
        y_ref = run_model(model, x, patterns_by_layer=patterns)
        y_ic = run_model(ic, x)
        unperm = y_ref.data[:, list(ic.final_output_perm)]
        assert_close(y_ic.data, unperm, label=f"chain seed={seed}")

    def test_function_preserved_64bit(self):
        """Naive forward agreement; permuting input channels reorders the
        accumulation, so this is near-exact rather than bit-exact."""
        from icdilate.oracle import reference_full_naive, run_inception_naive
        model = seeded_chain(1)  # grouped + depthwise template
        result, plans = build_plans(model, 2)
        ic = propagate(model, plans)
        patterns = {a.layer: list(a.patterns) for a in result.assignments}
        rng = np.random.default_rng(77)
        x = rng.uniform(-1, 1, (1, model.layers[0].spec.c_in, 9, 9))

        def fwd(container, pats=None):
            cur = x
            for layer in container.layers:
                spec = layer.spec
                if layer.plan is not None:
                    cur = run_inception_naive(cur, layer.plan, spec)
                else:
                    w = container.weight(spec.name).data
                    if pats and spec.name in pats:
                        w = np.stack([
                            mask_filter(w[o], pats[spec.name][o], spec.k, spec.d_max)
                            for o in range(spec.c_out)
                        ])
                    cur = reference_full_naive(cur, w, spec)
                aff = container.affine(spec.name)
                if aff is not None:
                    scale, bias = aff
                    cur = cur * scale[None, :, None, None] + bias[None, :, None, None]
            return cur

        y_ref = fwd(model, patterns)
        y_ic = fwd(ic)
        unperm = y_ref[:, list(ic.final_output_perm)]
        np.testing.assert_allclose(y_ic, unperm, rtol=1e-12, atol=1e-13)

    def test_identity_permutations_change_only_provenance(self):
        # equal patterns per layer make every permutation the identity
        layers = [(LayerSpec("a", 1, 2, 1, 2), True),
                  (LayerSpec("b", 1, 2, 2, 2), False)]
        w_a = np.full((2, 1, 5, 5), 0.1, dtype=np.float32)
        w_b = np.full((2, 2, 5, 5), 0.1, dtype=np.float32)
        for w in (w_a, w_b):
            for o in range(2):
                for r, c in sampled_positions(1, 2, DilationPattern(1, 2)):
                    w[o, :, r, c] = 3.0
        model = generate(9, layers, Uniform(1.0))
        tensors = dict(model.tensors)
        tensors["a.weight"] = w_a
        tensors["b.weight"] = w_b
        model = ModelContainer("supernet", model.layers, tensors,
                               provenance=model.provenance)
        result, plans = build_plans(model, 2)
        assert all(p.perm.is_identity for p in plans.values())
        ic = propagate(model, plans)
        manual = ModelContainer(
            kind="inception",
            layers=[ContainerLayer(l.spec, l.has_affine, plans.get(l.spec.name))
                    for l in model.layers],
            tensors={
                "a.weight": plans["a"].compact.data,
                "a.scale": model.tensors["a.scale"],
                "a.bias": model.tensors["a.bias"],
                "b.weight": plans["b"].compact.data,
            },
            provenance=ic.provenance,
            final_output_perm=(0, 1),
        )
        import os
        import tempfile
        with tempfile.TemporaryDirectory() as td:
            write_container(ic, os.path.join(td, "x.icw"))
            write_container(manual, os.path.join(td, "y.icw"))
            a = open(os.path.join(td, "x.icw"), "rb").read()
            b = open(os.path.join(td, "y.icw"), "rb").read()
        assert a == b

    def test_incompatible_groups_raise_naming_both_layers(self):
        layers = [(LayerSpec("first", 1, 2, 2, 4, 1), False),
                  (LayerSpec("second", 1, 2, 4, 4, 2), False)]
        # force a cross-half sort in the g=1 layer
        w0 = np.full((4, 2, 5, 5), 0.1, dtype=np.float32)
        for o, p in enumerate([(2, 2), (1, 1), (2, 2), (1, 1)]):
            for r, c in sampled_positions(1, 2, DilationPattern(*p)):
                w0[o, :, r, c] = 3.0
        model = generate(2, layers, Uniform(1.0))
        tensors = dict(model.tensors)
        tensors["first.weight"] = w0
        model = ModelContainer("supernet", model.layers, tensors)
        result, plans = build_plans(model, 2)
        assert not plans["first"].perm.is_identity
        with pytest.raises(PropagationError, match="first.*second"):
            propagate(model, plans)

    def test_group_count_bounded_by_dmax_squared(self):
        for seed in range(6):
            model = seeded_chain(seed, d_max=2)
            _, plans = build_plans(model, 2)
            for name, plan in plans.items():
                spec = next(l.spec for l in model.layers if l.spec.name == name)
                rng_size = spec.c_out // spec.groups
                per_range = {}
                for g in plan.groups:
                    per_range.setdefault(g.start // rng_size, []).append(g.pattern)
                for pats in per_range.values():
                    assert len(pats) <= 4  # d_max^2
                    assert pats == sorted(pats)
