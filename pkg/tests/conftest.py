import numpy as np
import pytest

from icdilate import (
    LayerSpec,
    Tensor4,
    Uniform,
    extract_compact,
    generate,
    search_model,
)
from icdilate.verify import ABS_TOL, REL_TOL


def rand_tensor(rng: np.random.Generator, dims) -> Tensor4:
    return Tensor4(rng.uniform(-1.0, 1.0, size=dims).astype(np.float32))


def assert_close(actual, reference, rel=REL_TOL, abs_tol=ABS_TOL, label=""):
    """Per-element looser-of check: |a - r| <= max(rel*|r|, abs_tol)."""
    a = np.asarray(actual, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    assert a.shape == r.shape, f"{label}: shapes {a.shape} vs {r.shape}"
    bad = np.abs(a - r) > np.maximum(rel * np.abs(r), abs_tol)
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        pytest.fail(
            f"{label}: mismatch at {idx}: {a[idx]!r} vs {r[idx]!r} "
            f"({int(bad.sum())} of {bad.size} elements out of tolerance)"
        )


def build_plans(model, d_max):
    """search + extract for every searchable layer; returns (result, plans)."""
    result = search_model(model, d_max)
    specs = {l.spec.name: l.spec for l in model.layers}
    plans = {
        a.layer: extract_compact(model.weight(a.layer), a, specs[a.layer])
        for a in result.assignments
    }
    return result, plans


# 3-layer chain templates whose group structures are propagation-compatible
# (a successor's groups always divide its predecessor's, or the middle is
# depthwise / pointwise).
CHAIN_TEMPLATES = [
    lambda d: [
        (LayerSpec("a", 1, d, 3, 8, 1, (1, 1)), True),
        (LayerSpec("b", 1, d, 8, 8, 1, (1, 1)), True),
        (LayerSpec("c", 1, d, 8, 4, 1, (2, 2)), True),
    ],
    lambda d: [
        (LayerSpec("a", 1, d, 4, 8, 2, (1, 1)), True),
        (LayerSpec("dw", 1, d, 8, 8, 8, (1, 1)), True),
        (LayerSpec("c", 1, d, 8, 6, 2, (1, 1)), True),
    ],
    lambda d: [
        (LayerSpec("a", 1, d, 2, 6, 1, (1, 1)), True),
        (LayerSpec("pw", 0, d, 6, 8, 1, (1, 1)), False),
        (LayerSpec("c", 1, d, 8, 4, 1, (2, 1)), True),
    ],
    lambda d: [
        (LayerSpec("a", 1, d, 4, 8, 4, (1, 1)), False),
        (LayerSpec("b", 1, d, 8, 8, 2, (2, 2)), True),
        (LayerSpec("c", 1, d, 8, 8, 1, (1, 1)), True),
    ],
    lambda d: [
        (LayerSpec("dw", 1, d, 6, 6, 6, (1, 1)), True),
        (LayerSpec("b", 1, d, 6, 8, 2, (1, 1)), True),
        (LayerSpec("c", 1, d, 8, 4, 2, (1, 2)), True),
    ],
]


def seeded_chain(seed: int, d_max: int = 2):
    template = CHAIN_TEMPLATES[seed % len(CHAIN_TEMPLATES)]
    return generate(seed, template(d_max), Uniform(1.0))
