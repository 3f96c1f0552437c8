"""Command-line surface: gen, search, apply, verify, bench, cost.

Exit codes: 0 success, 1 verification failure, 2 usage or input errors.
All output except the clearly delimited timing section of ``bench`` is
deterministic for identical arguments and input files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .container import read_container, write_container
from .errors import IcdilateError, VerificationFailure
from .executor import bench_layer, cost_model
from .generate import generate
from .prng import Gaussian, SplitMix64, Uniform, fill
from .rearrange import extract_compact, propagate
from .search import Assignment, DilationPattern, LayerSpec, pattern_error, search_model
from .tensor import Tensor4
from .verify import verify_containers

__all__ = ["main", "entry"]


def _g9(x: float) -> str:
    """Reals in emitted JSON carry 9 significant digits."""
    return f"{x:.9g}"


def _render(obj, indent: int = 0) -> str:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  "{k}": {_render(v, indent + 2)}' for k, v in obj.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, int) and not isinstance(v, bool) for v in obj) or all(
            isinstance(v, (list, tuple)) and len(v) == 2 for v in obj
        ):
            return "[" + ", ".join(_render(v) for v in obj) + "]"
        items = ",\n".join(f"{pad}  {_render(v, indent + 2)}" for v in obj)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return _g9(obj)
    if isinstance(obj, int):
        return str(obj)
    if obj is None:
        return "null"
    return json.dumps(obj)


def _parse_spec_file(path: str) -> tuple[list[tuple[LayerSpec, bool]], Uniform | Gaussian]:
    doc = json.loads(Path(path).read_text())
    d = doc.get("distribution", {"kind": "uniform", "a": 1.0})
    if d.get("kind") == "uniform":
        dist: Uniform | Gaussian = Uniform(float(d["a"]))
    elif d.get("kind") == "gaussian":
        dist = Gaussian(float(d["sigma"]))
    else:
        raise ValueError(f"unknown distribution kind {d.get('kind')!r}")
    layers = []
    for entry in doc["layers"]:
        spec = LayerSpec(
            name=str(entry["name"]),
            k=int(entry["k"]),
            d_max=int(entry["d_max"]),
            c_in=int(entry["c_in"]),
            c_out=int(entry["c_out"]),
            groups=int(entry.get("groups", 1)),
            stride=tuple(int(v) for v in entry.get("stride", [1, 1])),
        )
        layers.append((spec, bool(entry.get("affine", False))))
    if not layers:
        raise ValueError(f"{path}: no layers declared")
    return layers, dist


def _cmd_gen(args) -> int:
    layers, dist = _parse_spec_file(args.spec)
    model = generate(args.seed, layers, dist)
    write_container(model, args.out)
    print(json.dumps({"out": args.out, "layers": len(layers), "seed": args.seed}))
    return 0


def _cmd_search(args) -> int:
    model = read_container(args.model)
    if model.kind != "supernet":
        raise ValueError(f"{args.model}: search needs a supernet container")
    result = search_model(model, args.dmax)
    doc = {
        "d_max": args.dmax,
        "assignments": [
            {
                "layer": a.layer,
                "d_max": a.d_max,
                "patterns": [p.as_pair() for p in a.patterns],
                "errors": list(a.errors),
            }
            for a in result.assignments
        ],
        "skipped": list(result.skipped),
    }
    Path(args.out).write_text(_render(doc) + "\n")
    print(json.dumps({
        "out": args.out,
        "layers": len(result.assignments),
        "skipped": list(result.skipped),
    }))
    return 0


def _load_assignments(path: str) -> dict[str, Assignment]:
    doc = json.loads(Path(path).read_text())
    out: dict[str, Assignment] = {}
    for a in doc["assignments"]:
        patterns = tuple(DilationPattern(int(p[0]), int(p[1])) for p in a["patterns"])
        out[str(a["layer"])] = Assignment(
            layer=str(a["layer"]),
            d_max=int(a["d_max"]),
            patterns=patterns,
            errors=tuple(float(e) for e in a["errors"]),
        )
    return out


def _cmd_apply(args) -> int:
    model = read_container(args.model)
    if model.kind != "supernet":
        raise ValueError(f"{args.model}: apply needs a supernet container")
    assignments = _load_assignments(args.assign)
    plans = {}
    for layer in model.layers:
        spec = layer.spec
        if not spec.searchable:
            continue
        if spec.name not in assignments:
            raise ValueError(f"{args.assign}: no assignment for layer {spec.name}")
        a = assignments[spec.name]
        if a.d_max != spec.d_max:
            raise ValueError(
                f"layer {spec.name}: assignment d_max={a.d_max} "
                f"!= layer d_max={spec.d_max}"
            )
        weights = model.weight(spec.name)
        for o, (p, err) in enumerate(zip(a.patterns, a.errors)):
            fresh = pattern_error(weights.data[o], p, spec.k, spec.d_max)
            if abs(err - fresh) > max(1e-6 * abs(fresh), 1e-9):
                raise ValueError(
                    f"layer {spec.name} channel {o}: stored error {err!r} "
                    f"does not match weights (recomputed {fresh!r})"
                )
        plans[spec.name] = extract_compact(weights, a, spec)
    ic = propagate(model, plans)
    write_container(ic, args.out)
    print(json.dumps({"out": args.out, "layers": len(plans)}))
    return 0


def _cmd_verify(args) -> int:
    sup = read_container(args.supernet)
    ic = read_container(args.ic)
    report = verify_containers(sup, ic, trials=args.trials, seed=args.seed,
                               exact=args.exact)
    print(json.dumps({"ok": True, **report.to_dict()}))
    return 0


def _cmd_bench(args) -> int:
    ic = read_container(args.ic)
    try:
        n, c, h, w = (int(v) for v in args.input.split(","))
    except ValueError:
        raise ValueError(f"--input must be N,C,H,W, got {args.input!r}") from None
    if c != ic.layers[0].spec.c_in:
        raise ValueError(
            f"--input channels {c} != first layer c_in {ic.layers[0].spec.c_in}"
        )
    rng = SplitMix64(1)
    results = []
    for layer in ic.layers:
        if layer.plan is None:
            continue
        x = Tensor4(fill(rng, (n, layer.spec.c_in, h, w), Uniform(1.0)))
        results.append(bench_layer(layer.plan, layer.spec, x, args.reps))
    for r in results:
        print(json.dumps({k: r[k] for k in
                          ("layer", "macs_standard", "macs_inception", "mac_ratio")}))
    print("--- timings (machine-dependent) ---")
    for r in results:
        print(json.dumps({"layer": r["layer"], "timings": r["timings"]}))
    return 0


def _cmd_cost(args) -> int:
    layers, _ = _parse_spec_file(args.spec)
    try:
        h, w = (int(v) for v in args.input.split(","))
    except ValueError:
        raise ValueError(f"--input must be H,W, got {args.input!r}") from None
    reports = [
        {"layer": spec.name, **cost_model(spec, h, w).to_dict()}
        for spec, _ in layers
    ]
    print(json.dumps({"input": [h, w], "reports": reports}))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icdilate",
        description="Dilation pattern search, rearrangement and execution "
                    "for convolution chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded synthetic supernet")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--spec", required=True, help="layer spec JSON")
    p.add_argument("--out", required=True, help="output .icw path")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("search", help="select per-channel dilation patterns")
    p.add_argument("--model", required=True, help=".icw supernet")
    p.add_argument("--dmax", type=int, required=True)
    p.add_argument("--out", required=True, help="assignment JSON path")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("apply", help="rearrange a supernet into grouped form")
    p.add_argument("--model", required=True, help=".icw supernet")
    p.add_argument("--assign", required=True, help="assignment JSON")
    p.add_argument("--out", required=True, help="output .icw path")
    p.set_defaults(func=_cmd_apply)

    p = sub.add_parser("verify", help="equivalence and oracle suites")
    p.add_argument("--supernet", required=True)
    p.add_argument("--ic", required=True)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--exact", action="store_true",
                   help="also run the 64-bit naive path, requiring bit equality")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("bench", help="time grouped vs standard execution")
    p.add_argument("--ic", required=True)
    p.add_argument("--input", required=True, help="N,C,H,W")
    p.add_argument("--reps", type=int, default=5)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("cost", help="MAC cost model for a layer spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--input", required=True, help="H,W")
    p.set_defaults(func=_cmd_cost)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except VerificationFailure as e:
        print(f"FAIL: {e}")
        return 1
    except (IcdilateError, OSError, ValueError, KeyError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entry() -> None:  # console script
    sys.exit(main())


if __name__ == "__main__":
    entry()
