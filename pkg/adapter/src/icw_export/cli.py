"""icw-export: checkpoint -> .icw container, driven by a manifest."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ExtractionError
from .extract import extract_layers
from .manifest import load_manifest
from .writer import write_container


def export(manifest_path: str | Path, out_path: str | Path) -> int:
    manifest = load_manifest(manifest_path)
    try:
        with np.load(manifest.source) as archive:
            source = {name: archive[name] for name in archive.files}
    except FileNotFoundError:
        raise ExtractionError(
            f"checkpoint {manifest.source} does not exist"
        ) from None
    layers = extract_layers(source, manifest)
    provenance = (
        f"icw-export source={manifest.source.name} layers={len(layers)}"
    )
    write_container(layers, manifest.kind, provenance, out_path)
    return len(layers)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="icw-export",
        description="Export a sequential conv chain from a checkpoint to an "
                    ".icw weight container",
    )
    parser.add_argument("--manifest", required=True, help="manifest JSON path")
    parser.add_argument("--out", required=True, help="output .icw path")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        n = export(args.manifest, args.out)
    except (ExtractionError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} ({n} layers)")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
