"""Bridge trained checkpoints into .icw weight containers."""

from .errors import (
    ExtractionError,
    ManifestError,
    MissingTensor,
    ShapeMismatch,
    TopologyError,
)
from .extract import ExtractedLayer, extract_layers, fold_batch_norm
from .manifest import BnNames, LayerEntry, Manifest, load_manifest
from .writer import container_bytes, write_container

__version__ = "0.1.0"
