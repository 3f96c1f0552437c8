class ExtractionError(Exception):
    """Base class for everything icw-export can refuse."""


class MissingTensor(ExtractionError):
    """A tensor named by the manifest is absent from the checkpoint."""


class ShapeMismatch(ExtractionError):
    """A source tensor's rank or dims contradict the manifest declaration."""


class TopologyError(ExtractionError):
    """The declared layers do not form a sequential chain."""


class ManifestError(ExtractionError):
    """The manifest file itself is malformed."""
