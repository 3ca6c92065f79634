"""Error hierarchy for the capture-to-archive bridge."""


class BridgeError(Exception):
    """Base class for all bridge failures."""


class InvalidManifest(BridgeError):
    """Capture manifest violates its invariants (coverage, readability)."""


class ModelLoadFailure(BridgeError):
    """The requested reconstruction backend could not be constructed."""


class InferenceFailure(BridgeError):
    """A single view pair could not be reconstructed (pair is dropped)."""


class ExportFailure(BridgeError):
    """The capture cannot produce a valid archive at all."""
