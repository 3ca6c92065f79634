"""Bridge from real image captures to calibration archives."""

from .errors import (BridgeError, ExportFailure, InferenceFailure,
                     InvalidManifest, ModelLoadFailure)
from .export import export
from .manifest import CaptureManifest, from_directories
from .writer import BridgeView, write_archive

__all__ = [
    "BridgeError", "BridgeView", "CaptureManifest", "ExportFailure",
    "InferenceFailure", "InvalidManifest", "ModelLoadFailure", "export",
    "from_directories", "write_archive",
]
