"""Bridge pretrained sentence encoders into the embedding interchange format."""

from .exporter import (
    FEATURE_TAGS,
    EncodeError,
    ExportError,
    ExportJob,
    ExportResult,
    ModelLoadError,
    export,
)

__version__ = "0.1.0"

__all__ = [
    "FEATURE_TAGS",
    "EncodeError",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "ModelLoadError",
    "export",
    "__version__",
]
