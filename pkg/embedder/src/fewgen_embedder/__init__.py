"""Text-to-embedding extraction tool for the fewgen embedding file format."""

from .extract import (
    EncoderLoadError,
    ExtractError,
    HashEncoder,
    MalformedInput,
    TextRecord,
    TransformerEncoder,
    extract,
    make_encoder,
    read_text_records,
)

__version__ = "0.1.0"

__all__ = [
    "EncoderLoadError",
    "ExtractError",
    "HashEncoder",
    "MalformedInput",
    "TextRecord",
    "TransformerEncoder",
    "extract",
    "make_encoder",
    "read_text_records",
    "__version__",
]
