"""Bridge from attribute text files to engine-compatible embedding files."""

from .export import (ExportError, encode_texts, export, read_attributes,
                     write_embeddings)

__version__ = "0.1.0"
