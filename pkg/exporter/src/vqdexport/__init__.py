"""Adapter from model softmax outputs to vqdifficulty prediction files."""

from .export import (
    ExportError,
    ExportJob,
    LengthMismatchError,
    NonNormalizedError,
    distribution_entropy,
    export,
    load_vocabulary,
)

__version__ = "0.1.0"
