"""Joint image-text representation learning for ordinal edema severity."""

__version__ = "0.1.0"
