"""Visual feature extraction for paintings and mixed-model price analysis."""

__version__ = "0.1.0"
