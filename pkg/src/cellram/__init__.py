"""Cell-based reliability assessment for classifiers."""

__version__ = "0.1.0"
