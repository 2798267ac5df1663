"""Open-system generators from weak-coupling reservoir limits, with model applications."""

__version__ = "0.1.0"
