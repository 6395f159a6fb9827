"""Two-stage language-model activity recognition for ambient smart-home sensors."""

__version__ = "0.1.0"
