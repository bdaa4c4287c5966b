"""Rate-based STDP: simulation harness and gradient-descent checks."""

__version__ = "0.1.0"
