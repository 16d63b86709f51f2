"""Open Dynamics Kit: numerical tools for quantum dynamical maps."""
__version__ = "0.1.0"
