"""Fixed-mesh finite-element simulation of electrochemical machining."""

__version__ = "0.1.0"
