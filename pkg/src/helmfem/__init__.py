"""C1 finite element benchmark suite for Helmholtz impedance formulations."""

__version__ = "0.1.0"
