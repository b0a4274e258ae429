"""Asymptotic-preserving first-order-system least squares for anisotropic
elliptic equations, trained with small tanh networks."""

__version__ = "0.1.0"
