"""Physical constants (CODATA 2018, SI units)."""

HBAR = 1.054571817e-34  # J s
KB = 1.380649e-23       # J / K
C_LIGHT = 2.99792458e8  # m / s

TWO_PI = 6.283185307179586

__all__ = ["HBAR", "KB", "C_LIGHT", "TWO_PI"]
