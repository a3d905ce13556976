"""
Contraction-constrained neural surrogates for the Newton stage solver of
trapezoidal time stepping.
"""

__version__ = "0.1.0"
