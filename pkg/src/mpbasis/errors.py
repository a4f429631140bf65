"""Exception types shared across the package.

Input and shape problems raise plain ``ValueError``; failures of the numerical
machinery (singular systems, indefinite matrices, diverging iterations) raise
``NumericalError`` so callers can distinguish bad inputs from bad conditioning.
"""


class NumericalError(RuntimeError):
    """A linear-algebra or optimization step failed numerically."""
