"""Exception types raised by gausskld."""

import numpy as np


class GaussKLDError(ValueError):
    """Base class for all input/shape errors raised by this package."""


class ShapeMismatch(GaussKLDError):
    pass


class NotSquare(ShapeMismatch):
    pass


class LengthMismatch(ShapeMismatch):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class NotSymmetric(GaussKLDError):
    def __init__(self, max_asymmetry, tol, name="matrix"):
        self.max_asymmetry = float(max_asymmetry)
        self.tol = float(tol)
        super().__init__(
            f"{name} is not symmetric: max|M - M^T| = {self.max_asymmetry:.3e} "
            f"exceeds tolerance {self.tol:.3e}"
        )


class NonFinite(GaussKLDError):
    pass


class NotPositiveDefinite(GaussKLDError, np.linalg.LinAlgError):
    pass


class SingularMatrix(GaussKLDError, np.linalg.LinAlgError):
    pass


class StencilFailure(GaussKLDError):
    """A finite-difference stencil point hit a singular matrix."""
