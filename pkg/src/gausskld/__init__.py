"""Closed-form KL divergence between Gaussians with its Jacobian and Hessian."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    DimensionMismatch,
    GaussKLDError,
    LengthMismatch,
    NotPositiveDefinite,
    NotSquare,
    NotSymmetric,
    ShapeMismatch,
    SingularMatrix,
    StencilFailure,
)
from .kld import (  # noqa: E402
    Basis,
    BlockId,
    GaussianPair,
    HessianResult,
    JacobianResult,
    assemble_hessian,
    assemble_jacobian,
    hessian_block,
    jacobian_block,
    kld_value,
    mV_alternative_form,
)
from .matcalc import duplication_matrix, kron, unvec, unvech, vec, vech  # noqa: E402
