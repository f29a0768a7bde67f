"""fieldcov: covariantize classical field theories and check the equivalences.

The package parses a small theory-definition DSL, rewrites Lagrangians by
adjoining covariance fields (base-diffeomorphism parametrization, background
demotion, and vertical gauge enlargement), derives Euler-Lagrange systems and
stress-energy-momentum tensors symbolically, and verifies the structural
identities of the construction both exactly and on sampled data.
"""

from .expr import (
    Coord,
    Expr,
    Kind,
    NameEnv,
    OrderOverflow,
    PoleHit,
    canonicalize,
    coords_of,
    equal_identically,
    eval_at,
    partial,
    render_expr,
    substitute,
    total_derivative,
)
from .theory import (
    FieldDecl,
    FieldKind,
    Geom,
    TheorySpec,
    builtin_theory,
    jet_coords,
    parse_theory,
    render_theory,
    validate,
)
from .covariantize import (
    AdditiveShift,
    MinimalCoupling,
    covariantize_background,
    covariantize_horizontal,
    covariantize_vertical,
    flat_connection_from,
)
from .variational import energy, euler_lagrange, piola_transform, sem_tensor

__version__ = "0.1.0"

__all__ = [
    "Coord",
    "Expr",
    "Kind",
    "NameEnv",
    "OrderOverflow",
    "PoleHit",
    "canonicalize",
    "coords_of",
    "equal_identically",
    "eval_at",
    "partial",
    "render_expr",
    "substitute",
    "total_derivative",
    "FieldDecl",
    "FieldKind",
    "Geom",
    "TheorySpec",
    "builtin_theory",
    "jet_coords",
    "parse_theory",
    "render_theory",
    "validate",
    "AdditiveShift",
    "MinimalCoupling",
    "covariantize_background",
    "covariantize_horizontal",
    "covariantize_vertical",
    "flat_connection_from",
    "energy",
    "euler_lagrange",
    "piola_transform",
    "sem_tensor",
    "__version__",
]
