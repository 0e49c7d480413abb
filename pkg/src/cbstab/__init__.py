"""Numerical toolkit for cb-norms, defects of near-homomorphisms between finite-dimensional
C*-algebras, their Newton-type correction, and interval certification of the stability constants."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoundViolation,
    CbstabError,
    HypothesisNotMet,
    NoConvergence,
    NotInvertible,
    SingularStep,
    StructuralError,
)
from .interval import Interval  # noqa: E402
from .matcore import AlgElement, BlockAlgebra  # noqa: E402
from .opspace import BilMap, LinMap, NormEstimate, cb_norm  # noqa: E402

__all__ = [
    "AlgElement", "BilMap", "BlockAlgebra", "BoundViolation", "CbstabError", "HypothesisNotMet",
    "Interval", "LinMap", "NoConvergence", "NormEstimate", "NotInvertible", "SingularStep",
    "StructuralError", "cb_norm", "__version__",
]
