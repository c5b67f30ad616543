"""Numerical tools for secant varieties of Segre products and the
non-identifiability of rank-8 tensors in C^3 (x) C^6 (x) C^6."""

from .decomposer import SolverConfig, equivalent, multistart_decompose
from .fourfold import Fourfold, build_fourfold
from .multilinear import Decomposition, ProjectivePoint, Shape3, SimpleTensor, Tensor3, assemble
from .pipeline import contact_check, verify_unidentifiability
from .secant import Segre, SegreVeronese, classify_balance, generic_rank, terracini_dimension
from .tangential import FiberConfig, fiber_count

__version__ = "0.1.0"

__all__ = [
    "Decomposition",
    "FiberConfig",
    "Fourfold",
    "ProjectivePoint",
    "Segre",
    "SegreVeronese",
    "Shape3",
    "SimpleTensor",
    "SolverConfig",
    "Tensor3",
    "assemble",
    "build_fourfold",
    "classify_balance",
    "contact_check",
    "equivalent",
    "fiber_count",
    "generic_rank",
    "multistart_decompose",
    "terracini_dimension",
    "verify_unidentifiability",
]
