"""C^2-smooth isogeometric spaces on bilinear multi-patch domains and a triharmonic solver."""
from .basisspace import GlobalBasis, IsogeometricFunction, assemble_space
from .bspline import SplineSpace1D, make_space
from .multipatch import MultiPatchDomain, builtin_domain, load_domain, parse_domain
from .polynomials2d import Polynomial2D, builtin_solution, triharmonic_rhs

__version__ = "0.1.0"

__all__ = ["GlobalBasis", "IsogeometricFunction", "assemble_space", "SplineSpace1D",
           "make_space", "MultiPatchDomain", "builtin_domain", "load_domain", "parse_domain",
           "Polynomial2D", "builtin_solution", "triharmonic_rhs"]
