"""
Numeric tolerances and defaults shared by every solver module.
All algebraic checks read their thresholds from here.
"""
from enum import Enum

# Linear algebra
SOLVE_RESIDUAL_TOL = 1e-10        # ||Ax - b|| / ||b|| after a direct solve
IDENTITY_TOL = 1e-12              # algebraic identities (unisolvence, products)
SYMMETRY_TOL = 1e-12              # relative, against max |entry|
RANK_PIVOT_TOL = 1e-12            # coarse pivots relative to max diagonal
VANDERMONDE_COND_MAX = 1e8
DENSE_FALLBACK_DIM = 64           # below this, factorizations are dense

# Discretization
EDGE_QUAD_POINTS = 4
DEFAULT_ETA = 5.0

# Krylov
DEFAULT_TOL = 1e-8
FIGURE_TOL = 1e-10
DEFAULT_MAX_ITERS = 2000


class ElementFamily(Enum):
    BFS = "bfs"
    ADINI = "adini"
    C0IP = "c0ip"
    JINWU = "jinwu"

    @property
    def m(self) -> int:
        """Order of the energy: the problem is (-Delta)^m u = f."""
        return 3 if self is ElementFamily.JINWU else 2


# Gauss points per axis for the volume terms
QUAD_POINTS = {
    ElementFamily.BFS: 6,
    ElementFamily.ADINI: 6,
    ElementFamily.C0IP: 6,
    ElementFamily.JINWU: 8,
}


class PreconditionerLevel(Enum):
    NONE = "none"
    ONE_LEVEL = "one-level"
    TWO_LEVEL = "two-level"
