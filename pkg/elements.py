"""
Reference elements on [-1, 1]^2 for the four discretizations:
Bogner-Fox-Schmit, Adini, C0 interior penalty (Q2) and Jin-Wu.

Shape functions come out of one generalized-Vandermonde factory: the DOF
functionals are applied to the monomials spanning the local space and the
resulting matrix is inverted. Derivative DOFs are cell-size scaled, i.e. the
global unknown is (h/2)^|beta| D^beta u, so every element matrix is the
reference matrix times a single power of h.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb, perm

from constants import IDENTITY_TOL, QUAD_POINTS, SYMMETRY_TOL, VANDERMONDE_COND_MAX, ElementFamily
from errors import ConfigurationError, ErrorCode, SolverError, StructuralError

LOGGER = logging.getLogger(__name__)

MultiIndex = Tuple[int, int]
ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Reference vertices in row-major order: (-1,-1), (1,-1), (-1,1), (1,1)
REFERENCE_VERTICES = ((-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0))

VERTEX_DERIVATIVES = {
    ElementFamily.BFS: ((0, 0), (1, 0), (0, 1), (1, 1)),
    ElementFamily.ADINI: ((0, 0), (1, 0), (0, 1)),
    ElementFamily.JINWU: ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2)),
}


class AnchorClass(Enum):
    VERTEX = "vertex"
    EDGE_MIDPOINT = "edge-midpoint"
    CELL_CENTER = "cell-center"


@dataclass(frozen=True)
class DofFunctional:
    anchor: Tuple[float, float]
    deriv: MultiIndex
    anchor_class: AnchorClass


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray      # (q*q, 2) on [-1, 1]^2
    weights: np.ndarray     # (q*q,)
    points_per_axis: int

    @classmethod
    def gauss(cls, points_per_axis: int) -> "QuadratureRule":
        nodes, weights = np.polynomial.legendre.leggauss(points_per_axis)
        yy, xx = np.meshgrid(nodes, nodes, indexing="ij")
        wy, wx = np.meshgrid(weights, weights, indexing="ij")
        return cls(np.column_stack([xx.ravel(), yy.ravel()]), (wx * wy).ravel(), points_per_axis)


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    family: ElementFamily
    m: int
    monomials: np.ndarray            # (k, 2) exponents
    coeffs: np.ndarray               # (k, k): N_j = sum_i coeffs[i, j] * monomial_i
    dofs: Tuple[DofFunctional, ...]

    @property
    def ndofs(self) -> int:
        return len(self.dofs)

    @property
    def lattice_resolution(self) -> int:
        """Anchor lattice points per cell edge: 2 when mid-edge anchors exist."""
        return 2 if any(d.anchor_class is not AnchorClass.VERTEX for d in self.dofs) else 1

    def lattice_offsets(self) -> np.ndarray:
        """Integer position of each DOF anchor inside its cell on the anchor lattice."""
        r = self.lattice_resolution
        anchors = np.array([d.anchor for d in self.dofs])
        return np.rint((anchors + 1.0) * r / 2).astype(int)

    def derivative_orders(self) -> np.ndarray:
        return np.array([sum(d.deriv) for d in self.dofs])

    def dof_scales(self, h: float) -> np.ndarray:
        """(h/2)^|beta| per DOF: physical derivative DOFs -> stored unknowns."""
        return (h / 2.0) ** self.derivative_orders()


def _family_monomials(family: ElementFamily) -> List[MultiIndex]:
    if family is ElementFamily.BFS:
        return [(a, b) for b in range(4) for a in range(4)]
    if family is ElementFamily.ADINI:
        cubic = [(a, d - a) for d in range(4) for a in range(d, -1, -1)]
        return cubic + [(3, 1), (1, 3)]
    if family is ElementFamily.C0IP:
        return [(a, b) for b in range(3) for a in range(3)]
    if family is ElementFamily.JINWU:
        bilinear = [(0, 0), (1, 0), (0, 1), (1, 1)]
        factors = [(0, 0), (2, 0), (0, 2), (4, 0), (0, 4)]
        return [(a + c, b + d) for (c, d) in factors for (a, b) in bilinear]
    raise ConfigurationError(f"unknown element family {family}")


def _family_dofs(family: ElementFamily) -> List[DofFunctional]:
    if family is ElementFamily.C0IP:
        dofs = []
        for eta in (-1.0, 0.0, 1.0):
            for xi in (-1.0, 0.0, 1.0):
                if xi != 0.0 and eta != 0.0:
                    kind = AnchorClass.VERTEX
                elif xi == 0.0 and eta == 0.0:
                    kind = AnchorClass.CELL_CENTER
                else:
                    kind = AnchorClass.EDGE_MIDPOINT
                dofs.append(DofFunctional((xi, eta), (0, 0), kind))
        return dofs
    return [DofFunctional(v, d, AnchorClass.VERTEX)
            for v in REFERENCE_VERTICES for d in VERTEX_DERIVATIVES[family]]


def monomial_derivatives(monomials: np.ndarray, points: np.ndarray, deriv: MultiIndex) -> np.ndarray:
    """D^deriv of every monomial at every point, shape (P, k)."""
    a, b = deriv
    px = monomials[:, 0]
    py = monomials[:, 1]
    factor = perm(px, a) * perm(py, b)          # falling factorials, 0 when exponent < order
    ex = np.maximum(px - a, 0)
    ey = np.maximum(py - b, 0)
    x = points[:, 0:1]
    y = points[:, 1:2]
    return factor * x ** ex * y ** ey


def _vandermonde(monomials: np.ndarray, dofs: Sequence[DofFunctional]) -> np.ndarray:
    rows = [monomial_derivatives(monomials, np.array([d.anchor]), d.deriv)[0] for d in dofs]
    return np.array(rows)


@lru_cache(maxsize=None)
def build_element(family) -> ReferenceElement:
    family = ElementFamily(family)
    monomials = np.array(_family_monomials(family), dtype=int)
    dofs = tuple(_family_dofs(family))
    if len(dofs) != len(monomials):
        raise StructuralError(f"{family.value}: {len(dofs)} functionals for {len(monomials)} monomials")

    vandermonde = _vandermonde(monomials, dofs)
    cond = np.linalg.cond(vandermonde)
    if cond > VANDERMONDE_COND_MAX:
        raise SolverError(f"{family.value}: generalized Vandermonde matrix is ill-conditioned",
                          ErrorCode.ILL_CONDITIONED_ELEMENT, cond=cond)
    coeffs = np.linalg.inv(vandermonde)

    # unisolvence self-test: functional i applied to shape function j
    defect = np.abs(vandermonde @ coeffs - np.eye(len(dofs))).max()
    if defect > IDENTITY_TOL * max(1.0, cond):
        raise StructuralError(f"{family.value}: DOF functionals are not unisolvent", defect=defect)

    monomials.setflags(write=False)
    coeffs.setflags(write=False)
    LOGGER.debug("built %s element: %d dofs, cond(V)=%.2e", family.value, len(dofs), cond)
    return ReferenceElement(family, family.m, monomials, coeffs, dofs)


def default_quadrature(family) -> QuadratureRule:
    return QuadratureRule.gauss(QUAD_POINTS[ElementFamily(family)])


def derivative_indices(max_order: int) -> List[MultiIndex]:
    return [(a, total - a) for total in range(max_order + 1) for a in range(total, -1, -1)]


def shape_eval(elem: ReferenceElement, point, max_deriv: int) -> Dict[MultiIndex, np.ndarray]:
    """
    Table {(a, b): D^(a,b) N_j} for a + b <= max_deriv in reference coordinates.
    Accepts one point (values of shape (ndofs,)) or an array of points ((P, ndofs)).
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    table = {}
    for deriv in derivative_indices(max_deriv):
        values = monomial_derivatives(elem.monomials, pts, deriv) @ elem.coeffs
        table[deriv] = values[0] if single else values
    return table


def energy_weights(m: int) -> List[Tuple[MultiIndex, float]]:
    """Order-m derivatives with multinomial weights m!/alpha! of the full contraction."""
    return [((a, m - a), float(comb(m, a, exact=True))) for a in range(m, -1, -1)]


def reference_stiffness(elem: ReferenceElement, quad: Optional[QuadratureRule] = None) -> np.ndarray:
    """h-independent integral sum_alpha w_alpha int D^alpha N_i D^alpha N_j over [-1,1]^2."""
    quad = quad or default_quadrature(elem.family)
    table = shape_eval(elem, quad.points, elem.m)
    K = np.zeros((elem.ndofs, elem.ndofs))
    for alpha, weight in energy_weights(elem.m):
        D = table[alpha]
        K += weight * (D.T * quad.weights) @ D
    return K


def local_stiffness(elem: ReferenceElement, h: float, quad: Optional[QuadratureRule] = None) -> np.ndarray:
    if h <= 0:
        raise ConfigurationError(f"cell size must be positive, got {h}")
    K = reference_stiffness(elem, quad) * (2.0 / h) ** (2 * elem.m) * (h / 2.0) ** 2
    scale = np.abs(K).max()
    asym = np.abs(K - K.T).max()
    if asym > SYMMETRY_TOL * scale:
        raise StructuralError("local stiffness is not symmetric", ErrorCode.NOT_SYMMETRIC, asymmetry=asym)
    return 0.5 * (K + K.T)


def local_loads(elem: ReferenceElement, origins: np.ndarray, h: float, f: ScalarField,
                quad: Optional[QuadratureRule] = None) -> np.ndarray:
    """b[c, i] = int_{T_c} f N_i dx for every cell with lower-left corner origins[c]."""
    quad = quad or default_quadrature(elem.family)
    N = shape_eval(elem, quad.points, 0)[(0, 0)]                       # (Q, ndofs)
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    offsets = (quad.points + 1.0) * (h / 2.0)                            # (Q, 2)
    x = origins[:, 0:1] + offsets[:, 0]
    y = origins[:, 1:2] + offsets[:, 1]
    values = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)  # (C, Q)
    return (values * quad.weights) @ N * (h / 2.0) ** 2


def local_load(elem: ReferenceElement, origin: Tuple[float, float], h: float, f: ScalarField,
               quad: Optional[QuadratureRule] = None) -> np.ndarray:
    return local_loads(elem, np.array([origin]), h, f, quad)[0]
