"""
Universal coarse space on rectangular coarse grids.

The generator phi_i of coarse vertex x^i is the tensor product of the 1-D
Hermite value profile of degree 2m-1 (cubic for m = 2, quintic for m = 3),
i.e. the value-nodal basis function of a C^(m-1) conforming space on the
coarse grid. The coarse space is spanned by phi_i * p over interior
vertices and scaled monomials p of degree <= m-1 centered at x^i, and it is
carried to the fine space by nodal interpolation.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import comb, perm

from assembly import DofMap
from constants import RANK_PIVOT_TOL
from elements import derivative_indices
from errors import ConfigurationError, ErrorCode, NotSPDError, RankDeficiencyError
from geometry import CartesianMesh
from linalg import CsrMatrix, SparseFactorization, TripletBuffer, factorize_spd, triple_product

LOGGER = logging.getLogger(__name__)

# value profile q on [0, 1]: q(0) = 1, q^(j)(0) = 0 for 1 <= j <= m-1, q^(j)(1) = 0 for j <= m-1
HERMITE_PROFILES: Dict[int, Polynomial] = {
    2: Polynomial([1, 0, -3, 2]),              # (1-t)^2 (1+2t)
    3: Polynomial([1, 0, 0, -10, 15, -6]),     # 1 - (10t^3 - 15t^4 + 6t^5)
}

Vertex = Tuple[int, int]


def profile(m: int, t, order: int = 0) -> np.ndarray:
    """order-th derivative of psi(t) = q(|t|) on [-1, 1], zero outside."""
    t = np.asarray(t, dtype=float)
    q = HERMITE_PROFILES[m]
    q = q.deriv(order) if order else q
    s = np.abs(t)
    values = q(s) * np.where(t < 0, (-1.0) ** order, 1.0)
    return np.where(s <= 1.0, values, 0.0)


def _check_order(m: int) -> None:
    if m not in HERMITE_PROFILES:
        raise ConfigurationError(f"smoothness order m must be 2 or 3, got {m}")


@dataclass(frozen=True)
class CoarseGenerator:
    vertex: Vertex
    position: Tuple[float, float]
    m: int
    H: float

    def derivative(self, x, y, a: int, b: int) -> np.ndarray:
        s1 = (np.asarray(x, dtype=float) - self.position[0]) / self.H
        s2 = (np.asarray(y, dtype=float) - self.position[1]) / self.H
        return profile(self.m, s1, a) * profile(self.m, s2, b) / self.H ** (a + b)

    def value(self, x, y) -> np.ndarray:
        return self.derivative(x, y, 0, 0)


def build_generator(coarse_mesh: CartesianMesh, m: int, vertex: Union[int, Vertex]) -> CoarseGenerator:
    _check_order(m)
    if isinstance(vertex, (int, np.integer)):
        j, i = divmod(int(vertex), coarse_mesh.vertices_per_axis)
    else:
        i, j = vertex
    if not (0 <= i <= coarse_mesh.n and 0 <= j <= coarse_mesh.n):
        raise ConfigurationError(f"vertex {(i, j)} is not a vertex of the coarse mesh")
    return CoarseGenerator((i, j), coarse_mesh.vertex(i, j), m, coarse_mesh.cell_size)


def partition_sum(coarse_mesh: CartesianMesh, m: int, x, y, deriv: Tuple[int, int] = (0, 0)) -> np.ndarray:
    """sum_i D^deriv phi_i over every coarse vertex, boundary vertices included."""
    _check_order(m)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    total = np.zeros(np.broadcast(x, y).shape)
    for j in range(coarse_mesh.vertices_per_axis):
        for i in range(coarse_mesh.vertices_per_axis):
            total += build_generator(coarse_mesh, m, (i, j)).derivative(x, y, *deriv)
    return total


def _product_derivative(m: int, s: np.ndarray, order: int, power: int) -> np.ndarray:
    """d^order/ds^order [psi(s) s^power] by the Leibniz rule."""
    result = np.zeros_like(s)
    for gamma in range(order + 1):
        k = order - gamma
        if k > power:
            continue
        result += comb(order, gamma, exact=True) * profile(m, s, gamma) * perm(power, k) * s ** (power - k)
    return result


@dataclass(frozen=True, eq=False)
class CoarseSpace:
    coarse_mesh: CartesianMesh
    m: int
    basis: List[Tuple[Vertex, Tuple[int, int]]]     # (interior vertex, monomial exponent (a, b))
    prolongation: CsrMatrix                         # R0^T, (fine free DOFs) x dim V0
    coarse_matrix: CsrMatrix                        # A0 = R0 A R0^T
    factorization: SparseFactorization
    unscaled: bool = False

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def restriction(self) -> CsrMatrix:
        return self.prolongation.T.tocsr()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.factorization.solve(rhs)


def build_coarse_space(coarse_mesh: CartesianMesh, m: int, dofmap: DofMap, A,
                       unscaled: bool = False) -> CoarseSpace:
    _check_order(m)
    fine = dofmap.mesh
    if fine.n % coarse_mesh.n != 0:
        raise ConfigurationError("fine mesh does not refine the coarse mesh", ErrorCode.NON_NESTED,
                                 coarse=coarse_mesh.n, fine=fine.n)
    if coarse_mesh.n < 2:
        raise ConfigurationError("coarse mesh has no interior vertices (need 1/H >= 2)",
                                 ErrorCode.INVALID_MESH)

    H = coarse_mesh.cell_size
    L = dofmap.lattice_size
    half_width = L // coarse_mesh.n                 # patch half width on the anchor lattice
    lattice = dofmap.anchor_lattice
    anchors = dofmap.anchors
    scales = dofmap.scales
    exponents = derivative_indices(m - 1)

    basis: List[Tuple[Vertex, Tuple[int, int]]] = []
    buffer = TripletBuffer((dofmap.free_count, (coarse_mesh.n - 1) ** 2 * len(exponents)))
    for j in range(1, coarse_mesh.n):
        for i in range(1, coarse_mesh.n):
            center = np.array([i, j]) * half_width
            inside = np.all(np.abs(lattice - center) < half_width, axis=1)
            rows = np.flatnonzero(inside)
            x0, y0 = coarse_mesh.vertex(i, j)
            s1 = (anchors[rows, 0] - x0) / H
            s2 = (anchors[rows, 1] - y0) / H
            bx = dofmap.derivs[rows, 0]
            by = dofmap.derivs[rows, 1]
            for a, b in exponents:
                values = np.zeros(len(rows))
                for dx in np.unique(bx):
                    for dy in np.unique(by):
                        sel = (bx == dx) & (by == dy)
                        if sel.any():
                            values[sel] = (_product_derivative(m, s1[sel], dx, a)
                                           * _product_derivative(m, s2[sel], dy, b)
                                           / H ** (dx + dy))
                if unscaled:
                    values = values * H ** (a + b)
                values = values * scales[rows]
                keep = values != 0.0
                buffer.add(rows[keep], np.full(int(keep.sum()), len(basis)), values[keep])
                basis.append(((i, j), (a, b)))

    prolongation = buffer.compact()
    coarse_matrix = triple_product(prolongation.T, A)
    try:
        factorization = factorize_spd(coarse_matrix)
    except NotSPDError as exc:
        raise RankDeficiencyError("coarse matrix is singular: coarse basis is dependent",
                                  **exc.diagnostics) from exc
    ratio = factorization.min_pivot_ratio
    if ratio < RANK_PIVOT_TOL:
        raise RankDeficiencyError("coarse matrix is numerically singular", min_pivot_ratio=ratio)

    LOGGER.info("coarse space: H=1/%d, m=%d, dim=%d, nnz(R0^T)=%d",
                coarse_mesh.n, m, len(basis), prolongation.nnz)
    return CoarseSpace(coarse_mesh, m, basis, prolongation, coarse_matrix, factorization, unscaled)
