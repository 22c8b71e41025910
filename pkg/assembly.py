"""
Global DOF numbering with clamped boundary elimination, sparse stiffness
assembly (volume terms plus the C0 interior penalty edge terms) and load
assembly against scalar right-hand sides.

DOF anchors live on an integer lattice with `lattice_size` intervals per
axis: the mesh vertices for BFS/Adini/Jin-Wu, the vertices plus edge
midpoints and cell centers for C0-IP.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from constants import DEFAULT_ETA, EDGE_QUAD_POINTS, ElementFamily
from elements import (VERTEX_DERIVATIVES, QuadratureRule, ReferenceElement, ScalarField,
                      build_element, local_loads, local_stiffness, shape_eval)
from errors import ConfigurationError, ErrorCode, StructuralError
from geometry import CartesianMesh
from linalg import CsrMatrix, TripletBuffer, write_matrix_market

LOGGER = logging.getLogger(__name__)

ELIMINATED = -1

# evaluator(x, y, a, b) -> D^(a,b) g at the points (x, y)
DerivativeEvaluator = Callable[[np.ndarray, np.ndarray, int, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: CartesianMesh
    element: ReferenceElement
    lattice_size: int
    anchor_derivs: Tuple[Tuple[int, int], ...]   # derivative multi-indices carried by each anchor
    slot_index: np.ndarray                       # per lattice slot: global index or ELIMINATED
    cell_dofs: np.ndarray                        # (n*n, ndofs): global index or ELIMINATED
    anchor_lattice: np.ndarray                   # (free, 2) integer anchor positions
    derivs: np.ndarray                           # (free, 2)
    free_count: int

    @property
    def family(self) -> ElementFamily:
        return self.element.family

    @property
    def anchors(self) -> np.ndarray:
        """Physical anchor coordinates of the free DOFs."""
        return self.anchor_lattice / self.lattice_size

    @property
    def scales(self) -> np.ndarray:
        """(h/2)^|beta| for each free DOF."""
        return (self.mesh.cell_size / 2.0) ** self.derivs.sum(axis=1)

    @property
    def dofs_per_anchor(self) -> int:
        return len(self.anchor_derivs)

    def slot(self, i: int, j: int, k: int) -> int:
        """Lattice slot of derivative k at lattice point (i, j)."""
        return (j * (self.lattice_size + 1) + i) * self.dofs_per_anchor + k

    def parse_slot(self, slot: int) -> Tuple[int, int, int]:
        node, k = divmod(slot, self.dofs_per_anchor)
        j, i = divmod(node, self.lattice_size + 1)
        return i, j, k

    @property
    def entries(self) -> List[Tuple[Tuple[float, float], Tuple[int, int], int]]:
        """(anchor, deriv, global index or ELIMINATED) for every lattice slot."""
        result = []
        for slot, index in enumerate(self.slot_index):
            i, j, k = self.parse_slot(slot)
            anchor = (i / self.lattice_size, j / self.lattice_size)
            result.append((anchor, self.anchor_derivs[k], int(index)))
        return result

    def interpolate(self, evaluator: DerivativeEvaluator) -> np.ndarray:
        """Nodal interpolant: each free DOF functional applied to a smooth function."""
        values = np.zeros(self.free_count)
        x, y = self.anchors[:, 0], self.anchors[:, 1]
        for a, b in self.anchor_derivs:
            mask = (self.derivs[:, 0] == a) & (self.derivs[:, 1] == b)
            if mask.any():
                values[mask] = evaluator(x[mask], y[mask], a, b)
        return values * self.scales


def build_dofmap(mesh: CartesianMesh, family) -> DofMap:
    family = ElementFamily(family)
    if mesh.n < 2:
        raise ConfigurationError(f"need at least 2 cells per axis for free DOFs, got {mesh.n}",
                                 ErrorCode.INVALID_MESH)
    element = build_element(family)
    r = element.lattice_resolution
    L = r * mesh.n
    anchor_derivs = VERTEX_DERIVATIVES.get(family, ((0, 0),))
    nd = len(anchor_derivs)

    # clamped: every slot on the boundary lattice is eliminated
    jj, ii = np.meshgrid(np.arange(L + 1), np.arange(L + 1), indexing="ij")
    interior = ((ii > 0) & (ii < L) & (jj > 0) & (jj < L)).ravel()
    free_slots = np.repeat(interior, nd)
    slot_index = np.full(free_slots.size, ELIMINATED, dtype=np.int64)
    slot_index[free_slots] = np.arange(int(free_slots.sum()))

    free = np.flatnonzero(free_slots)
    nodes, k = np.divmod(free, nd)
    node_j, node_i = np.divmod(nodes, L + 1)
    anchor_lattice = np.column_stack([node_i, node_j])
    derivs = np.array(anchor_derivs, dtype=int)[k]

    # local -> global
    offsets = element.lattice_offsets()                     # (ndofs, 2)
    local_k = np.arange(element.ndofs) % nd
    cj, ci = np.divmod(np.arange(mesh.num_cells), mesh.n)
    li = r * ci[:, None] + offsets[None, :, 0]
    lj = r * cj[:, None] + offsets[None, :, 1]
    cell_dofs = slot_index[(lj * (L + 1) + li) * nd + local_k[None, :]]

    dofmap = DofMap(mesh, element, L, tuple(anchor_derivs), slot_index, cell_dofs,
                    anchor_lattice, derivs, int(free.size))
    LOGGER.debug("dofmap %s n=%d: %d free DOFs", family.value, mesh.n, dofmap.free_count)
    return dofmap


def _check_consistency(mesh: CartesianMesh, elem: ReferenceElement, dofmap: DofMap) -> None:
    if dofmap.mesh.n != mesh.n or dofmap.family is not elem.family:
        raise StructuralError("mesh, element and dofmap are inconsistent",
                              mesh=mesh.n, dofmap_mesh=dofmap.mesh.n,
                              element=elem.family.value, dofmap_family=dofmap.family.value)


def _scatter_blocks(buffer: TripletBuffer, dofs: np.ndarray, blocks: np.ndarray) -> None:
    """Add dense blocks[e] at rows/cols dofs[e], dropping eliminated DOFs."""
    if blocks.ndim == 2:
        blocks = np.broadcast_to(blocks, (dofs.shape[0],) + blocks.shape)
    rows = np.broadcast_to(dofs[:, :, None], blocks.shape)
    cols = np.broadcast_to(dofs[:, None, :], blocks.shape)
    mask = (rows != ELIMINATED) & (cols != ELIMINATED)
    buffer.add(rows[mask], cols[mask], blocks[mask])


def assemble_stiffness(mesh: CartesianMesh, elem: ReferenceElement, dofmap: DofMap,
                       quad: Optional[QuadratureRule] = None) -> CsrMatrix:
    _check_consistency(mesh, elem, dofmap)
    if dofmap.cell_dofs.max() >= dofmap.free_count:
        raise StructuralError("cell DOF index beyond the free DOF count")
    K = local_stiffness(elem, mesh.cell_size, quad)
    buffer = TripletBuffer((dofmap.free_count, dofmap.free_count))
    _scatter_blocks(buffer, dofmap.cell_dofs, K)          # cells in row-major order
    return buffer.compact()


def _edge_traces(elem: ReferenceElement, h: float, axis: int, side: float,
                 t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    First and second derivatives along `axis` (0 = x, 1 = y) of every shape
    function on the cell side where the reference coordinate equals `side`.
    """
    pts = np.column_stack([np.full_like(t, side), t]) if axis == 0 else np.column_stack([t, np.full_like(t, side)])
    table = shape_eval(elem, pts, 2)
    first = (1, 0) if axis == 0 else (0, 1)
    second = (2, 0) if axis == 0 else (0, 2)
    return table[first] * (2.0 / h), table[second] * (2.0 / h) ** 2


def _edge_matrix(jump: np.ndarray, average: np.ndarray, weights: np.ndarray, h: float,
                 eta: float, consistency: bool, penalty: bool) -> np.ndarray:
    jac = h / 2.0
    E = np.zeros((jump.shape[1], jump.shape[1]))
    if consistency:
        cross = (average.T * weights) @ jump
        E += jac * (cross + cross.T)
    if penalty:
        E += jac * (eta / h) * (jump.T * weights) @ jump
    return E


def assemble_c0ip_edges(mesh: CartesianMesh, elem: ReferenceElement, dofmap: DofMap,
                        eta: float = DEFAULT_ETA, consistency: bool = True,
                        penalty: bool = True, include_boundary: bool = True) -> CsrMatrix:
    """
    Edge part of the C0 interior penalty form. On an interior edge the normal
    points from T- (left/bottom cell) to T+ (right/top cell); on a boundary
    edge it is the outward normal and jump = -du/dnu, average = d2u/dnu2.
    """
    if elem.family is not ElementFamily.C0IP:
        raise ConfigurationError("edge terms exist only for the c0ip family")
    if not eta > 0:
        raise ConfigurationError(f"penalty parameter must be positive, got {eta}", ErrorCode.INVALID_PENALTY)
    _check_consistency(mesh, elem, dofmap)

    n, h = mesh.n, mesh.cell_size
    t, w = np.polynomial.legendre.leggauss(EDGE_QUAD_POINTS)
    cells = np.arange(mesh.num_cells).reshape(n, n)          # [j, i]
    buffer = TripletBuffer((dofmap.free_count, dofmap.free_count))

    for axis in (0, 1):
        d_minus, dd_minus = _edge_traces(elem, h, axis, 1.0, t)    # T- sees the edge on its +side
        d_plus, dd_plus = _edge_traces(elem, h, axis, -1.0, t)
        jump = np.hstack([-d_minus, d_plus])
        average = 0.5 * np.hstack([dd_minus, dd_plus])
        E = _edge_matrix(jump, average, w, h, eta, consistency, penalty)
        if axis == 0:
            minus, plus = cells[:, :-1].ravel(), cells[:, 1:].ravel()
        else:
            minus, plus = cells[:-1, :].ravel(), cells[1:, :].ravel()
        dofs = np.hstack([dofmap.cell_dofs[minus], dofmap.cell_dofs[plus]])
        _scatter_blocks(buffer, dofs, E)
        if not include_boundary:
            continue

        # boundary edges: low side (outward normal -e) and high side (+e)
        for side, boundary_cells in ((-1.0, cells[:, 0] if axis == 0 else cells[0, :]),
                                     (1.0, cells[:, -1] if axis == 0 else cells[-1, :])):
            d_n, dd_n = _edge_traces(elem, h, axis, side, t)
            E = _edge_matrix(-side * d_n, dd_n, w, h, eta, consistency, penalty)
            _scatter_blocks(buffer, dofmap.cell_dofs[boundary_cells], E)

    return buffer.compact()


def assemble_load(mesh: CartesianMesh, elem: ReferenceElement, dofmap: DofMap, f: ScalarField,
                  quad: Optional[QuadratureRule] = None) -> np.ndarray:
    _check_consistency(mesh, elem, dofmap)
    loads = local_loads(elem, mesh.cell_origins(), mesh.cell_size, f, quad)
    dofs = dofmap.cell_dofs.ravel()
    mask = dofs != ELIMINATED
    return np.bincount(dofs[mask], weights=loads.ravel()[mask], minlength=dofmap.free_count)


def assemble_system(mesh: CartesianMesh, family, eta: float = DEFAULT_ETA) -> Tuple[DofMap, CsrMatrix]:
    """Dofmap and full stiffness matrix a_h of the family (edge terms included for c0ip)."""
    dofmap = build_dofmap(mesh, family)
    elem = dofmap.element
    A = assemble_stiffness(mesh, elem, dofmap)
    if elem.family is ElementFamily.C0IP:
        A = (A + assemble_c0ip_edges(mesh, elem, dofmap, eta)).tocsr()
        A.sort_indices()
    LOGGER.info("assembled %s system: n=%d, %d DOFs, %d nonzeros",
                elem.family.value, mesh.n, A.shape[0], A.nnz)
    return dofmap, A


def energy_error(A: CsrMatrix, u_h: np.ndarray, u_ref: np.ndarray) -> float:
    e = np.asarray(u_h) - np.asarray(u_ref)
    return float(np.sqrt(max(e @ (A @ e), 0.0)))


def export_system(prefix: Union[str, Path], A: CsrMatrix, f: Optional[np.ndarray] = None) -> List[Path]:
    """Write A (and f) in Matrix Market coordinate/array format next to `prefix`."""
    prefix = Path(prefix)
    written = [write_matrix_market(prefix.with_name(prefix.name + ".A.mtx"), A, comment="stiffness")]
    if f is not None:
        written.append(write_matrix_market(prefix.with_name(prefix.name + ".f.mtx"), f, comment="load"))
    return written
