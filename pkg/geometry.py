"""
Uniform cartesian meshes of the unit square and the overlapping subdomain
covering obtained by dilating coarse cells with layers of fine cells.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from errors import ConfigurationError, ErrorCode

LOGGER = logging.getLogger(__name__)

# (x0, x1, y0, y1): half-open fine-cell index box [x0, x1) x [y0, y1)
CellBox = Tuple[int, int, int, int]


@dataclass(frozen=True)
class CartesianMesh:
    cells_per_axis: int

    @property
    def n(self) -> int:
        return self.cells_per_axis

    @property
    def cell_size(self) -> float:
        return 1.0 / self.cells_per_axis

    @property
    def num_cells(self) -> int:
        return self.cells_per_axis ** 2

    @property
    def vertices_per_axis(self) -> int:
        return self.cells_per_axis + 1

    def coordinate(self, i) -> np.ndarray:
        # always i/n, never accumulated, so repeated calls are bit-identical
        return np.asarray(i, dtype=float) / self.cells_per_axis

    def vertex(self, i: int, j: int) -> Tuple[float, float]:
        return float(self.coordinate(i)), float(self.coordinate(j))

    def cell_origin(self, i: int, j: int) -> Tuple[float, float]:
        return self.vertex(i, j)

    def cell_origins(self) -> np.ndarray:
        """Lower-left corners of all cells in row-major order (y outer), shape (n*n, 2)."""
        idx = np.arange(self.cells_per_axis)
        jj, ii = np.meshgrid(idx, idx, indexing="ij")
        return np.column_stack([self.coordinate(ii.ravel()), self.coordinate(jj.ravel())])

    def vertex_coordinates(self) -> np.ndarray:
        idx = np.arange(self.vertices_per_axis)
        jj, ii = np.meshgrid(idx, idx, indexing="ij")
        return np.column_stack([self.coordinate(ii.ravel()), self.coordinate(jj.ravel())])

    def refines(self, coarse: "CartesianMesh") -> bool:
        return self.cells_per_axis % coarse.cells_per_axis == 0


def build_mesh(n: int) -> CartesianMesh:
    if int(n) != n or n < 1:
        raise ConfigurationError(f"cells per axis must be a positive integer, got {n}",
                                 ErrorCode.INVALID_MESH)
    return CartesianMesh(int(n))


@dataclass(frozen=True)
class Decomposition:
    coarse_mesh: CartesianMesh
    fine_mesh: CartesianMesh
    overlap_layers: int
    subdomains: List[CellBox] = field(default_factory=list)

    @property
    def num_subdomains(self) -> int:
        return len(self.subdomains)

    @property
    def ratio(self) -> int:
        """Fine cells per coarse cell along one axis (H/h)."""
        return self.fine_mesh.n // self.coarse_mesh.n

    @property
    def delta(self) -> float:
        return self.overlap_layers / self.fine_mesh.n

    def subdomain_bounds(self, k: int) -> Tuple[float, float, float, float]:
        """Physical box (x0, x1, y0, y1) of subdomain k."""
        x0, x1, y0, y1 = self.subdomains[k]
        to_x = self.fine_mesh.coordinate
        return float(to_x(x0)), float(to_x(x1)), float(to_x(y0)), float(to_x(y1))

    def membership_counts(self) -> np.ndarray:
        """Number of subdomains containing each fine cell, shape (n_f, n_f) indexed [j, i]."""
        n_f = self.fine_mesh.n
        counts = np.zeros((n_f, n_f), dtype=int)
        for x0, x1, y0, y1 in self.subdomains:
            counts[y0:y1, x0:x1] += 1
        return counts


def build_decomposition(coarse: CartesianMesh, fine: CartesianMesh,
                        overlap_layers: int) -> Decomposition:
    if not fine.refines(coarse):
        raise ConfigurationError(
            f"fine mesh ({fine.n} cells/axis) does not refine coarse mesh ({coarse.n} cells/axis)",
            ErrorCode.NON_NESTED)
    ratio = fine.n // coarse.n
    if not (1 <= overlap_layers < ratio):
        raise ConfigurationError(
            f"overlap layers must satisfy 1 <= l < H/h = {ratio}, got {overlap_layers}",
            ErrorCode.OVERLAP_RANGE)

    subdomains: List[CellBox] = []
    for cj in range(coarse.n):          # row-major coarse-cell order
        for ci in range(coarse.n):
            subdomains.append((
                max(ci * ratio - overlap_layers, 0),
                min((ci + 1) * ratio + overlap_layers, fine.n),
                max(cj * ratio - overlap_layers, 0),
                min((cj + 1) * ratio + overlap_layers, fine.n),
            ))

    decomposition = Decomposition(coarse, fine, overlap_layers, subdomains)
    LOGGER.debug("decomposition: %d subdomains, H/h=%d, delta=%g",
                 len(subdomains), ratio, decomposition.delta)
    return decomposition
