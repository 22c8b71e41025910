"""
One- and two-level overlapping additive Schwarz preconditioners

    M^-1 = sum_k R_k^T A_k^-1 R_k      (k = 0 is the coarse space)

Local spaces are the free fine DOFs anchored strictly inside each
subdomain; their principal submatrices are factored once at setup.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from assembly import DofMap
from coarse import CoarseSpace, build_coarse_space
from constants import PreconditionerLevel
from errors import ConfigurationError, ErrorCode, SolverError, StructuralError
from geometry import Decomposition
from linalg import SparseFactorization, factorize_spd

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LocalSpace:
    index: int
    dof_indices: np.ndarray          # sorted free fine DOFs of the subdomain
    factorization: SparseFactorization

    @property
    def size(self) -> int:
        return len(self.dof_indices)

    def local_solve(self, r: np.ndarray) -> np.ndarray:
        """A_k^-1 R_k r"""
        return self.factorization.solve(r[self.dof_indices])


def local_dof_indices(decomposition: Decomposition, dofmap: DofMap, k: int) -> np.ndarray:
    """Free DOFs whose anchor lies strictly inside the open box of subdomain k."""
    if dofmap.mesh.n != decomposition.fine_mesh.n:
        raise StructuralError("dofmap and decomposition live on different fine meshes",
                              dofmap_mesh=dofmap.mesh.n, fine_mesh=decomposition.fine_mesh.n)
    r = dofmap.lattice_size // decomposition.fine_mesh.n
    x0, x1, y0, y1 = decomposition.subdomains[k]
    lat = dofmap.anchor_lattice
    inside = ((r * x0 < lat[:, 0]) & (lat[:, 0] < r * x1)
              & (r * y0 < lat[:, 1]) & (lat[:, 1] < r * y1))
    return np.flatnonzero(inside)


def build_local_spaces(decomposition: Decomposition, dofmap: DofMap, A,
                       threads: int = 1) -> List[LocalSpace]:
    A = sp.csr_matrix(A)
    if A.shape != (dofmap.free_count, dofmap.free_count):
        raise SolverError("matrix does not match the dofmap", ErrorCode.DIMENSION_MISMATCH,
                          matrix=A.shape, dofs=dofmap.free_count)

    index_sets = [local_dof_indices(decomposition, dofmap, k) for k in range(decomposition.num_subdomains)]
    for k, idx in enumerate(index_sets):
        if idx.size == 0:
            raise ConfigurationError(f"subdomain {k} contains no free DOFs", ErrorCode.EMPTY_SUBDOMAIN,
                                     box=decomposition.subdomains[k])

    def factor(k: int) -> LocalSpace:
        idx = index_sets[k]
        return LocalSpace(k, idx, factorize_spd(A[idx][:, idx]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            spaces = list(pool.map(factor, range(len(index_sets))))
    else:
        spaces = [factor(k) for k in range(len(index_sets))]

    sizes = [s.size for s in spaces]
    LOGGER.info("local spaces: %d subdomains, sizes %d..%d", len(spaces), min(sizes), max(sizes))
    return spaces


class Preconditioner:
    """
    Additive Schwarz operator z = M^-1 r. Contributions are summed in
    subdomain order whatever the thread count, coarse term last.
    """

    def __init__(self, level: PreconditionerLevel, dimension: int,
                 local_spaces: Sequence[LocalSpace] = (), coarse: Optional[CoarseSpace] = None,
                 threads: int = 1):
        level = PreconditionerLevel(level)
        if level is not PreconditionerLevel.NONE and not local_spaces:
            raise ConfigurationError(f"{level.value} preconditioner needs local spaces")
        if level is PreconditionerLevel.TWO_LEVEL and coarse is None:
            raise ConfigurationError("two-level preconditioner needs a coarse space")
        if coarse is not None and coarse.prolongation.shape[0] != dimension:
            raise SolverError("coarse prolongation does not match the fine dimension",
                              ErrorCode.DIMENSION_MISMATCH,
                              prolongation=coarse.prolongation.shape, dimension=dimension)
        self.level = level
        self.dimension = dimension
        self.local_spaces = list(local_spaces)
        self.coarse = coarse if level is PreconditionerLevel.TWO_LEVEL else None
        self.threads = max(1, int(threads))

    @property
    def num_subdomains(self) -> int:
        return len(self.local_spaces)

    def _local_solutions(self, r: np.ndarray, spaces: List[LocalSpace]) -> List[np.ndarray]:
        if self.threads > 1 and len(spaces) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(lambda s: s.local_solve(r), spaces))
        return [s.local_solve(r) for s in spaces]

    def apply(self, r: np.ndarray, subdomains: Optional[Iterable[int]] = None,
              include_coarse: bool = True) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape != (self.dimension,):
            raise SolverError("residual has the wrong dimension", ErrorCode.DIMENSION_MISMATCH,
                              expected=self.dimension, got=r.shape)
        if self.level is PreconditionerLevel.NONE:
            return r.copy()

        if subdomains is None:
            spaces = self.local_spaces
        else:
            spaces = [self.local_spaces[k] for k in sorted(set(subdomains))]

        z = np.zeros(self.dimension)
        for space, w in zip(spaces, self._local_solutions(r, spaces)):
            z[space.dof_indices] += w
        if self.coarse is not None and include_coarse:
            P = self.coarse.prolongation
            z += P @ self.coarse.solve(P.T @ r)
        return z

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.apply(r)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.dimension, self.dimension), matvec=self.apply, dtype=float)

    def __repr__(self) -> str:
        coarse_dim = self.coarse.dim if self.coarse is not None else 0
        return (f"Preconditioner(level={self.level.value}, dim={self.dimension}, "
                f"subdomains={self.num_subdomains}, coarse_dim={coarse_dim})")


def build_preconditioner(level, decomposition: Decomposition, dofmap: DofMap, A,
                         threads: int = 1, unscaled: bool = False) -> Preconditioner:
    level = PreconditionerLevel(level)
    n = dofmap.free_count
    if level is PreconditionerLevel.NONE:
        return Preconditioner(level, n)

    spaces = build_local_spaces(decomposition, dofmap, A, threads)
    coarse = None
    if level is PreconditionerLevel.TWO_LEVEL:
        coarse = build_coarse_space(decomposition.coarse_mesh, dofmap.family.m, dofmap, A, unscaled)
    precond = Preconditioner(level, n, spaces, coarse, threads)
    LOGGER.info("built %r", precond)
    return precond
