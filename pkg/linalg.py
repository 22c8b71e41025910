"""
Sparse and dense kernels shared by assembly, Schwarz and Krylov code:
triplet compaction into CSR, SPD factorization with a bandwidth-reducing
ordering, Galerkin triple products and Matrix Market exchange.
"""
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from constants import DENSE_FALLBACK_DIM, SYMMETRY_TOL
from errors import ErrorCode, NotSPDError, SolverError, StructuralError

LOGGER = logging.getLogger(__name__)

CsrMatrix = sp.csr_matrix
MatrixLike = Union[np.ndarray, sp.spmatrix]

_PIVOT_RE = re.compile(r"(\d+)-th leading minor")


class TripletBuffer:
    """(row, col, value) contributions kept in insertion order until compaction."""

    def __init__(self, shape: Tuple[int, int]):
        self.shape = shape
        self._rows: List[np.ndarray] = []
        self._cols: List[np.ndarray] = []
        self._values: List[np.ndarray] = []

    def add(self, rows, cols, values) -> None:
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (len(rows) == len(cols) == len(values)):
            raise SolverError("triplet arrays differ in length", ErrorCode.DIMENSION_MISMATCH)
        self._rows.append(rows)
        self._cols.append(cols)
        self._values.append(values)

    def __len__(self) -> int:
        return sum(len(r) for r in self._rows)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._rows:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        return np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._values)

    def compact(self) -> CsrMatrix:
        return compact(self)


def compact(triplets: Union[TripletBuffer, Iterable[Tuple[int, int, float]]],
            shape: Optional[Tuple[int, int]] = None) -> CsrMatrix:
    """Sum duplicate entries and return CSR with sorted column indices per row."""
    if isinstance(triplets, TripletBuffer):
        rows, cols, values = triplets.arrays()
        shape = shape or triplets.shape
    else:
        entries = list(triplets)
        if shape is None:
            raise SolverError("shape is required for plain triplet lists", ErrorCode.DIMENSION_MISMATCH)
        rows = np.array([e[0] for e in entries], dtype=np.int64)
        cols = np.array([e[1] for e in entries], dtype=np.int64)
        values = np.array([e[2] for e in entries], dtype=float)

    n_rows, n_cols = shape
    if len(rows) and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise SolverError("triplet index outside the matrix", ErrorCode.INDEX_OUT_OF_RANGE,
                          shape=shape, max_row=int(rows.max()), max_col=int(cols.max()))

    matrix = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def relative_asymmetry(A: MatrixLike) -> float:
    if sp.issparse(A):
        scale = abs(A).max()
        diff = abs(A - A.T).max()
    else:
        scale = np.abs(A).max()
        diff = np.abs(A - A.T).max()
    return float(diff / scale) if scale > 0 else 0.0


@dataclass(frozen=True, eq=False)
class SparseFactorization:
    """
    Cholesky factor of P A P^T. Above DENSE_FALLBACK_DIM the matrix is
    reordered by reverse Cuthill-McKee and factored in LAPACK band storage.
    """
    permutation: np.ndarray
    factor: np.ndarray
    dimension: int
    banded: bool
    max_diagonal: float

    @property
    def pivots(self) -> np.ndarray:
        """Diagonal pivots of the factorization (squares of the factor diagonal)."""
        diag = self.factor[0] if self.banded else np.diag(self.factor)
        return diag ** 2

    @property
    def min_pivot_ratio(self) -> float:
        return float(self.pivots.min() / self.max_diagonal) if self.dimension else 1.0

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.dimension:
            raise SolverError("right-hand side does not match the factorization",
                              ErrorCode.DIMENSION_MISMATCH, expected=self.dimension, got=b.shape[0])
        if self.dimension == 0:
            return b.copy()
        rhs = b[self.permutation]
        if self.banded:
            y = scipy.linalg.cho_solve_banded((self.factor, True), rhs, check_finite=False)
        else:
            y = scipy.linalg.cho_solve((self.factor, True), rhs, check_finite=False)
        x = np.empty_like(y)
        x[self.permutation] = y
        return x


def _failed_pivot(error: Exception, permutation: np.ndarray) -> Optional[int]:
    match = _PIVOT_RE.search(str(error))
    if not match:
        return None
    k = int(match.group(1)) - 1
    return int(permutation[k]) if 0 <= k < len(permutation) else None


def factorize_spd(A: MatrixLike) -> SparseFactorization:
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise SolverError("matrix is not square", ErrorCode.DIMENSION_MISMATCH, shape=A.shape)
    if n == 0:
        return SparseFactorization(np.zeros(0, dtype=int), np.zeros((1, 0)), 0, True, 1.0)
    asym = relative_asymmetry(A)
    if asym > SYMMETRY_TOL:
        raise StructuralError("matrix is not symmetric", ErrorCode.NOT_SYMMETRIC, asymmetry=asym)

    if n < DENSE_FALLBACK_DIM:
        dense = A.toarray() if sp.issparse(A) else np.array(A, dtype=float)
        permutation = np.arange(n)
        max_diag = float(np.diag(dense).max())
        try:
            factor, _ = scipy.linalg.cho_factor(dense, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotSPDError("matrix is not SPD", pivot=_failed_pivot(exc, permutation)) from exc
        return SparseFactorization(permutation, factor, n, False, max_diag)

    A = sp.csr_matrix(A)
    permutation = np.asarray(reverse_cuthill_mckee(A, symmetric_mode=True), dtype=int)
    permuted = A[permutation][:, permutation]
    lower = sp.tril(permuted).tocoo()
    bandwidth = int((lower.row - lower.col).max()) if lower.nnz else 0
    band = np.zeros((bandwidth + 1, n))
    band[lower.row - lower.col, lower.col] = lower.data
    max_diag = float(band[0].max())
    try:
        factor = scipy.linalg.cholesky_banded(band, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("matrix is not SPD", pivot=_failed_pivot(exc, permutation)) from exc
    LOGGER.debug("banded cholesky: n=%d, bandwidth=%d", n, bandwidth)
    return SparseFactorization(permutation, factor, n, True, max_diag)


def triple_product(R: MatrixLike, A: MatrixLike) -> CsrMatrix:
    """R A R^T for sparse R of shape (k, n) and A of shape (n, n)."""
    if R.shape[1] != A.shape[0] or A.shape[0] != A.shape[1]:
        raise SolverError("triple product dimensions do not conform", ErrorCode.DIMENSION_MISMATCH,
                          R=R.shape, A=A.shape)
    R = sp.csr_matrix(R)
    product = sp.csr_matrix(R @ sp.csr_matrix(A) @ R.T)
    product = ((product + product.T) * 0.5).tocsr()
    product.sort_indices()
    return product


def write_matrix_market(path: Union[str, Path], data: MatrixLike, comment: str = "") -> Path:
    path = Path(path)
    if path.suffix != ".mtx":
        path = path.with_name(path.name + ".mtx")
    if not sp.issparse(data):
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
    scipy.io.mmwrite(str(path), data, comment=comment)
    return path


def read_matrix_market(path: Union[str, Path]) -> MatrixLike:
    data = scipy.io.mmread(str(path))
    if sp.issparse(data):
        return sp.csr_matrix(data)
    data = np.asarray(data)
    return data.ravel() if data.ndim == 2 and data.shape[1] == 1 else data
