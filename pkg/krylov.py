"""
Preconditioned conjugate gradient with true-residual history and a Lanczos
estimate of the condition number of M^-1 A.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from constants import DEFAULT_MAX_ITERS, DEFAULT_TOL
from errors import ErrorCode, NotSPDError, SolverError

LOGGER = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class PcgReport:
    iterations: int
    relative_residuals: List[float]
    kappa_estimate: float
    converged: bool
    solution: np.ndarray
    eigenvalue_bounds: Tuple[float, float] = (1.0, 1.0)     # Lanczos lambda_min, lambda_max
    alphas: List[float] = field(default_factory=list)
    betas: List[float] = field(default_factory=list)

    @property
    def final_relres(self) -> float:
        return self.relative_residuals[-1]


def _as_operator(M) -> Operator:
    if M is None:
        return lambda r: r.copy()
    if hasattr(M, "apply"):
        return M.apply
    if hasattr(M, "matvec"):
        return M.matvec
    if callable(M):
        return M
    raise SolverError(f"cannot use {type(M).__name__} as a preconditioner")


def lanczos_tridiagonal(alphas: Sequence[float], betas: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Diagonal and off-diagonal of the Lanczos matrix T_k recovered from k CG
    steps: T[j, j] = 1/alpha_j + beta_{j-1}/alpha_{j-1}, T[j, j+1] = sqrt(beta_j)/alpha_j.
    """
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)[:max(len(alphas) - 1, 0)]
    diag = 1.0 / alphas
    diag[1:] += betas / alphas[:-1]
    off = np.sqrt(betas) / alphas[:-1]
    return diag, off


def lanczos_extremes(alphas: Sequence[float], betas: Sequence[float]) -> Tuple[float, float]:
    k = len(alphas)
    if k == 0:
        return 1.0, 1.0
    diag, off = lanczos_tridiagonal(alphas, betas)
    if k == 1:
        return float(diag[0]), float(diag[0])
    # bisection on Sturm counts, only the two extreme eigenvalues
    lo = scipy.linalg.eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 0), lapack_driver="stebz")
    hi = scipy.linalg.eigvalsh_tridiagonal(diag, off, select="i", select_range=(k - 1, k - 1),
                                           lapack_driver="stebz")
    return float(lo[0]), float(hi[0])


def condition_estimate(alphas: Sequence[float], betas: Sequence[float]) -> float:
    lo, hi = lanczos_extremes(alphas, betas)
    return max(hi / lo, 1.0) if lo > 0 else float("inf")


def pcg(A, M, f: np.ndarray, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
        callback: Optional[Callable[[np.ndarray], None]] = None) -> PcgReport:
    """
    Solve A u = f from u0 = 0. Convergence is tested on the recomputed
    residual ||f - A u|| / ||f||; `callback(u)` sees every iterate.
    """
    precond = _as_operator(M)
    f = np.asarray(f, dtype=float)
    n = A.shape[0]
    if f.shape != (n,):
        raise SolverError("right-hand side does not match the matrix", ErrorCode.DIMENSION_MISMATCH,
                          matrix=A.shape, rhs=f.shape)
    u = np.zeros(n)
    norm_f = float(np.linalg.norm(f))
    if norm_f == 0.0:
        LOGGER.info("pcg: zero right-hand side, returning u = 0")
        return PcgReport(0, [1.0], 1.0, True, u)

    r = f.copy()
    z = precond(r)
    rz = float(r @ z)
    if rz <= 0:
        raise SolverError("preconditioner not SPD", ErrorCode.PRECONDITIONER_NOT_SPD, iteration=0, rz=rz)
    p = z.copy()

    history = [1.0]
    alphas: List[float] = []
    betas: List[float] = []
    converged = False
    for it in range(1, max_iters + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise NotSPDError("matrix not SPD", iteration=it, pAp=pAp)
        alpha = rz / pAp
        alphas.append(alpha)
        u += alpha * p
        r -= alpha * Ap
        if callback is not None:
            callback(u)

        relres = float(np.linalg.norm(f - A @ u)) / norm_f
        history.append(relres)
        LOGGER.debug("pcg iter %d: relres=%.3e", it, relres)
        if relres <= tol:
            converged = True
            break
        if not np.any(r):
            break

        z = precond(r)
        rz_new = float(r @ z)
        if rz_new <= 0:
            raise SolverError("preconditioner not SPD", ErrorCode.PRECONDITIONER_NOT_SPD,
                              iteration=it, rz=rz_new)
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new

    bounds = lanczos_extremes(alphas, betas)
    kappa = condition_estimate(alphas, betas)
    if converged:
        LOGGER.info("pcg converged in %d iterations, kappa estimate %.4g", len(alphas), kappa)
    else:
        LOGGER.warning("pcg stopped after %d iterations at relres %.3e", len(alphas), history[-1])
    return PcgReport(len(alphas), history, kappa, converged, u, bounds, alphas, betas)


def dense_preconditioner(M, n: int) -> np.ndarray:
    """Dense matrix of M^-1 built column by column."""
    precond = _as_operator(M)
    eye = np.eye(n)
    Minv = np.column_stack([precond(eye[:, j]) for j in range(n)])
    return 0.5 * (Minv + Minv.T)


def dense_condition_number(A, M=None) -> float:
    """lambda_max / lambda_min of M^-1 A by a dense symmetric eigensolve."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    n = A.shape[0]
    if M is None:
        eigenvalues = scipy.linalg.eigvalsh(A)
    else:
        L = scipy.linalg.cholesky(dense_preconditioner(M, n), lower=True)
        eigenvalues = scipy.linalg.eigvalsh(L.T @ A @ L)
    return float(eigenvalues[-1] / eigenvalues[0])
