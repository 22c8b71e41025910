import numpy as np
import pytest
import scipy.sparse as sp

from errors import ErrorCode, NotSPDError, SolverError
from krylov import (condition_estimate, dense_condition_number, lanczos_extremes, lanczos_tridiagonal, pcg)
from schwarz import build_preconditioner


def _plain_cg(A, f, iterations):
    u = np.zeros_like(f)
    r = f.copy()
    p = r.copy()
    rr = r @ r
    iterates = []
    for _ in range(iterations):
        Ap = A @ p
        alpha = rr / (p @ Ap)
        u = u + alpha * p
        r = r - alpha * Ap
        iterates.append(u.copy())
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return iterates


def _random_spd(rng, n, spread=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(np.linspace(1.0, spread, n)) @ Q.T


def test_identity_system():
    report = pcg(sp.identity(6, format="csr"), None, np.arange(1.0, 7.0))
    assert report.converged
    assert report.iterations == 1
    assert report.kappa_estimate == pytest.approx(1.0)
    assert report.relative_residuals[0] == 1.0
    np.testing.assert_allclose(report.solution, np.arange(1.0, 7.0))


def test_diagonal_system_finite_termination():
    report = pcg(sp.diags([1.0, 2.0, 3.0]).tocsr(), None, np.ones(3))
    assert report.converged
    assert report.iterations <= 3
    assert report.kappa_estimate == pytest.approx(3.0, rel=1e-6)
    assert report.final_relres <= 1e-8


def test_zero_right_hand_side():
    report = pcg(sp.identity(4, format="csr"), None, np.zeros(4))
    assert report.converged
    assert report.iterations == 0
    assert report.relative_residuals == [1.0]
    assert not report.solution.any()


def test_indefinite_matrix_is_detected():
    with pytest.raises(NotSPDError) as exc:
        pcg(sp.diags([1.0, -1.0]).tocsr(), None, np.ones(2))
    assert exc.value.code is ErrorCode.NOT_SPD
    assert "matrix not SPD" in str(exc.value)


def test_indefinite_preconditioner_is_detected():
    with pytest.raises(SolverError) as exc:
        pcg(sp.identity(3, format="csr"), lambda r: -r, np.ones(3))
    assert exc.value.code is ErrorCode.PRECONDITIONER_NOT_SPD


def test_dimension_mismatch():
    with pytest.raises(SolverError) as exc:
        pcg(sp.identity(3, format="csr"), None, np.ones(4))
    assert exc.value.code is ErrorCode.DIMENSION_MISMATCH


def test_not_converged_within_max_iters(rng):
    A = _random_spd(rng, 40)
    report = pcg(A, None, rng.standard_normal(40), tol=1e-12, max_iters=3)
    assert not report.converged
    assert report.iterations == 3
    assert len(report.relative_residuals) == 4


def test_identity_preconditioner_reproduces_plain_cg(rng):
    A = _random_spd(rng, 30)
    f = rng.standard_normal(30)
    iterates = []
    pcg(A, None, f, tol=1e-30, max_iters=12, callback=lambda u: iterates.append(u.copy()))
    for ours, reference in zip(iterates, _plain_cg(A, f, 12)):
        np.testing.assert_allclose(ours, reference, rtol=1e-14, atol=1e-14 * np.linalg.norm(reference))


def test_energy_error_is_monotone(rng):
    A = _random_spd(rng, 30)
    f = rng.standard_normal(30)
    exact = np.linalg.solve(A, f)
    errors = []

    def record(u):
        e = exact - u
        errors.append(np.sqrt(e @ A @ e))

    pcg(A, None, f, tol=1e-12, callback=record)
    assert all(b <= a * (1 + 1e-10) for a, b in zip(errors, errors[1:]))


def test_condition_estimate_grows_with_iterations():
    A = sp.diags(np.linspace(1.0, 100.0, 50)).tocsr()
    f = np.ones(50)
    kappas = [pcg(A, None, f, tol=1e-14, max_iters=k).kappa_estimate for k in range(2, 12)]
    assert all(b >= a * (1 - 1e-10) for a, b in zip(kappas, kappas[1:]))
    assert kappas[-1] <= 100.0 * (1 + 1e-2)


def test_lanczos_tridiagonal_entries():
    diag, off = lanczos_tridiagonal([0.5, 0.25], [4.0])
    np.testing.assert_allclose(diag, [2.0, 4.0 + 8.0])
    np.testing.assert_allclose(off, [4.0])
    assert lanczos_extremes([], []) == (1.0, 1.0)
    assert condition_estimate([2.0], []) == 1.0


def test_dense_condition_number():
    assert dense_condition_number(np.diag([1.0, 2.0, 3.0])) == pytest.approx(3.0)
    assert dense_condition_number(np.diag([1.0, 2.0, 3.0]), lambda r: r / np.array([1.0, 2.0, 3.0])) \
        == pytest.approx(1.0)


def test_lanczos_estimate_matches_dense_oracle(decomposed, rng):
    decomposition, dofmap, A = decomposed("bfs", 16, 4, 1)
    precond = build_preconditioner("two-level", decomposition, dofmap, A)
    report = pcg(A, precond, rng.standard_normal(dofmap.free_count), tol=1e-12)
    assert report.converged
    kappa = dense_condition_number(A, precond)
    assert abs(report.kappa_estimate - kappa) <= 0.05 * kappa
    assert report.kappa_estimate <= kappa * (1 + 1e-2)


def test_preconditioned_steps_stay_positive(decomposed):
    decomposition, dofmap, A = decomposed("jinwu", 16, 4, 2)
    precond = build_preconditioner("two-level", decomposition, dofmap, A)
    report = pcg(A, precond, np.ones(dofmap.free_count), tol=1e-10)
    assert report.converged
    assert min(report.alphas) > 0
    assert min(report.betas, default=1.0) > 0
