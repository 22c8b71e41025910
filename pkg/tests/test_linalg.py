import numpy as np
import pytest
import scipy.sparse as sp

from errors import ErrorCode, NotSPDError, SolverError, StructuralError
from linalg import (TripletBuffer, compact, factorize_spd, read_matrix_market, relative_asymmetry,
                    triple_product, write_matrix_market)


def _random_spd(rng, n, density=0.05):
    B = sp.random(n, n, density=density, random_state=np.random.RandomState(7))
    return (B @ B.T + n * sp.identity(n)).tocsr()


def test_compact_sums_duplicates():
    A = compact([(0, 0, 1.0), (0, 0, 2.0)], shape=(1, 1))
    assert A.toarray().tolist() == [[3.0]]
    assert A.nnz == 1


def test_compact_empty():
    A = TripletBuffer((3, 3)).compact()
    assert A.shape == (3, 3)
    assert A.nnz == 0


def test_compact_rejects_out_of_range():
    buffer = TripletBuffer((2, 2))
    buffer.add([0, 2], [1, 1], [1.0, 1.0])
    with pytest.raises(SolverError) as exc:
        buffer.compact()
    assert exc.value.code is ErrorCode.INDEX_OUT_OF_RANGE


def test_compact_matches_dense_accumulation(rng):
    n = 50
    rows = rng.integers(0, n, 400)
    cols = rng.integers(0, n, 400)
    values = rng.standard_normal(400)
    buffer = TripletBuffer((n, n))
    buffer.add(rows, cols, values)
    buffer.add(cols, rows, values)
    assert len(buffer) == 800
    dense = np.zeros((n, n))
    np.add.at(dense, (rows, cols), values)
    np.add.at(dense, (cols, rows), values)
    A = buffer.compact()
    np.testing.assert_allclose(A.toarray(), dense, atol=1e-13)
    assert A.has_sorted_indices
    assert relative_asymmetry(A) <= 1e-14


def test_factorize_identity():
    b = np.arange(5.0)
    np.testing.assert_array_equal(factorize_spd(np.eye(5)).solve(b), b)
    assert factorize_spd(np.eye(5)).min_pivot_ratio == 1.0


def test_factorize_two_by_two():
    x = factorize_spd(np.array([[4.0, 1.0], [1.0, 3.0]])).solve(np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [1 / 11, 7 / 11], rtol=1e-14)


def test_factorize_rejects_indefinite():
    with pytest.raises(NotSPDError) as exc:
        factorize_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert exc.value.code is ErrorCode.NOT_SPD
    assert exc.value.diagnostics["pivot"] == 1


def test_factorize_rejects_nonsymmetric():
    with pytest.raises(StructuralError) as exc:
        factorize_spd(np.array([[2.0, 1.0], [0.0, 2.0]]))
    assert exc.value.code is ErrorCode.NOT_SYMMETRIC


def test_banded_factorization_solves_stiffness(assembled, rng):
    _, _, A = assembled("bfs", 8)
    factorization = factorize_spd(A)
    assert factorization.banded
    for _ in range(5):
        b = rng.standard_normal(A.shape[0])
        x = factorization.solve(b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_banded_factorization_matches_dense(rng):
    A = _random_spd(rng, 200)
    b = rng.standard_normal(200)
    np.testing.assert_allclose(factorize_spd(A).solve(b), np.linalg.solve(A.toarray(), b), rtol=1e-10)


def test_principal_submatrices_factor(assembled, rng):
    _, _, A = assembled("jinwu", 8)
    for _ in range(3):
        idx = np.sort(rng.choice(A.shape[0], 80, replace=False))
        factorize_spd(A[idx][:, idx])


def test_triple_product_identity_and_unit_row(assembled):
    _, _, A = assembled("adini", 4)
    n = A.shape[0]
    np.testing.assert_allclose(triple_product(sp.identity(n), A).toarray(), A.toarray(), atol=1e-14)
    unit = sp.csr_matrix(([1.0], ([0], [5])), shape=(1, n))
    assert triple_product(unit, A).toarray()[0, 0] == pytest.approx(A[5, 5], rel=1e-15)


def test_triple_product_matches_dense(rng):
    A = _random_spd(rng, 50)
    R = sp.random(10, 50, density=0.2, random_state=np.random.RandomState(3)).tocsr()
    expected = R.toarray() @ A.toarray() @ R.toarray().T
    result = triple_product(R, A).toarray()
    assert np.abs(result - expected).max() <= 1e-12 * np.abs(expected).max()
    np.testing.assert_array_equal(result, result.T)


def test_triple_product_dimension_mismatch():
    with pytest.raises(SolverError) as exc:
        triple_product(sp.identity(3), sp.identity(4))
    assert exc.value.code is ErrorCode.DIMENSION_MISMATCH


def test_matrix_market_exchange(tmp_path, assembled, rng):
    _, _, A = assembled("bfs", 4)
    path = write_matrix_market(tmp_path / "A", A, comment="bfs n=4")
    assert path.name == "A.mtx"
    np.testing.assert_allclose(read_matrix_market(path).toarray(), A.toarray(), rtol=1e-14)

    f = rng.standard_normal(A.shape[0])
    vec = read_matrix_market(write_matrix_market(tmp_path / "f.mtx", f))
    assert vec.shape == f.shape
    np.testing.assert_allclose(vec, f, rtol=1e-14)
