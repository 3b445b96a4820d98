import numpy as np
import pytest
import scipy.sparse as sp

from src.core.errors import ContractError, DegenerateBasisError, ShapeError, SingularMatrixError
from src.graph.construction import topo_laplacian
from src.linalg.kernels import (
    canonical_csr,
    dense_inverse,
    identity,
    orthonormalize,
    qr_thin,
    solve_spd,
    spmm,
)
from tests.conftest import path_adjacency


class TestSpmm:
    def test_identity(self):
        b = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(spmm(identity(3), b), b)

    def test_zero_matrix(self):
        b = np.ones((4, 3))
        np.testing.assert_array_equal(spmm(canonical_csr(sp.csr_matrix((4, 4))), b), np.zeros((4, 3)))

    def test_matches_dense_product(self):
        a = canonical_csr(sp.random(5, 5, density=0.4, random_state=7))
        b = np.random.default_rng(7).standard_normal((5, 2))
        np.testing.assert_allclose(spmm(a, b), a.toarray() @ b, atol=1e-12)

    def test_random_instances_agree_with_densified(self):
        rng = np.random.default_rng(0)
        for seed in range(10):
            n = int(rng.integers(2, 51))
            a = canonical_csr(sp.random(n, n, density=0.2, random_state=seed))
            b = rng.standard_normal((n, 3))
            np.testing.assert_allclose(spmm(a, b), a.toarray() @ b, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            spmm(identity(3), np.ones((4, 1)))

    def test_deterministic(self):
        a = canonical_csr(sp.random(30, 30, density=0.3, random_state=1))
        b = np.random.default_rng(1).standard_normal((30, 4))
        assert np.array_equal(spmm(a, b), spmm(a, b))


class TestCanonicalCsr:
    def test_prunes_tiny_and_sorts(self):
        m = sp.csr_matrix((np.array([1e-16, 2.0, 3.0]), np.array([2, 1, 0]), np.array([0, 3])), shape=(1, 3))
        c = canonical_csr(m)
        assert c.has_sorted_indices
        assert c.nnz == 2
        assert list(c.indices) == [0, 1]
        assert c.indptr[-1] == c.nnz


class TestQrThin:
    def test_hand_norm(self):
        q, r = qr_thin(np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(q, [[0.6], [0.8]], atol=1e-15)
        np.testing.assert_allclose(r, [[5.0]], atol=1e-15)

    def test_identity_columns(self):
        z = np.eye(4)[:, :3]
        q, r = qr_thin(z)
        np.testing.assert_allclose(q, z, atol=1e-15)
        np.testing.assert_allclose(r, np.eye(3), atol=1e-15)

    def test_reconstruction_and_orthogonality(self):
        z = np.random.default_rng(1).standard_normal((20, 4))
        q, r = qr_thin(z)
        assert np.max(np.abs(q.T @ q - np.eye(4))) <= 1e-10
        np.testing.assert_allclose(q @ r, z, atol=1e-10)
        np.testing.assert_array_equal(np.tril(r, k=-1), 0.0)
        assert np.all(np.diag(r) >= 0)

    def test_rank_deficient(self):
        col = np.random.default_rng(2).standard_normal((6, 1))
        with pytest.raises(DegenerateBasisError) as err:
            qr_thin(np.hstack([col, 2.0 * col]))
        assert err.value.column == 1

    def test_restart_keeps_basis_orthonormal(self):
        col = np.random.default_rng(3).standard_normal((6, 1))
        q, _ = orthonormalize(np.hstack([col, col, col]), np.random.default_rng(0))
        np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-10)

    def test_wide_input_rejected(self):
        with pytest.raises(ShapeError):
            qr_thin(np.ones((2, 3)))


class TestSolveSpd:
    def test_identity(self):
        b = np.random.default_rng(0).standard_normal((5, 2))
        np.testing.assert_allclose(solve_spd(np.eye(5), b), b, atol=1e-12)

    def test_diagonal(self):
        x = solve_spd(np.diag([2.0, 4.0]), np.array([[2.0], [8.0]]))
        np.testing.assert_allclose(x, [[1.0], [2.0]], atol=1e-12)

    def test_path_graph_matches_dense_solve(self):
        l = topo_laplacian(path_adjacency(6))
        m = canonical_csr(identity(6) + 0.5 * l)
        b = np.ones((6, 1))
        x = solve_spd(m, b, tol=1e-12)
        np.testing.assert_allclose(x, np.linalg.solve(m.toarray(), b), atol=1e-8)

    def test_residual_contract(self):
        rng = np.random.default_rng(4)
        g = rng.standard_normal((10, 10))
        m = g @ g.T + 10 * np.eye(10)
        b = rng.standard_normal((10, 3))
        x = solve_spd(m, b, tol=1e-9)
        assert np.linalg.norm(m @ x - b) / np.linalg.norm(b) <= 1e-8

    def test_asymmetric_rejected(self):
        with pytest.raises(ContractError):
            solve_spd(np.array([[2.0, 1.0], [0.0, 2.0]]), np.ones((2, 1)))


class TestDenseInverse:
    def test_identity(self):
        np.testing.assert_allclose(dense_inverse(np.eye(5)), np.eye(5))

    def test_diagonal(self):
        np.testing.assert_allclose(dense_inverse(np.diag([2.0, 0.5])), np.diag([0.5, 2.0]))

    def test_random_spd_multiply_back(self):
        g = np.random.default_rng(3).standard_normal((8, 8))
        m = g @ g.T + np.eye(8)
        assert np.max(np.abs(m @ dense_inverse(m) - np.eye(8))) <= 1e-8

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            dense_inverse(np.array([[1.0, 1.0], [1.0, 1.0]]))
