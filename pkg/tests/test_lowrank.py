import numpy as np
import pytest
import scipy.linalg

from src.core.errors import ContractError, ConvergenceError, PsdViolationError
from src.graph.construction import build_graph_operators
from src.linalg.kernels import dense_inverse
from src.lowrank.eigensolver import EigConfig, EigState, top_r_eigs
from src.lowrank.woodbury import (
    LowRankOperator,
    assemble_factor,
    build_tsgcn_operator,
    joint_laplacian,
    woodbury_apply,
)
from tests.conftest import random_adjacency


def random_psd_with_gap(n: int, r: int, seed: int) -> np.ndarray:
    """Random PSD matrix whose r-th and (r+1)-th eigenvalues differ by a factor > 1.01."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    vals = np.sort(rng.uniform(0.0, 1.0, n))[::-1]
    vals[:r] = vals[:r] * 0.5 + 1.5
    return (q * vals) @ q.T


class TestTopREigs:
    def test_diagonal(self):
        m = np.diag([3.0, 2.0, 1.0])
        eig = top_r_eigs(lambda x: m @ x, 3, 2, tol=1e-10, max_iter=500)
        np.testing.assert_allclose(eig.eigenvalues, [3.0, 2.0], atol=1e-9)
        np.testing.assert_allclose(np.abs(eig.u), np.eye(3)[:, :2], atol=1e-6)

    def test_matches_dense_solver(self):
        rng = np.random.default_rng(0)
        for seed in range(30):
            n = int(rng.integers(10, 65))
            r = int(rng.integers(1, 9))
            m = random_psd_with_gap(n, r, seed)
            eig = top_r_eigs(lambda x: m @ x, n, r, tol=1e-10, max_iter=2000, seed=seed)
            expected = scipy.linalg.eigvalsh(m)[::-1][:r]
            np.testing.assert_allclose(eig.eigenvalues, expected, atol=1e-6)

    def test_orthonormal_basis(self):
        m = random_psd_with_gap(40, 5, seed=2)
        eig = top_r_eigs(lambda x: m @ x, 40, 5, tol=1e-10, max_iter=1000)
        np.testing.assert_allclose(eig.u.T @ eig.u, np.eye(5), atol=1e-10)
        assert isinstance(eig, EigState)
        assert eig.converged and eig.residual <= 1e-10
        assert eig.rank == 5

    def test_residual_history_settles(self):
        m = random_psd_with_gap(30, 3, seed=4)
        eig = top_r_eigs(lambda x: m @ x, 30, 3, tol=1e-10, max_iter=1000)
        assert eig.history[-1] <= eig.history[0]

    def test_full_rank(self):
        m = random_psd_with_gap(6, 6, seed=5)
        eig = top_r_eigs(lambda x: m @ x, 6, 6, tol=1e-10, max_iter=200)
        np.testing.assert_allclose(eig.eigenvalues, scipy.linalg.eigvalsh(m)[::-1], atol=1e-8)
        assert eig.next_eigenvalue is None

    def test_rank_out_of_range(self):
        with pytest.raises(ContractError):
            top_r_eigs(lambda x: x, 4, 5)
        with pytest.raises(ContractError):
            top_r_eigs(lambda x: x, 4, 0)

    def test_unconverged_strict(self):
        m = random_psd_with_gap(50, 4, seed=6)
        with pytest.raises(ConvergenceError) as err:
            top_r_eigs(lambda x: m @ x, 50, 4, tol=1e-15, max_iter=1, oversample=0)
        assert err.value.iterations == 1

    def test_unconverged_lenient(self):
        m = random_psd_with_gap(50, 4, seed=6)
        eig = top_r_eigs(lambda x: m @ x, 50, 4, tol=1e-15, max_iter=1, oversample=0, strict=False)
        assert not eig.converged
        assert eig.iter == 1

    def test_deterministic_for_seed(self):
        m = random_psd_with_gap(30, 3, seed=7)
        a = top_r_eigs(lambda x: m @ x, 30, 3, tol=1e-10, max_iter=500, seed=3)
        b = top_r_eigs(lambda x: m @ x, 30, 3, tol=1e-10, max_iter=500, seed=3)
        assert np.array_equal(a.u, b.u)


class TestWoodbury:
    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(2, 51))
            r = int(rng.integers(1, min(8, n) + 1))
            w = rng.standard_normal((n, r))
            op = LowRankOperator(w=w, v=w.copy(), core_inv=dense_inverse(np.eye(r) + w.T @ w))
            h = rng.standard_normal((n, 3))
            expected = np.linalg.solve(np.eye(n) + w @ w.T, h)
            np.testing.assert_allclose(woodbury_apply(op, h), expected, atol=1e-8)

    def test_factor_properties(self):
        m = random_psd_with_gap(20, 4, seed=8)
        eig = top_r_eigs(lambda x: m @ x, 20, 4, tol=1e-10, max_iter=1000)
        op = assemble_factor(eig)
        np.testing.assert_array_equal(op.w, op.v)
        np.testing.assert_allclose(op.core_inv @ (np.eye(4) + op.v.T @ op.w), np.eye(4), atol=1e-8)
        assert op.rank == 4 and op.n == 20

    def test_negative_eigenvalue_rejected(self):
        eig = EigState(u=np.eye(3)[:, :2], r_diag=np.diag([1.0, -1e-3]), iter=1, residual=0.0)
        with pytest.raises(PsdViolationError):
            assemble_factor(eig)

    def test_tiny_negative_eigenvalue_clamped(self):
        eig = EigState(u=np.eye(3)[:, :2], r_diag=np.diag([1.0, -1e-12]), iter=1, residual=0.0)
        op = assemble_factor(eig)
        np.testing.assert_array_equal(op.w[:, 1], 0.0)


class TestTsgcnOperator:
    @pytest.fixture
    def ops(self):
        rng = np.random.default_rng(9)
        return build_graph_operators(random_adjacency(25, 0.25, seed=9), rng.random((25, 6)), k_sem=3)

    def test_full_rank_matches_exact_inverse(self, ops):
        low = build_tsgcn_operator(ops, 1.0, 0.2, ops.n, eig_config=EigConfig(tol=1e-12, max_iter=2000))
        exact = build_tsgcn_operator(ops, 1.0, 0.2, ops.n, exact=True)
        h = np.random.default_rng(0).standard_normal((ops.n, 4))
        np.testing.assert_allclose(low(h), exact(h), atol=1e-6)
        assert low.kind == "woodbury" and exact.kind == "dense-inverse"

    def test_exact_inverse_is_the_resolvent(self, ops):
        exact = build_tsgcn_operator(ops, 0.7, 0.4, 0, exact=True)
        m = np.eye(ops.n) + joint_laplacian(ops, 0.7, 0.4).toarray()
        np.testing.assert_allclose(m @ exact.dense_matrix(), np.eye(ops.n), atol=1e-8)

    def test_low_rank_operator_is_contraction(self, ops):
        op = build_tsgcn_operator(ops, 1.0, 0.2, 4)
        vals = np.linalg.eigvalsh(op.dense_matrix())
        assert vals.max() <= 1.0 + 1e-10 and vals.min() > 0.0

    def test_metadata(self, ops):
        meta = build_tsgcn_operator(ops, 1.0, 0.2, 3).metadata()
        assert meta["kind"] == "woodbury" and meta["rank"] == 3
        assert meta["eig"]["converged"]

    def test_rank_bounds(self, ops):
        with pytest.raises(ContractError):
            build_tsgcn_operator(ops, 1.0, 0.2, ops.n + 1)
        with pytest.raises(ContractError):
            build_tsgcn_operator(ops, -1.0, 0.2, 2)


class TestApproximationError:
    @pytest.fixture
    def geometric_psd(self):
        n = 20
        q, _ = np.linalg.qr(np.random.default_rng(11).standard_normal((n, n)))
        return (q * (2.0 * 0.7 ** np.arange(n))) @ q.T

    def test_woodbury_apply_is_linear(self, geometric_psd):
        eig = top_r_eigs(lambda x: geometric_psd @ x, 20, 5, tol=1e-10, max_iter=2000)
        op = assemble_factor(eig)
        rng = np.random.default_rng(12)
        x, y = rng.standard_normal((20, 3)), rng.standard_normal((20, 3))
        np.testing.assert_allclose(
            woodbury_apply(op, 2.0 * x - 0.5 * y),
            2.0 * woodbury_apply(op, x) - 0.5 * woodbury_apply(op, y),
            atol=1e-10,
        )

    def test_error_nonincreasing_in_rank(self, geometric_psd):
        h = np.random.default_rng(13).standard_normal((20, 4))
        exact = np.linalg.solve(np.eye(20) + geometric_psd, h)
        errors = []
        for r in range(1, 13):
            eig = top_r_eigs(lambda x: geometric_psd @ x, 20, r, tol=1e-11, max_iter=3000)
            errors.append(np.linalg.norm(exact - woodbury_apply(assemble_factor(eig), h)))
        for prev, cur in zip(errors, errors[1:]):
            assert cur <= prev + 1e-9
        assert errors[-1] < errors[0]
