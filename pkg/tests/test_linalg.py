import numpy as np
import pytest
import scipy.optimize
import scipy.sparse as sp
from hypothesis import given, strategies as st

from dtmrom.errors import ConfigurationError
from dtmrom.linalg import dense_lstsq, nnls, nnls_signed, sparse_solve, sym_eig


def test_nnls_examples():
    assert np.allclose(nnls(np.eye(2), [1.0, 2.0]).dense(), [1, 2])
    assert np.allclose(nnls(np.array([[1.0, -1.0]]), [1.0]).dense(), [1, 0])
    assert np.allclose(nnls(np.array([[1.0], [1.0]]), [1.0, -1.0]).dense(), [0])
    assert nnls(np.eye(3), np.zeros(3)).support_size == 0


@given(st.integers(0, 2**31 - 1), st.integers(2, 12), st.integers(2, 25))
def test_nnls_kkt_conditions(seed, m, n):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    x = nnls(G, b, tol=1e-14).dense()
    r = b - G @ x
    w = G.T @ r
    scale = max(1.0, np.abs(G).max() * np.linalg.norm(b))
    assert np.all(x >= 0)
    assert np.all(w <= 1e-8 * scale)  # dual feasibility
    assert np.all(np.abs(w[x > 0]) <= 1e-8 * scale)  # complementary slackness
    # scipy's reported rnorm is unreliable in some releases; recompute it from its x
    ref, _ = scipy.optimize.nnls(G, b)
    assert np.linalg.norm(r) <= np.linalg.norm(b - G @ ref) + 1e-8 * scale


@given(st.integers(0, 2**31 - 1))
def test_nnls_early_exit_feasible_weights(seed):
    rng = np.random.default_rng(seed)
    G = rng.random((6, 40))
    b = G @ np.ones(40)
    sol = nnls(G, b, tol=1e-10)
    assert np.linalg.norm(G @ sol.dense() - b) <= 1e-10 * np.linalg.norm(b)
    assert sol.support_size <= 6


def test_nnls_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        nnls(np.eye(2), [1.0, np.nan])
    with pytest.raises(ConfigurationError):
        nnls(np.eye(2), [1.0, 2.0, 3.0])
    with pytest.raises(ConfigurationError):
        nnls(np.eye(2), [1.0, 2.0], tol=0.0)


def test_nnls_signed():
    G = np.array([[1.0, 0.0], [0.0, 1.0]])
    s = nnls_signed(G, np.array([-2.0, 0.0]))
    assert np.allclose(s.dense(), [-2, 0]) and s.support_size == 1
    assert nnls_signed(G, np.zeros(2)).support_size == 0
    rng = np.random.default_rng(0)
    G = rng.standard_normal((5, 30))
    b = rng.standard_normal(5)
    s = nnls_signed(G, b, 1e-10)
    assert np.linalg.norm(G @ s.dense() - b) <= 1e-10 * np.linalg.norm(b)


def test_sym_eig():
    lam, _ = sym_eig(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(lam, [3, 2, 1])
    lam, _ = sym_eig(np.ones((2, 2)))
    assert np.allclose(lam, [2, 0])
    A = np.random.default_rng(3).standard_normal((5, 5))
    C = A @ A.T + np.eye(5)
    lam, V = sym_eig(C)
    assert np.allclose(V @ np.diag(lam) @ V.T, C, atol=1e-10)
    with pytest.raises(ConfigurationError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_solves():
    b = np.arange(1.0, 5.0)
    assert np.allclose(sparse_solve(sp.identity(4), b), b)
    n = 9
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    e1 = np.zeros(n)
    e1[0] = 1
    i = np.arange(1, n + 1)
    assert np.allclose(sparse_solve(T, e1), (n + 1 - i) / (n + 1))  # first column of the inverse
    A = np.random.default_rng(1).standard_normal((8, 3))
    x = np.array([1.0, -2.0, 0.5])
    assert np.allclose(dense_lstsq(A, A @ x), x)
