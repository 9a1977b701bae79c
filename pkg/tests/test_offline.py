import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dtmrom.config import RunConfig
from dtmrom.errors import TrainingError
from dtmrom.fe import Extension, inner_product_assemble
from dtmrom.offline import (Trainer, eim_greedy, eq_linear, full_model, linear_eq_blocks, nonlinear_eq_blocks,
                            orthonormalize, pod, rom_field)
from dtmrom.online import Regressor, train_alpha_regressor
from dtmrom.problems import airfoil_problem, burgers_problem


@pytest.fixture(scope="module")
def small_airfoil():
    pr = airfoil_problem(p=1, n_af=12, near_area=0.05, far_area=1.0)
    tr = Trainer(pr, RunConfig(problem="laplace-airfoil", n_train=12, n_test=4, seed=3))
    return pr, tr


@pytest.fixture(scope="module")
def small_burgers():
    pr = burgers_problem(nx=30, ny=8, p=1)
    tr = Trainer(pr, RunConfig(problem="burgers-bump", n_train=6, n_train_eq=2, n_test=3, seed=5))
    return pr, tr


# ---------------------------------------------------------------- POD


def spd(n, rng):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def test_pod_single_snapshot(rng):
    X = spd(6, rng)
    s = rng.standard_normal(6)
    b = pod(s, X, tol_pod=0.3)
    assert b.N == 1
    assert np.allclose(b.Z[:, 0], s / np.sqrt(s @ X @ s), atol=1e-12) or \
        np.allclose(b.Z[:, 0], -s / np.sqrt(s @ X @ s), atol=1e-12)


def test_pod_identical_snapshots(rng):
    s = rng.standard_normal(5)
    b = pod(np.column_stack([s, s]), np.eye(5), tol_pod=0.0)
    assert b.N == 1
    assert np.allclose(b.eigenvalues, [2 * s @ s, 0.0], atol=1e-12)


def test_pod_full_rank_reprojection(rng):
    X = spd(12, rng)
    S = rng.standard_normal((12, 5))
    Z = pod(S, X, tol_pod=0.0).Z
    assert Z.shape[1] == 5
    assert np.allclose(Z.T @ X @ Z, np.eye(5), atol=1e-10)
    proj = Z @ (Z.T @ X @ S)
    assert np.max(np.linalg.norm(proj - S, axis=0) / np.linalg.norm(S, axis=0)) < 1e-10


def test_pod_all_zero_raises():
    with pytest.raises(TrainingError):
        pod(np.zeros((4, 3)), np.eye(4), 0.1)


@given(st.integers(2, 8), st.floats(1e-6, 0.5), st.integers(0, 10_000))
def test_pod_energy_and_orthonormality(k, tol, seed):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((15, k)) * np.logspace(0, -3, k)
    X = spd(15, rng)
    b = pod(S, X, tol_pod=tol)
    lam = b.eigenvalues
    assert lam[: b.N].sum() >= (1 - tol) * lam.sum() * (1 - 1e-12)
    if b.N > 1:
        assert lam[: b.N - 1].sum() < (1 - tol) * lam.sum()
    assert np.allclose(b.Z.T @ X @ b.Z, np.eye(b.N), atol=1e-10)


def test_orthonormalize_drops_dependent_columns(rng):
    v = rng.standard_normal((7, 2))
    V = np.column_stack([v, v[:, 0] + 2 * v[:, 1]])
    assert orthonormalize(V, np.eye(7)).shape[1] == 2


# ---------------------------------------------------------------- EIM


def test_eim_unit_vector():
    I, H = eim_greedy(np.eye(5)[:, [2]])
    assert I.tolist() == [2]
    assert np.allclose(H[:, 0], np.eye(5)[2])


def test_eim_coordinate_vectors():
    I, _ = eim_greedy(np.eye(6)[:, [4, 1, 3]])
    assert sorted(I.tolist()) == [1, 3, 4]


@given(arrays(float, (8, 3), elements=st.floats(-1, 1)))
def test_eim_reconstruction_property(Xi):
    if np.linalg.matrix_rank(Xi, tol=1e-3) < 3:
        return
    try:
        I, H = eim_greedy(Xi)
    except TrainingError:
        return
    assert len(set(I.tolist())) == 3
    assert np.allclose(H @ Xi[I], Xi, atol=1e-9)


def test_eim_degenerate_raises():
    v = np.arange(1.0, 6.0)
    with pytest.raises(TrainingError):
        eim_greedy(np.column_stack([v, 2 * v]))


def test_lifting_on_airfoil(small_airfoil):
    pr, tr = small_airfoil
    lift = tr.lifting()
    assert lift.M == lift.I_ei.size == np.unique(lift.I_ei).size
    dir_idx = pr.dirichlet.indices
    assert np.allclose(lift.W[dir_idx], lift.H, atol=1e-12)
    model = full_model(pr, tr.basis(2), lifting=lift)
    mu = tr.test_mus[0]
    e = lift.W @ model.eim_values(mu)
    h = pr.dirichlet_values(mu)
    assert np.allclose(e[dir_idx][lift.I_ei], h[lift.I_ei], atol=1e-12)


def test_lifted_snapshots_vanish_on_dirichlet(small_airfoil):
    pr, tr = small_airfoil
    tr._snapshots()
    lifted = tr._cache["lifted"]
    assert np.abs(lifted[pr.dirichlet.indices]).max() <= 1e-10 * np.abs(tr._cache["S"]).max()
    Z = tr.basis(4)
    assert np.all(Z[pr.dirichlet.indices] == 0.0)


def test_parameter_independent_datum_gives_one_term(small_airfoil):
    from dtmrom.fe import dirichlet_product
    from dtmrom.offline import build_lifting

    pr, tr = small_airfoil
    tr._snapshots()
    h = pr.dirichlet_values(pr.mu_bar)
    B = np.column_stack([h, 2 * h, -h])
    Dg = dirichlet_product(pr.mesh, pr.dirichlet, pr.dirichlet_tags, pr.n_eq)
    assert build_lifting(B, Dg, tr._cache["ext"], 1e-14).M == 1


# ---------------------------------------------------------------- EQ


def test_linear_eq_all_ones_is_exact(small_airfoil):
    pr, tr = small_airfoil
    model = tr.hf_model(3)
    blocks = linear_eq_blocks(model, tr.train_mus[:4])
    G = np.vstack([tr.volumes[None, :]] + blocks)
    b = np.zeros(G.shape[0])
    b[0] = tr.omega
    assert np.linalg.norm(G @ np.ones(G.shape[1]) - b) <= 1e-12 * max(1.0, np.linalg.norm(b))


def test_linear_eq_feasibility(small_airfoil):
    pr, tr = small_airfoil
    model = tr.hf_model(3)
    tol = 1e-8
    rho = eq_linear(model, tr.train_mus, tr.volumes, tol)
    assert np.all(rho.values > 0)
    assert abs(rho.values @ tr.volumes[rho.indices] - tr.omega) <= tol * tr.omega
    assert rho.support_size < pr.mesh.n_elements


def test_nonlinear_eq_rows_and_all_ones(small_burgers):
    pr, tr = small_burgers
    model = tr.hf_model(2)
    mus = tr.train_mus[:3]
    alphas = tr.train_alphas(model.Z_full)[:3]
    blocks = nonlinear_eq_blocks(model, mus, alphas)
    assert all(b.shape == (model.Y_un.shape[-1], pr.mesh.n_elements) for b in blocks)
    G = np.vstack([tr.volumes[None, :]] + blocks)
    rhs = np.concatenate([[tr.omega]] + [b.sum(axis=1) for b in blocks])
    assert np.linalg.norm(G.sum(axis=1) - rhs) <= 1e-12 * np.linalg.norm(rhs)
    # extra EQ parameters only add rows
    more = nonlinear_eq_blocks(model, tr.train_mus[:4], tr.train_alphas(model.Z_full)[:4])
    assert sum(b.shape[0] for b in more) > sum(b.shape[0] for b in blocks)


# ---------------------------------------------------------------- test space and LSPG


def test_test_space_orthonormal(small_burgers):
    pr, tr = small_burgers
    Y = tr.test_space(2, 4)
    X = tr.ip.matrix
    assert np.allclose(Y.T @ X @ Y, np.eye(4), atol=1e-10)


def test_lspg_with_trial_test_equals_galerkin(small_airfoil):
    pr, tr = small_airfoil
    Z = tr.basis(4)
    lift = tr.lifting()
    gal = full_model(pr, Z, lifting=lift)
    ls = full_model(pr, Z, lifting=lift, Y=Z)
    for mu in tr.test_mus[:2]:
        a_g = gal.galerkin(mu)
        a_l, _, conv, _ = ls.lspg(mu, np.zeros(Z.shape[1]))
        assert conv
        assert np.linalg.norm(a_l - a_g) <= 1e-10 * max(1.0, np.linalg.norm(a_g))


def test_lspg_galerkin_3x3_toy():
    # for SPD A and Y = Z the normal equations reduce to Galerkin's
    rng = np.random.default_rng(7)
    A = spd(3, rng)
    f = rng.standard_normal(3)
    Z = np.linalg.qr(rng.standard_normal((3, 2)))[0]
    a_g = np.linalg.solve(Z.T @ A @ Z, Z.T @ f)
    Jh = Z.T @ A @ Z
    a_l = np.linalg.lstsq(Jh, Z.T @ f, rcond=None)[0]
    assert np.allclose(a_g, a_l, atol=1e-12)


def test_reduced_jacobian_matches_finite_differences(small_burgers):
    pr, tr = small_burgers
    model = tr.hf_model(3)
    mu = tr.test_mus[0]
    alpha = tr.train_alphas(model.Z_full)[0] + 0.05
    R0, Jh = model.assemble(mu, alpha)
    h = 1e-6 * max(1.0, np.linalg.norm(alpha))
    fd = np.column_stack([(model.assemble(mu, alpha + h * e)[0] - model.assemble(mu, alpha - h * e)[0]) / (2 * h)
                          for e in np.eye(alpha.size)])
    assert np.linalg.norm(fd - Jh) <= 1e-6 * np.linalg.norm(Jh)


def test_snapshot_reproduction_burgers(small_burgers):
    pr, tr = small_burgers
    tr._snapshots()
    model = tr.hf_model(tol_pod=0.0)
    X = tr.ip.matrix
    for k in range(2):
        mu, u = tr.train_mus[k], tr._cache["S"][:, k]
        a, _, conv, _ = model.lspg(mu)
        d = u - rom_field(pr, model, mu, a)
        assert conv and np.sqrt(d @ X @ d / (u @ X @ u)) < 1e-8


# ---------------------------------------------------------------- regressor


def test_regressor_one_parameter():
    reg = train_alpha_regressor(np.array([[0.0], [1.0], [3.0]]), np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 4.0]]),
                                np.array([[0.0, 3.0]]))
    assert np.allclose(reg([1.0]), [2, 3], atol=1e-12)
    assert np.allclose(reg([0.5]), [1, 2], atol=1e-12)
    assert np.allclose(reg([-5.0]), [0, 1]) and np.allclose(reg([9.0]), [4, 4])


def test_regressor_several_parameters(rng):
    box = np.array([[0.0, 1.0], [10.0, 20.0], [-1.0, 1.0]])
    mus = box[:, 0] + rng.random((9, 3)) * (box[:, 1] - box[:, 0])
    alphas = rng.standard_normal((9, 4))
    reg = Regressor(mus, alphas, box)
    for m, a in zip(mus, alphas):
        assert np.allclose(reg(m), a, atol=1e-12)
    for corner in [box[:, 0], box[:, 1]]:
        out = reg(corner)
        assert np.all(np.isfinite(out))
        assert np.all(out <= alphas.max(axis=0) + 1e-12) and np.all(out >= alphas.min(axis=0) - 1e-12)


def test_extension_is_orthogonal(small_airfoil):
    pr, tr = small_airfoil
    ip = inner_product_assemble(pr.mesh, "h1")
    ext = Extension(ip, pr.dirichlet)
    h = pr.dirichlet_values(tr.train_mus[0])
    w = ext(h)
    assert np.allclose(w[pr.dirichlet.indices], h)
    inn = pr.dirichlet.interior
    assert np.abs((ip.matrix @ w)[inn]).max() <= 1e-10 * np.abs(ip.matrix @ w).max()
