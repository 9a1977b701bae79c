"""End-to-end acceptance checks; the summary prints one PASS/FAIL line per criterion."""

import time

import numpy as np
import pytest

from dtmrom.bundle import bundle_bytes, model_from_bundle, parse_bundle
from dtmrom.config import RunConfig
from dtmrom.fe import inner_product_assemble
from dtmrom.linalg import nnls
from dtmrom.mesh import (build_reference_element, format_mesh, parse_mesh, rectangle_mesh, scatter_accumulate,
                         unassemble)
from dtmrom.offline import Trainer, eim_greedy, full_model, pod, rom_field
from dtmrom.problems import airfoil_problem, burgers_problem
from dtmrom.quadrature import MAX_DEGREE, gauss_rule
from dtmrom.studies import (_hf_dual_residual, _ip_norm, bound_check, convergence_study_1d, equivalence_check,
                            equivalence_check_1d, run_benchmark)

AIRFOIL_NS = (1, 2, 3, 4, 5, 6)
BURGERS_NS = (2, 4, 6, 8, 10)
TOL_EQ = 1e-10


def criterion(n):
    return pytest.mark.criterion(n)


class Timed:
    def __init__(self):
        self.seconds = 0.0

    def __enter__(self):
        self._t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds += time.perf_counter() - self._t


@pytest.fixture(scope="session")
def airfoil():
    with Timed() as t:
        cfg = RunConfig(problem="laplace-airfoil")
        tr = Trainer(airfoil_problem(), cfg)
        rep = run_benchmark(tr, AIRFOIL_NS, (TOL_EQ,), (cfg.tol_eq_r,), scatter_N=6)
    return tr, rep, t


@pytest.fixture(scope="session")
def burgers():
    with Timed() as t:
        cfg = RunConfig(problem="burgers-bump")
        tr = Trainer(burgers_problem(), cfg)
        rep = run_benchmark(tr, BURGERS_NS, (TOL_EQ,), (cfg.tol_eq_r,), scatter_N=max(BURGERS_NS))
    return tr, rep, t


# ---------------------------------------------------------------- 1 and 2


@criterion(1)
def test_1d_convergence():
    t0 = time.perf_counter()
    table = convergence_study_1d()
    elapsed = time.perf_counter() - t0
    s = table.slopes
    print(f"slopes {s}; {elapsed:.2f} s")
    assert abs(s["sub-P1P3-DtM"] - 4.0) <= 0.3
    assert s["P3-MtD"] <= s["sub-P1P3-DtM"] - 1.0
    iso, sub = np.array(table.errors["iso-P3-DtM"]), np.array(table.errors["sub-P1P3-DtM"])
    assert np.all(iso >= sub)
    assert elapsed < 10.0


@criterion(2)
def test_dtm_mtd_equivalence_affine():
    t0 = time.perf_counter()
    A = np.array([[1.3, 0.4], [-0.2, 0.8]])
    b = np.array([0.5, -1.0])
    gaps = [equivalence_check(p=p, A=A, b=b) for p in (1, 2, 3)]
    gaps.append(equivalence_check_1d())
    elapsed = time.perf_counter() - t0
    print(f"gaps {gaps}; {elapsed:.2f} s")
    assert max(gaps) <= 1e-12
    assert elapsed < 5.0


# ---------------------------------------------------------------- 3


@criterion(3)
@pytest.mark.parametrize("bench", ["airfoil", "burgers"])
def test_eq_constant_function(bench, request):
    tr, rep, _ = request.getfixturevalue(bench)
    for row in rep.rows:
        # |Omega| <= ||b||, so this is at least as strict as the stated bound
        assert row.const_gap <= row.tol_eq * tr.omega, (row.N, row.const_gap)
    ones = np.ones(tr.problem.mesh.n_elements)
    assert abs(ones @ tr.volumes - tr.omega) <= 1e-12 * tr.omega


@criterion(3)
def test_eq_all_ones_reproduces_constraints(airfoil, burgers):
    from dtmrom.offline import linear_eq_blocks, nonlinear_eq_blocks

    tr, _, _ = airfoil
    m = tr.hf_model(2)
    G = np.vstack([tr.volumes[None, :]] + linear_eq_blocks(m, tr.train_mus[:5]))
    b = np.zeros(G.shape[0])
    b[0] = tr.omega
    assert np.linalg.norm(G.sum(axis=1) - b) <= 1e-12 * np.linalg.norm(b)
    tr, _, _ = burgers
    m = tr.hf_model(2)
    blocks = nonlinear_eq_blocks(m, tr.train_mus[:3], tr.train_alphas(m.Z_full)[:3])
    G = np.vstack([tr.volumes[None, :]] + blocks)
    b = np.concatenate([[tr.omega]] + [blk.sum(axis=1) for blk in blocks])
    assert np.linalg.norm(G.sum(axis=1) - b) <= 1e-12 * np.linalg.norm(b)


# ---------------------------------------------------------------- 4


@criterion(4)
def test_airfoil_benchmark(airfoil):
    tr, rep, t = airfoil
    n_e = tr.problem.mesh.n_elements
    M = tr.lifting().M
    rows = {r.N: r for r in rep.rows}
    for r in rep.rows:
        print(f"N={r.N} Q={r.Q} ({r.Q_percent:.2f}%) E={r.E_avg:.3e} E_hfq={r.E_avg_hfq:.3e} "
              f"J_r={r.J_r} Q_r={r.Q_r} spearman={r.spearman:.3f}")
    print(f"N_e={n_e} M={M} wall={t.seconds:.1f} s")
    assert 1500 <= n_e <= 3000 and tr.cfg.n_train == 50
    assert 15 <= M <= 30
    for N in (2, 4, 6):
        r = rows[N]
        assert r.E_avg <= 5 * r.E_avg_hfq and r.E_avg_hfq <= 5 * r.E_avg
    assert all(rows[N].Q <= 0.05 * n_e for N in AIRFOIL_NS)
    Qs = [rows[N].Q for N in AIRFOIL_NS]
    assert all(a <= b for a, b in zip(Qs, Qs[1:])), Qs
    assert t.seconds < 600


# ---------------------------------------------------------------- 5


@criterion(5)
def test_burgers_snapshot_reproduction(burgers):
    tr, _, t = burgers
    with t:
        pr = tr.problem
        model = tr.hf_model(tol_pod=0.0)
        X = tr.ip.matrix
        errs = []
        for k in (0, 7, 23):
            mu, u = tr.train_mus[k], tr._cache["S"][:, k]
            a, _, conv, _ = model.lspg(mu, np.zeros(model.N))
            assert conv
            d = u - rom_field(pr, model, mu, a)
            errs.append(_ip_norm(X, d) / _ip_norm(X, u))
    print(f"N={model.N} reproduction errors {errs}")
    assert max(errs) < 1e-8


@criterion(5)
def test_burgers_sampled_fraction(burgers):
    tr, rep, t = burgers
    n_e = tr.problem.mesh.n_elements
    for r in rep.rows:
        print(f"N={r.N} Q={r.Q} ({r.Q_percent:.2f}%) E={r.E_avg:.3e} E_hfq={r.E_avg_hfq:.3e} "
              f"J_r={r.J_r} Q_r={r.Q_r} spearman={r.spearman:.3f}")
    print(f"N_e={n_e} wall={t.seconds:.1f} s")
    assert all(r.Q < 0.02 * n_e for r in rep.rows)
    assert t.seconds < 900


@criterion(5)
def test_lspg_equals_galerkin_on_spd_surrogate(airfoil):
    tr, _, _ = airfoil
    pr = tr.problem
    Z = tr.basis(6)
    gal = full_model(pr, Z, lifting=tr.lifting())
    ls = full_model(pr, Z, lifting=tr.lifting(), Y=Z)
    for mu in tr.test_mus[:3]:
        a_g = gal.galerkin(mu)
        a_l, _, conv, _ = ls.lspg(mu, np.zeros(Z.shape[1]))
        assert conv
        assert np.linalg.norm(a_l - a_g) <= 1e-10 * max(1.0, np.linalg.norm(a_g))


@criterion(5)
def test_reduced_jacobian_finite_differences(burgers):
    tr, _, _ = burgers
    m = model_from_bundle(tr.last["bundle"])
    for mu in tr.test_mus[:2]:
        alpha = m.lspg(mu)[0] + 0.01 * np.arange(1, m.N + 1) / m.N
        _, Jh = m.assemble(mu, alpha)
        h = 1e-6 * max(1.0, np.linalg.norm(alpha))
        fd = np.column_stack([(m.assemble(mu, alpha + h * e)[0] - m.assemble(mu, alpha - h * e)[0]) / (2 * h)
                              for e in np.eye(m.N)])
        assert np.linalg.norm(fd - Jh) <= 1e-6 * np.linalg.norm(Jh)


# ---------------------------------------------------------------- 6


@criterion(6)
@pytest.mark.parametrize("bench", ["airfoil", "burgers"])
def test_estimator_bound(bench, request):
    tr, rep, _ = request.getfixturevalue(bench)
    assert len(rep.bound) == 20
    worst = max(tb.lhs - tb.rhs for tb in rep.bound)
    print(f"{bench}: worst lhs - rhs = {worst:.3e}")
    assert all(tb.holds for tb in rep.bound)


@criterion(6)
@pytest.mark.parametrize("bench", ["airfoil", "burgers"])
def test_estimator_rank_correlation(bench, request):
    tr, rep, _ = request.getfixturevalue(bench)
    row = [r for r in rep.rows if r.N == max(x.N for x in rep.rows)][0]
    print(f"{bench}: N={row.N} spearman={row.spearman:.4f} J_r={row.J_r} Q_r={row.Q_r}")
    assert row.spearman > 0.9


@criterion(6)
@pytest.mark.parametrize("kind", ["airfoil", "burgers"])
def test_estimator_vanishes_on_reproduced_solutions(kind):
    if kind == "airfoil":
        pr = airfoil_problem(p=1, n_af=12, near_area=0.05, far_area=1.0)
        cfg = RunConfig(problem="laplace-airfoil", n_train=5, n_test=2, N=None, tol_pod=0.0, seed=2)
    else:
        pr = burgers_problem(nx=30, ny=8, p=1)
        cfg = RunConfig(problem="burgers-bump", n_train=5, n_train_eq=1, n_test=2, N=None, tol_pod=0.0, seed=2)
    tr = Trainer(pr, cfg)
    b = tr.build()
    m = model_from_bundle(b)
    hf = tr.last["model"]
    for mu in tr.train_mus:
        res = m.solve(mu)
        scale, _, _ = _hf_dual_residual(tr, rom_field(pr, hf, mu, np.zeros(m.N)), mu)
        assert res.estimate <= 1e-10 * scale, (res.estimate, scale)


# ---------------------------------------------------------------- 7


class CountingAssembler:
    def __init__(self, asm):
        self.asm = asm
        self.calls = []

    def __call__(self, w_un, coords, data=None, jacobian=True):
        self.calls.append(coords.shape[0])
        return self.asm(w_un, coords, data, jacobian)

    def __getattr__(self, name):
        return getattr(self.asm, name)


@criterion(7)
@pytest.mark.parametrize("bench", ["airfoil", "burgers"])
def test_online_element_touch_bound(bench, request):
    tr, _, _ = request.getfixturevalue(bench)
    b = tr.last["bundle"]
    m = model_from_bundle(b)
    m.asm = CountingAssembler(m.asm)
    for mu in tr.test_mus:
        m.asm.calls.clear()
        res = m.solve(mu)
        calls = m.asm.calls
        # every assembler call is one pass over the primary rule or one over the estimator rule
        assert all(c in (b.Q, b.Q_r) for c in calls)
        assert calls[-1] == b.Q_r and all(c == b.Q for c in calls[:-1])
        passes = len(calls) - 1
        assert res.elements_touched == passes * b.Q + b.Q_r
        assert res.elements_touched <= max(1, passes) * (b.Q + b.Q_r)


@criterion(7)
def test_unit_properties_summary(tmp_path, airfoil):
    rng = np.random.default_rng(0)
    # quadrature exactness to declared degree
    from math import factorial

    for deg in range(MAX_DEGREE + 1):
        q = gauss_rule(2, deg)
        for a in range(deg + 1):
            for c in range(deg + 1 - a):
                exact = factorial(a) * factorial(c) / factorial(a + c + 2)
                assert abs(q.weights @ (q.points[:, 0] ** a * q.points[:, 1] ** c) - exact) < 1e-14
    # Lagrange partition of unity
    for dim in (1, 2):
        for p in (1, 2, 3):
            ref = build_reference_element(dim, p)
            X = rng.random((20, dim))
            if dim == 2:
                X = X[X.sum(1) <= 1]
            assert np.abs(ref.eval(X).sum(axis=1) - 1).max() < 1e-12
    # NNLS examples and KKT conditions
    assert np.allclose(nnls(np.eye(2), [1.0, 2.0]).dense(), [1, 2])
    assert np.allclose(nnls(np.array([[1.0, -1.0]]), [1.0]).dense(), [1, 0])
    assert np.allclose(nnls(np.array([[1.0], [1.0]]), [1.0, -1.0]).dense(), [0])
    for _ in range(10):
        G, rhs = rng.standard_normal((8, 15)), rng.standard_normal(8)
        x = nnls(G, rhs, 1e-14).dense()
        w = G.T @ (rhs - G @ x)
        assert np.all(w <= 1e-8) and np.all(np.abs(w[x > 0]) <= 1e-8)
    # POD energy and orthonormality
    Xm = rng.standard_normal((10, 10))
    Xm = Xm @ Xm.T + 10 * np.eye(10)
    basis = pod(rng.standard_normal((10, 6)) * np.logspace(0, -4, 6), Xm, 1e-6)
    lam = basis.eigenvalues
    assert lam[: basis.N].sum() >= (1 - 1e-6) * lam.sum() * (1 - 1e-12)
    assert np.allclose(basis.Z.T @ Xm @ basis.Z, np.eye(basis.N), atol=1e-10)
    # EIM exact reconstruction
    Xi = rng.standard_normal((8, 3))
    I, H = eim_greedy(Xi)
    assert np.allclose(H @ Xi[I], Xi, atol=1e-12)
    # gather/scatter round trip
    mesh = rectangle_mesh(3, 2, 2)
    v = rng.standard_normal(2 * mesh.n_nodes)
    val = np.tile(np.bincount(mesh.connectivity.ravel(), minlength=mesh.n_nodes), 2)
    assert np.allclose(scatter_accumulate(mesh, unassemble(mesh, v, 2), 2) / val, v, atol=1e-13)
    # bundle and mesh files byte-exact
    tr, _, _ = airfoil
    raw = bundle_bytes(tr.last["bundle"])
    assert bundle_bytes(parse_bundle(raw)) == raw
    text = format_mesh(tr.problem.mesh)
    assert format_mesh(parse_mesh(text)) == text
    # double offline run
    from dtmrom.cli import main
    import json

    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "laplace-airfoil", "n_train": 8, "N": 3, "seed": 9,
                               "mesh": {"p": 1, "n_af": 12, "near_area": 0.05, "far_area": 1.0}}))
    assert main(["offline", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["offline", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
