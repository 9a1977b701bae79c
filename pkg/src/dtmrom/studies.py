"""Reproduction drivers: 1D convergence, DtM/MtD equivalence, benchmarks and the estimator bound."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .fe import (ElementKit, LaplaceAssembler, evaluate, global_assemble, hf_solve_linear,
                 mtd_assemble_1d)
from .geometry import PiecewiseLinearMap1D
from .mesh import Mesh, element_geometry, extract_dirichlet_indices, interval_mesh, lift_triangulation
from .offline import Trainer, rom_field
from .problems import estimator_weight_for, exact_1d
from .quadrature import gauss_rule

log = logging.getLogger(__name__)

CONV_SIZES = (8, 16, 32, 64, 128, 256)


# ---------------------------------------------------------------- 1D convergence


def _source_1d(x):
    return np.sin(np.pi * x[..., 0])


def l2_error_1d(mesh: Mesh, coords_all: np.ndarray, u: np.ndarray, exact, phi=None, n_gauss: int = 12) -> float:
    """L2(Omega) error of a P_p field.

    Without ``phi`` the field lives on the (possibly curved) physical mesh
    ``coords_all``.  With ``phi`` it is a map-then-discretize field on the
    reference mesh and is compared with ``exact o phi`` using the Jacobian
    ``phi'``; the element holding the kink is split there.
    """
    gx, gw = np.polynomial.legendre.leggauss(n_gauss)
    gx, gw = 0.5 * (gx + 1.0), 0.5 * gw
    total = 0.0
    for k in range(mesh.n_elements):
        c = coords_all[mesh.connectivity[k]][None]
        cuts = [0.0, 1.0]
        if phi is not None:
            a, b = c[0, 0, 0], c[0, 1, 0]
            if a < phi.x0 < b:
                cuts = [0.0, (phi.x0 - a) / (b - a), 1.0]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            X = (lo + (hi - lo) * gx)[:, None]
            w = (hi - lo) * gw
            x, _, det = element_geometry(mesh.geom_ref, c, X)
            uh = mesh.ref.eval(X) @ u[mesh.connectivity[k]]
            if phi is None:
                err = uh - exact(x[0, :, 0])
                jac = np.abs(det[0])
            else:
                err = uh - exact(phi(x[0, :, 0]))
                jac = np.abs(det[0]) * phi.derivative(x[0, :, 0])
            total += float(np.sum(w * jac * err**2))
    return float(np.sqrt(total))


def _solve_dtm_1d(n_el: int, p: int, geom_order: int, phi) -> tuple[Mesh, np.ndarray, np.ndarray]:
    mesh = interval_mesh(n_el, p, geom_order=geom_order)
    coords = np.asarray(phi(mesh.nodes[:, 0]))[:, None]
    if geom_order < p:
        # interior nodes follow the straight element spanned by the mapped vertices
        coords = _affine_fill(mesh, coords)
    asm = LaplaceAssembler(ElementKit.for_mesh(mesh), source=_source_1d)
    dirichlet = extract_dirichlet_indices(mesh, ("left", "right"))
    u = hf_solve_linear(mesh, asm, coords, dirichlet, np.zeros(dirichlet.indices.size))
    return mesh, coords, u


def _affine_fill(mesh: Mesh, coords: np.ndarray) -> np.ndarray:
    out = coords.copy()
    x, _, _ = element_geometry(mesh.geom_ref, coords[mesh.connectivity], mesh.ref.nodes)
    out[mesh.connectivity.ravel()] = x.reshape(-1, coords.shape[1])
    return out


def _solve_mtd_1d(n_el: int, p: int, phi) -> tuple[Mesh, np.ndarray]:
    mesh = interval_mesh(n_el, p, geom_order=p)
    A, F = mtd_assemble_1d(mesh, phi, lambda y: np.sin(np.pi * y))
    dirichlet = extract_dirichlet_indices(mesh, ("left", "right"))
    inn = dirichlet.interior
    u = np.zeros(mesh.n_nodes)
    from .linalg import sparse_solve

    u[inn] = sparse_solve(A.tocsr()[inn][:, inn], F[inn])
    return mesh, u


@dataclass
class ConvergenceTable:
    sizes: list
    errors: dict  # method -> list of L2 errors
    slopes: dict = field(default_factory=dict)

    def rows(self):
        for m, errs in self.errors.items():
            for n, e in zip(self.sizes, errs):
                yield {"method": m, "n_elements": n, "l2_error": e}


def fit_slope(sizes, errors, skip_coarsest: bool = True) -> float:
    """Least-squares rate r in err ~ C N_e^-r."""
    h = np.asarray(sizes, float)
    e = np.asarray(errors, float)
    if skip_coarsest:
        h, e = h[1:], e[1:]
    return float(-np.polyfit(np.log(h), np.log(e), 1)[0])


def convergence_study_1d(sizes=CONV_SIZES, phi: PiecewiseLinearMap1D | None = None) -> ConvergenceTable:
    """Iso P3 DtM, subparametric P1-P3 DtM and P3 MtD on a uniform grid that misses the kink."""
    phi = phi or PiecewiseLinearMap1D()
    errs = {"iso-P3-DtM": [], "sub-P1P3-DtM": [], "P3-MtD": []}
    for n in sizes:
        mesh, coords, u = _solve_dtm_1d(n, 3, 3, phi)
        errs["iso-P3-DtM"].append(l2_error_1d(mesh, coords, u, exact_1d))
        mesh, coords, u = _solve_dtm_1d(n, 3, 1, phi)
        errs["sub-P1P3-DtM"].append(l2_error_1d(mesh, coords, u, exact_1d))
        mesh, u = _solve_mtd_1d(n, 3, phi)
        errs["P3-MtD"].append(l2_error_1d(mesh, mesh.nodes, u, exact_1d, phi=phi))
    table = ConvergenceTable(list(sizes), errs)
    table.slopes = {m: fit_slope(sizes, e) for m, e in errs.items()}
    return table


# ---------------------------------------------------------------- Lemma-1 equivalence


def square_mesh(p: int, n: int = 6, seed: int = 0) -> Mesh:
    """Unstructured (jittered Delaunay) P_p mesh of the unit square."""
    from scipy.spatial import Delaunay

    rng = np.random.default_rng(seed)
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inner = (pts > 0).all(1) & (pts < 1).all(1)
    pts[inner] += rng.uniform(-0.3, 0.3, (inner.sum(), 2)) / n
    tri = Delaunay(pts).simplices

    def tag(a, b):
        (x0, y0), (x1, y1) = a, b
        if abs(y0) < 1e-12 and abs(y1) < 1e-12:
            return "bottom"
        if abs(y0 - 1) < 1e-12 and abs(y1 - 1) < 1e-12:
            return "top"
        if abs(x0) < 1e-12 and abs(x1) < 1e-12:
            return "left"
        if abs(x0 - 1) < 1e-12 and abs(x1 - 1) < 1e-12:
            return "right"
        return None

    return lift_triangulation(pts, tri, p, tag)


def _reduced_system(mesh: Mesh, asm, coords, tags):
    dirichlet = extract_dirichlet_indices(mesh, tags)
    r, A = evaluate(mesh, asm, coords, np.zeros(mesh.n_nodes))
    inn = dirichlet.interior
    return A.tocsr()[inn][:, inn].toarray(), -r[inn]


def equivalence_check(mesh: Mesh | None = None, A=None, b=None, p: int = 2, source=None) -> float:
    """Max relative entrywise gap between DtM and MtD Dirichlet-reduced systems for x = A X + b.

    DtM assembles the physical problem on mapped nodes; MtD assembles the
    pulled-back problem (K = det A A^-1 A^-T, load f(Phi) det A) on the
    reference mesh.  Returns max(|dK|)/max|K| and the same for the load.
    """
    mesh = mesh if mesh is not None else square_mesh(p)
    D = mesh.dim
    A = np.eye(D) if A is None else np.asarray(A, float)
    b = np.zeros(D) if b is None else np.asarray(b, float)
    source = source or (lambda x: 1.0 + x[..., 0] ** 2 - 0.5 * x[..., -1])
    kit = ElementKit.for_mesh(mesh)
    tags = sorted(mesh.tags)
    coords = mesh.nodes @ A.T + b
    dtm = LaplaceAssembler(kit, source=source)
    K_d, F_d = _reduced_system(mesh, dtm, coords, tags)
    det = float(np.linalg.det(A))
    Ai = np.linalg.inv(A)
    Kmat = det * Ai @ Ai.T
    mtd = LaplaceAssembler(kit, source=lambda X: source(X @ A.T + b) * det,
                           coefficient=lambda X: np.broadcast_to(Kmat, X.shape[:-1] + (D, D)))
    K_m, F_m = _reduced_system(mesh, mtd, mesh.nodes, tags)
    gap_K = np.max(np.abs(K_d - K_m)) / np.max(np.abs(K_d))
    gap_F = np.max(np.abs(F_d - F_m)) / max(np.max(np.abs(F_d)), 1e-300)
    return float(max(gap_K, gap_F))


def equivalence_check_1d(n_el: int = 8, p: int = 3, phi: PiecewiseLinearMap1D | None = None) -> float:
    """1D piecewise map with x_0 inserted as a mesh node: DtM and MtD systems coincide."""
    phi = phi or PiecewiseLinearMap1D()
    mesh = interval_mesh(n_el, p, breakpoints=[phi.x0])
    kit = ElementKit.for_mesh(mesh)
    coords = np.asarray(phi(mesh.nodes[:, 0]))[:, None]
    K_d, F_d = _reduced_system(mesh, LaplaceAssembler(kit, source=_source_1d), coords, ("left", "right"))
    A, F = mtd_assemble_1d(mesh, phi, lambda y: np.sin(np.pi * y))
    inn = extract_dirichlet_indices(mesh, ("left", "right")).interior
    K_m, F_m = A.tocsr()[inn][:, inn].toarray(), F[inn]
    return float(max(np.max(np.abs(K_d - K_m)) / np.max(np.abs(K_d)),
                     np.max(np.abs(F_d - F_m)) / np.max(np.abs(F_d))))


# ---------------------------------------------------------------- benchmark metrics


@dataclass
class MuMetrics:
    mu: list
    rel_error: float
    hf_dual_residual: float
    estimate: float
    online_time: float
    iterations: int


@dataclass
class BenchmarkRow:
    N: int
    tol_eq: float
    tol_eq_r: float
    Q: int
    Q_r: int
    J_r: int
    N_e: int
    E_avg: float
    E_avg_hfq: float
    E_proj: float
    spearman: float
    mean_online_time: float
    mean_hf_time: float
    const_gap: float = float("nan")  # |sum rho_k |D_k| - |Omega||

    @property
    def Q_percent(self) -> float:
        return 100.0 * self.Q / self.N_e


def _ip_norm(X, v) -> float:
    return float(np.sqrt(max(v @ (X @ v), 0.0)))


def _hf_dual_residual(trainer: Trainer, u, mu) -> tuple[float, np.ndarray, np.ndarray]:
    """Full-order dual norm of the (estimator-weighted) residual, its Riesz representer and the residual."""
    pr = trainer.problem
    R = pr.residual(u, mu, jacobian=False)
    r = np.zeros_like(R)
    inn = pr.dirichlet.interior
    r[inn] = R[inn] * estimator_weight_for(pr.id)(mu)
    psi = trainer._cache["riesz"](r)
    return _ip_norm(trainer.ip.matrix, psi), psi, r


def evaluate_bundle(trainer: Trainer, bundle, hf_model, with_hfq: bool = True) -> tuple[dict, list[MuMetrics]]:
    """Errors of the hyper-reduced model (and of the HF-quadrature ROM) over the test set."""
    from .bundle import model_from_bundle

    pr = trainer.problem
    X = trainer.ip.matrix
    S = trainer.test_solutions()
    rom = model_from_bundle(bundle)
    Z = hf_model.Z_full
    per_mu, e_hfq, e_proj = [], [], []
    for mu, u in zip(trainer.test_mus, S.T):
        nu = _ip_norm(X, u)
        res = rom.solve(mu)
        uh = rom_field(pr, hf_model, mu, res.alpha)
        err = _ip_norm(X, u - uh) / nu
        dual, _, _ = _hf_dual_residual(trainer, uh, mu)
        per_mu.append(MuMetrics(list(map(float, mu)), err, dual, res.estimate, res.wall_time, res.iterations))
        lift = rom_field(pr, hf_model, mu, np.zeros(Z.shape[1]))
        a_proj = Z.T @ (X @ (u - lift))
        e_proj.append(_ip_norm(X, u - lift - Z @ a_proj) / nu)
        if with_hfq:
            a = hf_model.galerkin(mu) if not pr.nonlinear else hf_model.lspg(mu)[0]
            e_hfq.append(_ip_norm(X, u - rom_field(pr, hf_model, mu, a)) / nu)
    errs = np.array([m.rel_error for m in per_mu])
    ests = np.array([m.estimate for m in per_mu])
    rho = spearmanr(ests, errs).statistic if errs.size > 2 and np.ptp(ests) > 0 else float("nan")
    summary = {"E_avg": float(errs.mean()), "E_avg_hfq": float(np.mean(e_hfq)) if e_hfq else float("nan"),
               "E_proj": float(np.mean(e_proj)), "spearman": float(rho),
               "mean_online_time": float(np.mean([m.online_time for m in per_mu]))}
    return summary, per_mu


# ---------------------------------------------------------------- estimator bound


@dataclass
class BoundTerms:
    mu: list
    estimate: float
    hf_dual: float
    term_I: float
    term_II: float
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-10 * max(1.0, self.hf_dual)


def bound_check(trainer: Trainer, mus=None, alphas=None) -> list[BoundTerms]:
    """Check |est - ||psi||| <= (I)/(||psi|| + ||R_hf,r||) + (II) against full-order Riesz solves.

    Uses the estimator and reduced model of the trainer's most recent build.
    """
    from .bundle import model_from_bundle

    last = trainer.last
    est = last["est"]
    rom = model_from_bundle(last["bundle"])
    hf_model = last["model"]
    X = trainer.ip.matrix
    mus = trainer.test_mus if mus is None else mus
    out = []
    for i, mu in enumerate(mus):
        a = rom.solve(mu, with_estimate=False).alpha if alphas is None else alphas[i]
        uh = rom_field(trainer.problem, hf_model, mu, a)
        dual, psi, r = _hf_dual_residual(trainer, uh, mu)
        R_hf = est.eta.T @ r
        R_eq = rom.estimate_vector(mu, a)
        if R_eq.size == 0:
            R_eq = np.zeros_like(R_hf)
        proj = psi - est.eta @ (est.eta.T @ (X @ psi))
        t1 = _ip_norm(X, proj) ** 2
        t2 = float(np.linalg.norm(R_eq - R_hf))
        e = float(np.linalg.norm(R_eq))
        nh = float(np.linalg.norm(R_hf))
        denom = dual + nh
        rhs = (t1 / denom if denom > 0 else 0.0) + t2
        out.append(BoundTerms(list(map(float, mu)), e, dual, t1, t2, abs(e - dual), rhs))
    return out


# ---------------------------------------------------------------- benchmark drivers


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


@dataclass
class BenchmarkReport:
    problem: str
    rows: list = field(default_factory=list)  # BenchmarkRow
    scatter: list = field(default_factory=list)  # MuMetrics of the scatter configuration
    bound: list = field(default_factory=list)  # BoundTerms
    timings: dict = field(default_factory=dict)

    def row(self, N, tol_eq, tol_eq_r=None):
        for r in self.rows:
            if r.N == N and r.tol_eq == tol_eq and (tol_eq_r is None or r.tol_eq_r == tol_eq_r):
                return r
        raise KeyError((N, tol_eq, tol_eq_r))


def run_benchmark(trainer: Trainer, Ns, tol_eqs, tol_eq_rs=(1e-10,), scatter_N: int | None = None,
                  with_bound: bool = True) -> BenchmarkReport:
    """Train and evaluate bundles over (N, tol_eq) and estimator tolerances tol_eq_r.

    The estimator is trained only for the smallest tol_eq; the largest N of
    that sweep feeds the residual-vs-error scatter and the bound check.
    """
    pr = trainer.problem
    rep = BenchmarkReport(pr.id)
    t0 = time.perf_counter()
    trainer.test_solutions()
    rep.timings["hf_snapshots"] = time.perf_counter() - t0
    tol_main = min(tol_eqs)
    scatter_N = max(Ns) if scatter_N is None else scatter_N
    base_tol_r = trainer.cfg.tol_eq_r
    if pr.nonlinear:
        trainer._psi(max(Ns))  # test-space data for the whole sweep at once
    for N in Ns:
        hf_model = trainer.hf_model(N)
        for tol_eq in sorted(tol_eqs, reverse=True):
            rs = tol_eq_rs if tol_eq == tol_main else (None,)
            for tol_r in rs:
                if tol_r is not None:
                    trainer.cfg.tol_eq_r = tol_r
                bundle = trainer.build(N=N, tol_eq=tol_eq, estimator=tol_r is not None, model=hf_model)
                trainer.cfg.tol_eq_r = base_tol_r
                rho = trainer.last["rho"]
                gap = abs(float(rho.values @ trainer.volumes[rho.indices]) - trainer.omega)
                first = tol_r is None or tol_r == tol_eq_rs[0]
                summary, per_mu = evaluate_bundle(trainer, bundle, hf_model, with_hfq=first)
                if not first:
                    prev = rep.row(N, tol_eq, tol_eq_rs[0])
                    summary["E_avg_hfq"] = prev.E_avg_hfq
                rep.rows.append(BenchmarkRow(
                    N, tol_eq, float("nan") if tol_r is None else tol_r, bundle.Q, bundle.Q_r,
                    int(bundle.provenance["J_r"] or 0), pr.mesh.n_elements, summary["E_avg"],
                    summary["E_avg_hfq"], summary["E_proj"], summary["spearman"],
                    summary["mean_online_time"], rep.timings["hf_snapshots"] / max(1, len(trainer.test_mus)), gap))
                if N == scatter_N and tol_r == tol_eq_rs[0]:
                    rep.scatter = per_mu
                    if with_bound:
                        rep.bound = bound_check(trainer)
                log.info("N=%d tol_eq=%g tol_eq_r=%s Q=%d E_avg=%.3e", N, tol_eq, tol_r, bundle.Q, summary["E_avg"])
    rep.timings["total"] = time.perf_counter() - t0
    return rep


def write_conv_csv(table: ConvergenceTable, out_dir) -> Path:
    path = Path(out_dir) / "fig1a.csv"
    _write_csv(path, ["method", "n_elements", "l2_error"],
               ([r["method"], r["n_elements"], r["l2_error"]] for r in table.rows()))
    return path


def write_benchmark_csvs(rep: BenchmarkReport, out_dir) -> list[Path]:
    """Airfoil -> fig4a, fig4b, fig5a, fig5b, fig5c.  Burgers -> fig7a, fig7b, fig8."""
    out = Path(out_dir)
    paths = []
    linear = rep.problem == "laplace-airfoil"
    perf_a, perf_b = ("fig4a.csv", "fig4b.csv") if linear else ("fig7a.csv", "fig7b.csv")
    tol_main = min(r.tol_eq for r in rep.rows)
    first_r = {}
    for r in rep.rows:
        first_r.setdefault((r.N, r.tol_eq), r)
    rows_a = []
    for (N, tol), r in sorted(first_r.items()):
        if tol == tol_main:
            rows_a.append([N, "projection", float("nan"), r.E_proj])
            rows_a.append([N, "hf-quadrature", float("nan"), r.E_avg_hfq])
        rows_a.append([N, "eq", tol, r.E_avg])
    _write_csv(out / perf_a, ["N", "series", "tol_eq", "E_avg"], rows_a)
    _write_csv(out / perf_b, ["N", "tol_eq", "Q", "Q_percent", "speedup_Ne_over_Q"],
               [[N, tol, r.Q, r.Q_percent, r.N_e / max(r.Q, 1)] for (N, tol), r in sorted(first_r.items())])
    paths += [out / perf_a, out / perf_b]
    est_rows = sorted((r for r in rep.rows if r.tol_eq == tol_main and not np.isnan(r.tol_eq_r)),
                      key=lambda r: (r.tol_eq_r, r.N))
    scatter = [[i, m.hf_dual_residual, m.estimate, m.rel_error] for i, m in enumerate(rep.scatter)]
    if linear:
        _write_csv(out / "fig5a.csv", ["N", "tol_eq_r", "J_r"], [[r.N, r.tol_eq_r, r.J_r] for r in est_rows])
        _write_csv(out / "fig5b.csv", ["N", "tol_eq_r", "Q_r", "Q_r_percent"],
                   [[r.N, r.tol_eq_r, r.Q_r, 100.0 * r.Q_r / r.N_e] for r in est_rows])
        _write_csv(out / "fig5c.csv", ["mu_index", "hf_dual_residual", "estimated_residual", "rel_error"], scatter)
        paths += [out / "fig5a.csv", out / "fig5b.csv", out / "fig5c.csv"]
    else:
        rows = [["a", r.N, r.tol_eq_r, r.J_r, ""] for r in est_rows]
        rows += [["b", r.N, r.tol_eq_r, 100.0 * r.Q_r / r.N_e, ""] for r in est_rows]
        rows += [["c", i, s[1], s[2], s[3]] for i, s in enumerate(scatter)]
        _write_csv(out / "fig8.csv", ["panel", "x", "series", "y", "rel_error"], rows)
        paths.append(out / "fig8.csv")
    write_csv_readme(out)
    return paths


CSV_README = """\
# Study outputs

All errors are relative errors in the training inner product (H1 for the
airfoil, block-weighted H1 for Burgers).  Floats are written with repr().

fig1a.csv   method, n_elements, l2_error
            methods: iso-P3-DtM, sub-P1P3-DtM, P3-MtD (1D problem, uniform grid)
fig4a.csv   N, series, tol_eq, E_avg           airfoil; series = projection | hf-quadrature | eq
fig4b.csv   N, tol_eq, Q, Q_percent, speedup_Ne_over_Q   airfoil sampled elements
fig5a.csv   N, tol_eq_r, J_r                   airfoil estimator test-space size
fig5b.csv   N, tol_eq_r, Q_r, Q_r_percent      airfoil estimator sampled elements
fig5c.csv   mu_index, hf_dual_residual, estimated_residual, rel_error   airfoil test set
fig7a.csv   as fig4a for the Burgers benchmark
fig7b.csv   as fig4b for the Burgers benchmark
fig8.csv    panel, x, series, y, rel_error     Burgers estimator
            panel a: x = N, series = tol_eq_r, y = J_r
            panel b: x = N, series = tol_eq_r, y = Q_r percent
            panel c: x = mu_index, series = HF dual residual, y = estimate, rel_error
bound.csv   per test mu: estimate, hf_dual, term_I, term_II, lhs, rhs, holds
"""


def write_csv_readme(out_dir) -> Path:
    path = Path(out_dir) / "README.md"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(CSV_README)
    return path


def write_bound_csv(terms: list[BoundTerms], out_dir, name: str = "bound.csv") -> Path:
    path = Path(out_dir) / name
    _write_csv(path, ["mu_index", "estimate", "hf_dual", "term_I", "term_II", "lhs", "rhs", "holds"],
               [[i, t.estimate, t.hf_dual, t.term_I, t.term_II, t.lhs, t.rhs, int(t.holds)]
                for i, t in enumerate(terms)])
    return path


def airfoil_benchmark(cfg, out_dir, Ns=(1, 2, 3, 4, 5, 6), tol_eqs=(1e-6, 1e-10), tol_eq_rs=(1e-10, 1e-12),
                      trainer: Trainer | None = None) -> BenchmarkReport:
    from .offline import problem_from_config

    trainer = trainer or Trainer(problem_from_config(cfg), cfg)
    rep = run_benchmark(trainer, Ns, tol_eqs, tol_eq_rs)
    write_benchmark_csvs(rep, out_dir)
    write_bound_csv(rep.bound, out_dir, "bound_airfoil.csv")
    return rep


def burgers_benchmark(cfg, out_dir, Ns=(2, 4, 6, 8, 10), tol_eqs=(1e-6, 1e-10), tol_eq_rs=(1e-10,),
                      trainer: Trainer | None = None) -> BenchmarkReport:
    from .offline import problem_from_config

    trainer = trainer or Trainer(problem_from_config(cfg), cfg)
    rep = run_benchmark(trainer, Ns, tol_eqs, tol_eq_rs)
    write_benchmark_csvs(rep, out_dir)
    write_bound_csv(rep.bound, out_dir, "bound_burgers.csv")
    return rep


def conv1d(out_dir, sizes=CONV_SIZES) -> ConvergenceTable:
    table = convergence_study_1d(sizes)
    write_conv_csv(table, out_dir)
    write_csv_readme(out_dir)
    return table


def report_dict(rep: BenchmarkReport) -> dict:
    return {"problem": rep.problem, "rows": [asdict(r) for r in rep.rows], "timings": rep.timings}
