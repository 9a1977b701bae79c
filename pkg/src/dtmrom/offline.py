"""Offline training: snapshots, POD, EIM lifting, empirical quadrature, test spaces, estimator."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NonconvergenceError, SolverError, TrainingError
from .fe import (Extension, InnerProduct, RieszSolver, block_weights, dirichlet_product, element_volumes,
                 inner_product_assemble)
from .linalg import SparseNonnegVector, nnls, nnls_signed, sym_eig
from .mesh import unassemble
from .online import QuadratureRule, ReducedModel, Regressor
from .problems import ProblemSpec, estimator_weight_for

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- POD


@dataclass(eq=False)
class ReducedBasis:
    Z: np.ndarray  # (n_dof, N)
    eigenvalues: np.ndarray

    @property
    def N(self) -> int:
        return self.Z.shape[1]


def _matrix(ip):
    return ip.matrix if isinstance(ip, InnerProduct) else ip


def orthonormalize(V: np.ndarray, X, drop_tol: float = 1e-12) -> np.ndarray:
    """Twice-applied modified Gram-Schmidt in the X inner product."""
    X = _matrix(X)
    out = []
    for v in V.T:
        v = v.astype(float).copy()
        n0 = np.sqrt(max(v @ (X @ v), 0.0))
        for _ in range(2):
            for q in out:
                v -= (q @ (X @ v)) * q
        nv = np.sqrt(max(v @ (X @ v), 0.0))
        if n0 == 0 or nv <= drop_tol * n0:
            continue
        out.append(v / nv)
    return np.column_stack(out) if out else np.zeros((V.shape[0], 0))


def pod(snapshots, ip, tol_pod: float | None = None, N: int | None = None) -> ReducedBasis:
    """Method of snapshots; N is the smallest N' whose retained energy is >= (1 - tol_pod)."""
    S = np.asarray(snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    X = _matrix(ip)
    C = S.T @ (X @ S)
    lam, V = sym_eig(C)
    lam = np.maximum(lam, 0.0)
    total = lam.sum()
    if S.shape[1] == 0 or total <= 0:
        raise TrainingError("POD of all-zero snapshots", stage="pod")
    if N is None:
        tol = 0.0 if tol_pod is None else float(tol_pod)
        energy = np.cumsum(lam)
        N = int(np.searchsorted(energy, (1.0 - tol) * total * (1 - 1e-15)) + 1)
    N = max(1, min(int(N), S.shape[1]))
    pos = lam[:N] > 0
    modes = S @ V[:, :N]
    scale = np.where(pos, 1.0 / np.sqrt(np.where(pos, lam[:N], 1.0)), 0.0)
    Z = orthonormalize(modes * scale, X)
    if Z.shape[1] < N and tol_pod is not None:
        log.info("POD: %d of %d modes numerically independent", Z.shape[1], N)
    return ReducedBasis(Z, lam)


# ---------------------------------------------------------------- EIM


def eim_greedy(Xi: np.ndarray):
    """Greedy interpolation indices and H = Xi (Xi[I, :])^-1."""
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    M = Xi.shape[1]
    idx: list[int] = []
    for m in range(M):
        xi = Xi[:, m]
        if m == 0:
            r = xi
        else:
            c = np.linalg.solve(Xi[idx, :m], xi[idx])
            r = xi - Xi[:, :m] @ c
        i = int(np.argmax(np.abs(r)))
        if np.abs(r[i]) <= 1e-14 * max(1.0, np.abs(xi).max()):
            raise TrainingError(f"EIM: basis column {m + 1} is degenerate", stage="eim")
        idx.append(i)
    I = np.array(idx, dtype=np.int64)
    H = np.linalg.solve(Xi[I, :].T, Xi.T).T
    return I, H


@dataclass(eq=False)
class LiftingData:
    I_ei: np.ndarray  # positions within I_dir
    H: np.ndarray  # (M_hf, M)
    W: np.ndarray  # (n_dof, M)
    eigenvalues: np.ndarray

    @property
    def M(self) -> int:
        return self.I_ei.size


def build_lifting(boundary_snapshots: np.ndarray, boundary_gram: np.ndarray, extension: Extension,
                  tol_eim: float) -> LiftingData:
    basis = pod(boundary_snapshots, boundary_gram, tol_eim)
    I, H = eim_greedy(basis.Z)
    return LiftingData(I, H, extension(H), basis.eigenvalues)


# ---------------------------------------------------------------- training set


@dataclass(eq=False)
class TrainingSet:
    mus: np.ndarray
    snapshots: np.ndarray  # (n_dof, n)
    lifted: np.ndarray
    boundary: np.ndarray | None = None  # (M_hf, n)
    eq_mus: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    eq_snapshots: np.ndarray | None = None


def hf_snapshots(problem: ProblemSpec, mus, u0=None) -> np.ndarray:
    out = []
    for mu in mus:
        out.append(problem.solve(mu, u0))
    return np.column_stack(out) if out else np.zeros((problem.n_dof, 0))


# ---------------------------------------------------------------- EQ


def constant_row(problem: ProblemSpec) -> tuple[np.ndarray, float]:
    vol = element_volumes(problem.mesh)
    return vol, float(vol.sum())


def eq_solve(G, b, tol, signed=False):
    return nnls_signed(G, b, tol) if signed else nnls(G, b, tol)


def linear_eq_blocks(model: ReducedModel, mus, N: int | None = None) -> list[np.ndarray]:
    """Per mu: (A_hat)^-1 [A_hat_k alpha_hf - F_hat_k]_k with HF quadrature (N x N_e)."""
    blocks = []
    Zall = model.Z_un
    N = Zall.shape[-1] if N is None else N
    pos = np.arange(Zall.shape[0])
    for mu in mus:
        R, J = model.local(mu, np.zeros(Zall.shape[-1]), pos)
        nl = Zall.shape[1] * Zall.shape[2]
        Z = Zall[..., :N].reshape(pos.size, nl, N)
        Jf = J.reshape(pos.size, nl, nl)
        Ak = np.einsum("kin,kij,kjm->knm", Z, Jf, Z)
        Fk = -np.einsum("kin,ki->kn", Z, R.reshape(pos.size, nl))
        A = Ak.sum(axis=0)
        try:
            a = np.linalg.solve(A, Fk.sum(axis=0))
            blocks.append(np.linalg.solve(A, (np.einsum("knm,m->kn", Ak, a) - Fk).T))
        except np.linalg.LinAlgError as exc:
            raise TrainingError(f"singular HF reduced matrix: {exc}", stage="eq", mu=mu) from exc
    return blocks


def eq_linear(model: ReducedModel, mus, volumes: np.ndarray, tol_eq: float, N: int | None = None,
              blocks=None) -> SparseNonnegVector:
    blocks = linear_eq_blocks(model, mus, N) if blocks is None else blocks
    G = np.vstack([volumes[None, :]] + list(blocks))
    b = np.zeros(G.shape[0])
    b[0] = volumes.sum()
    return nnls(G, b, tol_eq)


def nonlinear_eq_blocks(model: ReducedModel, mus, alphas) -> list[np.ndarray]:
    """Per mu: element contributions Y_k^T R_k(alpha) (J x N_e)."""
    pos = np.arange(model.Z_un.shape[0])
    out = []
    for mu, a in zip(mus, alphas):
        R, _ = model.local(mu, a, pos, jacobian=False)
        Y = model.Y_un
        nl = Y.shape[1] * Y.shape[2]
        out.append(np.einsum("kij,ki->jk", Y.reshape(pos.size, nl, -1), R.reshape(pos.size, nl)))
    return out


def eq_nonlinear(model: ReducedModel, mus, alphas, volumes, tol_eq, blocks=None) -> SparseNonnegVector:
    blocks = nonlinear_eq_blocks(model, mus, alphas) if blocks is None else blocks
    G = np.vstack([volumes[None, :]] + list(blocks))
    b = np.concatenate([[volumes.sum()]] + [blk.sum(axis=1) for blk in blocks])
    return nnls(G, b, tol_eq)


# ---------------------------------------------------------------- test space


def empirical_test_space(jacobians, Z: np.ndarray, riesz: RieszSolver, ip, J: int) -> np.ndarray:
    """POD of Riesz representers of J^hf zeta_n; first J modes."""
    psi = []
    for Jac in jacobians:
        psi.append(riesz(Jac @ Z))
    Psi = np.hstack(psi)
    basis = pod(Psi, ip, N=J)
    return basis.Z


# ---------------------------------------------------------------- estimator


@dataclass(eq=False)
class ResidualEstimatorData:
    eta: np.ndarray  # (n_dof, J_r)
    weights: object  # SparseNonnegVector or SparseSignedVector
    eigenvalues: np.ndarray
    block_scale: np.ndarray

    @property
    def J_r(self) -> int:
        return self.eta.shape[1]


def residual_estimator_offline(problem: ProblemSpec, model: ReducedModel, mus, riesz: RieszSolver, ip,
                               volumes, tol_es: float, tol_eq_r: float, signed: bool = False,
                               alphas=None, full: ReducedModel | None = None) -> ResidualEstimatorData:
    """Test space from Riesz representers of ROM residuals, then EQ for the tested residual.

    ``model`` produces the ROM solutions; ``full`` (HF quadrature) supplies
    the per-element residual contributions.
    """
    full = model if full is None else full
    weight = estimator_weight_for(problem.id)
    inn = problem.dirichlet.interior
    if alphas is None:
        alphas = [model.solve(mu, with_estimate=False).alpha for mu in mus]
    states = []
    psis = []
    for mu, a in zip(mus, alphas):
        u = rom_field(problem, full, mu, a)
        R = problem.residual(u, mu, jacobian=False)
        r = np.zeros_like(R)
        r[inn] = R[inn] * weight(mu)
        states.append(a)
        psis.append(riesz(r))
    Psi = np.column_stack(psis)
    if np.sqrt(np.max(np.einsum("ij,ij->j", Psi, ip.matrix @ Psi))) <= 1e-14:
        eta = np.zeros((problem.n_dof, 0))
        lam = np.zeros(0)
    else:
        basis = pod(Psi, ip, tol_es)
        eta, lam = basis.Z, basis.eigenvalues
    if eta.shape[1] == 0:
        return ResidualEstimatorData(eta, SparseNonnegVector(volumes.size, np.zeros(0, np.int64), np.zeros(0)),
                                     lam, np.zeros(0))
    pos = np.arange(full.Z_un.shape[0])
    eta_un = unassemble(problem.mesh, eta, problem.n_eq)
    nl = eta_un.shape[1] * eta_un.shape[2]
    rows = [volumes[None, :] / volumes.sum()]
    rhs = [np.array([1.0])]
    scales = []
    for mu, a in zip(mus, states):
        R, _ = full.local(mu, a, pos, jacobian=False)
        R = R * weight(mu)
        blk = np.einsum("kij,ki->jk", eta_un.reshape(pos.size, nl, -1), R.reshape(pos.size, nl))
        tot = blk.sum(axis=1)
        s = np.linalg.norm(tot)
        s = 1.0 if s == 0 else 1.0 / s
        scales.append(s)
        rows.append(blk * s)
        rhs.append(tot * s)
    weights = eq_solve(np.vstack(rows), np.concatenate(rhs), tol_eq_r, signed)
    return ResidualEstimatorData(eta, weights, lam, np.array(scales))


def rom_field(problem: ProblemSpec, model: ReducedModel, mu, alpha, Z=None, lift=None) -> np.ndarray:
    """Full-order field of a reduced state (requires full bases attached to the model)."""
    Z = model.Z_full if Z is None else Z
    if lift is None:
        if model.W_un is not None:
            lift = model.W_full @ model.eim_values(mu)
        else:
            lift = model.e_full
    return Z @ alpha + lift


# ---------------------------------------------------------------- pipeline

PAPER_DEFAULTS = {"tol_eim": 1e-14, "tol_es": 1e-4, "tol_eq_r": 1e-10, "J": "2N"}


def full_model(problem: ProblemSpec, Z: np.ndarray, *, lifting: LiftingData | None = None,
               e: np.ndarray | None = None, Y: np.ndarray | None = None, regressor=None) -> ReducedModel:
    """Reduced model with the high-fidelity quadrature (all elements, unit weights)."""
    mesh = problem.mesh
    n_eq = problem.n_eq
    ne = mesh.n_elements
    rule = QuadratureRule(np.arange(ne), np.ones(ne))
    kw = {}
    if lifting is not None:
        kw.update(W_un=unassemble(mesh, lifting.W, n_eq), eim=eim_info(problem, lifting), datum=problem.datum)
    else:
        kw.update(e_un=unassemble(mesh, e, n_eq)[..., 0])
    model = ReducedModel(problem.assembler, problem.geo, mesh.connectivity, unassemble(mesh, Z, n_eq), rule,
                         data_fn=problem.data_fn, Y_un=None if Y is None else unassemble(mesh, Y, n_eq),
                         regressor=regressor, est_weight=estimator_weight_for(problem.id), **kw)
    model.Z_full = Z
    model.W_full = None if lifting is None else lifting.W
    model.e_full = e
    return model


def eim_info(problem: ProblemSpec, lifting: LiftingData) -> dict:
    dofs = problem.dirichlet.indices[lifting.I_ei]
    n = problem.mesh.n_nodes
    nodes, comps = dofs % n, dofs // n
    where = np.searchsorted(problem.dir_nodes, nodes)
    return {"dofs": dofs, "labels": problem.geo.node_labels[nodes], "refs": problem.geo.node_refs[nodes],
            "comps": comps, "tags": problem.dir_tags[where]}


def problem_from_config(cfg) -> ProblemSpec:
    """Instantiate the problem named in a RunConfig (mesh file or generator keywords)."""
    from .mesh import read_mesh
    from .problems import get_problem

    mesh, kw = None, {}
    if isinstance(cfg.mesh, str):
        mesh = read_mesh(cfg.mesh)
    elif isinstance(cfg.mesh, dict):
        kw.update(cfg.mesh)
    if cfg.problem == "burgers-bump":
        kw.setdefault("alpha", cfg.alpha_supg)
    if cfg.problem == "study-1d":
        raise ConfigurationError("study-1d has no parameters; use the conv1d study instead")
    try:
        return get_problem(cfg.problem, mesh, cfg.geometry, **kw)
    except TypeError as exc:
        raise ConfigurationError(f"bad mesh generator keywords: {exc}") from exc


class Trainer:
    """Offline pipeline with cached snapshots so that N and tolerance sweeps reuse HF solves."""

    def __init__(self, problem: ProblemSpec, cfg):
        self.problem = problem
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.train_mus = problem.sample(cfg.n_train, rng)
        self.eq_mus = problem.sample(cfg.n_train_eq, rng) if problem.nonlinear else np.zeros((0, problem.param_box.shape[0]))
        self.test_mus = problem.sample(cfg.n_test, rng)
        self.volumes, self.omega = constant_row(problem)
        self._cache: dict = {}

    # ------------------------------------------------------------ snapshots

    @property
    def ip(self) -> InnerProduct:
        self._snapshots()
        return self._cache["ip"]

    def _snapshots(self):
        c = self._cache
        if "S" in c:
            return
        pr = self.problem
        if not pr.nonlinear:
            c["S"] = hf_snapshots(pr, self.train_mus)
            c["ip"] = inner_product_assemble(pr.mesh, "h1")
            c["ext"] = Extension(c["ip"], pr.dirichlet)
            c["B"] = np.column_stack([pr.dirichlet_values(mu) for mu in self.train_mus])
            c["lifted"] = c["S"] - c["ext"](c["B"])
        else:
            e = pr.solve(pr.mu_bar)
            c["e"] = e
            c["S"] = hf_snapshots(pr, self.train_mus, e)
            c["S_eq"] = hf_snapshots(pr, self.eq_mus, e)
            c["lifted"] = c["S"] - e[:, None]
            lam = block_weights(c["lifted"], pr.mesh, [[0, 1]], 2)
            c["ip"] = inner_product_assemble(pr.mesh, "block-weighted", 2, [lam[0], lam[0]])
        c["riesz"] = RieszSolver(c["ip"], pr.dirichlet)

    def test_solutions(self) -> np.ndarray:
        if "S_test" not in self._cache:
            self._snapshots()
            self._cache["S_test"] = hf_snapshots(self.problem, self.test_mus, self._cache.get("e"))
        return self._cache["S_test"]

    def lifting(self) -> LiftingData:
        if "lifting" not in self._cache:
            self._snapshots()
            pr = self.problem
            Dg = dirichlet_product(pr.mesh, pr.dirichlet, pr.dirichlet_tags, pr.n_eq)
            self._cache["lifting"] = build_lifting(self._cache["B"], Dg, self._cache["ext"], self.cfg.tol_eim)
        return self._cache["lifting"]

    def pod_all(self) -> ReducedBasis:
        if "pod" not in self._cache:
            self._snapshots()
            self._cache["pod"] = pod(self._cache["lifted"], self.ip, N=self._cache["lifted"].shape[1])
        return self._cache["pod"]

    def basis(self, N: int | None = None, tol_pod: float | None = None) -> np.ndarray:
        full = self.pod_all()
        if N is None:
            lam = full.eigenvalues
            energy = np.cumsum(lam)
            tol = 0.0 if tol_pod is None else tol_pod
            N = int(np.searchsorted(energy, (1.0 - tol) * energy[-1] * (1 - 1e-15)) + 1)
        return full.Z[:, : min(N, full.N)]

    def train_alphas(self, Z) -> np.ndarray:
        return (Z.T @ (self.ip.matrix @ self._cache["lifted"])).T

    # ------------------------------------------------------------ nonlinear pieces

    def _psi(self, N: int) -> list[np.ndarray]:
        key = "psi"
        if key not in self._cache or self._cache[key][0] < N:
            pr = self.problem
            Z = self.basis(N)
            psi = []
            for mu, u in zip(self.train_mus, self._cache["S"].T):
                _, Jac = pr.residual(u, mu)
                psi.append(self._cache["riesz"](Jac @ Z))
            self._cache[key] = (N, psi)
        return [p[:, :N] for p in self._cache[key][1]]

    def test_space(self, N: int, J: int | None = None) -> np.ndarray:
        J = 2 * N if J is None else J
        Psi = np.hstack(self._psi(N))
        return pod(Psi, self.ip, N=J).Z

    # ------------------------------------------------------------ models

    def hf_model(self, N: int | None = None, J: int | None = None, tol_pod: float | None = None) -> ReducedModel:
        self._snapshots()
        Z = self.basis(N, tol_pod)
        N = Z.shape[1]
        if not self.problem.nonlinear:
            return full_model(self.problem, Z, lifting=self.lifting())
        Y = self.test_space(N, J)
        reg = Regressor(self.train_mus, self.train_alphas(Z), self.problem.param_box)
        return full_model(self.problem, Z, e=self._cache["e"], Y=Y, regressor=reg)

    def eq_weights(self, model: ReducedModel, tol_eq: float):
        """Primary EQ weights plus the (mu, alpha) pairs used for the regressor."""
        if not self.problem.nonlinear:
            return eq_linear(model, self.train_mus, self.volumes, tol_eq), None
        alphas = list(self.train_alphas(model.Z_full))
        mus = list(self.train_mus)
        for mu in self.eq_mus:
            a, hist, conv, _ = model.lspg(mu)
            if not conv:
                warnings.warn(f"HF-quadrature LSPG did not converge at {mu}; parameter dropped")
                continue
            mus.append(mu)
            alphas.append(a)
        return eq_nonlinear(model, mus, alphas, self.volumes, tol_eq), (np.array(mus), np.array(alphas))

    def build(self, N: int | None = None, tol_eq: float | None = None, J: int | None = None,
              tol_pod: float | None = None, estimator: bool = True, model: ReducedModel | None = None):
        """Train a complete hyper-reduced model and return its bundle."""
        cfg = self.cfg
        tol_eq = cfg.tol_eq if tol_eq is None else tol_eq
        N = cfg.N if N is None and tol_pod is None else N
        tol_pod = cfg.tol_pod if tol_pod is None else tol_pod
        J = cfg.J if J is None else J
        model = model or self.hf_model(N, J, tol_pod)
        rho, pairs = self.eq_weights(model, tol_eq)
        if pairs is not None:
            model.regressor = Regressor(pairs[0], pairs[1], self.problem.param_box)
        bundle = make_bundle(self, model, rho, None, tol_eq)
        if estimator:
            online = _bundle_model(bundle)
            est = residual_estimator_offline(
                self.problem, online, self.train_mus[: cfg.n_train_r], self._cache["riesz"], self.ip,
                self.volumes, cfg.tol_es, cfg.tol_eq_r, cfg.signed_estimator_weights, full=model)
            bundle = make_bundle(self, model, rho, est, tol_eq)
        self.last = {"model": model, "rho": rho, "est": est if estimator else None, "bundle": bundle}
        return bundle


def _bundle_model(bundle):
    from .bundle import model_from_bundle

    return model_from_bundle(bundle)


def make_bundle(trainer: Trainer, model: ReducedModel, rho, est: ResidualEstimatorData | None, tol_eq: float):
    from .bundle import RomBundle

    pr = trainer.problem
    mesh = pr.mesh
    cfg = trainer.cfg
    eq_el = rho.indices
    if est is not None and est.J_r > 0:
        est_el = est.weights.indices
    else:
        est_el = np.zeros(0, dtype=np.int64)
    elements = np.union1d(eq_el, est_el).astype(np.int64)
    nodes = np.unique(mesh.connectivity[elements]) if elements.size else np.zeros(0, np.int64)
    conn = np.searchsorted(nodes, mesh.connectivity[elements]) if elements.size else np.zeros((0, mesh.n_lp), np.int64)
    arrays = {
        "elements": elements,
        "conn": conn,
        "node_ids": nodes,
        "node_labels": pr.geo.node_labels[nodes],
        "node_refs": pr.geo.node_refs[nodes],
        "eq_positions": np.searchsorted(elements, eq_el),
        "eq_weights": np.asarray(rho.values, float),
        "Z_un": model.Z_un[elements],
    }
    header = {
        "format": "DTMROM1", "problem": pr.id, "dim": mesh.dim, "p": mesh.p, "geom_order": mesh.geom_order,
        "n_eq": pr.n_eq, "nonlinear": pr.nonlinear, "settings": pr.settings,
        "mu_bar": pr.mu_bar.tolist(), "param_box": pr.param_box.tolist(), "geometry": pr.geometry_config,
        "identity_labels": sorted(int(v) for v in pr.geo.identity_labels),
        "N_hf": mesh.n_nodes, "N_e": mesh.n_elements, "n_dof": pr.n_dof,
    }
    if model.W_un is not None:
        e = model.eim
        arrays.update({"W_un": model.W_un[elements], "eim_dofs": e["dofs"], "eim_labels": e["labels"],
                       "eim_refs": e["refs"], "eim_comps": e["comps"], "W_full": model.W_full})
        header["eim_tags"] = [str(t) for t in e["tags"]]
    else:
        arrays.update({"e_un": model.e_un[elements], "e_full": model.e_full})
    if model.Y_un is not None:
        arrays["Y_un"] = model.Y_un[elements]
    if model.regressor is not None:
        arrays.update({"reg_mus": model.regressor.mus, "reg_alphas": model.regressor.alphas})
    if est is not None:
        eta_un = unassemble(mesh, est.eta, pr.n_eq)
        arrays.update({"est_positions": np.searchsorted(elements, est_el),
                       "est_weights": np.asarray(est.weights.values, float),
                       "eta_un": eta_un[elements]})
    arrays["Z_full"] = model.Z_full
    arrays["full_node_labels"] = pr.geo.node_labels
    arrays["full_node_refs"] = pr.geo.node_refs
    prov = {
        "seed": cfg.seed, "tol_pod": cfg.tol_pod, "tol_eim": cfg.tol_eim, "tol_eq": tol_eq, "tol_es": cfg.tol_es,
        "tol_eq_r": cfg.tol_eq_r, "n_train": cfg.n_train, "n_train_eq": cfg.n_train_eq,
        "n_train_r": cfg.n_train_r, "N": int(model.Z_full.shape[1]),
        "J": None if model.Y_un is None else int(model.Y_un.shape[-1]),
        "M": None if model.W_un is None else int(model.W_un.shape[-1]),
        "Q": int(eq_el.size), "Q_r": int(est_el.size), "J_r": None if est is None else est.J_r,
        "regressor": "interpolation stand-in (piecewise linear / inverse-distance weighting)",
        "defaults": PAPER_DEFAULTS,
    }
    return RomBundle(header, arrays, prov)
