"""Finite-element kernel: shape tensors, local assemblers, global assembly,
inner products, boundary norm, extension and high-fidelity solvers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConfigurationError, NonconvergenceError, SolverError
from .linalg import SparseFactor
from .mesh import (
    DirichletIndexSet,
    Mesh,
    ReferenceElement,
    _inv,
    build_reference_element,
    dof_map,
    element_geometry,
)
from .quadrature import QuadRule, gauss_rule

log = logging.getLogger(__name__)

CHUNK = 2048


# ---------------------------------------------------------------- shape tensors


@dataclass(eq=False)
class ShapeTensors:
    L: np.ndarray  # (n_q, n_lp)
    grad: np.ndarray  # (n_el, n_q, n_lp, D)
    w: np.ndarray  # (n_el, n_q) physical weights omega_q * g
    x: np.ndarray  # (n_el, n_q, D)
    Ginv: np.ndarray  # (n_el, n_q, D, D)
    det: np.ndarray  # (n_el, n_q)


@dataclass(eq=False)
class ElementKit:
    """Reference data shared by all elements of one (D, p, geom_order) family."""

    dim: int
    p: int
    geom_order: int
    quad: QuadRule
    ref: ReferenceElement = field(init=False)
    geom_ref: ReferenceElement = field(init=False)

    def __post_init__(self):
        self.ref = build_reference_element(self.dim, self.p)
        self.geom_ref = build_reference_element(self.dim, self.geom_order)
        X = self.quad.points
        self.L = self.ref.eval(X)
        self.dL = self.ref.grad(X)
        self.hL = self.ref.hess(X)

    @classmethod
    def for_mesh(cls, mesh: Mesh, degree: int | None = None) -> "ElementKit":
        return cls(mesh.dim, mesh.p, mesh.geom_order, gauss_rule(mesh.dim, degree if degree is not None else 2 * mesh.p))

    @property
    def straight(self) -> bool:
        return self.geom_order == 1


def shape_tensors(kit: ElementKit, coords: np.ndarray, element_ids=None, warn: bool = True) -> ShapeTensors:
    """Physical gradients and hfq weights on (possibly deformed) element nodes."""
    x, G, det = element_geometry(kit.geom_ref, coords, kit.quad.points)
    bad = ~np.isfinite(det) | (det == 0.0)
    if bad.any():
        e, q = np.argwhere(bad)[0]
        k = int(element_ids[e]) if element_ids is not None else int(e)
        raise AssemblyError(f"singular elemental Jacobian at element {k + 1}, quadrature point {q + 1}")
    if warn and (det < 0).any():
        log.warning("negative Jacobian determinant on %d element(s)", int((det < 0).any(axis=1).sum()))
    Ginv = _inv(G, det)
    grad = np.matmul(kit.dL, Ginv)
    w = kit.quad.weights[None, :] * det
    return ShapeTensors(kit.L, grad, w, x, Ginv, det)


# ---------------------------------------------------------------- local assemblers


class LocalAssembler:
    """Batched local assembler: (w_un, coords, data) -> (R_un, J_un).

    Shapes: w_un (n_el, n_lp, n_eq), coords (n_el, n_lp, D),
    R_un (n_el, n_lp, n_eq), J_un (n_el, n_lp, n_eq, n_lp, n_eq).
    ``elements_evaluated`` counts elements passed through the kernel.
    """

    n_eq = 1

    def __init__(self, kit: ElementKit):
        self.kit = kit
        self.elements_evaluated = 0
        self.call_log: list | None = None  # set to [] to record elements per call

    def __call__(self, w_un, coords, data=None, jacobian: bool = True):
        w_un = np.asarray(w_un, dtype=float)
        if w_un.ndim == 2:
            w_un = w_un[:, :, None]
        ne = coords.shape[0]
        self.elements_evaluated += ne
        if self.call_log is not None:
            self.call_log.append(ne)
        n_lp = self.kit.ref.n_lp
        R = np.empty((ne, n_lp, self.n_eq))
        J = np.empty((ne, n_lp, self.n_eq, n_lp, self.n_eq)) if jacobian else None
        for s in range(0, ne, CHUNK):
            sl = slice(s, min(s + CHUNK, ne))
            r, j = self._kernel(w_un[sl], coords[sl], data or {}, jacobian)
            R[sl] = r
            if jacobian:
                J[sl] = j
        return R, J

    def _kernel(self, w_un, coords, data, jacobian=True):
        raise NotImplementedError


class LaplaceAssembler(LocalAssembler):
    """-div(K grad u) = f.  ``coefficient(x)`` returns K as scalar or (.., D, D); default identity."""

    def __init__(self, kit: ElementKit, source: Callable | None = None, coefficient: Callable | None = None):
        super().__init__(kit)
        self.source = source
        self.coefficient = coefficient

    def local_matrices(self, coords, data=None):
        st = shape_tensors(self.kit, coords)
        if self.coefficient is None:
            A = np.einsum("eq,eqia,eqja->eij", st.w, st.grad, st.grad)
        else:
            K = np.asarray(self.coefficient(st.x), dtype=float)
            if K.ndim == st.w.ndim:
                A = np.einsum("eq,eqia,eqja->eij", st.w * K, st.grad, st.grad)
            else:
                A = np.einsum("eq,eqia,eqab,eqjb->eij", st.w, st.grad, K, st.grad)
        if self.source is None:
            F = np.zeros(A.shape[:2])
        else:
            F = np.einsum("eq,eq,qi->ei", st.w, self.source(st.x), st.L)
        return A, F

    def _kernel(self, w_un, coords, data, jacobian=True):
        A, F = self.local_matrices(coords, data)
        R = np.matmul(A, w_un[:, :, 0:1])[:, :, 0] - F
        return R[:, :, None], A[:, :, None, :, None] if jacobian else None


class BurgersSUPGAssembler(LocalAssembler):
    """Steady viscous Burgers (u.grad)u - nu lap u = 0 with SUPG stabilization.

    tau = alpha * h_k with h_k = |D_k|^(1/D); the streamline direction is
    u / sqrt(|u|^2 + eps^2).  The -nu lap u part of the strong residual is
    included on straight (geom_order = 1) elements only.
    """

    n_eq = 2

    def __init__(self, kit: ElementKit, alpha: float = 0.5, eps: float = 1e-10,
                 include_laplacian: bool | None = None):
        if kit.dim != 2:
            raise ConfigurationError("Burgers assembler needs D = 2")
        super().__init__(kit)
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.include_laplacian = kit.straight if include_laplacian is None else include_laplacian

    def _kernel(self, U, coords, data, jacobian=True):
        nu = float(data["nu"])
        st = shape_tensors(self.kit, coords)
        N, B, w = st.L, st.grad, st.w
        ne, nq, n_lp = B.shape[:3]
        u = np.matmul(N, U)  # (k, q, d)
        Gu = np.matmul(U.transpose(0, 2, 1)[:, None], B)  # (k, q, d, a)
        conv = np.matmul(Gu, u[..., None])[..., 0]
        if self.include_laplacian and self.kit.p > 1:
            GG = np.matmul(st.Ginv, st.Ginv.transpose(0, 1, 3, 2)).reshape(ne, nq, -1, 1)
            lap = np.matmul(self.kit.hL.reshape(nq, n_lp, -1), GG)[..., 0]
        else:
            lap = None  # second derivatives vanish for P1 and are dropped on curved elements
        Rs = conv if lap is None else conv - nu * np.matmul(lap, U)
        s = np.sqrt((u * u).sum(axis=-1) + self.eps**2)
        beta = u / s[..., None]
        tau = self.alpha * np.abs(w.sum(axis=1)) ** (1.0 / self.kit.dim)
        tw = tau[:, None] * w
        bB = np.matmul(B, beta[..., None])[..., 0]  # (k, q, j)
        uB = np.matmul(B, u[..., None])[..., 0]

        Bq = B.transpose(0, 2, 1, 3).reshape(ne, n_lp, nq * 2)  # (k, j, q a)
        R = (np.matmul(N.T, w[..., None] * conv)
             + nu * np.matmul(Bq, (w[:, :, None, None] * Gu).transpose(0, 1, 3, 2).reshape(ne, nq * 2, 2))
             + np.matmul(bB.transpose(0, 2, 1), tw[..., None] * Rs))
        if not jacobian:
            return R, None

        # Jacobian, contracted over quadrature points with batched matmuls.
        T1 = w[:, :, None] * N[None] + tw[:, :, None] * bB  # test factor multiplying d conv
        # T1_j N_m Gu[d,e]
        P = (T1[:, :, :, None] * N[None, :, None, :]).reshape(ne, nq, n_lp * n_lp)
        JA = np.matmul(P.transpose(0, 2, 1), Gu.reshape(ne, nq, 4)).reshape(ne, n_lp, n_lp, 2, 2)
        # delta_de terms: T1_j uB_m + nu B_j.B_m - tw bB_j nu lap_m
        Bw = Bq * np.repeat(w, 2, axis=1)[:, None, :]
        JB = np.matmul(T1.transpose(0, 2, 1), uB) + nu * np.matmul(Bw, Bq.transpose(0, 2, 1))
        if lap is not None:
            JB -= nu * np.matmul((tw[:, :, None] * bB).transpose(0, 2, 1), lap)
        # streamline-direction derivative: tw Rs_d N_m dbeta[j,e]
        dbeta = B / s[:, :, None, None] - uB[..., None] * u[:, :, None, :] / (s**3)[:, :, None, None]
        C = ((tw[:, :, None] * Rs)[:, :, :, None] * N[None, :, None, :]).reshape(ne, nq, 2 * n_lp)
        JC = np.matmul(C.transpose(0, 2, 1), dbeta.reshape(ne, nq, 2 * n_lp)).reshape(ne, 2, n_lp, n_lp, 2)

        J = JA.transpose(0, 1, 3, 2, 4) + JC.transpose(0, 3, 1, 2, 4)
        J[:, :, 0, :, 0] += JB
        J[:, :, 1, :, 1] += JB
        return R, J


# ---------------------------------------------------------------- global assembly


def global_assemble(mesh: Mesh, R_un, J_un=None, n_eq: int = 1, weights=None, elements=None):
    """Accumulate unassembled tensors into a global vector and sparse matrix.

    ``weights`` (one per element present) scale each element block first.
    """
    R_un = np.asarray(R_un, dtype=float)
    if R_un.ndim == 2:
        R_un = R_un[:, :, None]
    idx = dof_map(mesh, n_eq, elements)
    n_dof = mesh.n_nodes * n_eq
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        R_un = R_un * weights[:, None, None]
    r = np.bincount(idx.ravel(), weights=R_un.ravel(), minlength=n_dof)
    if J_un is None:
        return r
    J_un = np.asarray(J_un, dtype=float)
    if J_un.ndim == 3:
        J_un = J_un[:, :, None, :, None]
    if weights is not None:
        J_un = J_un * weights[:, None, None, None, None]
    ne = idx.shape[0]
    m = idx.reshape(ne, -1)
    rows = np.repeat(m[:, :, None], m.shape[1], axis=2)
    cols = np.repeat(m[:, None, :], m.shape[1], axis=1)
    J = sp.coo_matrix((J_un.reshape(ne, m.shape[1], m.shape[1]).ravel(), (rows.ravel(), cols.ravel())),
                      shape=(n_dof, n_dof)).tocsr()
    return r, J


def evaluate(mesh: Mesh, assembler: LocalAssembler, coords_all: np.ndarray, u: np.ndarray,
             data=None, elements=None, weights=None, jacobian: bool = True):
    """Residual (and Jacobian) of a global state on the mesh with node positions ``coords_all``."""
    n_eq = assembler.n_eq
    el = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    w_un = u[dof_map(mesh, n_eq, el)]
    R_un, J_un = assembler(w_un, coords_all[mesh.connectivity[el]], data, jacobian)
    if jacobian:
        return global_assemble(mesh, R_un, J_un, n_eq, weights, el)
    return global_assemble(mesh, R_un, None, n_eq, weights, el)


def element_volumes(mesh: Mesh, coords_all: np.ndarray | None = None) -> np.ndarray:
    kit = ElementKit.for_mesh(mesh)
    coords = mesh.element_coords(nodes=coords_all)
    return shape_tensors(kit, coords, warn=False).w.sum(axis=1)


# ---------------------------------------------------------------- inner products


def stiffness_mass(mesh: Mesh):
    """Reference-mesh stiffness and mass matrices (scalar)."""
    kit = ElementKit.for_mesh(mesh)
    st = shape_tensors(kit, mesh.element_coords())
    K = np.einsum("eq,eqia,eqja->eij", st.w, st.grad, st.grad)
    M = np.einsum("eq,qi,qj->eij", st.w, st.L, st.L)
    _, Kg = global_assemble(mesh, np.zeros(K.shape[:2]), K)
    _, Mg = global_assemble(mesh, np.zeros(M.shape[:2]), M)
    return Kg, Mg


@dataclass(eq=False)
class InnerProduct:
    matrix: sp.csr_matrix
    n_eq: int = 1
    weights: tuple = (1.0,)

    def __call__(self, a, b):
        return np.asarray(a).T @ (self.matrix @ np.asarray(b))

    def norm(self, a) -> float:
        return float(np.sqrt(max(self(a, a), 0.0)))


def inner_product_assemble(mesh: Mesh, kind: str = "h1", n_eq: int = 1, weights=None) -> InnerProduct:
    """H1 product (K + M) on the reference mesh, block-diagonal over state components."""
    if kind not in ("h1", "block-weighted"):
        raise ConfigurationError(f"unknown inner product '{kind}'")
    K, M = stiffness_mass(mesh)
    X = (K + M).tocsr()
    if weights is None:
        weights = (1.0,) * n_eq
    weights = tuple(float(w) for w in weights)
    if len(weights) != n_eq:
        raise ConfigurationError("one block weight per state component expected")
    full = sp.block_diag([w * X for w in weights], format="csr")
    return InnerProduct(full, n_eq, weights)


def block_weights(snapshots: np.ndarray, mesh: Mesh, blocks, n_eq: int) -> list[float]:
    """Inverse of the largest Gramian eigenvalue of each block of state components."""
    K, M = stiffness_mass(mesh)
    X = (K + M).tocsr()
    S = np.asarray(snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[1] == 0:
        raise ConfigurationError("block_weights needs at least one snapshot")
    n = mesh.n_nodes
    out = []
    for comps in blocks:
        C = sum(S[d * n:(d + 1) * n].T @ (X @ S[d * n:(d + 1) * n]) for d in comps)
        lam = float(np.linalg.eigvalsh(0.5 * (C + C.T)).max())
        if lam <= 0:
            raise ConfigurationError(f"block {list(comps)} vanishes on all snapshots")
        out.append(1.0 / lam)
    return out


# ---------------------------------------------------------------- boundary norm


def boundary_mass(mesh: Mesh, tags, n_eq: int = 1) -> sp.csr_matrix:
    """Facet L2 mass matrix over boundary facets with the given tags."""
    tags = set(tags)
    ref = mesh.ref
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    if mesh.dim == 1:
        for f in mesh.boundary_facets:
            if f.tag in tags:
                i = mesh.connectivity[f.element, ref.facets[f.local_facet][0]]
                rows.append([i]); cols.append([i]); vals.append([1.0])
    else:
        q = gauss_rule(1, min(2 * mesh.p + 2, 10))
        tau = q.points[:, 0]
        for lf in range(3):
            ks = np.array([f.element for f in mesh.boundary_facets if f.tag in tags and f.local_facet == lf],
                          dtype=np.int64)
            if ks.size == 0:
                continue
            X = ref.facet_points(lf, tau)
            phi = ref.eval(X)
            _, G, _ = element_geometry(mesh.geom_ref, mesh.element_coords(ks), X)
            verts = ref.nodes[:3]
            dX = verts[(lf + 1) % 3] - verts[lf]
            jac = np.linalg.norm(np.einsum("eqab,b->eqa", G, dX), axis=-1)
            wq = q.weights[None, :] * jac
            Mloc = np.einsum("eq,qi,qj->eij", wq, phi, phi)
            T = mesh.connectivity[ks]
            rows.append(np.repeat(T[:, :, None], T.shape[1], 2).ravel())
            cols.append(np.repeat(T[:, None, :], T.shape[1], 1).ravel())
            vals.append(Mloc.ravel())
    if not rows:
        return sp.csr_matrix((n * n_eq, n * n_eq))
    Mb = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n)).tocsr()
    Mb.eliminate_zeros()
    return sp.block_diag([Mb] * n_eq, format="csr") if n_eq > 1 else Mb


def dirichlet_product(mesh: Mesh, dirichlet: DirichletIndexSet, tags, n_eq: int = 1) -> np.ndarray:
    """Dense M_hf x M_hf Gram matrix of the boundary L2 product on I_dir."""
    Mb = boundary_mass(mesh, tags, n_eq)
    return Mb[dirichlet.indices][:, dirichlet.indices].toarray()


def boundary_norm(mesh: Mesh, dirichlet: DirichletIndexSet, tags, w_dir, n_eq: int = 1) -> float:
    D = dirichlet_product(mesh, dirichlet, tags, n_eq)
    w = np.asarray(w_dir, dtype=float)
    return float(np.sqrt(max(w @ D @ w, 0.0)))


# ---------------------------------------------------------------- extension


class Extension:
    """Inner-product-orthogonal extension of Dirichlet values."""

    def __init__(self, ip: InnerProduct, dirichlet: DirichletIndexSet):
        X = ip.matrix.tocsr()
        self.dir = dirichlet.indices
        self.inn = dirichlet.interior
        self.n = X.shape[0]
        self.X_id = X[self.inn][:, self.dir]
        self.factor = SparseFactor(X[self.inn][:, self.inn])

    def __call__(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        out = np.zeros((self.n,) + h.shape[1:])
        out[self.dir] = h
        rhs = -(self.X_id @ h)
        out[self.inn] = self.factor.solve(rhs)
        return out


def extension(ip: InnerProduct, dirichlet: DirichletIndexSet, h: np.ndarray) -> np.ndarray:
    return Extension(ip, dirichlet)(h)


class RieszSolver:
    """Riesz representers in U_0: X_in psi_in = r_in, psi = 0 on I_dir."""

    def __init__(self, ip: InnerProduct, dirichlet: DirichletIndexSet):
        X = ip.matrix.tocsr()
        self.inn = dirichlet.interior
        self.n = X.shape[0]
        self.factor = SparseFactor(X[self.inn][:, self.inn])

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros((self.n,) + r.shape[1:])
        out[self.inn] = self.factor.solve(r[self.inn])
        return out


# ---------------------------------------------------------------- HF solvers


@dataclass
class NewtonOptions:
    rtol: float = 1e-12
    max_iter: int = 100
    max_halvings: int = 20
    continuation: bool = True
    continuation_drop: float = 1e-2
    dtau0: float = 1.0
    max_continuation: int = 200
    divergence: float = 10.0


def hf_solve_linear(mesh: Mesh, assembler: LocalAssembler, coords_all, dirichlet: DirichletIndexSet,
                    h, data=None) -> np.ndarray:
    """Direct solve of a linear problem with strongly imposed Dirichlet values h on I_dir."""
    u = np.zeros(mesh.n_nodes * assembler.n_eq)
    u[dirichlet.indices] = h
    r, J = evaluate(mesh, assembler, coords_all, u, data)
    inn = dirichlet.interior
    u[inn] -= SparseFactor(J[inn][:, inn]).solve(r[inn])
    return u


def newton_solve(residual: Callable, u0: np.ndarray, interior: np.ndarray, mass_diag: np.ndarray | None = None,
                 options: NewtonOptions | None = None, mu=None):
    """Newton with backtracking, optionally preceded by pseudo-time continuation.

    ``residual(u, jacobian=True)`` returns (R, J) with J sparse.  Returns
    (u, history) where history lists interior residual norms.
    """
    opt = options or NewtonOptions()
    u = np.array(u0, dtype=float)
    inn = np.asarray(interior)
    R, J = residual(u)
    r0 = float(np.linalg.norm(R[inn]))
    hist = [r0]
    target = opt.rtol * max(1.0, r0)
    rn = r0

    def step(J, R, shift=None):
        A = J[inn][:, inn]
        if shift is not None:
            A = A + sp.diags(shift)
        try:
            return -SparseFactor(A).solve(R[inn])
        except SolverError as exc:
            raise NonconvergenceError(f"singular Newton matrix ({exc})", hist, stage="hf-newton", mu=mu) from exc

    if opt.continuation and mass_diag is not None and rn > target:
        dtau = opt.dtau0
        m_in = np.asarray(mass_diag)[inn]
        n = 0
        while rn > opt.continuation_drop * r0 and rn > target and n < opt.max_continuation:
            n += 1
            d = step(J, R, m_in / dtau)
            trial = u.copy()
            trial[inn] += d
            Rt, Jt = residual(trial)
            rt = float(np.linalg.norm(Rt[inn]))
            if np.isfinite(rt) and rt < rn:
                u, R, J, rn = trial, Rt, Jt, rt
                hist.append(rn)
                dtau *= 2.0
            else:
                dtau *= 0.25
                if dtau < 1e-12:
                    raise NonconvergenceError("pseudo-time continuation stalled", hist, stage="hf-newton", mu=mu)

    it = 0
    while rn > target:
        it += 1
        if it > opt.max_iter:
            raise NonconvergenceError(f"Newton did not converge in {opt.max_iter} iterations", hist,
                                      stage="hf-newton", mu=mu)
        d = step(J, R)
        lam = 1.0
        for _ in range(opt.max_halvings + 1):
            trial = u.copy()
            trial[inn] += lam * d
            Rt, Jt = residual(trial)
            rt = float(np.linalg.norm(Rt[inn]))
            if np.isfinite(rt) and rt < rn:
                break
            lam *= 0.5
        else:
            if rn <= 1e3 * target:
                break  # round-off floor
            raise NonconvergenceError("line search failed", hist, stage="hf-newton", mu=mu)
        u, R, J, rn = trial, Rt, Jt, rt
        hist.append(rn)
        if rn > opt.divergence * max(r0, 1e-300):
            raise NonconvergenceError("Newton diverged", hist, stage="hf-newton", mu=mu)
    return u, hist


def lumped_mass(mesh: Mesh, n_eq: int = 1) -> np.ndarray:
    """Diagonal-scaled (HRZ) lumped mass; positive for every Lagrange order."""
    _, M = stiffness_mass(mesh)
    d = M.diagonal()
    d = d * (M.sum() / d.sum())
    return np.tile(d, n_eq)


# ---------------------------------------------------------------- MtD in 1D


def mtd_assemble_1d(mesh: Mesh, phi, source: Callable, degree: int | None = None):
    """Map-then-discretize system on the reference mesh: K = 1/Phi', load f(Phi(x)) Phi'."""
    if mesh.dim != 1:
        raise ConfigurationError("mtd_assemble_1d needs a 1D mesh")
    kit = ElementKit(1, mesh.p, mesh.geom_order, gauss_rule(1, degree if degree is not None else 2 * mesh.p))
    asm = LaplaceAssembler(
        kit,
        source=lambda x: source(phi(x[..., 0])) * phi.derivative(x[..., 0]),
        coefficient=lambda x: 1.0 / phi.derivative(x[..., 0]),
    )
    A, F = asm.local_matrices(mesh.element_coords())
    r, Ag = global_assemble(mesh, -F, A)
    return Ag, -r
