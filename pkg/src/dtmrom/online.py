"""Reduced models evaluated on a subset of sampled elements: Galerkin, LSPG and the residual estimator."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import OnlineError
from .fe import LocalAssembler
from .geometry import RegionedMap


@dataclass
class OnlineResult:
    alpha: np.ndarray
    estimate: float = float("nan")
    iterations: int = 0
    wall_time: float = 0.0
    converged: bool = True
    history: list = field(default_factory=list)
    elements_touched: int = 0


@dataclass(eq=False)
class QuadratureRule:
    """Positions into the sampled element list and their weights."""

    positions: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.positions.size


class Regressor:
    """Map mu -> initial reduced coefficients.

    One parameter: piecewise-linear interpolation with constant extrapolation.
    Several: inverse-distance weighting over the k = min(5, n) nearest
    training points, with parameters scaled to the unit box.
    """

    def __init__(self, mus, alphas, box):
        self.mus = np.atleast_2d(np.asarray(mus, dtype=float))
        self.alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
        self.box = np.asarray(box, dtype=float)
        if self.mus.shape[0] < 1:
            raise ValueError("regressor needs training pairs")

    def _scale(self, mu):
        lo, hi = self.box[:, 0], self.box[:, 1]
        return (np.asarray(mu, float) - lo) / np.where(hi > lo, hi - lo, 1.0)

    def __call__(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).ravel()
        if self.mus.shape[1] == 1:
            order = np.argsort(self.mus[:, 0], kind="stable")
            x = self.mus[order, 0]
            return np.array([np.interp(mu[0], x, self.alphas[order, n]) for n in range(self.alphas.shape[1])])
        d = np.linalg.norm(self._scale(self.mus) - self._scale(mu), axis=1)
        k = min(5, d.size)
        near = np.argsort(d, kind="stable")[:k]
        if d[near[0]] <= 1e-14:
            return self.alphas[near[0]].copy()
        w = 1.0 / d[near] ** 2
        return (w[:, None] * self.alphas[near]).sum(axis=0) / w.sum()


def train_alpha_regressor(mus, alphas, box) -> Regressor:
    return Regressor(mus, alphas, box)


class ReducedModel:
    """Hyper-reduced model on sampled elements.

    ``conn`` holds local node ids into the sampled nodes described by ``geo``.
    Bases are unassembled: Z_un (n_s, n_lp, n_eq, N), Y_un (n_s, n_lp, n_eq, J),
    eta_un (n_s, n_lp, n_eq, J_r).  The lifting is either EIM based
    (W_un with M columns and ``eim`` describing the interpolation dofs) or a
    fixed field ``e_un``.
    """

    def __init__(self, assembler: LocalAssembler, geo: RegionedMap, conn: np.ndarray, Z_un: np.ndarray,
                 rule: QuadratureRule, *, data_fn=None, W_un=None, eim=None, datum=None, e_un=None,
                 Y_un=None, est_rule: QuadratureRule | None = None, eta_un=None, regressor=None, est_weight=None):
        self.asm = assembler
        self.geo = geo
        self.conn = np.asarray(conn)
        self.Z_un = Z_un
        self.rule = rule
        self.data_fn = data_fn or (lambda mu: {})
        self.W_un = W_un
        self.eim = eim  # dict(labels, refs, tags, comps) for EIM dofs
        self.datum = datum
        self.e_un = e_un
        self.Y_un = Y_un
        self.est_rule = est_rule
        self.eta_un = eta_un
        self.regressor = regressor
        self.est_weight = est_weight or (lambda mu: 1.0)

    @property
    def N(self) -> int:
        return self.Z_un.shape[-1]

    @property
    def nonlinear(self) -> bool:
        return self.Y_un is not None

    # ------------------------------------------------------------ pieces

    def coords(self, mu, positions) -> np.ndarray:
        nodes = np.unique(self.conn[positions])
        x = np.zeros((self.geo.node_labels.size, self.geo.node_refs.shape[1]))
        x[nodes] = self.geo.map_nodes(mu, nodes)
        return x[self.conn[positions]]

    def eim_values(self, mu) -> np.ndarray:
        """h_mu at the EIM dofs, evaluated at the mapped nodes."""
        e = self.eim
        sub = RegionedMap(self.geo.patches, self.geo.mu_bar, e["labels"], e["refs"], self.geo.identity_labels)
        x = sub.map_nodes(mu)
        vals = np.asarray(self.datum(x, e["tags"], np.asarray(mu, float)), dtype=float)
        vals = vals.reshape(x.shape[0], -1)
        return vals[np.arange(x.shape[0]), e["comps"]]

    def lifting_un(self, mu, positions) -> np.ndarray:
        if self.W_un is not None:
            return self.W_un[positions] @ self.eim_values(mu)
        return self.e_un[positions]

    def local(self, mu, alpha, positions, lift=None, jacobian: bool = True):
        """Local residual (and Jacobian) at the reduced state on the given sampled elements."""
        lift = self.lifting_un(mu, positions) if lift is None else lift
        w = lift + self.Z_un[positions] @ alpha
        return self.asm(w, self.coords(mu, positions), self.data_fn(np.asarray(mu, float)), jacobian)

    # ------------------------------------------------------------ Galerkin

    def galerkin(self, mu) -> np.ndarray:
        pos, rho = self.rule.positions, self.rule.weights
        R, J = self.local(mu, np.zeros(self.N), pos)
        Z = self.Z_un[pos]
        nl = Z.shape[1] * Z.shape[2]
        Zf = Z.reshape(pos.size, nl, -1)
        Jf = J.reshape(pos.size, nl, nl)
        A = np.einsum("k,kin,kij,kjm->nm", rho, Zf, Jf, Zf)
        F = -np.einsum("k,kin,ki->n", rho, Zf, R.reshape(pos.size, nl))
        try:
            return np.linalg.solve(A, F)
        except np.linalg.LinAlgError as exc:
            raise OnlineError(f"singular reduced matrix: {exc}", stage="galerkin", mu=mu) from exc

    # ------------------------------------------------------------ LSPG

    def assemble(self, mu, alpha, lift=None):
        """Reduced residual Y^T R and Jacobian Y^T J Z on the primary rule."""
        pos, rho = self.rule.positions, self.rule.weights
        R, J = self.local(mu, alpha, pos, lift)
        Y = self.Y_un[pos] if self.Y_un is not None else self.Z_un[pos]
        Z = self.Z_un[pos]
        nl = Z.shape[1] * Z.shape[2]
        Yf = Y.reshape(pos.size, nl, -1)
        Zf = Z.reshape(pos.size, nl, -1)
        Rh = np.einsum("k,kij,ki->j", rho, Yf, R.reshape(pos.size, nl))
        JZ = np.matmul(J.reshape(pos.size, nl, nl), Zf)
        Jh = np.einsum("k,kij,kin->jn", rho, Yf, JZ)
        return Rh, Jh

    def lspg(self, mu, alpha0=None, max_iter: int = 50, max_halvings: int = 20):
        if alpha0 is None:
            alpha0 = self.regressor(mu) if self.regressor is not None else np.zeros(self.N)
        alpha = np.array(alpha0, dtype=float)
        lift = self.lifting_un(mu, self.rule.positions)
        R, J = self.assemble(mu, alpha, lift)
        r0 = float(np.linalg.norm(R))
        hist = [r0]
        target = 1e-12 * max(1.0, r0)
        rn = r0
        it = 0
        converged = rn <= target
        while not converged:
            Q, Rq = sla.qr(J, mode="economic")
            QR = Q.T @ R
            # the minimizer leaves a residual orthogonal to range(J) when J > N
            if float(np.linalg.norm(QR)) <= target:
                converged = True
                break
            it += 1
            if it > max_iter:
                break
            delta = sla.solve_triangular(Rq, -QR) if np.all(np.abs(np.diag(Rq)) > 0) \
                else np.linalg.lstsq(J, -R, rcond=None)[0]
            lam = 1.0
            accepted = False
            for _ in range(max_halvings + 1):
                trial = alpha + lam * delta
                Rt, Jt = self.assemble(mu, trial, lift)
                rt = float(np.linalg.norm(Rt))
                if np.isfinite(rt) and rt < rn:
                    accepted = True
                    break
                lam *= 0.5
            step = float(np.linalg.norm(lam * delta))
            if not accepted:
                # no decrease possible: stationary point up to round-off
                converged = float(np.linalg.norm(QR)) <= 1e3 * target \
                    or float(np.linalg.norm(delta)) <= 1e-10 * max(1.0, float(np.linalg.norm(alpha)))
                break
            alpha, R, J, rn = trial, Rt, Jt, rt
            hist.append(rn)
            if rn <= target or step <= 1e-12 * max(1.0, float(np.linalg.norm(alpha))):
                converged = True
        return alpha, hist, converged, it

    # ------------------------------------------------------------ estimator

    def estimate_vector(self, mu, alpha) -> np.ndarray:
        """Tested weighted residual sum_k rho_k eta_k^T r_k (length J_r)."""
        if self.est_rule is None or self.eta_un is None or self.eta_un.shape[-1] == 0:
            return np.zeros(0)
        pos, rho = self.est_rule.positions, self.est_rule.weights
        R, _ = self.local(mu, alpha, pos, jacobian=False)
        E = self.eta_un[pos]
        nl = E.shape[1] * E.shape[2]
        Rw = (rho * self.est_weight(mu))[:, None] * R.reshape(pos.size, nl)
        return np.einsum("kij,ki->j", E.reshape(pos.size, nl, -1), Rw)

    def estimate(self, mu, alpha) -> float:
        return float(np.linalg.norm(self.estimate_vector(mu, alpha)))

    # ------------------------------------------------------------ full solve

    def solve(self, mu, with_estimate: bool = True) -> OnlineResult:
        mu = np.asarray(mu, dtype=float)
        t0 = time.perf_counter()
        c0 = self.asm.elements_evaluated
        if self.nonlinear:
            alpha, hist, conv, it = self.lspg(mu)
        else:
            alpha, hist, conv, it = self.galerkin(mu), [], True, 1
        est = self.estimate(mu, alpha) if with_estimate else float("nan")
        res = OnlineResult(alpha, est, it, time.perf_counter() - t0, conv, hist,
                           self.asm.elements_evaluated - c0)
        if not conv:
            raise OnlineError("Gauss-Newton did not converge", hist, res, stage="lspg", mu=mu)
        return res
