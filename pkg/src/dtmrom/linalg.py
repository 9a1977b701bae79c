"""Dense/sparse linear algebra helpers and the Lawson-Hanson NNLS solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SparseNonnegVector:
    """Sparse weight vector: ``values`` on the sorted ``indices`` of a length-``n`` vector."""

    n: int
    indices: np.ndarray
    values: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    @property
    def support_size(self) -> int:
        return self.indices.size

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.indices] = self.values
        return out

    @classmethod
    def from_dense(cls, x: np.ndarray, **kw) -> "SparseNonnegVector":
        idx = np.flatnonzero(x)
        return cls(x.size, idx, x[idx].copy(), **kw)


class _PassiveQR:
    """Incrementally updated full QR of G[:, P]."""

    def __init__(self, G: np.ndarray):
        self.G = G
        self.cols: list[int] = []
        self.Q = np.eye(G.shape[0])
        self.R = np.zeros((G.shape[0], 0))

    def add(self, j: int) -> None:
        k = len(self.cols)
        self.Q, self.R = sla.qr_insert(self.Q, self.R, self.G[:, j], k, which="col")
        self.cols.append(j)

    def remove(self, j: int) -> None:
        k = self.cols.index(j)
        self.Q, self.R = sla.qr_delete(self.Q, self.R, k, 1, which="col")
        self.cols.pop(k)

    def solve(self, b: np.ndarray) -> np.ndarray:
        k = len(self.cols)
        qb = self.Q[:, :k].T @ b
        return sla.solve_triangular(self.R[:k, :k], qb)


def nnls(G, b, tol: float = 1e-10, max_iter: int | None = None) -> SparseNonnegVector:
    """Lawson-Hanson active-set NNLS with a relative-residual early exit.

    Stops as soon as ||G x - b|| <= tol ||b|| or the KKT conditions hold.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if G.ndim != 2 or G.shape[0] != b.size:
        raise ConfigurationError("nnls: inconsistent shapes")
    if not (0.0 < tol < 1.0):
        raise ConfigurationError("nnls: tol must lie in (0, 1)")
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(b))):
        raise ConfigurationError("nnls: non-finite input")
    m, n = G.shape
    max_iter = max_iter if max_iter is not None else max(3 * n, 50)
    cap_inner = m * n + 10
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    bnorm = np.linalg.norm(b)
    target = tol * bnorm
    dual_tol = 10.0 * np.finfo(float).eps * max(1.0, np.abs(G).sum(axis=0).max()) * max(1.0, bnorm)
    qr = _PassiveQR(G)
    r = b.copy()
    it = inner_total = stall = 0
    rprev = np.inf
    while True:
        rn = np.linalg.norm(r)
        if rn <= target:
            break
        # round-off floor: the residual no longer decreases, or the passive set spans the rows
        stall = stall + 1 if rn >= (1.0 - 1e-12) * rprev else 0
        rprev = rn
        if stall >= 20 or passive.sum() >= m:
            log.warning("nnls: stopped at the round-off floor, ||r||/||b|| = %.3e", rn / max(bnorm, 1e-300))
            break
        w = G.T @ r
        w[passive] = -np.inf
        t = int(np.argmax(w))
        if w[t] <= dual_tol:
            break
        it += 1
        if it > max_iter:
            raise SolverError(f"nnls: no convergence after {max_iter} outer iterations", stage="nnls")
        passive[t] = True
        qr.add(t)
        while True:
            inner_total += 1
            if inner_total > cap_inner:
                raise SolverError("nnls: cycling guard triggered", stage="nnls")
            z = np.zeros(n)
            z[qr.cols] = qr.solve(b)
            zp = z[passive]
            if np.all(zp > 0):
                x = z
                break
            xp = x[passive]
            neg = zp <= 0
            alpha = np.min(xp[neg] / (xp[neg] - zp[neg]))
            x = x + alpha * (z - x)
            x[~passive] = 0.0
            drop = passive & (x <= np.finfo(float).tiny)
            if not drop.any():
                # guard against round-off: drop the most violating column
                idx = np.flatnonzero(passive)
                drop = np.zeros(n, dtype=bool)
                drop[idx[np.argmin(x[idx])]] = True
            for j in np.flatnonzero(drop):
                qr.remove(int(j))
            passive &= ~drop
            x[drop] = 0.0
            if not passive.any():
                break
        P = np.flatnonzero(passive)
        r = b - G[:, P] @ x[P]
    x[~passive] = 0.0
    idx = np.flatnonzero(x > 0)
    return SparseNonnegVector(n, idx, x[idx].copy(), residual=float(np.linalg.norm(b - G @ x)),
                              iterations=it)


@dataclass(frozen=True, eq=False)
class SparseSignedVector:
    n: int
    indices: np.ndarray
    values: np.ndarray
    residual: float = 0.0

    @property
    def support_size(self) -> int:
        return self.indices.size

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.indices] = self.values
        return out


def nnls_signed(G, b, tol: float = 1e-10) -> SparseSignedVector:
    """Signed sparse solution via NNLS on [G, -G]; returns rho+ - rho-."""
    G = np.asarray(G, dtype=float)
    n = G.shape[1]
    sol = nnls(np.hstack([G, -G]), b, tol).dense()
    rho = sol[:n] - sol[n:]
    idx = np.flatnonzero(rho)
    return SparseSignedVector(n, idx, rho[idx], residual=float(np.linalg.norm(G @ rho - b)))


def sym_eig(C) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""
    C = np.asarray(C, dtype=float)
    scale = max(1.0, np.abs(C).max()) if C.size else 1.0
    if C.size and np.abs(C - C.T).max() > 1e-10 * scale:
        raise ConfigurationError("sym_eig: matrix is not symmetric")
    lam, V = np.linalg.eigh(0.5 * (C + C.T))
    return lam[::-1].copy(), V[:, ::-1].copy()


class SparseFactor:
    """Reusable sparse LU factorization."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise SolverError("sparse_solve: matrix is not square")
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"sparse_solve: {exc}") from exc
        self.shape = A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._lu.solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SolverError("sparse_solve: non-finite solution")
        return x


def sparse_solve(A, b) -> np.ndarray:
    return SparseFactor(A).solve(b)


def dense_lstsq(A, b) -> np.ndarray:
    """Minimum-norm least-squares solution."""
    return np.linalg.lstsq(np.asarray(A, float), np.asarray(b, float), rcond=None)[0]
