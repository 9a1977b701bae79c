"""Reference elements, meshes, elemental maps, restrictions and the mesh text format."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, FormatError

log = logging.getLogger(__name__)

# ---------------------------------------------------------------- reference element


def _lattice(dim: int, p: int) -> np.ndarray:
    """Principal lattice ordered as vertices, edge nodes, interior nodes."""
    if dim == 1:
        pts = [0.0, 1.0] + [i / p for i in range(1, p)]
        return np.array(pts)[:, None]
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    pts = list(verts)
    for f in range(3):
        a, b = verts[f], verts[(f + 1) % 3]
        pts.extend(a + (b - a) * i / p for i in range(1, p))
    for j in range(1, p):
        for i in range(1, p - j):
            pts.append(np.array([i / p, j / p]))
    return np.array(pts)


def _exponents(dim: int, p: int) -> np.ndarray:
    if dim == 1:
        return np.arange(p + 1)[:, None]
    return np.array([(i, j) for i in range(p + 1) for j in range(p + 1 - i)])


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    dim: int
    order: int
    nodes: np.ndarray
    exponents: np.ndarray
    coeffs: np.ndarray  # inverse Vandermonde: l_i(X) = sum_m mono_m(X) coeffs[m, i]
    facets: tuple  # local node ids per facet, ordered along the facet

    @property
    def n_lp(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.dim + 1

    def _mono(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.prod(X[..., None, :] ** self.exponents, axis=-1)

    def _mono_grad(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        e = self.exponents
        out = np.empty(X.shape[:-1] + (e.shape[0], self.dim))
        for d in range(self.dim):
            ed = e.copy()
            ed[:, d] -= 1
            fac = e[:, d].astype(float)
            val = np.prod(X[..., None, :] ** np.maximum(ed, 0), axis=-1)
            out[..., d] = fac * val
        return out

    def _mono_hess(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        e = self.exponents
        out = np.empty(X.shape[:-1] + (e.shape[0], self.dim, self.dim))
        for a in range(self.dim):
            for b in range(self.dim):
                ed = e.copy()
                fac = ed[:, a].astype(float)
                ed[:, a] -= 1
                fac = fac * np.maximum(ed[:, b], 0)
                ed[:, b] -= 1
                val = np.prod(X[..., None, :] ** np.maximum(ed, 0), axis=-1)
                out[..., a, b] = fac * val
        return out

    def eval(self, X) -> np.ndarray:
        """Basis values, shape (..., n_lp)."""
        return self._mono(X) @ self.coeffs

    def grad(self, X) -> np.ndarray:
        """Reference gradients, shape (..., n_lp, D)."""
        return np.einsum("...md,mi->...id", self._mono_grad(X), self.coeffs)

    def hess(self, X) -> np.ndarray:
        """Reference Hessians, shape (..., n_lp, D, D)."""
        return np.einsum("...mab,mi->...iab", self._mono_hess(X), self.coeffs)

    def facet_points(self, f: int, tau) -> np.ndarray:
        """Reference coordinates along facet ``f`` at parameters tau in [0, 1]."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if self.dim == 1:
            return np.full((tau.size, 1), float(f))
        verts = self.nodes[:3]
        a, b = verts[f], verts[(f + 1) % 3]
        return a + tau[:, None] * (b - a)


@lru_cache(maxsize=None)
def build_reference_element(dim: int, p: int) -> ReferenceElement:
    if dim not in (1, 2) or p not in (1, 2, 3):
        raise ConfigurationError(f"reference element (D={dim}, p={p}) unsupported")
    nodes = _lattice(dim, p)
    exps = _exponents(dim, p)
    V = np.prod(nodes[:, None, :] ** exps[None, :, :], axis=-1)
    coeffs = np.linalg.inv(V)
    if dim == 1:
        facets = ((0,), (1,))
    else:
        facets = tuple(
            (f, *range(3 + f * (p - 1), 3 + (f + 1) * (p - 1)), (f + 1) % 3) for f in range(3)
        )
    for a in (nodes, exps, coeffs):
        a.setflags(write=False)
    return ReferenceElement(dim, p, nodes, exps, coeffs, facets)


lagrange_eval = ReferenceElement.eval
lagrange_grad = ReferenceElement.grad


# ---------------------------------------------------------------- mesh


@dataclass(frozen=True)
class BoundaryFacet:
    element: int
    local_facet: int
    tag: str


@dataclass(eq=False)
class Mesh:
    """Triangulation of the reference domain.

    ``connectivity`` is stored element-major, shape (N_e, n_lp), with 0-based
    ids; the file format uses 1-based ids.
    """

    nodes: np.ndarray
    connectivity: np.ndarray
    p: int
    geom_order: int
    boundary_facets: list = field(default_factory=list)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        if self.nodes.ndim == 1:
            self.nodes = self.nodes[:, None]
        self.connectivity = np.ascontiguousarray(self.connectivity, dtype=np.int64)
        if self.geom_order not in (1, self.p):
            raise ConfigurationError(
                f"geom_order must be 1 or p={self.p}, got {self.geom_order}"
            )
        self.ref = build_reference_element(self.dim, self.p)
        self.geom_ref = build_reference_element(self.dim, self.geom_order)
        if self.connectivity.shape[1] != self.ref.n_lp:
            raise ConfigurationError("connectivity width does not match n_lp")
        if self.connectivity.size and (
            self.connectivity.min() < 0 or self.connectivity.max() >= self.n_nodes
        ):
            raise ConfigurationError("connectivity references an unknown node")
        self.boundary_facets = [
            f if isinstance(f, BoundaryFacet) else BoundaryFacet(int(f[0]), int(f[1]), str(f[2]))
            for f in self.boundary_facets
        ]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.connectivity.shape[0]

    @property
    def n_lp(self) -> int:
        return self.ref.n_lp

    @property
    def geom_local(self) -> np.ndarray:
        """Local ids of the geometry nodes (vertices first in the lattice)."""
        return np.arange(self.geom_ref.n_lp)

    @property
    def tags(self) -> set:
        return {f.tag for f in self.boundary_facets}

    def element_coords(self, elements=None, nodes: np.ndarray | None = None) -> np.ndarray:
        """Node coordinates per element, shape (n_el, n_lp, D)."""
        T = self.connectivity if elements is None else self.connectivity[elements]
        X = self.nodes if nodes is None else nodes
        return X[T]

    def facet_nodes(self, tags: Iterable[str] | None = None) -> np.ndarray:
        tags = None if tags is None else set(tags)
        ids = [
            self.connectivity[f.element, list(self.ref.facets[f.local_facet])]
            for f in self.boundary_facets
            if tags is None or f.tag in tags
        ]
        if not ids:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(ids))


# ---------------------------------------------------------------- elemental maps


def element_geometry(geom_ref: ReferenceElement, coords: np.ndarray, X: np.ndarray):
    """Map points, Jacobians G[..., a, b] = dx_a/dX_b and determinants.

    ``coords`` has shape (n_el, n_lp, D); only its first ``geom_ref.n_lp``
    rows are geometry nodes.  ``X`` has shape (n_q, D).
    """
    cg = coords[:, : geom_ref.n_lp, :]
    phi = geom_ref.eval(X)
    dphi = geom_ref.grad(X)
    x = np.matmul(phi, cg)
    nq, ni, D = dphi.shape
    G = np.matmul(cg.transpose(0, 2, 1), dphi.transpose(1, 0, 2).reshape(ni, nq * D))
    G = G.reshape(cg.shape[0], cg.shape[2], nq, D).transpose(0, 2, 1, 3)
    return x, G, _det(G)


def _det(G: np.ndarray) -> np.ndarray:
    if G.shape[-1] == 1:
        return G[..., 0, 0].copy()
    return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]


def _inv(G: np.ndarray, det: np.ndarray) -> np.ndarray:
    if G.shape[-1] == 1:
        return 1.0 / G
    out = np.empty_like(G)
    out[..., 0, 0] = G[..., 1, 1]
    out[..., 1, 1] = G[..., 0, 0]
    out[..., 0, 1] = -G[..., 0, 1]
    out[..., 1, 0] = -G[..., 1, 0]
    return out / det[..., None, None]


def elemental_map(mesh: Mesh, k: int, X):
    """(x, G, g) of the reference elemental map of element ``k`` at point X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x, G, g = element_geometry(mesh.geom_ref, mesh.element_coords([k]), X)
    return x[0, 0], G[0, 0], float(g[0, 0])


@dataclass(frozen=True)
class DeformedElementNodes:
    element: int
    coords: np.ndarray  # (n_lp, D) = Phi(x_{i,k})


def deformed_elemental_map(base: Mesh, deformed: DeformedElementNodes, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x, G, g = element_geometry(base.geom_ref, deformed.coords[None], X)
    return x[0, 0], G[0, 0], float(g[0, 0])


# ---------------------------------------------------------------- Dirichlet indices


@dataclass(frozen=True, eq=False)
class DirichletIndexSet:
    indices: np.ndarray
    n_dof: int

    @property
    def M_hf(self) -> int:
        return self.indices.size

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_dof, dtype=bool)
        mask[self.indices] = False
        return np.flatnonzero(mask)


def extract_dirichlet_indices(mesh: Mesh, tags: Iterable[str], n_eq: int = 1) -> DirichletIndexSet:
    tags = set(tags)
    unknown = tags - mesh.tags
    if unknown:
        raise ConfigurationError(f"unknown boundary tags {sorted(unknown)}")
    ids = mesh.facet_nodes(tags)
    full = np.concatenate([ids + mesh.n_nodes * d for d in range(n_eq)])
    return DirichletIndexSet(np.sort(full), mesh.n_nodes * n_eq)


# ---------------------------------------------------------------- restriction


def dof_map(mesh: Mesh, n_eq: int, elements=None) -> np.ndarray:
    """Global dof ids per element, shape (n_el, n_lp, n_eq)."""
    T = mesh.connectivity if elements is None else mesh.connectivity[elements]
    return T[:, :, None] + mesh.n_nodes * np.arange(n_eq)


def element_restriction(mesh: Mesh, k: int, v: np.ndarray, n_eq: int = 1) -> np.ndarray:
    """E_k v; shape (n_lp,) for scalars and (n_lp, n_eq) for vector states."""
    loc = np.asarray(v)[dof_map(mesh, n_eq, [k])[0]]
    return loc[:, 0] if n_eq == 1 else loc


def unassemble(mesh: Mesh, basis: np.ndarray, n_eq: int = 1, elements=None) -> np.ndarray:
    """Element-wise restriction of basis columns, shape (n_el, n_lp, n_eq, N)."""
    basis = np.asarray(basis)
    if basis.ndim == 1:
        basis = basis[:, None]
    return basis[dof_map(mesh, n_eq, elements)]


def scatter_accumulate(mesh: Mesh, local: np.ndarray, n_eq: int = 1, elements=None) -> np.ndarray:
    """Sum of E_k^T local_k; local has shape (n_el, n_lp[, n_eq])."""
    local = np.asarray(local, dtype=float)
    if local.ndim == 2:
        local = local[:, :, None]
    idx = dof_map(mesh, n_eq, elements)
    return np.bincount(idx.ravel(), weights=local.ravel(), minlength=mesh.n_nodes * n_eq)


# ---------------------------------------------------------------- file format

_MAGIC = "dtm-mesh"
_VERSION = 1


def format_mesh(mesh: Mesh) -> str:
    lines = [f"{_MAGIC} {_VERSION} {mesh.dim} {mesh.p} {mesh.geom_order}", f"nodes {mesh.n_nodes}"]
    lines += [" ".join(f"{c:.17g}" for c in row) for row in mesh.nodes]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(str(int(i) + 1) for i in row) for row in mesh.connectivity]
    lines.append(f"facets {len(mesh.boundary_facets)}")
    lines += [f"{f.element + 1} {f.local_facet + 1} {f.tag}" for f in mesh.boundary_facets]
    return "\n".join(lines) + "\n"


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(format_mesh(mesh), encoding="ascii")


def parse_mesh(text: str) -> Mesh:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        head = lines[0]
        if head[0] != _MAGIC:
            raise FormatError("not a dtm-mesh file")
        if int(head[1]) != _VERSION:
            raise FormatError(f"unsupported mesh version {head[1]}")
        dim, p, go = (int(v) for v in head[2:5])
        pos = 1

        def section(name):
            nonlocal pos
            if lines[pos][0] != name:
                raise FormatError(f"expected section '{name}'")
            n = int(lines[pos][1])
            rows = lines[pos + 1 : pos + 1 + n]
            if len(rows) != n:
                raise FormatError(f"section '{name}' truncated")
            pos += n + 1
            return rows

        nodes = np.array(section("nodes"), dtype=float).reshape(-1, dim)
        conn = np.array(section("elements"), dtype=np.int64) - 1
        facets = [BoundaryFacet(int(r[0]) - 1, int(r[1]) - 1, r[2]) for r in section("facets")]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed mesh file: {exc}") from exc
    if conn.ndim != 2:
        conn = conn.reshape(0, build_reference_element(dim, p).n_lp)
    return Mesh(nodes, conn, p, go, facets)


def read_mesh(path) -> Mesh:
    return parse_mesh(Path(path).read_text(encoding="ascii"))


# ---------------------------------------------------------------- generators


def interval_mesh(n_el: int, p: int, a: float = 0.0, b: float = 1.0, geom_order: int | None = None,
                  breakpoints: Sequence[float] = ()) -> Mesh:
    """Uniform mesh of [a, b]; extra breakpoints are inserted as vertices."""
    verts = np.unique(np.concatenate([np.linspace(a, b, n_el + 1), np.asarray(breakpoints, float)]))
    ne = verts.size - 1
    nv = verts.size
    interior = [verts[:-1, None] + (verts[1:] - verts[:-1])[:, None] * (i / p) for i in range(1, p)]
    nodes = np.concatenate([verts] + [c[:, 0] for c in interior]) if p > 1 else verts
    conn = np.zeros((ne, p + 1), dtype=np.int64)
    conn[:, 0] = np.arange(ne)
    conn[:, 1] = np.arange(1, ne + 1)
    for i in range(1, p):
        conn[:, 1 + i] = nv + (i - 1) * ne + np.arange(ne)
    facets = [BoundaryFacet(0, 0, "left"), BoundaryFacet(ne - 1, 1, "right")]
    return Mesh(nodes[:, None], conn, p, geom_order or p, facets)


EdgeFn = Callable[[np.ndarray, np.ndarray, str | None, np.ndarray], np.ndarray]


def lift_triangulation(
    points: np.ndarray,
    triangles: np.ndarray,
    p: int,
    tag_fn: Callable[[np.ndarray, np.ndarray], str],
    geom_order: int | None = None,
    edge_fn: EdgeFn | None = None,
) -> Mesh:
    """Build a P_p mesh from a P1 triangulation.

    ``tag_fn(a, b)`` names the boundary segment a-b.  ``edge_fn(a, b, tag, t)``
    may place edge nodes (parameters t in (0, 1)) on a curved boundary; by
    default they sit on the straight segment.
    """
    points = np.asarray(points, dtype=float)
    tri = np.asarray(triangles, dtype=np.int64).copy()
    # orient counter-clockwise
    a, b, c = points[tri[:, 0]], points[tri[:, 1]], points[tri[:, 2]]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flip = area2 < 0
    tri[flip, 1], tri[flip, 2] = tri[flip, 2].copy(), tri[flip, 1].copy()

    ne = tri.shape[0]
    edges = np.stack([tri[:, [f, (f + 1) % 3]] for f in range(3)], axis=1)  # (ne, 3, 2)
    key = np.sort(edges, axis=2).reshape(-1, 2)
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    boundary_edge = counts == 1

    nodes = [points]
    n_cur = points.shape[0]
    edge_tags: dict[int, str] = {}
    for e in np.flatnonzero(boundary_edge):
        edge_tags[e] = tag_fn(points[uniq[e, 0]], points[uniq[e, 1]])

    conn = np.zeros((ne, (p + 1) * (p + 2) // 2), dtype=np.int64)
    conn[:, :3] = tri
    if p > 1:
        t = np.arange(1, p) / p
        A = points[uniq[:, 0]]
        B = points[uniq[:, 1]]
        enodes = A[:, None, :] + t[None, :, None] * (B - A)[:, None, :]
        if edge_fn is not None:
            for e, tag in edge_tags.items():
                enodes[e] = edge_fn(A[e], B[e], tag, t)
        nodes.append(enodes.reshape(-1, 2))
        base = n_cur + (p - 1) * np.arange(uniq.shape[0])
        n_cur += (p - 1) * uniq.shape[0]
        for f in range(3):
            eid = inv.reshape(ne, 3)[:, f]
            forward = edges[:, f, 0] < edges[:, f, 1]
            for i in range(p - 1):
                j = np.where(forward, i, p - 2 - i)
                conn[:, 3 + f * (p - 1) + i] = base[eid] + j
    allnodes = np.concatenate(nodes, axis=0)
    if p == 3:
        loc = allnodes[conn[:, :9]]
        centre = 0.25 * loc[:, 3:9].sum(axis=1) - loc[:, :3].sum(axis=1) / 6.0
        conn[:, 9] = n_cur + np.arange(ne)
        allnodes = np.concatenate([allnodes, centre], axis=0)

    facets = []
    einv = inv.reshape(ne, 3)
    for k in range(ne):
        for f in range(3):
            e = einv[k, f]
            if boundary_edge[e]:
                facets.append(BoundaryFacet(k, f, edge_tags[e]))
    return Mesh(allnodes, conn, p, geom_order or p, facets)


def structured_triangles(nx: int, ny: int) -> np.ndarray:
    """Triangles of an nx-by-ny grid of quads with node id i + (nx+1) j, alternating diagonals."""
    tris = []
    for j, i in itertools.product(range(ny), range(nx)):
        n00 = i + (nx + 1) * j
        n10, n01, n11 = n00 + 1, n00 + nx + 1, n00 + nx + 2
        if (i + j) % 2 == 0:
            tris += [(n00, n10, n11), (n00, n11, n01)]
        else:
            tris += [(n00, n10, n01), (n10, n11, n01)]
    return np.array(tris, dtype=np.int64)


def rectangle_mesh(nx: int, ny: int, p: int, box=(0.0, 1.0, 0.0, 1.0), geom_order=None) -> Mesh:
    x0, x1, y0, y1 = box
    X, Y = np.meshgrid(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1))
    pts = np.column_stack([X.ravel(), Y.ravel()])
    tol = 1e-12 * max(x1 - x0, y1 - y0)

    def tag(a, b):
        m = 0.5 * (a + b)
        if abs(m[1] - y0) < tol:
            return "bottom"
        if abs(m[1] - y1) < tol:
            return "top"
        if abs(m[0] - x0) < tol:
            return "left"
        return "right"

    return lift_triangulation(pts, structured_triangles(nx, ny), p, tag, geom_order)
