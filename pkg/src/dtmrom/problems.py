"""Concrete parameterized problems: 1D study, airfoil potential flow, Burgers bump channel."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .fe import (
    BurgersSUPGAssembler,
    ElementKit,
    LaplaceAssembler,
    LocalAssembler,
    NewtonOptions,
    evaluate,
    hf_solve_linear,
    lumped_mass,
    newton_solve,
)
from .geometry import RegionedMap, f_naca, patches_from_config, precompute_regions
from .mesh import DirichletIndexSet, Mesh, extract_dirichlet_indices, interval_mesh, lift_triangulation
from .quadrature import gauss_rule

log = logging.getLogger(__name__)

PROBLEM_IDS = ("study-1d", "laplace-airfoil", "burgers-bump")


@dataclass(eq=False)
class ProblemSpec:
    """Binds mesh, geometry map, Dirichlet datum and local assembler."""

    id: str
    mesh: Mesh
    geo: RegionedMap | None
    geometry_config: dict
    dirichlet_tags: tuple
    datum: Callable  # datum(x (n, D), tags (n,), mu) -> (n, n_eq)
    assembler: LocalAssembler
    param_box: np.ndarray  # (P, 2)
    mu_bar: np.ndarray
    n_eq: int = 1
    nonlinear: bool = False
    data_fn: Callable = field(default=lambda mu: {})
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dirichlet: DirichletIndexSet = extract_dirichlet_indices(self.mesh, self.dirichlet_tags, self.n_eq)
        # tag of each Dirichlet node (first matching facet wins)
        tag_of = {}
        for f in self.mesh.boundary_facets:
            if f.tag in self.dirichlet_tags:
                for i in self.mesh.connectivity[f.element, list(self.mesh.ref.facets[f.local_facet])]:
                    tag_of.setdefault(int(i), f.tag)
        self.dir_nodes = self.mesh.facet_nodes(self.dirichlet_tags)
        self.dir_tags = np.array([tag_of[int(i)] for i in self.dir_nodes], dtype=object)

    @property
    def n_dof(self) -> int:
        return self.mesh.n_nodes * self.n_eq

    def check_mu(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).ravel()
        if mu.size != self.param_box.shape[0]:
            raise ConfigurationError(f"{self.id}: expected {self.param_box.shape[0]} parameters, got {mu.size}")
        return mu

    def mapped_nodes(self, mu, node_ids=None) -> np.ndarray:
        if self.geo is None:
            return self.mesh.nodes.copy() if node_ids is None else self.mesh.nodes[node_ids]
        return self.geo.map_nodes(mu, node_ids)

    def dirichlet_values(self, mu) -> np.ndarray:
        """h_mu on I_dir (state-blocked), evaluated at the mapped Dirichlet nodes."""
        mu = self.check_mu(mu)
        x = self.mapped_nodes(mu, self.dir_nodes)
        vals = np.asarray(self.datum(x, self.dir_tags, mu), dtype=float).reshape(len(self.dir_nodes), self.n_eq)
        return vals.T.ravel()  # block order matches extract_dirichlet_indices

    def data(self, mu) -> dict:
        return self.data_fn(np.asarray(mu, float))

    def residual(self, u, mu, coords=None, jacobian=True):
        coords = self.mapped_nodes(mu) if coords is None else coords
        return evaluate(self.mesh, self.assembler, coords, u, self.data(mu), jacobian=jacobian)

    def solve(self, mu, u0=None, options: NewtonOptions | None = None):
        """High-fidelity solution at mu."""
        mu = self.check_mu(mu)
        coords = self.mapped_nodes(mu)
        h = self.dirichlet_values(mu)
        if not self.nonlinear:
            return hf_solve_linear(self.mesh, self.assembler, coords, self.dirichlet, h, self.data(mu))
        u = np.zeros(self.n_dof) if u0 is None else np.array(u0, dtype=float)
        u[self.dirichlet.indices] = h
        if not hasattr(self, "_lumped"):
            self._lumped = lumped_mass(self.mesh, self.n_eq)
        data = self.data(mu)
        fn = lambda v: evaluate(self.mesh, self.assembler, coords, v, data)
        u, _ = newton_solve(fn, u, self.dirichlet.interior, self._lumped, options, mu=mu)
        return u

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.param_box[:, 0], self.param_box[:, 1]
        return lo + (hi - lo) * rng.random((n, lo.size))


# ---------------------------------------------------------------- 1D study


def exact_1d(x):
    return np.sin(np.pi * x) / np.pi**2


def study_1d_problem(n_el: int = 16, p: int = 3, geom_order: int | None = None) -> ProblemSpec:
    """-u'' = sin(pi x) on (0, 1), homogeneous Dirichlet data."""
    mesh = interval_mesh(n_el, p, geom_order=geom_order or p)
    kit = ElementKit.for_mesh(mesh)
    asm = LaplaceAssembler(kit, source=lambda x: np.sin(np.pi * x[..., 0]))
    return ProblemSpec("study-1d", mesh, None, {}, ("left", "right"),
                       lambda x, tags, mu: np.zeros(len(x)), asm, np.zeros((0, 2)), np.zeros(0))


# ---------------------------------------------------------------- airfoil

AIRFOIL_BOX = (-2.0, 6.0, 4.0)  # x_min, x_max, H
AIRFOIL_MU_BAR = np.array([0.12, 0.12, 0.0, 0.0])
AIRFOIL_BOX_P = np.array([[0.09, 0.15], [0.09, 0.15], [0.1, 0.3], [0.6, 0.8]])


def airfoil_geometry_config(x0=-0.5, x1=1.5, y=0.5) -> dict:
    """Two patches around the chord line; everything else is the identity region."""
    return {
        "patches": [
            {"label": 2, "name": "upper",
             "south": {"curve": "naca-upper", "x0": x0, "x1": x1, "mu": 2},
             "north": {"curve": "segment", "p0": [x0, y], "p1": [x1, y]},
             "west": {"curve": "segment", "p0": [x0, 0.0], "p1": [x0, y]},
             "east": {"curve": "segment", "p0": [x1, 0.0], "p1": [x1, y]}},
            {"label": 3, "name": "lower",
             "south": {"curve": "segment", "p0": [x0, -y], "p1": [x1, -y]},
             "north": {"curve": "naca-lower", "x0": x0, "x1": x1, "mu": 1},
             "west": {"curve": "segment", "p0": [x0, -y], "p1": [x0, 0.0]},
             "east": {"curve": "segment", "p0": [x1, -y], "p1": [x1, 0.0]}},
        ],
        "identity_labels": [1],
        "complement_label": 1,
    }


def h_bar(t, mu3, mu4):
    return 0.5 * (1.0 + np.arctan(10.0 * (t - mu3)) / np.pi + np.arctan(10.0 * (t - mu4)) / np.pi)


def airfoil_datum(x, tags, mu, H: float = AIRFOIL_BOX[2]):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tags = np.asarray(tags, dtype=object)
    t = (x[:, 1] + H) / (2 * H)
    out = np.full(x.shape[0], np.nan)
    out[tags == "bottom"] = 0.0
    out[(tags == "top") | (tags == "airfoil")] = 1.0
    sel = tags == "outflow"
    out[sel] = t[sel]
    sel = tags == "inflow"
    if sel.any():
        h0, h1 = h_bar(0.0, mu[2], mu[3]), h_bar(1.0, mu[2], mu[3])
        out[sel] = (h_bar(t[sel], mu[2], mu[3]) - h0) / (h1 - h0)
    if np.isnan(out).any():
        raise ConfigurationError("airfoil datum evaluated on an untagged point")
    return out


def airfoil_mesh(p: int = 3, n_af: int = 28, n_inflow: int = 16, n_outflow: int = 8, n_horizontal: int = 12,
                 far_area: float = 0.5, near_area: float = 0.005, min_angle: float = 30.0,
                 near_box=(-0.8, 2.3, -0.9, 0.9), n_near: int = 12) -> Mesh:
    """Unstructured P_p isoparametric mesh of the box minus the reference airfoil (th = 0.12)."""
    import triangle

    x_min, x_max, H = AIRFOIL_BOX
    th = AIRFOIL_MU_BAR[0]
    pts: list = []
    segs: list = []

    def loop(P):
        s = len(pts)
        pts.extend(P)
        segs.extend((s + i, s + (i + 1) % len(P)) for i in range(len(P)))

    def rect(x0, x1, y0, y1, nx, ny):
        xs, ys = np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1)
        return ([(x, y0) for x in xs[:-1]] + [(x1, y) for y in ys[:-1]]
                + [(x, y1) for x in xs[::-1][:-1]] + [(x0, y) for y in ys[::-1][:-1]])

    outer = rect(x_min, x_max, -H, H, n_horizontal, n_inflow)
    # outflow count may differ from inflow count
    ys_out = np.linspace(-H, H, n_outflow + 1)
    xs = np.linspace(x_min, x_max, n_horizontal + 1)
    outer = ([(x, -H) for x in xs[:-1]] + [(x_max, y) for y in ys_out[:-1]]
             + [(x, H) for x in xs[::-1][:-1]] + [(x_min, y) for y in np.linspace(-H, H, n_inflow + 1)[::-1][:-1]])
    loop(outer)
    bx0, bx1, by0, by1 = near_box
    loop(rect(bx0, bx1, by0, by1, n_near, max(2, n_near // 2)))
    xa = np.linspace(0.0, 1.0, n_af + 1) ** 2
    loop([(x, f_naca(x, th)) for x in xa] + [(x, -f_naca(x, th)) for x in xa[::-1][1:-1]])
    T = triangle.triangulate(
        dict(vertices=np.array(pts), segments=np.array(segs), holes=np.array([[0.5, 0.0]]),
             regions=np.array([[0.5 * (bx0 + bx1), by1 - 0.05, 1, near_area], [x_min + 0.1, -H + 0.1, 2, far_area]])),
        f"pq{min_angle:g}YAa")
    tol = 1e-9

    def tag(a, b):
        m = 0.5 * (a + b)
        if abs(m[1] + H) < tol:
            return "bottom"
        if abs(m[1] - H) < tol:
            return "top"
        if abs(m[0] - x_min) < tol:
            return "inflow"
        if abs(m[0] - x_max) < tol:
            return "outflow"
        return "airfoil"

    def on_airfoil(a, b, tg, t):
        if tg != "airfoil":
            return a + t[:, None] * (b - a)
        sign = 1.0 if a[1] + b[1] > 0 else -1.0
        sa, sb = np.sqrt(max(a[0], 0.0)), np.sqrt(max(b[0], 0.0))
        x = (sa + t * (sb - sa)) ** 2
        return np.column_stack([x, sign * f_naca(x, th)])

    return lift_triangulation(T["vertices"], T["triangles"], p, tag, p, on_airfoil)


def airfoil_problem(mesh: Mesh | None = None, geometry: dict | None = None, **mesh_kw) -> ProblemSpec:
    mesh = mesh if mesh is not None else airfoil_mesh(**mesh_kw)
    geometry = geometry or airfoil_geometry_config()
    patches, ident, comp = patches_from_config(geometry)
    geo = precompute_regions(mesh.nodes, patches, AIRFOIL_MU_BAR, ident, comp)
    asm = LaplaceAssembler(ElementKit.for_mesh(mesh))
    return ProblemSpec("laplace-airfoil", mesh, geo, geometry, ("bottom", "top", "inflow", "outflow", "airfoil"),
                       airfoil_datum, asm, AIRFOIL_BOX_P.copy(), AIRFOIL_MU_BAR.copy())


# ---------------------------------------------------------------- Burgers bump channel

BURGERS_BOX_P = np.array([[0.15, 0.35], [0.35, 0.65], [0.05, 0.2]])  # height, apex offset, nu
BURGERS_MU_BAR = BURGERS_BOX_P.mean(axis=1)
BURGERS_CHANNEL = (0.0, 3.0, 1.0)  # x_min, x_max, height
BUMP = (1.0, 2.0, 0.6)  # x_start, x_end, patch top


def bump_profile(x, h, xa, x_start=BUMP[0], x_end=BUMP[1]):
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x)
    left = (x >= x_start) & (x <= xa)
    right = (x > xa) & (x <= x_end)
    y[left] = h * np.sin(0.5 * np.pi * (x[left] - x_start) / (xa - x_start)) ** 2
    y[right] = h * np.cos(0.5 * np.pi * (x[right] - xa) / (x_end - xa)) ** 2
    return y


def burgers_geometry_config() -> dict:
    xs, xe, top = BUMP
    common = {"mu_height": 1, "mu_apex": 2, "apex_origin": xs, "x_start": xs, "x_end": xe}
    xm = xs + BURGERS_MU_BAR[1]
    return {
        "patches": [
            {"label": 2, "name": "bump-left",
             "south": {"curve": "bump-left", **common},
             "north": {"curve": "segment", "p0": [xs, top], "p1": [xm, top]},
             "west": {"curve": "segment", "p0": [xs, 0.0], "p1": [xs, top]},
             "east": {"curve": "apex-segment", "mu_height": 1, "mu_apex": 2, "apex_origin": xs, "top": [xm, top]}},
            {"label": 3, "name": "bump-right",
             "south": {"curve": "bump-right", **common},
             "north": {"curve": "segment", "p0": [xm, top], "p1": [xe, top]},
             "west": {"curve": "apex-segment", "mu_height": 1, "mu_apex": 2, "apex_origin": xs, "top": [xm, top]},
             "east": {"curve": "segment", "p0": [xe, 0.0], "p1": [xe, top]}},
        ],
        "identity_labels": [1],
        "complement_label": 1,
    }


def burgers_mesh(nx: int = 240, ny: int = 60, p: int = 1) -> Mesh:
    """Structured mapped grid of the channel above the reference bump; straight-sided elements."""
    x0, x1, Hc = BURGERS_CHANNEL
    h, xa = BURGERS_MU_BAR[0], BUMP[0] + BURGERS_MU_BAR[1]
    xs = np.linspace(x0, x1, nx + 1)
    for knot in (BUMP[0], xa, BUMP[1]):  # keep bump knots as grid lines
        xs[np.argmin(np.abs(xs - knot))] = knot
    yb = bump_profile(xs, h, xa)
    eta = np.linspace(0.0, 1.0, ny + 1)
    X = np.repeat(xs[None, :], ny + 1, axis=0)
    Y = yb[None, :] + (Hc - yb)[None, :] * eta[:, None]
    pts = np.column_stack([X.ravel(), Y.ravel()])
    from .mesh import structured_triangles

    tol = 1e-9

    def tag(a, b):
        m = 0.5 * (a + b)
        if abs(m[0] - x0) < tol and abs(a[0] - b[0]) < tol:
            return "inflow"
        if abs(m[0] - x1) < tol and abs(a[0] - b[0]) < tol:
            return "outflow"
        if abs(m[1] - Hc) < tol:
            return "top"
        return "bottom"

    def on_bump(a, b, tg, t):
        pts_ = a + t[:, None] * (b - a)
        if tg == "bottom":
            pts_[:, 1] = bump_profile(pts_[:, 0], h, xa)
        return pts_

    return lift_triangulation(pts, structured_triangles(nx, ny), p, tag, 1, on_bump)


def burgers_datum(x, tags, mu):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tags = np.asarray(tags, dtype=object)
    out = np.zeros((x.shape[0], 2))
    sel = tags == "inflow"
    y = x[sel, 1] / BURGERS_CHANNEL[2]
    out[sel, 0] = 4.0 * y * (1.0 - y)
    return out


BURGERS_EPS = 1e-3  # streamline-direction regularization, relative to the unit inflow speed


def burgers_problem(mesh: Mesh | None = None, geometry: dict | None = None, alpha: float = 0.5,
                    eps: float = BURGERS_EPS, **mesh_kw) -> ProblemSpec:
    mesh = mesh if mesh is not None else burgers_mesh(**mesh_kw)
    geometry = geometry or burgers_geometry_config()
    patches, ident, comp = patches_from_config(geometry)
    geo = precompute_regions(mesh.nodes, patches, BURGERS_MU_BAR, ident, comp)
    kit = ElementKit(2, mesh.p, mesh.geom_order, gauss_rule(2, 2 * mesh.p + 2))
    asm = BurgersSUPGAssembler(kit, alpha=alpha, eps=eps)
    return ProblemSpec("burgers-bump", mesh, geo, geometry, ("inflow", "bottom", "top"), burgers_datum, asm,
                       BURGERS_BOX_P.copy(), BURGERS_MU_BAR.copy(), n_eq=2, nonlinear=True,
                       data_fn=lambda mu: {"nu": float(mu[2])}, settings={"alpha": alpha, "eps": eps})


def get_problem(problem_id: str, mesh: Mesh | None = None, geometry: dict | None = None, **kw) -> ProblemSpec:
    if problem_id == "laplace-airfoil":
        return airfoil_problem(mesh, geometry, **kw)
    if problem_id == "burgers-bump":
        return burgers_problem(mesh, geometry, **kw)
    if problem_id == "study-1d":
        return study_1d_problem(**kw)
    raise ConfigurationError(f"unknown problem id '{problem_id}'")


# ---------------------------------------------------------------- registries used by the online stage


def make_assembler(problem_id: str, dim: int, p: int, geom_order: int, settings: dict | None = None) -> LocalAssembler:
    settings = settings or {}
    if problem_id == "burgers-bump":
        kit = ElementKit(dim, p, geom_order, gauss_rule(dim, 2 * p + 2))
        return BurgersSUPGAssembler(kit, alpha=settings.get("alpha", 0.5),
                                    eps=settings.get("eps", BURGERS_EPS))
    if problem_id in ("laplace-airfoil", "study-1d"):
        return LaplaceAssembler(ElementKit(dim, p, geom_order, gauss_rule(dim, 2 * p)))
    raise ConfigurationError(f"unknown problem id '{problem_id}'")


def datum_for(problem_id: str):
    return {"laplace-airfoil": airfoil_datum, "burgers-bump": burgers_datum}.get(problem_id)


def estimator_weight_for(problem_id: str):
    """Scalar weight applied to the residual before its dual norm is estimated.

    Burgers residuals are divided by the viscosity, whose size sets the
    stability constant, so the weighted dual norm tracks the error uniformly in nu.
    """
    if problem_id == "burgers-bump":
        return lambda mu: 1.0 / float(mu[2])
    return lambda mu: 1.0


def data_fn_for(problem_id: str):
    if problem_id == "burgers-bump":
        return lambda mu: {"nu": float(mu[2])}
    return lambda mu: {}
