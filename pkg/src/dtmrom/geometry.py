"""Parameterized geometry maps: Gordon-Hall patches, regioned node maps, NACA profile, 1D map."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, GeometryError, InversionError
from .fe import ElementKit
from .mesh import Mesh, element_geometry
from .quadrature import QuadRule

# ---------------------------------------------------------------- NACA profile

_NACA = (0.2969, -0.1260, -0.3516, 0.2843, -0.1036)


def f_naca(s, th):
    """Half-thickness of the symmetric four-digit profile at chord fraction s."""
    s = np.asarray(s, dtype=float)
    a0, a1, a2, a3, a4 = _NACA
    return 5.0 * th * (a0 * np.sqrt(s) + s * (a1 + s * (a2 + s * (a3 + s * a4))))


def f_naca_ds(s, th):
    s = np.maximum(np.asarray(s, dtype=float), 1e-14)
    a0, a1, a2, a3, a4 = _NACA
    return 5.0 * th * (0.5 * a0 / np.sqrt(s) + a1 + s * (2 * a2 + s * (3 * a3 + s * 4 * a4)))


# ---------------------------------------------------------------- 1D map


@dataclass(frozen=True)
class PiecewiseLinearMap1D:
    """Continuous two-branch linear bijection of [0, 1] with Phi(0)=0, Phi(1)=1."""

    x0: float = 1.0 / np.sqrt(2.0)
    slope_left: float = 0.5

    @property
    def y0(self) -> float:
        return self.slope_left * self.x0

    @property
    def slope_right(self) -> float:
        return (1.0 - self.y0) / (1.0 - self.x0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.x0, self.slope_left * x, self.y0 + self.slope_right * (x - self.x0))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.x0, self.slope_left, self.slope_right)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y <= self.y0, y / self.slope_left, self.x0 + (y - self.y0) / self.slope_right)


def map_1d(x, phi: PiecewiseLinearMap1D | None = None):
    return (phi or PiecewiseLinearMap1D())(x)


# ---------------------------------------------------------------- curves


@dataclass(frozen=True)
class Curve:
    """Parameterized curve c(t; mu) with derivative dc/dt; both vectorized in t."""

    fn: Callable
    dfn: Callable
    name: str = "curve"

    def __call__(self, t, mu):
        return self.fn(np.asarray(t, dtype=float), mu)

    def deriv(self, t, mu):
        return self.dfn(np.asarray(t, dtype=float), mu)


def _stack(x, y):
    return np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float)), axis=-1)


def segment(p0, p1) -> Curve:
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    return Curve(lambda t, mu: p0 + t[..., None] * (p1 - p0),
                 lambda t, mu: np.broadcast_to(p1 - p0, t.shape + (2,)).copy(), "segment")


def moving_segment(p0: Callable, p1: Callable, name="moving-segment") -> Curve:
    """Segment whose endpoints depend on mu."""
    return Curve(lambda t, mu: p0(mu) + t[..., None] * (p1(mu) - p0(mu)),
                 lambda t, mu: np.broadcast_to(p1(mu) - p0(mu), t.shape + (2,)).copy(), name)


def naca_curve(x0: float, x1: float, side: str, mu_index: int) -> Curve:
    """Graph of +-f_naca over [0, 1], extended by the chord line, for x in [x0, x1]."""
    sign = 1.0 if side == "upper" else -1.0

    def fn(t, mu):
        x = x0 + (x1 - x0) * t
        inside = (x >= 0) & (x <= 1)
        y = np.where(inside, sign * f_naca(np.clip(x, 0, 1), mu[mu_index]), 0.0)
        return _stack(x, y)

    def dfn(t, mu):
        x = x0 + (x1 - x0) * t
        inside = (x > 0) & (x <= 1)
        dy = np.where(inside, sign * f_naca_ds(np.clip(x, 0, 1), mu[mu_index]) * (x1 - x0), 0.0)
        return _stack(np.full_like(x, x1 - x0), dy)

    return Curve(fn, dfn, f"naca-{side}")


def bump_curve(x_start: float, x_end: float, side: str, height_index: int, apex_index: int,
               apex_origin: float) -> Curve:
    """Half of a sin^2 bump of height mu[h] with apex at x_a = apex_origin + mu[a].

    ``left`` runs from (x_start, 0) to the apex, ``right`` from the apex to (x_end, 0).
    """

    def geom(t, mu):
        h, xa = mu[height_index], apex_origin + mu[apex_index]
        if side == "left":
            L = xa - x_start
            x = x_start + L * t
            y = h * np.sin(0.5 * np.pi * t) ** 2
            dx = np.full_like(t, L)
            dy = h * np.pi * np.sin(0.5 * np.pi * t) * np.cos(0.5 * np.pi * t)
        else:
            L = x_end - xa
            x = xa + L * t
            y = h * np.cos(0.5 * np.pi * t) ** 2
            dx = np.full_like(t, L)
            dy = -h * np.pi * np.sin(0.5 * np.pi * t) * np.cos(0.5 * np.pi * t)
        return x, y, dx, dy

    return Curve(lambda t, mu: _stack(*geom(t, mu)[:2]), lambda t, mu: _stack(*geom(t, mu)[2:]), f"bump-{side}")


# ---------------------------------------------------------------- Gordon-Hall patch


@dataclass(frozen=True)
class GordonHallPatch:
    """Transfinite map of [0,1]^2 bounded by south/north curves c(s) and west/east curves c(t)."""

    south: Curve
    north: Curve
    west: Curve
    east: Curve
    name: str = "patch"

    def corners(self, mu) -> np.ndarray:
        z, o = np.array([0.0]), np.array([1.0])
        return np.array([self.south(z, mu)[0], self.south(o, mu)[0], self.north(z, mu)[0], self.north(o, mu)[0]])

    def corner_mismatch(self, mu) -> float:
        z, o = np.array([0.0]), np.array([1.0])
        pairs = [(self.south(z, mu), self.west(z, mu)), (self.south(o, mu), self.east(z, mu)),
                 (self.north(z, mu), self.west(o, mu)), (self.north(o, mu), self.east(o, mu))]
        return max(float(np.abs(a - b).max()) for a, b in pairs)

    def eval(self, st, mu) -> np.ndarray:
        st = np.atleast_2d(np.asarray(st, dtype=float))
        s, t = st[:, 0], st[:, 1]
        P00, P10, P01, P11 = self.corners(mu)
        S, Nn, W, E = self.south(s, mu), self.north(s, mu), self.west(t, mu), self.east(t, mu)
        s_, t_ = s[:, None], t[:, None]
        bil = (1 - s_) * (1 - t_) * P00 + s_ * (1 - t_) * P10 + (1 - s_) * t_ * P01 + s_ * t_ * P11
        return (1 - t_) * S + t_ * Nn + (1 - s_) * W + s_ * E - bil

    def jacobian(self, st, mu) -> np.ndarray:
        """d Psi / d(s, t), shape (n, 2, 2)."""
        st = np.atleast_2d(np.asarray(st, dtype=float))
        s, t = st[:, 0], st[:, 1]
        P00, P10, P01, P11 = self.corners(mu)
        S, Nn, W, E = self.south(s, mu), self.north(s, mu), self.west(t, mu), self.east(t, mu)
        dS, dN = self.south.deriv(s, mu), self.north.deriv(s, mu)
        dW, dE = self.west.deriv(t, mu), self.east.deriv(t, mu)
        s_, t_ = s[:, None], t[:, None]
        ds = (1 - t_) * dS + t_ * dN - W + E - (-(1 - t_) * P00 + (1 - t_) * P10 - t_ * P01 + t_ * P11)
        dt = -S + Nn + (1 - s_) * dW + s_ * dE - (-(1 - s_) * P00 - s_ * P10 + (1 - s_) * P01 + s_ * P11)
        return np.stack([ds, dt], axis=-1)

    def _bilinear_guess(self, x, mu) -> np.ndarray:
        P00, P10, P01, P11 = self.corners(mu)
        st = np.full((x.shape[0], 2), 0.5)
        for _ in range(30):
            s, t = st[:, :1], st[:, 1:]
            f = (1 - s) * (1 - t) * P00 + s * (1 - t) * P10 + (1 - s) * t * P01 + s * t * P11 - x
            ds = (1 - t) * (P10 - P00) + t * (P11 - P01)
            dt = (1 - s) * (P01 - P00) + s * (P11 - P10)
            J = np.stack([ds, dt], axis=-1)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            det = np.where(np.abs(det) < 1e-300, 1e-300, det)
            d0 = (J[:, 1, 1] * f[:, 0] - J[:, 0, 1] * f[:, 1]) / det
            d1 = (-J[:, 1, 0] * f[:, 0] + J[:, 0, 0] * f[:, 1]) / det
            st = np.clip(st - np.column_stack([d0, d1]), -0.05, 1.05)
        return st

    def invert_many(self, x, mu, tol: float = 1e-12, max_iter: int = 50):
        """Newton inversion; returns (st, ok) where ok flags converged points inside [-0.1, 1.1]^2."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        st = self._bilinear_guess(x, mu)
        ok = np.zeros(x.shape[0], dtype=bool)
        active = np.ones(x.shape[0], dtype=bool)
        scale = max(1.0, float(np.abs(x).max()) if x.size else 1.0)
        for _ in range(max_iter + 1):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            f = self.eval(st[idx], mu) - x[idx]
            res = np.abs(f).max(axis=1)
            done = res <= tol * scale
            ok[idx[done]] = True
            active[idx[done]] = False
            idx, f = idx[~done], f[~done]
            if idx.size == 0:
                break
            J = self.jacobian(st[idx], mu)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            bad = ~np.isfinite(det) | (det == 0)
            det = np.where(bad, 1.0, det)
            d0 = (J[:, 1, 1] * f[:, 0] - J[:, 0, 1] * f[:, 1]) / det
            d1 = (-J[:, 1, 0] * f[:, 0] + J[:, 0, 0] * f[:, 1]) / det
            st[idx] -= np.column_stack([d0, d1])
            out = bad | ~np.all((st[idx] >= -0.1) & (st[idx] <= 1.1), axis=1)
            active[idx[out]] = False
        return st, ok

    def invert(self, x, mu, node=None):
        st, ok = self.invert_many(np.atleast_2d(x), mu)
        if not ok.all():
            where = "" if node is None else f" (node {node})"
            raise InversionError(f"Gordon-Hall inversion failed on patch '{self.name}'{where}")
        return st[0] if np.ndim(x) == 1 else st


def gordon_hall_eval(patch: GordonHallPatch, st, mu):
    return patch.eval(st, mu)


def gordon_hall_invert(patch: GordonHallPatch, x, mu):
    return patch.invert(x, mu)


# ---------------------------------------------------------------- regioned map


@dataclass(eq=False)
class RegionedMap:
    """Per-node region labels and reference coordinates; Phi_mu evaluated node by node."""

    patches: dict  # label -> GordonHallPatch
    mu_bar: np.ndarray
    node_labels: np.ndarray
    node_refs: np.ndarray  # (N_hf, 2): (s, t) for patch nodes, x for identity nodes
    identity_labels: frozenset = field(default_factory=frozenset)

    def map_nodes(self, mu, node_ids=None) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        ids = np.arange(self.node_labels.size) if node_ids is None else np.asarray(node_ids)
        labels = self.node_labels[ids]
        refs = self.node_refs[ids]
        out = refs.copy()
        for lab in np.unique(labels):
            if int(lab) in self.identity_labels:
                continue
            sel = labels == lab
            out[sel] = self.patches[int(lab)].eval(refs[sel], mu)
        return out

    def subset(self, node_ids) -> "RegionedMap":
        ids = np.asarray(node_ids)
        return RegionedMap(self.patches, self.mu_bar, self.node_labels[ids], self.node_refs[ids],
                           self.identity_labels)


def precompute_regions(nodes: np.ndarray, patches: dict, mu_bar, identity_labels=(),
                       complement_label: int | None = None) -> RegionedMap:
    """Label every node with the lowest patch label containing it and store its patch coordinates."""
    nodes = np.asarray(nodes, dtype=float)
    mu_bar = np.asarray(mu_bar, dtype=float)
    n = nodes.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    refs = nodes.copy()
    eps = 1e-9
    for lab in sorted(patches):
        patch = patches[lab]
        cand = np.flatnonzero(labels < 0)
        if cand.size == 0:
            break
        # cheap bounding-box filter from sampled boundary curves
        tt = np.linspace(0, 1, 201)
        bpts = np.concatenate([patch.south(tt, mu_bar), patch.north(tt, mu_bar),
                               patch.west(tt, mu_bar), patch.east(tt, mu_bar)])
        lo, hi = bpts.min(axis=0), bpts.max(axis=0)
        pad = 1e-8 * max(1.0, float(np.abs(bpts).max()))
        inbox = np.all((nodes[cand] >= lo - pad) & (nodes[cand] <= hi + pad), axis=1)
        cand = cand[inbox]
        if cand.size == 0:
            continue
        st, ok = patch.invert_many(nodes[cand], mu_bar)
        inside = ok & np.all((st >= -eps) & (st <= 1 + eps), axis=1)
        sel = cand[inside]
        labels[sel] = lab
        refs[sel] = st[inside]
    missing = np.flatnonzero(labels < 0)
    ident = set(int(l) for l in identity_labels)
    if missing.size:
        if complement_label is None:
            j = int(missing[0])
            raise GeometryError(f"node {j + 1} at {nodes[j].tolist()} lies in no patch")
        labels[missing] = complement_label
        ident.add(int(complement_label))
    for lab in ident & set(patches):
        sel = labels == lab
        refs[sel] = nodes[sel]
    rm = RegionedMap(dict(patches), mu_bar, labels, refs, frozenset(ident))
    err = np.abs(rm.map_nodes(mu_bar) - nodes).max() if n else 0.0
    if err > 1e-10 * max(1.0, float(np.abs(nodes).max())):
        raise GeometryError(f"regioned map does not reproduce nodes at mu_bar (error {err:.3e})")
    return rm


def map_nodes(rm: RegionedMap, mu, node_ids=None) -> np.ndarray:
    return rm.map_nodes(mu, node_ids)


# ---------------------------------------------------------------- bijectivity


def check_bijectivity(base: Mesh, deformed_nodes: np.ndarray, quad: QuadRule) -> dict:
    """Minimum deformed-map determinant over all elements and quadrature points."""
    coords = base.element_coords(nodes=np.asarray(deformed_nodes, float))
    kit = ElementKit(base.dim, base.p, base.geom_order, quad)
    _, _, det = element_geometry(kit.geom_ref, coords, quad.points)
    per = det.min(axis=1)
    return {"min_determinant": float(per.min()) if per.size else float("nan"),
            "offending_elements": np.flatnonzero(per <= 0).tolist()}


# ---------------------------------------------------------------- configuration


def curve_from_config(spec: dict) -> Curve:
    """Builtin curves: segment, naca-upper, naca-lower, bump-left, bump-right, apex-segment."""
    kind = spec.get("curve")
    try:
        if kind == "segment":
            return segment(spec["p0"], spec["p1"])
        if kind in ("naca-upper", "naca-lower"):
            return naca_curve(spec["x0"], spec["x1"], kind.split("-")[1], spec["mu"] - 1)
        if kind in ("bump-left", "bump-right"):
            return bump_curve(spec["x_start"], spec["x_end"], kind.split("-")[1], spec["mu_height"] - 1,
                              spec["mu_apex"] - 1, spec["apex_origin"])
        if kind == "apex-segment":
            ih, ia, org, top = spec["mu_height"] - 1, spec["mu_apex"] - 1, spec["apex_origin"], spec["top"]
            apex = lambda mu: np.array([org + mu[ia], mu[ih]])
            return moving_segment(apex, lambda mu: np.asarray(top, float), kind)
    except KeyError as exc:
        raise ConfigurationError(f"curve '{kind}' missing field {exc}") from exc
    raise ConfigurationError(f"unknown curve identifier '{kind}'")


def patches_from_config(block: dict) -> tuple[dict, set, int | None]:
    """Parse a geometry block: {"patches": [{"label", "south", "north", "west", "east"}], ...}."""
    patches = {}
    for p in block.get("patches", []):
        lab = int(p["label"])
        patches[lab] = GordonHallPatch(*(curve_from_config(p[k]) for k in ("south", "north", "west", "east")),
                                       name=p.get("name", f"patch-{lab}"))
    ident = set(int(v) for v in block.get("identity_labels", []))
    comp = block.get("complement_label")
    return patches, ident, (None if comp is None else int(comp))
