import numpy as np
import pytest
from hypothesis import given, strategies as st

from dtmrom.errors import ConfigurationError, GeometryError
from dtmrom.geometry import (GordonHallPatch, PiecewiseLinearMap1D, check_bijectivity, curve_from_config,
                             f_naca, map_1d, naca_curve, precompute_regions, segment)
from dtmrom.mesh import rectangle_mesh
from dtmrom.problems import AIRFOIL_BOX_P, AIRFOIL_MU_BAR, airfoil_geometry_config, airfoil_problem
from dtmrom.quadrature import gauss_rule


def unit_square():
    return GordonHallPatch(segment([0, 0], [1, 0]), segment([0, 1], [1, 1]),
                           segment([0, 0], [0, 1]), segment([1, 0], [1, 1]))


@pytest.fixture(scope="module")
def airfoil():
    return airfoil_problem()


def test_naca_values():
    assert f_naca(0.0, 0.12) == 0.0
    assert abs(f_naca(1.0, 0.12)) < 1e-3
    s = 0.3
    a = [0.2969, -0.1260, -0.3516, 0.2843, -0.1036]
    horner = 5 * 0.12 * (a[0] * np.sqrt(s) + a[1] * s + a[2] * s**2 + a[3] * s**3 + a[4] * s**4)
    assert f_naca(s, 0.12) == pytest.approx(horner, rel=1e-14)


def test_map_1d():
    phi = PiecewiseLinearMap1D()
    assert map_1d(0.0) == 0.0 and map_1d(1.0) == pytest.approx(1.0)
    assert phi(phi.x0) == pytest.approx(1 / (2 * np.sqrt(2)))
    assert phi(phi.inverse(0.7)) == pytest.approx(0.7)


@given(st.floats(0, 1), st.floats(0, 1))
def test_monotone_1d(a, b):
    phi = PiecewiseLinearMap1D()
    if a < b:
        assert phi(a) < phi(b)


def test_square_patch_identity():
    P = unit_square()
    st_ = np.array([[0.25, 0.75], [0.0, 0.0], [1.0, 1.0], [0.3, 0.0]])
    assert np.allclose(P.eval(st_, None), st_)
    assert np.allclose(P.invert(np.array([0.25, 0.75]), None), [0.25, 0.75])
    assert np.allclose(P.invert(np.array([1.0, 1.0]), None), [1, 1], atol=1e-12)


def test_patch_boundary_reproduction(airfoil):
    mu = np.array([0.1, 0.14, 0.2, 0.7])
    lower = airfoil.geo.patches[3]
    t = np.linspace(0, 1, 11)
    west = lower.eval(np.column_stack([np.zeros_like(t), t]), mu)
    assert np.allclose(west, lower.west(t, mu), atol=1e-14)
    north = lower.eval(np.column_stack([t, np.ones_like(t)]), mu)
    assert np.allclose(north, lower.north(t, mu), atol=1e-14)
    x = north[:, 0]
    on = (x >= 0) & (x <= 1)
    assert np.allclose(north[on, 1], -f_naca(x[on], mu[0]), atol=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_patch_inversion_round_trip(seed):
    from dtmrom.problems import airfoil_geometry_config
    from dtmrom.geometry import patches_from_config

    patches, _, _ = patches_from_config(airfoil_geometry_config())
    rng = np.random.default_rng(seed)
    mu = AIRFOIL_BOX_P[:, 0] + rng.random(4) * np.ptp(AIRFOIL_BOX_P, axis=1)
    for P in patches.values():
        st_ = rng.uniform(0.02, 0.98, (100, 2))
        x = P.eval(st_, mu)
        back, ok = P.invert_many(x, mu)
        assert ok.all()
        assert np.abs(P.eval(back, mu) - x).max() < 1e-10


def test_regions_identity_at_mu_bar(airfoil):
    geo = airfoil.geo
    assert np.abs(geo.map_nodes(AIRFOIL_MU_BAR) - airfoil.mesh.nodes).max() <= 1e-10
    far = np.abs(airfoil.mesh.nodes[:, 0] - 0.5) > 1.5
    assert np.all(geo.node_labels[far] == 1)
    assert 1 in geo.identity_labels


def test_regions_thickness_monotone_and_subset(airfoil):
    mesh = airfoil.mesh
    af = mesh.facet_nodes(["airfoil"])
    upper = af[(mesh.nodes[af, 1] > 1e-3)]
    mu_lo = AIRFOIL_MU_BAR.copy()
    mu_hi = AIRFOIL_MU_BAR.copy()
    mu_hi[1] = 0.15
    assert np.all(np.abs(airfoil.geo.map_nodes(mu_hi)[upper, 1]) > np.abs(airfoil.geo.map_nodes(mu_lo)[upper, 1]))
    sub = np.unique(mesh.connectivity[:50])
    mu = np.array([0.1, 0.14, 0.2, 0.7])
    assert np.array_equal(airfoil.geo.subset(sub).map_nodes(mu), airfoil.geo.map_nodes(mu)[sub])
    assert np.array_equal(airfoil.geo.map_nodes(mu, sub), airfoil.geo.map_nodes(mu)[sub])


def test_single_patch_square_labels():
    mesh = rectangle_mesh(3, 3, 2)
    rm = precompute_regions(mesh.nodes, {5: unit_square()}, np.zeros(0))
    assert np.all(rm.node_labels == 5)
    assert np.allclose(rm.node_refs, mesh.nodes, atol=1e-12)


def test_uncovered_node_is_geometry_error():
    mesh = rectangle_mesh(2, 2, 1, box=(0, 2, 0, 1))
    with pytest.raises(GeometryError):
        precompute_regions(mesh.nodes, {1: unit_square()}, np.zeros(0))


def test_bijectivity(airfoil):
    mesh = airfoil.mesh
    q = gauss_rule(2, 2 * mesh.p)
    ident = check_bijectivity(mesh, mesh.nodes, q)
    assert ident["min_determinant"] > 0 and ident["offending_elements"] == []
    rng = np.random.default_rng(7)
    for _ in range(50):
        mu = AIRFOIL_BOX_P[:, 0] + rng.random(4) * np.ptp(AIRFOIL_BOX_P, axis=1)
        assert check_bijectivity(mesh, airfoil.geo.map_nodes(mu), q)["offending_elements"] == []
    sq = rectangle_mesh(2, 2, 1)
    collapsed = sq.nodes.copy()
    centre = np.argmin(np.linalg.norm(sq.nodes - 0.5, axis=1))
    collapsed[centre] = [1.2, 0.5]  # pushed past the right edge
    assert check_bijectivity(sq, collapsed, gauss_rule(2, 2))["offending_elements"]


def test_curve_config_errors():
    with pytest.raises(ConfigurationError):
        curve_from_config({"curve": "spline"})
    with pytest.raises(ConfigurationError):
        curve_from_config({"curve": "segment", "p0": [0, 0]})
    c = naca_curve(-0.5, 1.5, "upper", 1)
    assert np.allclose(c(np.array([0.0, 1.0]), [0.12, 0.12]), [[-0.5, 0], [1.5, 0]])
