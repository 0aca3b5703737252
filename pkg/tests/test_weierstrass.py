import math

import numpy as np
import pytest
import scipy.sparse.csgraph as csgraph
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from minsurf import expr as ex
from minsurf import mesh as M
from minsurf import weierstrass as W


def data(g, phi3, domain=None, **kw):
    domain = domain or W.DomainSpec("disk", (1.0,), (32, 16))
    return W.WeierstrassData(ex.parse(g), ex.parse(phi3), domain, **kw)


@pytest.fixture(scope="module")
def catenoid():
    return W.catalog("catenoid")


@pytest.fixture(scope="module")
def helicoid():
    return W.catalog("helicoid")


@pytest.fixture(scope="module")
def enneper():
    return W.catalog("enneper")


# --------------------------------------------------------------------------
# pointwise formulas


def test_phi_examples(catenoid, enneper):
    assert np.allclose(W.phi(catenoid, 1.0), [0, 1j, 1], atol=1e-15)
    assert np.allclose(W.phi(enneper, 0.0), [0.5, 0.5j, 0], atol=1e-15)
    # series oracle for Enneper: (1/2 (1 - z^2), i/2 (1 + z^2), z)
    z = 0.3 - 0.2j
    assert np.allclose(W.phi(enneper, z), [0.5 * (1 - z * z), 0.5j * (1 + z * z), z], atol=1e-15)


def test_phi_rotates_with_theta(catenoid):
    z = 0.7 + 0.4j
    rot = W.associate(catenoid, 0.9)
    assert np.allclose(W.phi(rot, z), np.exp(0.9j) * W.phi(catenoid, z), atol=1e-14)


def test_phi_null_on_random_points(catenoid, helicoid, enneper):
    rng = np.random.default_rng(1)
    for d in (catenoid, helicoid, enneper, data("z^2 + 1", "exp(z)")):
        z = rng.uniform(-1.5, 1.5, 1000) + 1j * rng.uniform(-1.5, 1.5, 1000)
        z = z[np.abs(z) > 0.05]
        p = W.phi(d, z)
        rel = np.abs(np.sum(p * p, axis=0)) / np.sum(np.abs(p) ** 2, axis=0)
        assert rel.max() < 1e-10


def test_conformal_factor_examples(catenoid, enneper):
    r = np.array([0.0, 0.3, 0.9])
    z = r * np.exp(0.77j)
    assert np.allclose(W.conformal_factor(enneper, z), (1 + r * r) / 2, rtol=1e-14)
    assert np.allclose(W.conformal_factor(catenoid, np.exp(1j * np.linspace(0, 6, 7))), 1.0, rtol=1e-14)
    assert np.allclose(W.conformal_factor(W.associate(catenoid, 1.1), 0.3 + 2j), W.conformal_factor(catenoid, 0.3 + 2j),
                       rtol=0, atol=0)


def test_gauss_curvature_substitution_oracles(catenoid, enneper):
    # hand-substituted: catenoid K = -16 r^4/(1 + r^2)^4, Enneper K = -16/(1 + r^2)^4
    r = np.array([0.2, 1.0, 2.5])
    z = r * np.exp(0.3j)
    assert np.allclose(W.gauss_curvature(catenoid, z), -16 * r**4 / (1 + r * r) ** 4, rtol=1e-12)
    assert W.gauss_curvature(catenoid, 1.0) == pytest.approx(-1.0, rel=1e-14)
    assert np.allclose(W.gauss_curvature(enneper, z), -16 / (1 + r * r) ** 4, rtol=1e-12)
    assert W.gauss_curvature(enneper, 0.0) == pytest.approx(-16.0, rel=1e-12)
    assert W.gauss_curvature(data("2 + 0*z", "1"), 0.4) == 0.0


def test_gauss_curvature_matches_metric_formula(helicoid):
    # K = -Delta log(lambda) / lambda^2 by finite differences
    z, h = 0.4 + 0.3j, 1e-3
    lam = lambda w: W.conformal_factor(helicoid, w)
    lap = sum(math.log(lam(z + d)) for d in (h, -h, 1j * h, -1j * h)) - 4 * math.log(lam(z))
    K = -lap / h**2 / lam(z) ** 2
    assert W.gauss_curvature(helicoid, z) == pytest.approx(K, rel=1e-5)


def test_printed_forms_agree_on_unit_circle(catenoid):
    z = np.exp(1j * np.linspace(0.1, 6, 5))
    assert np.allclose(W.gauss_curvature_printed_forms(catenoid, z), W.gauss_curvature(catenoid, z), rtol=1e-12)


def test_normal_is_unit_and_rotation_invariant(helicoid):
    z = np.linspace(-1, 1, 9) + 0.3j
    n = W.gauss_normal(helicoid, z)
    assert np.allclose(np.linalg.norm(n, axis=0), 1.0, atol=1e-12)
    assert np.allclose(W.gauss_normal(W.associate(helicoid, 2.0), z), n, atol=0)


# --------------------------------------------------------------------------
# immersion and periods


def test_immerse_base_point_is_origin(catenoid, helicoid):
    assert np.all(W.immerse(catenoid, catenoid.base_point) == 0)
    assert np.all(W.immerse(helicoid, helicoid.base_point) == 0)


@pytest.mark.parametrize("v", [-2.5, -0.4, 0.7, 2.9])
def test_catenoid_height_is_log_modulus(catenoid, v):
    F = W.immerse(catenoid, math.exp(v))
    assert F[2] == pytest.approx(v, abs=1e-12)
    # and the integral of phi3 along the real axis by 1-D quadrature
    assert F[2] == pytest.approx(integrate.quad(lambda t: 1 / t, 1.0, math.exp(v))[0], abs=1e-10)


def test_helicoid_path_independence(helicoid):
    # straight path 0 -> z versus the broken path 0 -> w -> z
    z, w = 1.3 + 0.8j, -1.0 - 0.9j
    from_w = W.WeierstrassData(helicoid.g, helicoid.phi3, helicoid.domain, base_point=w)
    assert np.allclose(W.immerse(helicoid, z), W.immerse(helicoid, w) + W.immerse(from_w, z), atol=1e-8)


def test_helicoid_closed_form():
    # theta = pi/2: (-cos x cosh y, -sin x cosh y, -y) + const
    d = W.associate(W.catalog("helicoid"), math.pi / 2)
    z = np.array([0.5 + 0.2j, -2 + 1.1j, 1.0 - 1.4j])
    F = W.immerse(d, z)
    F0 = W.immerse(d, 0j)
    x, y = z.real, z.imag
    exp = np.stack([-np.cos(x) * np.cosh(y), -np.sin(x) * np.cosh(y), -y], axis=-1)
    assert np.allclose(F - F0, exp - np.array([-1.0, 0.0, 0.0]), atol=1e-12)


def test_immerse_detours_around_puncture(catenoid):
    # the straight path from 1 to -1 runs through the puncture; the image must still be on the neck circle
    F = W.immerse(catenoid, -1.0)
    assert F[2] == pytest.approx(0.0, abs=1e-12)
    assert np.hypot(F[0] - 1.0, F[1]) == pytest.approx(1.0, abs=1e-12)  # axis through (1, 0)
    assert np.allclose(F, [2.0, 0.0, 0.0], atol=1e-12)


def test_periods(catenoid, helicoid):
    circle = list(np.exp(1j * np.linspace(0, 2 * np.pi, 9)[:-1])) + [1.0]
    assert np.allclose(W.periods(catenoid, circle), 0, atol=1e-8)
    square = [1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j, 1 + 1j]
    assert np.allclose(W.periods(helicoid, square), 0, atol=1e-8)
    # residue oracle: phi = (1/2 (1/z^3 - 1/z), i/2 (1/z^3 + 1/z), 1/z^2); Re(2 pi i res)
    d = data("z", "1/z^2", W.DomainSpec("annulus", (0.5, 2.0), (16, 8), (0j,)), base_point=1.0)
    res = np.array([-0.5, 0.5j, 0.0])
    assert np.allclose(W.periods(d, circle), (2j * np.pi * res).real, atol=1e-8)
    assert abs(W.periods(d, circle)[1]) == pytest.approx(math.pi, rel=1e-10)


def test_periods_errors(catenoid):
    with pytest.raises(W.PathError):
        W.periods(catenoid, [1.0, 1j, -1.0])
    with pytest.raises(W.PathError):
        W.periods(catenoid, [1.0, -1.0, 1.0])


def test_associate_identity_and_lambda(helicoid):
    assert W.associate(helicoid, 0.0) == helicoid
    d = W.associate(helicoid, 1.1)
    z = np.linspace(-2, 2, 7) + 0.5j
    assert np.array_equal(W.conformal_factor(d, z), W.conformal_factor(helicoid, z))
    assert np.array_equal(W.gauss_curvature(d, z), W.gauss_curvature(helicoid, z))


# --------------------------------------------------------------------------
# branch points and admissibility


@pytest.mark.parametrize("phi3, expected", [("z^2", ("immersed", 0)), ("z^3", ("branch", 1)), ("z^4", ("branch", 2)),
                                             ("z^5", ("branch", 3))])
def test_classify_branch(phi3, expected):
    info = W.classify_branch(data("z", phi3), ex.SpecialPoint(0j, "zero"))
    assert (info.status, info.order) == expected
    assert info.m == 1


def test_classify_branch_pole_of_g():
    # g with a simple pole and phi3 with a double zero
    info = W.classify_branch(data("1/z", "z^2"), 0j)
    assert (info.status, info.order, info.m, info.k) == ("immersed", 0, 1, 2)


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_lambda_vanishes_to_order_k_minus_m(k):
    info = W.classify_branch(data("z", f"z^{k}"), 0j)
    assert info.lambda_order == pytest.approx(k - 1, abs=0.01)


def test_enneper_origin_is_regular():
    # k = m = 1 lies outside k >= 2m; lambda(0) = 1/2 so the point is immersed
    info = W.classify_branch(W.catalog("enneper"), 0j)
    assert (info.status, info.order, info.rule) == ("immersed", 0, "metric")
    assert info.lambda_order == pytest.approx(0, abs=0.01)


def test_inadmissible_data():
    with pytest.raises(W.InadmissibleData) as exc:
        W.classify_branch(data("z^2", "z"), 0j)
    assert exc.value.point == 0j


def test_catenoid_puncture_is_excluded(catenoid):
    assert W.classify_branch(catenoid, 0j).status == "puncture"


def test_rejects_planar_data():
    with pytest.raises(W.WeierstrassError, match="plane_disk"):
        data("0", "1")


# --------------------------------------------------------------------------
# tessellation


def test_catenoid_area_matches_lambda_squared_quadrature():
    dom = W.DomainSpec("annulus", (math.exp(-2), math.exp(2)), (96, 48), (0j,))
    m = W.tessellate(W.catalog("catenoid", domain=dom))
    lam2r = lambda r: ((1 / r + r) / 2 / r) ** 2 * r
    exact = 2 * math.pi * integrate.quad(lam2r, math.exp(-2), math.exp(2), epsabs=1e-13)[0]
    assert M.area(m) == pytest.approx(exact, rel=0.01)


def test_enneper_total_curvature_matches_quadrature():
    m = W.tessellate(W.catalog("enneper", resolution=(64, 64)))
    Klam2r = lambda r: 16 / (1 + r * r) ** 4 * ((1 + r * r) / 2) ** 2 * r
    exact = 2 * math.pi * integrate.quad(Klam2r, 0, 1)[0]
    assert M.angle_defect_curvature(m).total_curvature == pytest.approx(exact, rel=0.02)


def test_tessellation_attributes(helicoid):
    m = W.tessellate(helicoid, (32, 16))
    assert m.n_vertices == 33 * 17 and m.n_faces == 2 * 32 * 16
    assert np.all(m.attributes["lambda"] > 0)
    assert np.all(m.attributes["K"] <= 0)
    assert np.allclose(np.linalg.norm(m.attributes["normal"], axis=1), 1, atol=1e-12)
    assert len(m.boundary_loops) == 1
    Z, F, _ = W.sample_grid(W.catalog("helicoid", resolution=(32, 16)))
    assert np.allclose(F[::37], W.immerse(helicoid, Z[::37]), atol=1e-12)


def test_catenoid_tessellation_topology(catenoid):
    m = W.tessellate(catenoid, (48, 24))
    assert m.euler_characteristic == 0 and len(m.boundary_loops) == 2
    fn = np.cross(m.vertices[m.faces[:, 1]] - m.vertices[m.faces[:, 0]], m.vertices[m.faces[:, 2]] - m.vertices[m.faces[:, 0]])
    n = m.attributes["normal"][m.faces].mean(axis=1)
    assert np.mean(np.einsum("ij,ij->i", fn / np.linalg.norm(fn, axis=1)[:, None], n)) > 0.99


@pytest.mark.parametrize("name", ["enneper", "catenoid", "helicoid"])
def test_closed_form_K_matches_angle_defect(name):
    d = W.catalog(name, resolution=(128, 128))
    m = W.tessellate(d)
    Z, _, _ = W.sample_grid(d)
    Kd = M.angle_defect_curvature(m).defects / M.vertex_areas(m)
    Kc = m.attributes["K"]
    if d.domain.shape == "disk":
        # the polar grid degenerates to a triangle fan at the center
        keep = (np.abs(Z) > 0.1) & (np.abs(Z) < 0.9)
    else:
        bd = np.flatnonzero(m.boundary_mask)
        dist = csgraph.dijkstra(M.edge_graph(m), indices=bd, min_only=True)
        keep = dist > 0.1 * dist.max()
    assert np.max(np.abs(Kd[keep] - Kc[keep]) / np.abs(Kc[keep])) < 0.05


def test_harmonicity_rate(helicoid):
    errs = []
    for n in (32, 64, 128):
        d = W.catalog("helicoid", resolution=(n, n))
        Z, F, _ = W.sample_grid(d)
        G = F.reshape(n + 1, n + 1, 3)
        X = Z.reshape(n + 1, n + 1)
        hx, hy = X[1, 0].real - X[0, 0].real, X[0, 1].imag - X[0, 0].imag
        lap = (G[2:, 1:-1] - 2 * G[1:-1, 1:-1] + G[:-2, 1:-1]) / hx**2 + (G[1:-1, 2:] - 2 * G[1:-1, 1:-1] + G[1:-1, :-2]) / hy**2
        errs.append(np.abs(lap).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


@pytest.mark.parametrize("name", ["helicoid", "catenoid", "enneper"])
def test_grid_conformality(name):
    d = W.catalog(name)
    r128 = np.abs(W.grid_conformality(d, (128, 128))).max()
    r256 = np.abs(W.grid_conformality(d, (256, 256))).max()
    assert r128 < 1e-2 and r256 <= 0.5 * r128


def test_associate_isometry_and_conjugate(helicoid):
    l0 = W.metric_edge_lengths(helicoid)
    for th in (0.3, math.pi / 2, 2.0):
        assert np.max(np.abs(W.metric_edge_lengths(W.associate(helicoid, th)) / l0 - 1)) < 1e-6
    fit = W.fit_catenoid(W.tessellate(W.associate(helicoid, math.pi / 2)).vertices)
    assert fit.residual < 1e-4 and fit.a == pytest.approx(1.0, abs=1e-8)
    m0 = W.tessellate(helicoid)
    m2 = W.tessellate(W.associate(helicoid, 2 * math.pi))
    assert np.max(np.abs(m2.vertices - m0.vertices)) < 1e-12


def test_chord_lengths_converge_under_refinement(helicoid):
    dev = []
    for res in ((48, 24), (96, 48)):
        a = W.tessellate(helicoid, res)
        b = W.tessellate(W.associate(helicoid, math.pi / 2), res)
        dev.append(W.edge_length_deviation(a, b))
    assert dev[1] < 0.3 * dev[0]


def test_gauss_map_agreement(helicoid):
    assert W.gauss_map_agreement(W.tessellate(W.associate(helicoid, 0.8))) < 0.01


# --------------------------------------------------------------------------
# catalog and I/O


def test_catalog_contents():
    c = W.catalog("catenoid")
    assert ex.format_expr(c.g) == "z" and ex.evaluate(c.phi3, 2.0) == 0.5 and c.domain.punctures == (0j,)
    h = W.catalog("helicoid")
    assert ex.evaluate(h.g, 0.0) == 1 and ex.evaluate(h.phi3, 3.0) == 1
    assert isinstance(W.catalog("plane_disk"), M.TriMesh)
    with pytest.raises(W.WeierstrassError):
        W.catalog("costa")


@pytest.mark.parametrize("n, tol", [(2, 0.05), (3, 0.05)])
def test_holomorphic_curve_total_curvature(n, tol):
    m = W.catalog(f"holomorphic_curve({n})")
    assert m.dim == 4
    assert M.angle_defect_curvature(m).total_curvature == pytest.approx(2 * math.pi * (n - 1), rel=tol)


def test_holomorphic_curve_one_is_flat():
    m = W.holomorphic_curve(1, radius=1.0, resolution=(32, 8))
    assert M.angle_defect_curvature(m).total_curvature == pytest.approx(0, abs=1e-10)


def test_data_json_round_trip(catenoid):
    d = W.associate(catenoid, 0.25)
    back = W.load_data(W.dump_data(d))
    assert back.domain == d.domain and back.theta == d.theta and back.base_point == d.base_point
    z = 0.3 + 1.7j
    assert np.allclose(W.immerse(back, z), W.immerse(d, z), atol=1e-14)


def test_load_data_is_strict():
    good = {"g": "z", "phi3": "z^2", "domain": {"shape": "disk", "bounds": [1.0]}}
    W.load_data(good)
    with pytest.raises(W.WeierstrassError):
        W.load_data({**good, "colour": "red"})
    with pytest.raises(W.WeierstrassError):
        W.load_data({**good, "domain": {"shape": "disk", "bounds": [1.0], "res": [2, 2]}})
    with pytest.raises(W.WeierstrassError):
        W.load_data({**good, "special_points": [{"where": [0, 0]}]})


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.2, 1.5), st.floats(0, 2 * math.pi))
def test_lambda_and_K_invariant_under_associate(theta, r, a):
    d = W.catalog("catenoid")
    z = r * complex(math.cos(a), math.sin(a))
    rot = W.associate(d, theta)
    assert W.conformal_factor(rot, z) == W.conformal_factor(d, z)
    assert W.gauss_curvature(rot, z) == W.gauss_curvature(d, z)
    p = W.phi(rot, z)
    assert abs(np.sum(p * p)) <= 1e-12 * np.sum(np.abs(p) ** 2)


# --------------------------------------------------------------------------
# automatic special points


def _wd(g, p3, dom=None):
    return W.WeierstrassData(ex.parse(g), ex.parse(p3), dom or W.DomainSpec("disk", (1.0,), (64, 32)))


@pytest.mark.parametrize(
    "g, p3, expected",
    [
        ("z", "z^3", [(0j, "branch", 1)]),
        ("z", "z^2", [(0j, "immersed", 0)]),
        ("1", "z^2", [(0j, "branch", 2)]),
        ("z - 0.3", "(z - 0.3)^4", [(0.3 + 0j, "branch", 2)]),
        ("z/(z - 0.5)", "(z - 0.5)^2*z^2", [(0j, "immersed", 0), (0.5 + 0j, "immersed", 0)]),
        ("exp(z)", "1", []),
    ],
)
def test_undeclared_special_points_are_found(g, p3, expected):
    got = [(z, info.status, info.order) for z, info in W.check_admissible(_wd(g, p3))]
    assert len(got) == len(expected)
    for (z, st, o), (ze, ste, oe) in zip(got, expected):
        assert abs(z - ze) < 1e-9 and st == ste and o == oe


def test_special_points_outside_domain_or_punctures_ignored():
    assert W.find_special_points(_wd("z - 2", "(z - 2)^3")) == []
    assert W.check_admissible(W.catalog("catenoid")) == []
    assert W.check_admissible(W.catalog("helicoid")) == []


def test_undeclared_pole_and_essential_singularity_rejected():
    with pytest.raises(W.InadmissibleData) as info:
        W.check_admissible(_wd("z^2", "z"))
    assert info.value.point == 0
    with pytest.raises(W.InadmissibleData):
        W.check_admissible(_wd("z", "exp(1/z)"))
    assert W.check_admissible(_wd("z^2", "z"), detect=False) == []
