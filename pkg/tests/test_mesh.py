import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.spatial.transform import Rotation

from minsurf import mesh as M
from minsurf import weierstrass as W


@pytest.fixture(scope="module")
def disk():
    return M.flat_disk(128, 16)


@pytest.fixture(scope="module")
def catenoid_mesh():
    return W.tessellate(W.catalog("catenoid", resolution=(96, 48)))


def single_triangle():
    return M.TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


# --------------------------------------------------------------------------
# construction


def test_validation():
    with pytest.raises(M.MeshError):
        M.TriMesh([[0, 0, 0], [1, 0, 0]], [[0, 1, 2]])
    with pytest.raises(M.MeshError):
        M.TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])  # degenerate
    with pytest.raises(M.MeshError):
        # two faces with the same orientation on the shared edge
        M.TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2], [0, 1, 3]])
    with pytest.raises(M.MeshError):
        M.TriMesh(np.zeros((3, 2)), [[0, 1, 2]])


def test_disk_topology(disk):
    assert disk.n_faces == 128 * 31
    assert disk.euler_characteristic == 1
    assert len(disk.boundary_loops) == 1 and len(disk.boundary_loops[0]) == 128


# --------------------------------------------------------------------------
# measures


def test_area_examples(disk, catenoid_mesh):
    assert M.area(disk) == pytest.approx(math.pi, rel=2e-3)
    assert M.area(M.TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))) == 0.0
    exact = 2 * math.pi * integrate.quad(lambda s: math.cosh(s) ** 2, -3, 3)[0]
    assert M.area(catenoid_mesh) == pytest.approx(exact, rel=0.01)


def test_area_in_r4_uses_gram_determinant():
    m = M.TriMesh([[0, 0, 0, 0], [1, 0, 0, 0], [0, 0, 0, 2]], [[0, 1, 2]])
    assert M.area(m) == pytest.approx(1.0, rel=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_area_rigid_motion_invariance(seed):
    m = M.hemisphere(32, 8)
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=rng).as_matrix()
    moved = m.with_vertices(m.vertices @ R.T + rng.normal(size=3) * 10)
    assert M.area(moved) == pytest.approx(M.area(m), rel=1e-12)


def test_flat_disk_defects_vanish(disk):
    cur = M.angle_defect_curvature(disk)
    assert np.max(np.abs(cur.defects[cur.interior])) < 1e-12
    assert cur.boundary_turning == pytest.approx(2 * math.pi, abs=1e-10)


@pytest.mark.parametrize("make", [
    lambda: M.flat_disk(64, 8),
    lambda: M.hemisphere(64, 16),
    lambda: W.tessellate(W.catalog("catenoid", resolution=(48, 24))),
    lambda: W.tessellate(W.catalog("helicoid", resolution=(48, 24))),
    lambda: W.tessellate(W.catalog("enneper", resolution=(48, 24))),
    lambda: W.holomorphic_curve(2, resolution=(48, 16)),
])
def test_gauss_bonnet_closure(make):
    m = make()
    cur = M.angle_defect_curvature(m)
    assert cur.gauss_bonnet_sum == pytest.approx(2 * math.pi * m.euler_characteristic, abs=1e-8)


def test_catenoid_total_curvature_wide_annulus():
    m = W.tessellate(W.catalog("catenoid", resolution=(192, 96)))
    assert M.angle_defect_curvature(m).total_curvature == pytest.approx(4 * math.pi, rel=0.03)


def test_holomorphic_curve_three():
    m = W.catalog("holomorphic_curve(3)")
    assert M.angle_defect_curvature(m).total_curvature == pytest.approx(4 * math.pi, rel=0.05)


def test_vertex_areas_sum_to_area(catenoid_mesh):
    assert M.vertex_areas(catenoid_mesh).sum() == pytest.approx(M.area(catenoid_mesh), rel=1e-12)


def test_cotan_laplacian_annihilates_linear_functions_on_flat_meshes(disk):
    L = M.cotan_laplacian(disk)
    interior = ~disk.boundary_mask
    assert np.max(np.abs((L @ disk.vertices)[interior])) < 1e-12
    assert np.max(np.abs(L @ np.ones(disk.n_vertices))) < 1e-12


def test_mean_curvature_of_sphere_patch():
    m = M.hemisphere(128, 32)
    Hn = M.mean_curvature_vectors(m)
    interior = ~m.boundary_mask
    H = np.linalg.norm(Hn, axis=1)[interior] / M.vertex_areas(m)[interior]
    assert np.median(H) == pytest.approx(2.0, rel=0.02)  # |H| = 2/R for the unit sphere


# --------------------------------------------------------------------------
# distances


def test_geodesic_path_graph():
    m = M.TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1, 0]], [[0, 1, 3], [1, 2, 3]])
    d = M.geodesic_distance(m, 0)
    assert np.allclose(d[:3], [0, 1, 2])


def test_geodesic_disk_radius():
    m = M.flat_disk(128, 32)
    d = M.geodesic_distance(m, 0)
    assert d[m.boundary_mask].min() == pytest.approx(1.0, rel=0.05)


def test_geodesic_unreachable_is_infinite():
    m = M.TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]], [[0, 1, 2], [3, 4, 5]])
    assert np.isinf(M.geodesic_distance(m, 0)[3])


def test_geodesic_catenoid_neck_to_boundary(catenoid_mesh):
    # meridians are geodesics: length = integral of lambda |dz| = sinh(3)
    i0 = int(np.argmin(np.linalg.norm(catenoid_mesh.vertices, axis=1)))
    d = M.geodesic_distance(catenoid_mesh, i0)
    assert d[catenoid_mesh.boundary_mask].min() == pytest.approx(math.sinh(3), rel=0.1)


def test_geodesic_is_an_upper_bound_with_persistent_metrication_error():
    # exact along the rays of the ring mesh, an upper bound everywhere; off the rays the
    # edge-graph error does not shrink under refinement of a structured mesh
    worst = []
    for nb, nr in ((32, 8), (64, 16), (128, 32)):
        m = M.flat_disk(nb, nr)
        assert np.allclose(M.geodesic_distance(m, 0), np.linalg.norm(m.vertices, axis=1), atol=1e-12)
        src = int(np.argmin(np.linalg.norm(m.vertices - [0.5, 0, 0], axis=1)))
        d = M.geodesic_distance(m, src)
        exact = np.linalg.norm(m.vertices - m.vertices[src], axis=1)
        assert np.all(d >= exact - 1e-12)
        worst.append(np.max(d - exact))
    assert np.ptp(worst) < 1e-3 and 0.1 < worst[0] < 0.2


# --------------------------------------------------------------------------
# ball clipping


def test_ball_area_examples(disk):
    assert M.ball_area(disk, np.zeros(3), 0.5) == pytest.approx(math.pi / 4, rel=5e-3)
    full = M.area(disk)
    assert M.ball_area(disk, np.zeros(3), 1.0) == pytest.approx(full, rel=1e-12)
    assert M.ball_area(disk, np.zeros(3), 3.0) == pytest.approx(full, rel=1e-12)


def catenoid_ball_oracle(r):
    # F = (1 - cosh s cos t, -cosh s sin t, s), dA = cosh^2 s ds dt, p = F(s=0, t=0) = 0
    def width(s):
        c = (1 + math.cosh(s) ** 2 + s * s - r * r) / (2 * math.cosh(s))
        return 2 * math.acos(min(1.0, max(-1.0, c)))

    return integrate.quad(lambda s: math.cosh(s) ** 2 * width(s), -3, 3, limit=200, points=[-r, r])[0]


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 4.0, 8.0])
def test_ball_area_catenoid_quadrature(catenoid_mesh, r):
    assert M.ball_area(catenoid_mesh, np.zeros(3), r) == pytest.approx(catenoid_ball_oracle(r), rel=0.01)


def test_sublevel_fraction():
    phi = np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0], [1.0, -1.0, -1.0], [1.0, 1.0, -1.0], [0.0, 0.0, 0.0]])
    frac = M.sublevel_fraction(phi)
    assert np.allclose(frac, [1, 0, 0.25, 0.75, 1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.floats(0.01, 3.0), min_size=2, max_size=6))
def test_ball_area_monotone_in_radius(seed, radii):
    rng = np.random.default_rng(seed)
    m = M.hemisphere(24, 6)
    m = m.with_vertices(m.vertices + 0.05 * rng.normal(size=m.vertices.shape))
    p = rng.normal(size=3) * 0.5
    radii = np.sort(radii)
    vals = [M.ball_area(m, p, r) for r in radii]
    assert np.all(np.diff(vals) >= -1e-12)


# --------------------------------------------------------------------------
# curves and predicates


def test_polyline_total_curvature():
    for n in (3, 7, 12):
        t = 2 * np.pi * np.arange(n) / n
        assert M.polyline_total_curvature(M.Polyline(np.column_stack([np.cos(t), np.sin(t)]))) == pytest.approx(2 * math.pi, abs=1e-12)
    t = 2 * np.pi * np.arange(256) / 256
    assert M.polyline_total_curvature(M.Polyline(np.column_stack([np.cos(t), np.sin(t)]))) == pytest.approx(2 * math.pi, abs=1e-4)
    t = 4 * np.pi * np.arange(256) / 256
    doubled = np.column_stack([np.cos(t), np.sin(t), 1e-3 * np.sin(t / 2)])
    assert M.polyline_total_curvature(M.Polyline(doubled)) == pytest.approx(4 * math.pi, rel=1e-3)


def test_convex_hull_violation(disk):
    assert M.convex_hull_violation(disk) <= 0
    assert M.convex_hull_violation(W.tessellate(W.catalog("catenoid", resolution=(48, 24)))) <= 1e-9
    assert M.convex_hull_violation(M.hemisphere(128, 32)) == pytest.approx(1.0, abs=1e-6)


def test_intersects_self_examples(disk):
    assert M.intersects_self(disk) == (False, None)
    hit, witness = M.intersects_self(M.crossed_rectangles())
    assert hit and witness is not None


def _brute_force_hits(m):
    tri = m.vertices[m.faces]
    i, j = np.triu_indices(len(tri), 1)
    share = (m.faces[i][:, :, None] == m.faces[j][:, None, :]).any(axis=(1, 2))
    i, j = i[~share], j[~share]
    s = m.scale
    hit = np.zeros(len(i), dtype=bool)
    for a in range(0, len(i), 400_000):
        sl = slice(a, a + 400_000)
        hit[sl] = M._triangle_pairs_intersect(tri[i[sl]], tri[j[sl]], 1e-12 * s**3, 1e-12 * s**2)
    return bool(hit.any())


@pytest.mark.parametrize("radius, expected", [(1.0, False), (1.5, False), (2.0, True)])
def test_enneper_self_intersection_onset(radius, expected):
    # embedded on |z| < sqrt(3), self-intersecting beyond; all-pairs oracle on a coarse grid
    d = W.catalog("enneper", domain=W.DomainSpec("disk", (radius,), (48, 16)))
    m = W.tessellate(d)
    assert M.intersects_self(m)[0] is expected
    assert _brute_force_hits(m) is expected


# --------------------------------------------------------------------------
# I/O


def test_single_triangle_round_trip():
    m = single_triangle()
    for fmt in ("obj", "ply"):
        back = M.import_mesh(M.export_mesh(m, fmt))
        assert np.array_equal(back.faces, m.faces) and np.array_equal(back.vertices, m.vertices)


def test_ply_attributes_preserved(catenoid_mesh):
    back = M.import_mesh(M.export_mesh(catenoid_mesh, "ply"))
    assert np.array_equal(back.vertices, catenoid_mesh.vertices)
    assert np.array_equal(back.attributes["K"], catenoid_mesh.attributes["K"])
    assert np.array_equal(back.attributes["normal"], catenoid_mesh.attributes["normal"])


def test_obj_rejects_r4():
    with pytest.raises(M.MeshFormatError, match="OBJ supports n=3 only"):
        M.export_mesh(W.holomorphic_curve(2, resolution=(8, 2)), "obj")


def test_r4_ply_round_trip():
    m = W.holomorphic_curve(3, resolution=(16, 4))
    back = M.import_mesh(M.export_mesh(m, "ply"))
    assert back.dim == 4 and np.array_equal(back.vertices, m.vertices)


def test_malformed_files_report_line_numbers():
    with pytest.raises(M.MeshFormatError) as exc:
        M.import_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n")
    assert exc.value.line == 4
    with pytest.raises(M.MeshFormatError):
        M.import_mesh("ply\nformat ascii 1.0\nelement vertex 1\nend_header\n")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_export_import_bit_identical(seed):
    rng = np.random.default_rng(seed)
    m = M.flat_disk(16, 3)
    m = M.TriMesh(m.vertices + rng.normal(size=m.vertices.shape) * 1e-3 * rng.uniform(1e-8, 1e8),
                  m.faces, {"K": rng.normal(size=m.n_vertices)}, check=False)
    for fmt in ("obj", "ply"):
        back = M.import_mesh(M.export_mesh(m, fmt))
        assert np.array_equal(back.vertices, m.vertices) and np.array_equal(back.faces, m.faces)
    assert np.array_equal(M.import_mesh(M.export_mesh(m, "ply")).attributes["K"], m.attributes["K"])


def test_polyline_file_round_trip():
    t = np.linspace(0, 2 * np.pi, 9)[:-1]
    c = M.Polyline(np.column_stack([np.cos(t), np.sin(t), 0.1 * t]))
    back = M.read_polyline(M.write_polyline(c))
    assert back.closed and np.array_equal(back.points, c.points)
    with pytest.raises(M.MeshFormatError):
        M.read_polyline("0 0\n1 x\n")
