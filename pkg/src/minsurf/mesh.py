"""Triangle meshes in R^3 and R^4: measures, predicates, generators and I/O."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import ConvexHull, cKDTree

__all__ = [
    "MeshError",
    "MeshFormatError",
    "TriMesh",
    "Polyline",
    "CurvatureResult",
    "area",
    "face_areas",
    "corner_angles",
    "vertex_areas",
    "cotan_weights",
    "cotan_laplacian",
    "mean_curvature_vectors",
    "angle_defect_curvature",
    "geodesic_distance",
    "ball_area",
    "polyline_total_curvature",
    "convex_hull_violation",
    "intersects_self",
    "export_mesh",
    "import_mesh",
    "read_polyline",
    "write_polyline",
    "flat_disk",
    "hemisphere",
    "crossed_rectangles",
    "flat_strip",
]


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh.

    ``vertices`` is (n, d) with d in {3, 4}; ``faces`` is (m, 3).  Per-vertex
    attributes (``"lambda"``, ``"K"``, ``"normal"``, ...) are arrays whose first
    axis has length n.
    """

    vertices: np.ndarray
    faces: np.ndarray
    attributes: dict = field(default_factory=dict)
    check: bool = True

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if v.ndim != 2 or (len(v) and v.shape[1] not in (3, 4)):
            raise MeshError(f"vertices must be (n, 3) or (n, 4), got {v.shape}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        attrs = {k: np.asarray(a, dtype=float) for k, a in self.attributes.items()}
        for k, a in attrs.items():
            if len(a) != len(v):
                raise MeshError(f"attribute {k!r} has {len(a)} rows, mesh has {len(v)}")
        object.__setattr__(self, "attributes", attrs)
        if self.check:
            self._validate()

    def _validate(self):
        f = self.faces
        if f.size and (f.min() < 0 or f.max() >= len(self.vertices)):
            raise MeshError("face references an invalid vertex index")
        if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("face with repeated vertex")
        e = self.directed_edges
        if len(e):
            key = e[:, 0] * len(self.vertices) + e[:, 1]
            if len(np.unique(key)) != len(key):
                raise MeshError("inconsistent orientation: a directed edge appears twice")
        if f.size:
            scale = self.scale
            if np.any(face_areas(self) <= 1e-14 * scale**2):
                raise MeshError("degenerate face")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def scale(self) -> float:
        if not len(self.vertices):
            return 0.0
        return float(np.linalg.norm(np.ptp(self.vertices, axis=0))) or 1.0

    @cached_property
    def directed_edges(self) -> np.ndarray:
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted (i < j)."""
        e = np.sort(self.directed_edges, axis=1)
        return np.unique(e, axis=0) if len(e) else e.reshape(0, 2)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Directed edges without a twin, oriented as in their face."""
        e = self.directed_edges
        if not len(e):
            return e
        n = self.n_vertices
        fwd = e[:, 0] * n + e[:, 1]
        rev = e[:, 1] * n + e[:, 0]
        return e[~np.isin(fwd, rev)]

    @cached_property
    def boundary_loops(self) -> list[np.ndarray]:
        be = self.boundary_edges
        nxt = {int(a): int(b) for a, b in be}
        if len(nxt) != len(be):
            raise MeshError("boundary is not a disjoint union of simple loops")
        loops = []
        seen: set[int] = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = nxt[start]
            while cur != start:
                if cur in seen or cur not in nxt:
                    raise MeshError("open or branching boundary chain")
                loop.append(cur)
                seen.add(cur)
                cur = nxt[cur]
            loops.append(np.array(loop, dtype=np.int64))
        return loops

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    @property
    def euler_characteristic(self) -> int:
        used = np.unique(self.faces) if self.n_faces else np.array([], dtype=int)
        return len(used) - len(self.edges) + self.n_faces

    def with_vertices(self, vertices, attributes=None) -> "TriMesh":
        return TriMesh(vertices, self.faces, self.attributes if attributes is None else attributes, check=False)

    def submesh(self, face_mask) -> "TriMesh":
        """Faces selected by ``face_mask`` with unused vertices dropped."""
        faces = self.faces[np.asarray(face_mask)]
        used = np.unique(faces)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[used] = np.arange(len(used))
        attrs = {k: a[used] for k, a in self.attributes.items()}
        return TriMesh(self.vertices[used], remap[faces], attrs, check=False)


@dataclass(frozen=True, eq=False)
class Polyline:
    points: np.ndarray
    closed: bool = True

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] < 2:
            raise MeshError("polyline points must be (n, d)")
        if pts.shape[1] == 2:
            pts = np.column_stack([pts, np.zeros(len(pts))])
        if len(pts) > 1:
            nxt = np.roll(pts, -1, axis=0) if self.closed else pts[1:]
            cur = pts if self.closed else pts[:-1]
            if np.any(np.all(nxt == cur, axis=1)):
                raise MeshError("consecutive polyline points coincide")
        object.__setattr__(self, "points", pts)

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.points
        if self.closed:
            return p, np.roll(p, -1, axis=0)
        return p[:-1], p[1:]

    @property
    def length(self) -> float:
        a, b = self.segments
        return float(np.linalg.norm(b - a, axis=1).sum())

    def resample(self, n: int) -> np.ndarray:
        """``n`` points equally spaced in arclength (closed curves only)."""
        a, b = self.segments
        seg = np.linalg.norm(b - a, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        t = np.linspace(0.0, cum[-1], n, endpoint=not self.closed)
        k = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(seg) - 1)
        frac = (t - cum[k]) / seg[k]
        return a[k] + frac[:, None] * (b[k] - a[k])


# --------------------------------------------------------------------------
# elementary measures


def _face_vectors(mesh: TriMesh):
    v = mesh.vertices[mesh.faces]
    return v[:, 0], v[:, 1], v[:, 2]


def _wedge_norm(u, v):
    """|u ^ v| in any dimension (Gram determinant)."""
    uu = np.einsum("ij,ij->i", u, u)
    vv = np.einsum("ij,ij->i", v, v)
    uv = np.einsum("ij,ij->i", u, v)
    return np.sqrt(np.maximum(uu * vv - uv * uv, 0.0))


def face_areas(mesh: TriMesh) -> np.ndarray:
    if not mesh.n_faces:
        return np.zeros(0)
    a, b, c = _face_vectors(mesh)
    if mesh.dim == 3:
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    return 0.5 * _wedge_norm(b - a, c - a)


def area(mesh: TriMesh) -> float:
    return float(face_areas(mesh).sum())


def corner_angles(mesh: TriMesh) -> np.ndarray:
    """(m, 3) interior angles; column k is the angle at ``faces[:, k]``."""
    p = mesh.vertices[mesh.faces]
    out = np.empty(mesh.faces.shape)
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        out[:, k] = np.arctan2(_wedge_norm(u, v), np.einsum("ij,ij->i", u, v))
    return out


def vertex_areas(mesh: TriMesh) -> np.ndarray:
    """Barycentric (lumped) vertex areas: a third of each incident face."""
    fa = face_areas(mesh) / 3.0
    return np.bincount(mesh.faces.ravel(), weights=np.repeat(fa, 3), minlength=mesh.n_vertices)


def cotan_weights(mesh: TriMesh) -> sparse.csr_matrix:
    """Symmetric matrix of w_ij = (cot a_ij + cot b_ij) / 2 on mesh edges."""
    p = mesh.vertices[mesh.faces]
    rows, cols, vals = [], [], []
    for k in range(3):
        i = mesh.faces[:, (k + 1) % 3]
        j = mesh.faces[:, (k + 2) % 3]
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cot = np.einsum("ij,ij->i", u, v) / _wedge_norm(u, v)
        rows += [i, j]
        cols += [j, i]
        vals += [0.5 * cot, 0.5 * cot]
    n = mesh.n_vertices
    w = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return w.tocsr()


def cotan_laplacian(mesh: TriMesh) -> sparse.csr_matrix:
    """Positive semidefinite L with x^T L x = sum_edges w_ij |x_i - x_j|^2."""
    w = cotan_weights(mesh)
    d = np.asarray(w.sum(axis=1)).ravel()
    return (sparse.diags(d) - w).tocsr()


def mean_curvature_vectors(mesh: TriMesh) -> np.ndarray:
    """Integrated mean curvature vectors, (-L x)_i (the discrete Laplace-Beltrami of position)."""
    return -(cotan_laplacian(mesh) @ mesh.vertices)


@dataclass
class CurvatureResult:
    defects: np.ndarray  # per-vertex angle defect (K times vertex area at interior vertices)
    interior: np.ndarray  # boolean mask
    total_curvature: float  # -sum of interior defects
    boundary_turning: float  # sum of boundary defects

    @property
    def gauss_bonnet_sum(self) -> float:
        return float(self.defects.sum())


def angle_defect_curvature(mesh: TriMesh) -> CurvatureResult:
    ang = np.bincount(mesh.faces.ravel(), weights=corner_angles(mesh).ravel(), minlength=mesh.n_vertices)
    bmask = mesh.boundary_mask
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.faces.ravel()] = True
    defects = np.where(bmask, np.pi - ang, 2 * np.pi - ang)
    defects[~used] = 0.0
    interior = used & ~bmask
    return CurvatureResult(
        defects=defects,
        interior=interior,
        total_curvature=float(-defects[interior].sum()),
        boundary_turning=float(defects[bmask].sum()),
    )


# --------------------------------------------------------------------------
# distances


def edge_graph(mesh: TriMesh) -> sparse.csr_matrix:
    e = mesh.edges
    length = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    g = sparse.coo_matrix((length, (e[:, 0], e[:, 1])), shape=(n, n))
    return (g + g.T).tocsr()


def geodesic_distance(mesh: TriMesh, source) -> np.ndarray:
    """Edge-graph Dijkstra distance from ``source`` (a vertex or list of vertices).

    Unreachable vertices get ``inf``.  The value bounds the polyhedral geodesic
    distance from above and converges to it under refinement.
    """
    src = np.atleast_1d(np.asarray(source, dtype=np.int64))
    return csgraph.dijkstra(edge_graph(mesh), directed=False, indices=src, min_only=True)


# --------------------------------------------------------------------------
# ball clipping


def _point_triangle_distance(p, a, b, c):
    """Distance from point ``p`` to triangles (a, b, c); works in any dimension."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = vb / denom
        w = vc / denom
    closest = a + v[:, None] * ab + w[:, None] * ac

    def put(mask, pts):
        closest[mask] = pts[mask] if pts.ndim == 2 else pts

    # regions applied from lowest to highest priority
    with np.errstate(divide="ignore", invalid="ignore"):
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put(m, b + t[:, None] * (c - b))
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t = d2 / (d2 - d6)
        put(m, a + t[:, None] * ac)
        put((d6 >= 0) & (d5 <= d6), c)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t = d1 / (d1 - d3)
        put(m, a + t[:, None] * ab)
    put((d3 >= 0) & (d4 <= d3), b)
    put((d1 <= 0) & (d2 <= 0), a)
    return np.linalg.norm(closest - p, axis=1)


def _tri_area(t):
    return 0.5 * _wedge_norm(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])


def _subdivide4(t):
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ]
    )


def sublevel_fraction(phi: np.ndarray) -> np.ndarray:
    """Area fraction of each triangle where the linear interpolant of ``phi`` is >= 0.

    ``phi`` has shape (m, 3), one value per corner.
    """
    phi = np.asarray(phi, dtype=float)
    pos = phi >= 0
    cnt = pos.sum(axis=1)
    frac = (cnt == 3).astype(float)
    rows = np.arange(len(phi))
    with np.errstate(invalid="ignore", divide="ignore"):
        for n_in, pick in ((1, np.argmax), (2, np.argmin)):
            sel = cnt == n_in
            if not sel.any():
                continue
            f = phi[sel]
            k = pick(pos[sel], axis=1)
            r = rows[: len(f)]
            lone = f[r, k]
            others = np.stack([f[r, (k + 1) % 3], f[r, (k + 2) % 3]], axis=1)
            corner = np.prod(lone[:, None] / (lone[:, None] - others), axis=1)
            frac[sel] = corner if n_in == 1 else 1.0 - corner
    return np.clip(frac, 0.0, 1.0)


def ball_area(mesh: TriMesh, p, r: float, min_size2: float | None = None) -> float:
    """Area of the part of ``mesh`` inside the closed ball B(p, r).

    Triangles straddling the sphere are split 4-way until they are entirely
    inside, entirely outside, or their squared longest edge drops below
    ``min_size2`` (default 1e-4 r^2).  Such leaves count the part where the
    linearly interpolated signed distance r - |x - p| is nonnegative.  A size
    rather than an area threshold keeps long slivers from being decided
    whole.  For a fixed ``min_size2`` the result is nondecreasing in r, since
    every leaf fraction grows with r.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if not mesh.n_faces:
        return 0.0
    p = np.asarray(p, dtype=float)
    if min_size2 is None:
        min_size2 = 1e-4 * r * r
    r2 = r * r
    tri = mesh.vertices[mesh.faces]
    total = 0.0
    while len(tri):
        d2 = ((tri - p) ** 2).sum(axis=2)
        inside = np.all(d2 <= r2, axis=1)
        total += _tri_area(tri[inside]).sum()
        tri = tri[~inside]
        if not len(tri):
            break
        near = _point_triangle_distance(p[None, :], tri[:, 0], tri[:, 1], tri[:, 2]) <= r
        tri = tri[near]
        if not len(tri):
            break
        size2 = np.max(((tri - np.roll(tri, -1, axis=1)) ** 2).sum(axis=2), axis=1)
        small = size2 < min_size2
        if np.any(small):
            leaf = tri[small]
            phi = r - np.sqrt(((leaf - p) ** 2).sum(axis=2))
            total += float(np.sum(_tri_area(leaf) * sublevel_fraction(phi)))
        tri = _subdivide4(tri[~small])
    return float(total)


# --------------------------------------------------------------------------
# curves


def polyline_total_curvature(curve: Polyline) -> float:
    """Sum of turning angles of a closed polyline."""
    if not curve.closed or len(curve.points) < 3:
        raise MeshError("total curvature needs a closed polyline with at least 3 points")
    a, b = curve.segments
    e = b - a
    e_prev = np.roll(e, 1, axis=0)
    return float(np.arctan2(_wedge_norm(e_prev, e), np.einsum("ij,ij->i", e_prev, e)).sum())


# --------------------------------------------------------------------------
# convex hull


def convex_hull_violation(mesh: TriMesh) -> float:
    """Max signed distance of interior vertices outside the hull of the boundary.

    Values <= 0 mean every interior vertex lies in the convex hull.  A planar
    boundary is handled with a 2-D hull in its fitted plane.
    """
    if mesh.dim != 3:
        raise MeshError("convex hull check needs a mesh in R^3")
    bmask = mesh.boundary_mask
    if not bmask.any():
        raise MeshError("mesh has no boundary")
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.faces.ravel()] = True
    interior = mesh.vertices[used & ~bmask]
    if not len(interior):
        return -math.inf
    bpts = mesh.vertices[bmask]
    center = bpts.mean(axis=0)
    _, sv, vt = np.linalg.svd(bpts - center, full_matrices=False)
    scale = mesh.scale
    if sv[2] <= 1e-9 * max(sv[0], 1e-300) or sv[2] <= 1e-12 * scale:
        normal = vt[2]
        basis = vt[:2]
        hull = ConvexHull((bpts - center) @ basis.T)
        rel = interior - center
        h = rel @ normal
        q = rel @ basis.T
        d_in = (q @ hull.equations[:, :2].T + hull.equations[:, 2]).max(axis=1)
        flat = np.abs(h) <= 1e-12 * scale
        d = np.where(flat, d_in, np.hypot(h, np.maximum(d_in, 0.0)))
        return float(d.max())
    hull = ConvexHull(bpts)
    d = (interior @ hull.equations[:, :3].T + hull.equations[:, 3]).max(axis=1)
    return float(d.max())


# --------------------------------------------------------------------------
# self-intersection


def _orient3(a, b, c, d):
    return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a)


def _orient2(a, b, c):
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])


def _snap(x, eps):
    return np.where(np.abs(x) <= eps, 0.0, np.sign(x))


def _segment_crosses_triangle(p, q, a, b, c, eps):
    s1 = _snap(_orient3(a, b, c, p), eps)
    s2 = _snap(_orient3(a, b, c, q), eps)
    cross_plane = s1 * s2 < 0
    o1 = _snap(_orient3(p, q, a, b), eps)
    o2 = _snap(_orient3(p, q, b, c), eps)
    o3 = _snap(_orient3(p, q, c, a), eps)
    inside = ((o1 > 0) & (o2 > 0) & (o3 > 0)) | ((o1 < 0) & (o2 < 0) & (o3 < 0))
    return cross_plane & inside


def _coplanar_overlap(A, B, normal, eps):
    axis = np.argmax(np.abs(normal), axis=1)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[axis]
    rows = np.arange(len(A))[:, None]
    A2 = np.stack([A[:, k][rows, keep] for k in range(3)], axis=1)
    B2 = np.stack([B[:, k][rows, keep] for k in range(3)], axis=1)
    hit = np.zeros(len(A), dtype=bool)
    for i in range(3):
        a0, a1 = A2[:, i], A2[:, (i + 1) % 3]
        for j in range(3):
            b0, b1 = B2[:, j], B2[:, (j + 1) % 3]
            d1 = _snap(_orient2(a0, a1, b0), eps)
            d2 = _snap(_orient2(a0, a1, b1), eps)
            d3 = _snap(_orient2(b0, b1, a0), eps)
            d4 = _snap(_orient2(b0, b1, a1), eps)
            hit |= (d1 * d2 < 0) & (d3 * d4 < 0)

    def strictly_inside(T, P):
        s = [_snap(_orient2(T[:, k], T[:, (k + 1) % 3], P), eps) for k in range(3)]
        return ((s[0] > 0) & (s[1] > 0) & (s[2] > 0)) | ((s[0] < 0) & (s[1] < 0) & (s[2] < 0))

    for k in range(3):
        hit |= strictly_inside(A2, B2[:, k]) | strictly_inside(B2, A2[:, k])
    return hit


def _triangle_pairs_intersect(A, B, eps3, eps2):
    n1 = np.cross(A[:, 1] - A[:, 0], A[:, 2] - A[:, 0])
    sb = np.stack([_snap(_orient3(A[:, 0], A[:, 1], A[:, 2], B[:, k]), eps3) for k in range(3)], axis=1)
    sa = np.stack([_snap(_orient3(B[:, 0], B[:, 1], B[:, 2], A[:, k]), eps3) for k in range(3)], axis=1)
    separated = np.all(sb > 0, axis=1) | np.all(sb < 0, axis=1) | np.all(sa > 0, axis=1) | np.all(sa < 0, axis=1)
    coplanar = np.all(sb == 0, axis=1)
    hit = np.zeros(len(A), dtype=bool)
    gen = ~separated & ~coplanar
    if gen.any():
        a, b = A[gen], B[gen]
        h = np.zeros(len(a), dtype=bool)
        for k in range(3):
            h |= _segment_crosses_triangle(a[:, k], a[:, (k + 1) % 3], b[:, 0], b[:, 1], b[:, 2], eps3)
            h |= _segment_crosses_triangle(b[:, k], b[:, (k + 1) % 3], a[:, 0], a[:, 1], a[:, 2], eps3)
        hit[gen] = h
    if coplanar.any():
        hit[coplanar] = _coplanar_overlap(A[coplanar], B[coplanar], n1[coplanar], eps2)
    return hit


def intersects_self(mesh: TriMesh, face_mask=None, eps: float = 1e-12):
    """Whether two non-adjacent triangles intersect.

    Returns ``(hit, witness)`` where ``witness`` is the lexicographically first
    intersecting face pair, or ``None``.  Orientation tests are snapped to zero
    within ``eps`` (relative to the mesh scale), so mere touching is not a hit.
    """
    if mesh.dim != 3:
        raise MeshError("self-intersection test needs a mesh in R^3")
    face_ids = np.arange(mesh.n_faces)
    if face_mask is not None:
        face_ids = face_ids[np.asarray(face_mask)]
    if len(face_ids) < 2:
        return False, None
    faces = mesh.faces[face_ids]
    tri = mesh.vertices[faces]
    cen = tri.mean(axis=1)
    rad = np.linalg.norm(tri - cen[:, None, :], axis=2).max(axis=1)
    pairs = cKDTree(cen).query_pairs(2 * rad.max() * (1 + 1e-9), output_type="ndarray")
    if not len(pairs):
        return False, None
    i, j = pairs[:, 0], pairs[:, 1]
    lo = tri.min(axis=1)
    hi = tri.max(axis=1)
    ok = np.all((lo[i] <= hi[j]) & (lo[j] <= hi[i]), axis=1)
    i, j = i[ok], j[ok]
    fi, fj = faces[i], faces[j]
    share = (fi[:, :, None] == fj[:, None, :]).any(axis=(1, 2))
    i, j = i[~share], j[~share]
    scale = mesh.scale
    eps3 = eps * scale**3
    eps2 = eps * scale**2
    hits = []
    for s in range(0, len(i), 200_000):
        ii, jj = i[s : s + 200_000], j[s : s + 200_000]
        h = _triangle_pairs_intersect(tri[ii], tri[jj], eps3, eps2)
        if h.any():
            hits.append(np.column_stack([face_ids[ii[h]], face_ids[jj[h]]]))
    if not hits:
        return False, None
    w = np.sort(np.concatenate(hits), axis=1)
    order = np.lexsort((w[:, 1], w[:, 0]))
    first = w[order[0]]
    return True, (int(first[0]), int(first[1]))


# --------------------------------------------------------------------------
# I/O


def _fmt(x: float) -> str:
    return "%.17g" % x


def export_mesh(mesh: TriMesh, fmt: str) -> bytes:
    """Serialize to ``"obj"`` or ASCII ``"ply"`` (with per-vertex attributes)."""
    buf = io.StringIO()
    if fmt == "obj":
        if mesh.dim != 3:
            raise MeshFormatError("OBJ supports n=3 only")
        for v in mesh.vertices:
            buf.write("v " + " ".join(_fmt(x) for x in v) + "\n")
        for f in mesh.faces + 1:
            buf.write(f"f {f[0]} {f[1]} {f[2]}\n")
        return buf.getvalue().encode()
    if fmt != "ply":
        raise MeshFormatError(f"unknown format {fmt!r}")
    coord_names = ["x", "y", "z", "w"][: mesh.dim]
    cols = [mesh.vertices]
    names = list(coord_names)
    for key in sorted(mesh.attributes):
        a = mesh.attributes[key]
        if a.ndim == 1:
            cols.append(a[:, None])
            names.append(key)
        else:
            cols.append(a.reshape(len(a), -1))
            names += [f"{key}_{k}" for k in range(a.reshape(len(a), -1).shape[1])]
    table = np.hstack(cols) if cols else np.zeros((0, 0))
    buf.write("ply\nformat ascii 1.0\n")
    buf.write(f"element vertex {mesh.n_vertices}\n")
    for name in names:
        buf.write(f"property double {name}\n")
    buf.write(f"element face {mesh.n_faces}\n")
    buf.write("property list uchar int vertex_indices\nend_header\n")
    for row in table:
        buf.write(" ".join(_fmt(x) for x in row) + "\n")
    for f in mesh.faces:
        buf.write(f"3 {f[0]} {f[1]} {f[2]}\n")
    return buf.getvalue().encode()


def _import_obj(lines):
    verts, faces = [], []
    for no, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                if len(parts) != 4:
                    raise MeshFormatError("vertex needs 3 coordinates", no)
                verts.append([float(x) for x in parts[1:]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) != 3:
                    raise MeshFormatError("only triangular faces are supported", no)
                faces.append([k - 1 if k > 0 else len(verts) + k for k in idx])
        except ValueError as exc:
            if isinstance(exc, MeshFormatError):
                raise
            raise MeshFormatError(f"malformed record: {line.strip()!r}", no) from None
    return TriMesh(np.array(verts).reshape(-1, 3), np.array(faces).reshape(-1, 3))


def _import_ply(lines):
    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError("missing ply magic", 1)
    n_vert = n_face = None
    props: list[str] = []
    element = None
    header_end = None
    for no, line in enumerate(lines[1:], 2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise MeshFormatError("only ascii PLY is supported", no)
        elif parts[0] == "element":
            element = parts[1]
            if element == "vertex":
                n_vert = int(parts[2])
            elif element == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and element == "vertex":
            props.append(parts[-1])
        elif parts[0] == "end_header":
            header_end = no
            break
    if header_end is None or n_vert is None or n_face is None:
        raise MeshFormatError("incomplete PLY header")
    body = lines[header_end:]
    if len(body) < n_vert + n_face:
        raise MeshFormatError("unexpected end of file", len(lines))
    try:
        table = np.array([[float(x) for x in body[k].split()] for k in range(n_vert)]).reshape(n_vert, len(props))
    except ValueError:
        bad = next(k for k in range(n_vert) if len(body[k].split()) != len(props) or not _floats_ok(body[k]))
        raise MeshFormatError("malformed vertex record", header_end + bad + 1) from None
    faces = []
    for k in range(n_face):
        parts = body[n_vert + k].split()
        no = header_end + n_vert + k + 1
        try:
            if int(parts[0]) != 3 or len(parts) != 4:
                raise MeshFormatError("only triangular faces are supported", no)
            faces.append([int(x) for x in parts[1:]])
        except (ValueError, IndexError):
            raise MeshFormatError("malformed face record", no) from None
    coord = [p for p in props if p in ("x", "y", "z", "w")]
    ci = [props.index(c) for c in coord]
    verts = table[:, ci]
    attrs: dict[str, list] = {}
    for k, name in enumerate(props):
        if name in coord:
            continue
        base, _, suffix = name.rpartition("_")
        if base and suffix.isdigit():
            attrs.setdefault(base, []).append(table[:, k])
        else:
            attrs[name] = table[:, k]
    attributes = {
        key: (np.column_stack(val) if isinstance(val, list) else val) for key, val in attrs.items()
    }
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3), attributes)


def _floats_ok(line):
    try:
        [float(x) for x in line.split()]
        return True
    except ValueError:
        return False


def import_mesh(data: bytes | str) -> TriMesh:
    """Parse OBJ or ASCII PLY bytes (format detected from the content)."""
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    if lines and lines[0].strip() == "ply":
        return _import_ply(lines)
    return _import_obj(lines)


def read_polyline(text: str) -> Polyline:
    pts = []
    closed = False
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if s == "closed":
            closed = True
            continue
        if closed:
            raise MeshFormatError("data after 'closed' footer", no)
        try:
            pts.append([float(x) for x in s.split()])
        except ValueError:
            raise MeshFormatError(f"malformed point {s!r}", no) from None
        if not 2 <= len(pts[-1]) <= 4 or len(pts[-1]) != len(pts[0]):
            raise MeshFormatError("points need 2 to 4 consistent coordinates", no)
    return Polyline(np.array(pts), closed=closed)


def write_polyline(curve: Polyline) -> str:
    lines = [" ".join(_fmt(x) for x in p) for p in curve.points]
    if curve.closed:
        lines.append("closed")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# generators


def _ring_faces(n_boundary: int, n_rings: int) -> np.ndarray:
    def vid(j, k):
        return 1 + (j - 1) * n_boundary + (k % n_boundary)

    k = np.arange(n_boundary)
    faces = [np.column_stack([np.zeros(n_boundary, dtype=np.int64), vid(1, k), vid(1, k + 1)])]
    for j in range(1, n_rings):
        a, b = vid(j, k), vid(j, k + 1)
        c, d = vid(j + 1, k + 1), vid(j + 1, k)
        faces.append(np.column_stack([a, d, c]))
        faces.append(np.column_stack([a, c, b]))
    return np.concatenate(faces)


def ring_disk_points(n_boundary: int, n_rings: int) -> np.ndarray:
    """Planar (x, y) vertex positions of the concentric-ring disk, center first."""
    t = 2 * np.pi * np.arange(n_boundary) / n_boundary
    r = np.arange(1, n_rings + 1) / n_rings
    xy = np.concatenate([np.zeros((1, 2)), np.column_stack([np.outer(r, np.cos(t)).ravel(), np.outer(r, np.sin(t)).ravel()])])
    return xy


def flat_disk(n_boundary: int = 128, n_rings: int = 16, radius: float = 1.0) -> TriMesh:
    """Flat disk in the plane z=0 on concentric rings of ``n_boundary`` vertices each.

    Ring vertices are aligned radially, so every quad is an isosceles
    trapezoid and all cotangent weights are nonnegative.
    """
    xy = radius * ring_disk_points(n_boundary, n_rings)
    v = np.column_stack([xy, np.zeros(len(xy))])
    return TriMesh(v, _ring_faces(n_boundary, n_rings))


def hemisphere(n_boundary: int = 128, n_rings: int = 32, radius: float = 1.0) -> TriMesh:
    """Upper unit hemisphere with the equator as boundary (non-minimal test surface)."""
    xy = ring_disk_points(n_boundary, n_rings)
    rho = np.hypot(xy[:, 0], xy[:, 1])
    phi = rho * np.pi / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(rho > 0, np.sin(phi) / rho, 0.0)
    v = radius * np.column_stack([xy[:, 0] * s, xy[:, 1] * s, np.cos(phi)])
    return TriMesh(v, _ring_faces(n_boundary, n_rings))


def flat_strip(length: float = 10.0, width: float = 0.1, n_long: int = 200, n_wide: int = 2) -> TriMesh:
    x = np.linspace(0, length, n_long + 1)
    y = np.linspace(0, width, n_wide + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    v = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    return TriMesh(v, grid_faces(n_long + 1, n_wide + 1))


def grid_faces(nu: int, nv: int, periodic_u: bool = False) -> np.ndarray:
    """Two CCW triangles per cell of an (nu, nv) node grid indexed i*nv + j."""
    iu = np.arange(nu if periodic_u else nu - 1)
    jv = np.arange(nv - 1)
    I, J = np.meshgrid(iu, jv, indexing="ij")
    I, J = I.ravel(), J.ravel()
    i1 = (I + 1) % nu
    a = I * nv + J
    b = i1 * nv + J
    c = i1 * nv + J + 1
    d = I * nv + J + 1
    return np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])


def crossed_rectangles() -> TriMesh:
    """Two squares crossing each other at right angles, in general position."""
    v = np.array(
        [
            [-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0],
            [-0.7, 0.2, -1], [0.9, 0.2, -1], [0.9, 0.2, 1], [-0.7, 0.2, 1],
        ],
        dtype=float,
    )
    f = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
    return TriMesh(v, f)
