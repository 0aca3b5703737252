"""Disk-type Plateau problem by the Douglas-Rado direct method.

The Dirichlet energy of the harmonic extension is minimized over monotone
boundary parametrizations ``s`` with three boundary vertices pinned to anchor
parameters.  Inner step: sparse SPD solve.  Outer step: projected gradient
descent with a Barzilai-Borwein trial step and Armijo backtracking.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.optimize import isotonic_regression
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from . import expr as ex
from .mesh import MeshError, Polyline, TriMesh, _ring_faces, cotan_weights, face_areas, ring_disk_points

__all__ = [
    "PlateauError",
    "CurveRejected",
    "SingularSystem",
    "DiskMesh",
    "BoundaryProblem",
    "SolverConfig",
    "PlateauState",
    "CourantLebesgueReport",
    "build_disk",
    "harmonic_extend",
    "energy",
    "map_area",
    "conformality_residual",
    "solve",
    "courant_lebesgue_check",
    "load_problem",
    "dump_problem",
]

GAP_FACTOR = 1e-4


class PlateauError(ValueError):
    pass


class CurveRejected(PlateauError):
    pass


class SingularSystem(PlateauError, ArithmeticError):
    pass


# --------------------------------------------------------------------------
# disk


@dataclass(frozen=True, eq=False)
class DiskMesh:
    """Concentric-ring triangulation of the closed unit disk.

    Boundary vertices are the last ring, equally spaced and counterclockwise;
    ``boundary[k]`` sits at angle ``2 pi k / n_boundary``.
    """

    points: np.ndarray
    faces: np.ndarray
    n_boundary: int
    n_rings: int

    @cached_property
    def boundary(self) -> np.ndarray:
        n = len(self.points)
        return np.arange(n - self.n_boundary, n)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.arange(len(self.points) - self.n_boundary)

    @cached_property
    def flat_mesh(self) -> TriMesh:
        return TriMesh(np.column_stack([self.points, np.zeros(len(self.points))]), self.faces)

    @cached_property
    def weights(self) -> sparse.csr_matrix:
        W = cotan_weights(self.flat_mesh).tocsr()
        # trapezoid diagonals are cyclic quads: their weights vanish up to roundoff
        W.data[np.abs(W.data) < 1e-12] = 0.0
        W.eliminate_zeros()
        return W

    @cached_property
    def laplacian(self) -> sparse.csr_matrix:
        W = self.weights
        d = np.asarray(W.sum(axis=1)).ravel()
        return (sparse.diags(d) - W).tocsr()

    @cached_property
    def _blocks(self):
        L = self.laplacian
        I, B = self.interior, self.boundary
        L_II = L[I][:, I].tocsc()
        L_IB = L[I][:, B].tocsr()
        return splu(L_II), L_II, L_IB

    @cached_property
    def flat_frames(self) -> np.ndarray:
        """Per-face inverse of the flat edge matrix [p1-p0, p2-p0]."""
        p = self.points[self.faces]
        E = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (m, 2, 2) columns
        return np.linalg.inv(E)

    @cached_property
    def flat_areas(self) -> np.ndarray:
        return face_areas(self.flat_mesh)

    @property
    def boundary_angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_boundary) / self.n_boundary

    def mesh(self, F) -> TriMesh:
        F = np.asarray(F, dtype=float)
        if F.shape[1] == 2:
            F = np.column_stack([F, np.zeros(len(F))])
        return TriMesh(F, self.faces, check=False)


def build_disk(n_boundary: int = 128, n_rings: int = 24) -> DiskMesh:
    """Concentric-ring disk with radially aligned rings (all cotan weights >= 0)."""
    if n_boundary < 12 or n_rings < 2:
        raise PlateauError("need n_boundary >= 12 and n_rings >= 2")
    return DiskMesh(ring_disk_points(n_boundary, n_rings), _ring_faces(n_boundary, n_rings), n_boundary, n_rings)


# --------------------------------------------------------------------------
# energies


def harmonic_extend(disk: DiskMesh, boundary_values) -> np.ndarray:
    """Discrete harmonic extension of boundary values (one column per coordinate)."""
    fb = np.asarray(boundary_values, dtype=float)
    squeeze = fb.ndim == 1
    if squeeze:
        fb = fb[:, None]
    if fb.shape[0] != disk.n_boundary:
        raise PlateauError(f"expected {disk.n_boundary} boundary values, got {fb.shape[0]}")
    if not np.all(np.isfinite(fb)):
        raise PlateauError("boundary values must be finite")
    lu, L_II, L_IB = disk._blocks
    rhs = -(L_IB @ fb)
    fi = lu.solve(rhs)
    res = np.linalg.norm(L_II @ fi - rhs)
    if not np.all(np.isfinite(fi)) or res > 1e-10 * max(np.linalg.norm(rhs), 1e-300) and res > 1e-14:
        raise SingularSystem(f"harmonic extension residual {res:.3e} too large")
    F = np.empty((len(disk.points), fb.shape[1]))
    F[disk.interior] = fi
    F[disk.boundary] = fb
    return F[:, 0] if squeeze else F


def energy(disk: DiskMesh, F) -> float:
    """E = 1/2 sum_edges w_ij |F_i - F_j|^2."""
    F = np.asarray(F, dtype=float).reshape(len(disk.points), -1)
    return 0.5 * float(np.sum(F * (disk.laplacian @ F)))


def _face_jacobians(disk: DiskMesh, F) -> tuple[np.ndarray, np.ndarray]:
    F = np.asarray(F, dtype=float).reshape(len(disk.points), -1)
    f = F[disk.faces]
    D = np.stack([f[:, 1] - f[:, 0], f[:, 2] - f[:, 0]], axis=2)  # (m, n, 2)
    J = D @ disk.flat_frames  # columns F_x, F_y
    return J[:, :, 0], J[:, :, 1]


def map_area(disk: DiskMesh, F) -> float:
    """A = sum_faces J(DF) * flat area, with J = |F_x ^ F_y|."""
    fx, fy = _face_jacobians(disk, F)
    xx = np.einsum("ij,ij->i", fx, fx)
    yy = np.einsum("ij,ij->i", fy, fy)
    xy = np.einsum("ij,ij->i", fx, fy)
    jac = np.sqrt(np.maximum(xx * yy - xy**2, 0.0))
    return float(np.sum(jac * disk.flat_areas))


def conformality_residual(disk: DiskMesh, F) -> np.ndarray:
    """Per-face (|F_x|^2 - |F_y|^2, 2 F_x . F_y); zero for a conformal map."""
    fx, fy = _face_jacobians(disk, F)
    return np.column_stack(
        [np.einsum("ij,ij->i", fx, fx) - np.einsum("ij,ij->i", fy, fy), 2 * np.einsum("ij,ij->i", fx, fy)]
    )


# --------------------------------------------------------------------------
# boundary problem


class _ParametricCurve:
    def __init__(self, texts, period):
        self.texts = tuple(texts)
        self.exprs = [ex.parse(t, variables=("t",)) for t in self.texts]
        self.dexprs = [ex.derivative(e, "t") for e in self.exprs]
        self.period = float(period)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.stack([np.broadcast_to(np.real(ex.evaluate(e, t=s)), s.shape) for e in self.exprs], axis=-1)

    def tangent(self, s):
        s = np.asarray(s, dtype=float)
        return np.stack([np.broadcast_to(np.real(ex.evaluate(d, t=s)), s.shape) for d in self.dexprs], axis=-1)


class _PolylineCurve:
    """Closed polyline parametrized by arclength."""

    def __init__(self, points):
        self.polyline = Polyline(points, closed=True)
        a, b = self.polyline.segments
        self.a, self.b = a, b
        seg = np.linalg.norm(b - a, axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.seg = seg
        self.period = float(self.cum[-1])

    def _locate(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.period)
        k = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.seg) - 1)
        return s, k

    def __call__(self, s):
        s, k = self._locate(s)
        frac = ((s - self.cum[k]) / self.seg[k])[..., None]
        return self.a[k] + frac * (self.b[k] - self.a[k])

    def tangent(self, s):
        _, k = self._locate(s)
        return (self.b[k] - self.a[k]) / self.seg[k][..., None]


def _check_simple(points: np.ndarray, length: float):
    n = len(points)
    h = length / n
    tree = cKDTree(points)
    pairs = tree.query_pairs(r=0.5 * h, output_type="ndarray")
    if len(pairs):
        sep = np.abs(pairs[:, 0] - pairs[:, 1])
        sep = np.minimum(sep, n - sep)
        bad = pairs[sep > 4]
        if len(bad):
            i, j = bad[0]
            raise CurveRejected(f"boundary curve is self-intersecting near {points[i].round(6).tolist()}")


@dataclass(eq=False)
class BoundaryProblem:
    """Closed Jordan curve Gamma with three anchor parameters.

    Build with :meth:`from_points`, :meth:`from_parametric` or :meth:`from_mesh`.
    """

    curve: object
    anchors: tuple
    kind: str = "points"

    def __post_init__(self):
        T = self.period
        a = [float(x) for x in self.anchors]
        if len(a) != 3:
            raise PlateauError("exactly three anchors are required")
        a0 = a[0]
        rel = [0.0] + [(x - a0) % T for x in a[1:]]
        if min(abs(rel[1]), abs(rel[2]), abs(rel[2] - rel[1]), T - rel[1], T - rel[2]) < 1e-12 * T:
            raise PlateauError("anchors must be distinct")
        if rel[2] < rel[1]:
            rel[1], rel[2] = rel[2], rel[1]
        self.anchors = tuple(a0 + r for r in rel)
        dense = self.curve(np.linspace(0.0, T, 4096, endpoint=False))
        if not np.all(np.isfinite(dense)):
            raise CurveRejected("boundary curve evaluates to non-finite values")
        _check_simple(dense, float(np.linalg.norm(np.diff(np.vstack([dense, dense[:1]]), axis=0), axis=1).sum()))
        if np.max(np.linalg.norm(self.curve(0.0) - self.curve(T))) > 1e-9 * (1 + np.abs(dense).max()):
            raise CurveRejected("boundary must be a single closed curve (gamma(0) != gamma(period))")

    @property
    def period(self) -> float:
        return self.curve.period

    @property
    def dim(self) -> int:
        return int(np.shape(self.curve(0.0))[-1])

    @classmethod
    def from_points(cls, points, anchors=None):
        try:
            curve = _PolylineCurve(np.asarray(points, dtype=float))
        except MeshError as exc:
            raise CurveRejected(str(exc)) from None
        if len(curve.seg) < 3:
            raise CurveRejected("boundary polyline needs at least 3 points")
        T = curve.period
        return cls(curve, tuple(anchors) if anchors is not None else (0.0, T / 3, 2 * T / 3), "points")

    @classmethod
    def from_parametric(cls, x: str, y: str, z: str = "0", period: float = 2 * math.pi, anchors=None):
        curve = _ParametricCurve((x, y, z), period)
        T = curve.period
        if T <= 0:
            raise PlateauError("period must be positive")
        return cls(curve, tuple(anchors) if anchors is not None else (0.0, T / 3, 2 * T / 3), "parametric")

    @classmethod
    def from_mesh(cls, mesh: TriMesh, anchors=None):
        loops = mesh.boundary_loops
        if len(loops) != 1:
            raise CurveRejected(f"boundary must be a single closed curve (mesh has {len(loops)} boundary loops)")
        return cls.from_points(mesh.vertices[loops[0]], anchors)

    @classmethod
    def circle(cls, radius: float = 1.0):
        return cls.from_parametric(f"{radius!r}*cos(t)", f"{radius!r}*sin(t)", "0", 2 * math.pi)


# --------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class SolverConfig:
    tol: float | None = None  # absolute energy decrease; default 1e-9 * E
    max_iters: int = 500
    init: str = "uniform"  # or "random"
    seed: int = 0
    restarts: int = 1
    armijo: float = 1e-4
    max_backtracks: int = 40


@dataclass
class PlateauState:
    s: np.ndarray
    F: np.ndarray
    energy: float
    area: float
    conformality_residual: np.ndarray
    iteration: int
    converged: bool
    energies: list = field(default_factory=list)
    areas: list = field(default_factory=list)
    gap_floor: float = 0.0
    active_gaps: int = 0
    restart_log: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        """E - A, the conformality certificate (zero iff almost conformal)."""
        return self.energy - self.area

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "area": self.area,
            "gap": self.gap,
            "relative_gap": self.gap / self.energy if self.energy else 0.0,
            "iterations": self.iteration,
            "converged": self.converged,
            "gap_floor": self.gap_floor,
            "active_gap_constraints": self.active_gaps,
            "max_conformality_residual": float(np.abs(self.conformality_residual).max()),
        }


def _anchor_slots(n: int) -> np.ndarray:
    return np.array([0, round(n / 3), round(2 * n / 3)])


def _initial_s(problem: BoundaryProblem, n: int, init: str, rng: np.random.Generator) -> np.ndarray:
    slots = np.append(_anchor_slots(n), n)
    vals = np.append(problem.anchors, problem.anchors[0] + problem.period)
    s = np.empty(n)
    for k in range(3):
        i0, i1 = slots[k], slots[k + 1]
        m = i1 - i0
        if init == "uniform":
            frac = np.arange(m) / m
        elif init == "random":
            gaps = rng.dirichlet(np.full(m, 2.0))
            frac = np.concatenate([[0.0], np.cumsum(gaps)[:-1]])
        else:
            raise PlateauError(f"unknown init {init!r}")
        s[i0:i1] = vals[k] + frac * (vals[k + 1] - vals[k])
    return s


def _project(s: np.ndarray, problem: BoundaryProblem, delta: float) -> np.ndarray:
    """Euclidean projection onto monotone s with gaps >= delta and fixed anchors."""
    n = len(s)
    slots = np.append(_anchor_slots(n), n)
    vals = np.append(problem.anchors, problem.anchors[0] + problem.period)
    out = s.copy()
    for k in range(3):
        i0, i1 = slots[k], slots[k + 1]
        out[i0] = vals[k]
        m = i1 - i0 - 1
        if m <= 0:
            continue
        j = np.arange(1, m + 1)
        u = isotonic_regression(s[i0 + 1 : i1] - j * delta).x
        u = np.clip(u, vals[k], vals[k + 1] - (m + 1) * delta)
        out[i0 + 1 : i1] = u + j * delta
    return out


def _evaluate(problem, disk, s):
    F = harmonic_extend(disk, problem.curve(s))
    return F, energy(disk, F)


def _descend(problem: BoundaryProblem, disk: DiskMesh, cfg: SolverConfig, rng) -> PlateauState:
    n = disk.n_boundary
    delta = GAP_FACTOR * problem.period / n
    fixed = np.zeros(n, dtype=bool)
    fixed[_anchor_slots(n)] = True
    s = _project(_initial_s(problem, n, cfg.init, rng), problem, delta)
    F, E = _evaluate(problem, disk, s)
    energies, areas = [E], [map_area(disk, F)]
    L = disk.laplacian
    step = None
    s_prev = g_prev = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        dF = (L @ F)[disk.boundary]  # dE/dF_B (interior block vanishes)
        g = np.einsum("ij,ij->i", dF, problem.curve.tangent(s))
        g[fixed] = 0.0
        if s_prev is not None:
            ds, dg = s - s_prev, g - g_prev
            sy = float(ds @ dg)
            step = float(ds @ ds) / sy if sy > 0 else None
        if step is None:
            gn = np.linalg.norm(g)
            step = 0.1 * problem.period / n / gn if gn > 0 else 1.0
        tol = cfg.tol if cfg.tol is not None else 1e-9 * E
        accepted = False
        for _ in range(cfg.max_backtracks):
            s_new = _project(s - step * g, problem, delta)
            F_new, E_new = _evaluate(problem, disk, s_new)
            if E_new <= E - cfg.armijo * float(g @ (s - s_new)) and E_new <= E:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True  # no descent direction left at the current gap floor
            it -= 1
            break
        s_prev, g_prev = s, g
        decrease = E - E_new
        s, F, E = s_new, F_new, E_new
        energies.append(E)
        areas.append(map_area(disk, F))
        if decrease < tol:
            converged = True
            break
    gaps = np.diff(np.append(s, s[0] + problem.period))
    return PlateauState(
        s=s,
        F=F,
        energy=E,
        area=areas[-1],
        conformality_residual=conformality_residual(disk, F),
        iteration=it,
        converged=converged,
        energies=energies,
        areas=areas,
        gap_floor=delta,
        active_gaps=int(np.sum(gaps <= delta * (1 + 1e-9))),
    )


def solve(problem: BoundaryProblem, disk: DiskMesh | None = None, config: SolverConfig | None = None) -> PlateauState:
    """Minimize the Dirichlet energy over anchored monotone boundary parametrizations.

    With ``config.restarts > 1`` the first run uses ``config.init`` and later
    runs start from random parametrizations drawn from ``config.seed``; the
    lowest-energy state is returned and every run is logged in ``restart_log``.
    """
    disk = disk or build_disk()
    cfg = config or SolverConfig()
    if problem.dim < 2:
        raise PlateauError("boundary curve must live in R^n with n >= 2")
    rng = np.random.default_rng(cfg.seed)
    best, log = None, []
    for r in range(max(1, cfg.restarts)):
        run_cfg = cfg if r == 0 else SolverConfig(**{**cfg.__dict__, "init": "random"})
        state = _descend(problem, disk, run_cfg, rng)
        log.append({"restart": r, "init": run_cfg.init, "energy": state.energy, "iterations": state.iteration,
                    "converged": state.converged})
        if best is None or state.energy < best.energy:
            best = state
    best.restart_log = log
    return best


# --------------------------------------------------------------------------
# Courant-Lebesgue


@dataclass
class CourantLebesgueReport:
    radii: np.ndarray
    lengths: np.ndarray
    energy: float
    integral: float  # int L(r)^2 / r dr
    integral_bound: float  # 4 pi E
    worst_min_ratio: float  # max over a<b of min L^2 / (4 pi E / ln(b/a))

    @property
    def integral_margin(self) -> float:
        return 1.0 - self.integral / self.integral_bound

    @property
    def min_margin(self) -> float:
        return 1.0 - self.worst_min_ratio

    @property
    def margin(self) -> float:
        return min(self.integral_margin, self.min_margin)

    def holds(self, slack: float = 0.05) -> bool:
        return self.integral <= (1 + slack) * self.integral_bound and self.worst_min_ratio <= 1 + slack

    def as_dict(self) -> dict:
        return {
            "energy": self.energy,
            "integral": self.integral,
            "integral_bound": self.integral_bound,
            "integral_margin": self.integral_margin,
            "worst_min_ratio": self.worst_min_ratio,
            "min_margin": self.min_margin,
            "holds": self.holds(),
        }


def _interpolate(disk: DiskMesh, F, pts: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of vertex values at parameter points."""
    tri = disk.points[disk.faces]
    tree = cKDTree(tri.mean(axis=1))
    _, cand = tree.query(pts, k=min(12, len(disk.faces)))
    a = tri[cand, 0]
    inv = disk.flat_frames[cand]  # (p, k, 2, 2)
    lam12 = np.einsum("pkij,pkj->pki", inv, pts[:, None, :] - a)
    bary = np.concatenate([1 - lam12.sum(-1, keepdims=True), lam12], axis=-1)
    best = np.argmax(bary.min(axis=-1), axis=1)
    face = cand[np.arange(len(pts)), best]
    b = np.clip(bary[np.arange(len(pts)), best], 0, None)
    b /= b.sum(axis=1, keepdims=True)
    F = np.asarray(F, dtype=float)
    return np.einsum("pk,pkd->pd", b, F[disk.faces[face]])


def courant_lebesgue_check(disk: DiskMesh, F, p=(0.0, 0.0), n_radii: int = 64, n_samples: int = 512):
    """Image lengths L(r) of parameter circles about ``p`` against the energy bounds.

    Checks int_0^rho L^2/r dr <= 4 pi E and min_{a<=r<=b} L(r)^2 <= 4 pi E / ln(b/a)
    for every pair of sampled radii; rho = 1 - |p|.
    """
    p = np.asarray(p, dtype=float)
    rho = 1.0 - float(np.hypot(*p))
    if rho <= 0:
        raise PlateauError("p must lie inside the unit disk")
    radii = (np.arange(n_radii) + 0.5) * rho / n_radii
    ang = 2 * np.pi * np.arange(n_samples) / n_samples
    circ = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pts = (p[None, None, :] + radii[:, None, None] * circ[None]).reshape(-1, 2)
    vals = _interpolate(disk, F, pts).reshape(n_radii, n_samples, -1)
    lengths = np.linalg.norm(np.roll(vals, -1, axis=1) - vals, axis=2).sum(axis=1)
    E = energy(disk, F)
    bound = 4 * np.pi * E
    integral = float(np.sum(lengths**2 / radii) * (rho / n_radii))
    sq = lengths**2
    worst = 0.0
    for i in range(n_radii - 1):
        run_min = np.minimum.accumulate(sq[i:])[1:]
        ratio = run_min * np.log(radii[i + 1 :] / radii[i]) / bound
        worst = max(worst, float(ratio.max()))
    return CourantLebesgueReport(radii, lengths, E, integral, bound, worst)


# --------------------------------------------------------------------------
# problem files

_PROBLEM_KEYS = {"curve", "anchors", "n_boundary", "n_rings", "tol", "max_iters"}


def load_problem(obj: dict | str):
    """Parse a problem JSON document into (BoundaryProblem, DiskMesh, SolverConfig)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    extra = set(obj) - _PROBLEM_KEYS
    if extra:
        raise PlateauError(f"unknown keys in problem: {sorted(extra)}")
    if "curve" not in obj:
        raise PlateauError("problem needs a 'curve'")
    curve = obj["curve"]
    anchors = obj.get("anchors")
    if "points" in curve:
        if set(curve) - {"points"}:
            raise PlateauError(f"unknown keys in curve: {sorted(set(curve) - {'points'})}")
        pts = curve["points"]
        if pts and isinstance(pts[0][0], (list, tuple)):
            raise CurveRejected("boundary must be a single closed curve")
        problem = BoundaryProblem.from_points(pts, anchors)
    else:
        if set(curve) - {"x", "y", "z", "period"}:
            raise PlateauError(f"unknown keys in curve: {sorted(set(curve) - {'x', 'y', 'z', 'period'})}")
        problem = BoundaryProblem.from_parametric(
            curve["x"], curve["y"], curve.get("z", "0"), float(curve.get("period", 2 * math.pi)), anchors
        )
    disk = build_disk(int(obj.get("n_boundary", 128)), int(obj.get("n_rings", 24)))
    cfg = SolverConfig(tol=obj.get("tol"), max_iters=int(obj.get("max_iters", 500)))
    return problem, disk, cfg


def dump_problem(problem: BoundaryProblem, disk: DiskMesh, config: SolverConfig) -> dict:
    if problem.kind == "parametric":
        x, y, z = problem.curve.texts
        curve = {"x": x, "y": y, "z": z, "period": problem.period}
    else:
        curve = {"points": problem.curve.polyline.points.tolist()}
    out = {
        "curve": curve,
        "anchors": list(problem.anchors),
        "n_boundary": disk.n_boundary,
        "n_rings": disk.n_rings,
        "max_iters": config.max_iters,
    }
    if config.tol is not None:
        out["tol"] = config.tol
    return out
