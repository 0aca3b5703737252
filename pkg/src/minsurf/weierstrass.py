"""Minimal immersions from Weierstrass data (g, eta = phi3 dz).

Given the Gauss map ``g`` (meromorphic) and ``phi3`` the immersion is

    F(z) = Re  integral_{base}^{z} e^{i theta} (phi1, phi2, phi3) dz

with ``phi1 = (1/g - g) phi3 / 2`` and ``phi2 = i (1/g + g) phi3 / 2``.
Integrals are taken along straight segments (with circular detours around
punctures) by adaptive 16-point Gauss-Legendre quadrature.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, SpecialPoint
from .mesh import TriMesh, grid_faces, _ring_faces

__all__ = [
    "WeierstrassError",
    "InadmissibleData",
    "find_special_points",
    "PathError",
    "QuadratureError",
    "DomainSpec",
    "WeierstrassData",
    "BranchInfo",
    "phi",
    "immerse",
    "conformal_factor",
    "gauss_curvature",
    "gauss_curvature_printed_forms",
    "gauss_normal",
    "periods",
    "associate",
    "classify_branch",
    "check_admissible",
    "sample_grid",
    "tessellate",
    "catalog",
    "holomorphic_curve",
    "catenoid_neck_patch",
    "load_data",
    "dump_data",
    "edge_length_deviation",
    "metric_edge_lengths",
    "grid_conformality",
    "gauss_map_agreement",
    "CatenoidFit",
    "fit_catenoid",
]

GL_NODES = 16
QUAD_TOL = 1e-10
_MAX_DEPTH = 40
_LEG_X, _LEG_W = np.polynomial.legendre.leggauss(GL_NODES)


class WeierstrassError(ValueError):
    pass


class InadmissibleData(WeierstrassError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class PathError(WeierstrassError):
    pass


class QuadratureError(WeierstrassError):
    pass


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class DomainSpec:
    """Parameter domain and its sampling grid.

    ``shape`` is ``"rectangle"`` (``bounds = (a, b, c, d)`` for [a,b]x[c,d]),
    ``"annulus"`` (``bounds = (r0, r1)``, centered at 0) or ``"disk"``
    (``bounds = (radius,)``, centered at 0).  ``resolution`` counts grid
    cells: (x, y) for rectangles, (angular, radial) for the polar shapes.
    """

    shape: str
    bounds: tuple
    resolution: tuple = (64, 64)
    punctures: tuple = ()

    def __post_init__(self):
        bounds = tuple(float(b) for b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", tuple(int(n) for n in self.resolution))
        object.__setattr__(self, "punctures", tuple(complex(p) for p in self.punctures))
        need = {"rectangle": 4, "annulus": 2, "disk": 1}
        if self.shape not in need:
            raise WeierstrassError(f"unknown domain shape {self.shape!r}")
        if len(bounds) != need[self.shape]:
            raise WeierstrassError(f"{self.shape} needs {need[self.shape]} bounds")
        if self.shape == "rectangle" and not (bounds[0] < bounds[1] and bounds[2] < bounds[3]):
            raise WeierstrassError("rectangle bounds must satisfy a < b and c < d")
        if self.shape == "annulus" and not (0 < bounds[0] < bounds[1]):
            raise WeierstrassError("annulus needs 0 < r0 < r1")
        if self.shape == "disk" and bounds[0] <= 0:
            raise WeierstrassError("disk radius must be positive")
        if min(self.resolution) < 1:
            raise WeierstrassError("resolution must be positive")
        for p in self.punctures:
            if not self.contains(p, closed=True) and self.shape != "annulus":
                raise WeierstrassError(f"puncture {p} lies outside the domain")

    def contains(self, z: complex, closed: bool = False) -> bool:
        b = self.bounds
        if self.shape == "rectangle":
            x, y = z.real, z.imag
            if closed:
                return b[0] <= x <= b[1] and b[2] <= y <= b[3]
            return b[0] < x < b[1] and b[2] < y < b[3]
        r = abs(z)
        if self.shape == "annulus":
            return b[0] <= r <= b[1] if closed else b[0] < r < b[1]
        return r <= b[0] if closed else r < b[0]

    def with_resolution(self, resolution) -> "DomainSpec":
        return replace(self, resolution=tuple(resolution))


@dataclass(frozen=True)
class WeierstrassData:
    g: Expr
    phi3: Expr
    domain: DomainSpec
    base_point: complex = 0j
    theta: float = 0.0
    special_points: tuple = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "base_point", complex(self.base_point))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "special_points", tuple(self.special_points))
        if isinstance(self.g, ex.Const) and self.g.value == 0:
            raise WeierstrassError("g identically 0 describes a horizontal plane; use catalog('plane_disk')")
        if isinstance(self.g, ex.Div) and isinstance(self.g.right, ex.Const) and self.g.right.value == 0:
            raise WeierstrassError("g identically infinite describes a horizontal plane; use catalog('plane_disk')")
        for q in self.domain.punctures:
            if abs(q - self.base_point) < 1e-12:
                raise WeierstrassError("base point coincides with a puncture")
        locs = [p.location for p in self.special_points]
        if len(set(locs)) != len(locs):
            raise WeierstrassError("special points must be pairwise distinct")

    @property
    def rotation(self) -> complex:
        return complex(np.exp(1j * self.theta))


@dataclass(frozen=True)
class BranchInfo:
    status: str  # "immersed" | "branch" | "puncture"
    order: int  # branch order (0 when immersed)
    m: int  # |order of g|
    k: int  # order of phi3
    lambda_order: float | None = None  # measured vanishing order of the conformal factor
    rule: str = "k-2m"  # "k-2m", or "metric" when k < 2m and the order comes from lambda

    def as_dict(self):
        return {
            "status": self.status,
            "order": self.order,
            "m": self.m,
            "k": self.k,
            "lambda_order": self.lambda_order,
            "rule": self.rule,
        }


# --------------------------------------------------------------------------
# pointwise quantities


def _ev(e, z):
    return np.asarray(ex.evaluate(e, np.asarray(z, dtype=complex), strict=False), dtype=complex)


def _evd(e, z):
    return np.asarray(ex.eval_derivative(e, np.asarray(z, dtype=complex), strict=False), dtype=complex)


def _removable(fn, z, bad, radius=1e-3, n=32):
    """Replace non-finite values of holomorphic ``fn`` at ``z[bad]`` by circle means."""
    zb = np.asarray(z)[bad]
    ring = radius * np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)
    vals = fn(zb[..., None] + ring)
    mean = vals.mean(axis=-1)
    if not np.all(np.isfinite(mean)):
        raise ex.PoleHit(f"pole of the Weierstrass integrand near {zb[~np.isfinite(mean).all(axis=0)][:1]}")
    return mean


def _phi_raw(data: WeierstrassData, z):
    g = _ev(data.g, z)
    p3 = _ev(data.phi3, z)
    with np.errstate(all="ignore"):
        p1 = 0.5 * (p3 / g - g * p3)
        p2 = 0.5j * (p3 / g + g * p3)
    return np.stack([p1, p2, p3 + 0 * p1]) * data.rotation


def phi(data: WeierstrassData, z):
    """(phi1, phi2, phi3) * e^{i theta} at ``z``; stacked along the first axis.

    Removable singularities (zeros of g cancelled by phi3) are resolved by the
    mean-value property on a small circle.
    """
    z_arr = np.asarray(z, dtype=complex)
    vals = _phi_raw(data, z_arr)
    bad = ~np.all(np.isfinite(vals), axis=0)
    if np.any(bad):
        fix = _removable(lambda w: _phi_raw(data, w), z_arr, bad)
        vals[:, bad] = fix
    return vals


def conformal_factor(data: WeierstrassData, z):
    """lambda = ((1/|g| + |g|)/2) |phi3|; invariant under the associate angle."""
    z_arr = np.asarray(z, dtype=complex)
    g = np.abs(_ev(data.g, z_arr))
    p3 = np.abs(_ev(data.phi3, z_arr))
    with np.errstate(all="ignore"):
        lam = 0.5 * (1.0 / g + g) * p3
    bad = ~np.isfinite(lam)
    if np.any(bad):
        lam = np.array(lam, dtype=float)
        lam[bad] = np.linalg.norm(phi(data, z_arr[bad]), axis=0) / math.sqrt(2.0)
    return lam if np.ndim(lam) else float(lam)


def _phi3_over_g(data, z):
    return _ev(data.phi3, z) / _ev(data.g, z)


def _phi3_times_g(data, z):
    return _ev(data.phi3, z) * _ev(data.g, z)


def gauss_curvature(data: WeierstrassData, z):
    """Gauss curvature K = -[4|g'| |g| / (|phi3| (1 + |g|^2)^2)]^2 (always <= 0).

    Evaluated as -[4|g'| / (|phi3/g| (1+|g|^2)^2)]^2 where |g| <= 1 and in the
    equivalent 1/g form elsewhere, so zeros and poles of g cancelled by phi3
    stay finite.
    """
    z_arr = np.asarray(z, dtype=complex)
    with np.errstate(all="ignore"):
        g = _ev(data.g, z_arr)
        dg = np.abs(_evd(data.g, z_arr))
        ag = np.abs(g)
        low = ag <= 1
        f = np.where(low, _phi3_over_g(data, z_arr), _phi3_times_g(data, z_arr))
        bad = ~np.isfinite(f) | (f == 0)
        if np.any(bad):
            f = np.array(f, dtype=complex)
            f[bad] = np.where(
                low[bad],
                _removable(lambda w: _phi3_over_g(data, w), z_arr, bad),
                _removable(lambda w: _phi3_times_g(data, w), z_arr, bad),
            )
        af = np.abs(f)
        k_low = 4 * dg / (af * (1 + ag**2) ** 2)
        k_high = 4 * dg / ag**2 / (af * (1 + ag**-2.0) ** 2)
        root = np.where(low, k_low, k_high)
    if not np.all(np.isfinite(root)):
        raise ex.PoleHit("Gauss curvature undefined (branch point or pole)")
    K = -(root**2)
    return K if np.ndim(K) else float(K)


def gauss_curvature_printed_forms(data: WeierstrassData, z):
    """The two printed closed forms, with the (|g|^-2 + |g|^2)^2 denominator.

    They agree with each other, and with :func:`gauss_curvature` where |g| = 1.
    Kept so the discrepancy elsewhere can be measured.
    """
    z_arr = np.asarray(z, dtype=complex)
    g = ex.evaluate(data.g, z_arr)
    dg = ex.eval_derivative(data.g, z_arr)
    p3 = ex.evaluate(data.phi3, z_arr)
    ag = np.abs(g)
    d = (ag**-2.0 + ag**2) ** 2
    k1 = -((4 * np.abs(dg) / (np.abs(p3 * g) * d)) ** 2)
    k2 = -((4 / d * np.abs(dg / (g * p3))) ** 2)
    return k1, k2


def gauss_normal(data: WeierstrassData, z):
    """Unit normal from inverse stereographic projection of g; shape (3, ...)."""
    g = _ev(data.g, z)
    with np.errstate(all="ignore"):
        a2 = np.abs(g) ** 2
        n = np.stack([2 * g.real, 2 * g.imag, a2 - 1]) / (a2 + 1)
    inf = ~np.isfinite(a2)
    if np.any(inf):
        n[:, inf] = np.array([0.0, 0.0, 1.0])[:, None]
    return n


# --------------------------------------------------------------------------
# path integration


@dataclass
class _Pieces:
    """Straight segments (kind 0) and circular arcs (kind 1), parameter t in [0, 1]."""

    kind: np.ndarray
    a: np.ndarray  # segment start / arc center
    b: np.ndarray  # segment end
    radius: np.ndarray
    phi0: np.ndarray
    phi1: np.ndarray
    owner: np.ndarray  # index of the path each piece belongs to

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z.astype(int), z.astype(complex), z.astype(complex), z, z, z, z.astype(int))

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("kind", "a", "b", "radius", "phi0", "phi1", "owner")))

    def point(self, idx, t):
        k = self.kind[idx][:, None]
        a, b = self.a[idx][:, None], self.b[idx][:, None]
        r = self.radius[idx][:, None]
        p0, p1 = self.phi0[idx][:, None], self.phi1[idx][:, None]
        ang = p0 + t * (p1 - p0)
        arc = a + r * np.exp(1j * ang)
        dz_arc = 1j * r * np.exp(1j * ang) * (p1 - p0)
        lin = a + t * (b - a)
        dz_lin = (b - a) * np.ones_like(t)
        return np.where(k == 1, arc, lin), np.where(k == 1, dz_arc, dz_lin)


def _gl(data, pieces, idx, ta, tb):
    half = (tb - ta) / 2
    t = (ta + tb)[:, None] / 2 + half[:, None] * _LEG_X[None, :]
    z, dz = pieces.point(idx, t)
    vals = phi(data, z) * dz[None]
    return (vals * _LEG_W).sum(axis=-1) * half[None, :], np.abs(vals).max(axis=(0, 2))


def _integrate(data: WeierstrassData, pieces: _Pieces, n_paths: int, tol: float = QUAD_TOL):
    """Sum of adaptive Gauss-Legendre integrals of phi dz over the pieces of each path."""
    total = np.zeros((3, n_paths), dtype=complex)
    if not len(pieces.kind):
        return total
    idx = np.arange(len(pieces.kind))
    ta = np.zeros(len(idx))
    tb = np.ones(len(idx))
    whole, _ = _gl(data, pieces, idx, ta, tb)
    for _depth in range(_MAX_DEPTH):
        mid = (ta + tb) / 2
        left, fmax_l = _gl(data, pieces, idx, ta, mid)
        right, fmax_r = _gl(data, pieces, idx, mid, tb)
        est = left + right
        err = np.linalg.norm(est - whole, axis=0)
        size = np.linalg.norm(est, axis=0)
        _, dz = pieces.point(idx, mid[:, None])
        floor = 1e-15 * np.maximum(fmax_l, fmax_r) * (tb - ta)
        done = err <= tol * size + floor
        np.add.at(total, (slice(None), pieces.owner[idx[done]]), est[:, done])
        keep = ~done
        if not keep.any():
            return total
        idx = np.concatenate([idx[keep], idx[keep]])
        new_ta = np.concatenate([ta[keep], mid[keep]])
        new_tb = np.concatenate([mid[keep], tb[keep]])
        whole = np.concatenate([left[:, keep], right[:, keep]], axis=1)
        ta, tb = new_ta, new_tb
    raise QuadratureError("adaptive quadrature did not converge (integrand singular on the path?)")


def _segment_pieces(z0, z1, punctures, owner: int) -> _Pieces:
    """Straight segment with circular detours around nearby punctures."""
    z0, z1 = complex(z0), complex(z1)
    d = z1 - z0
    L = abs(d)
    detours = []
    for q in punctures:
        rho = 0.5 * min(abs(z0 - q), abs(z1 - q))
        if rho < 1e-12:
            raise PathError(f"puncture {q} too close to a path endpoint")
        if L == 0:
            continue
        t_proj = ((q - z0) * d.conjugate()).real / L**2
        t_c = min(max(t_proj, 0.0), 1.0)
        if abs(z0 + t_c * d - q) >= rho:
            continue
        off = abs(z0 + t_proj * d - q)
        half = math.sqrt(max(rho**2 - off**2, 0.0)) / L
        detours.append((t_proj - half, t_proj + half, q, rho))
    detours.sort()
    for (s0, e0, *_), (s1, e1, *_) in zip(detours, detours[1:]):
        if s1 <= e0:
            raise PathError("detour circles around neighbouring punctures overlap")
    kind, a, b, rad, p0, p1 = [], [], [], [], [], []
    cur = z0
    for t_in, t_out, q, rho in detours:
        entry, exit_ = z0 + t_in * d, z0 + t_out * d
        kind.append(0); a.append(cur); b.append(entry); rad.append(0.0); p0.append(0.0); p1.append(0.0)
        ang0 = math.atan2((entry - q).imag, (entry - q).real)
        ang1 = math.atan2((exit_ - q).imag, (exit_ - q).real)
        sweep = (ang1 - ang0 + math.pi) % (2 * math.pi) - math.pi
        if abs(abs(sweep) - math.pi) < 1e-12:
            sweep = math.pi
        kind.append(1); a.append(q); b.append(exit_); rad.append(rho); p0.append(ang0); p1.append(ang0 + sweep)
        cur = exit_
    kind.append(0); a.append(cur); b.append(z1); rad.append(0.0); p0.append(0.0); p1.append(0.0)
    n = len(kind)
    return _Pieces(np.array(kind), np.array(a, dtype=complex), np.array(b, dtype=complex),
                   np.array(rad), np.array(p0), np.array(p1), np.full(n, owner))


def _segments_pieces(z0s, z1s, punctures) -> _Pieces:
    """Vectorized straight segments; only those passing near punctures get detours."""
    z0s = np.asarray(z0s, dtype=complex).ravel()
    z1s = np.asarray(z1s, dtype=complex).ravel()
    n = len(z0s)
    near = np.zeros(n, dtype=bool)
    if punctures:
        d = z1s - z0s
        L2 = np.abs(d) ** 2
        for q in punctures:
            rho = 0.5 * np.minimum(np.abs(z0s - q), np.abs(z1s - q))
            with np.errstate(all="ignore"):
                t = np.clip(np.where(L2 > 0, ((q - z0s) * d.conj()).real / L2, 0.0), 0, 1)
            near |= np.abs(z0s + t * d - q) < rho
            near |= rho < 1e-12
    plain = ~near
    zeros = np.zeros(int(plain.sum()))
    parts = [
        _Pieces(np.zeros(len(zeros), dtype=int), z0s[plain], z1s[plain], zeros, zeros, zeros, np.flatnonzero(plain))
    ]
    for k in np.flatnonzero(near):
        parts.append(_segment_pieces(z0s[k], z1s[k], punctures, int(k)))
    return _Pieces.concat(parts)


def _punctures(data: WeierstrassData):
    return tuple(data.domain.punctures)


def immerse(data: WeierstrassData, z) -> np.ndarray:
    """F(z) in R^3, integrating from the base point along a puncture-avoiding path."""
    scalar = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    pieces = _segments_pieces(np.full(zs.shape, data.base_point), zs, _punctures(data))
    F = _integrate(data, pieces, len(zs)).real.T
    return F[0] if scalar else F


def periods(data: WeierstrassData, loop: Sequence[complex]) -> np.ndarray:
    """Real periods Re of the loop integral of phi dz around a closed polyline.

    ``loop`` must repeat its first point at the end.
    """
    pts = np.asarray(loop, dtype=complex).ravel()
    if len(pts) < 4 or pts[0] != pts[-1]:
        raise PathError("loop must be a closed polyline (repeat the first point at the end)")
    a, b = pts[:-1], pts[1:]
    for q in _punctures(data):
        d = b - a
        t = np.clip(((q - a) * d.conj()).real / np.abs(d) ** 2, 0, 1)
        if np.min(np.abs(a + t * d - q)) < 1e-12:
            raise PathError(f"puncture {q} lies on the loop")
    n = len(a)
    zero = np.zeros(n)
    pieces = _Pieces(np.zeros(n, dtype=int), a, b, zero, zero, zero, np.zeros(n, dtype=int))
    return _integrate(data, pieces, 1)[:, 0].real


def associate(data: WeierstrassData, dtheta: float) -> WeierstrassData:
    """Associate-family member: eta -> e^{i dtheta} eta."""
    if dtheta == 0:
        return data
    return replace(data, theta=data.theta + dtheta)


# --------------------------------------------------------------------------
# branch points


def _lambda_order(data, p, radii=None):
    if radii is None:
        radii = np.logspace(-2, -5, 7)
    ang = 2 * np.pi * (np.arange(8) + 0.3731) / 8
    pts = p + radii[:, None] * np.exp(1j * ang)[None, :]
    lam = conformal_factor(data, pts)
    return float(np.polyfit(np.log(radii), np.log(lam).mean(axis=1), 1)[0])


def classify_branch(data: WeierstrassData, p: SpecialPoint | complex) -> BranchInfo:
    """Immersed / branch-point classification at a declared special point.

    With m = |order of g| and k = order of phi3 at p, for k >= 2m: immersed
    iff k = 2m, otherwise a branch point of order k - 2m.  k < m means phi
    itself has a pole and is rejected.  For m <= k < 2m (e.g. Enneper's
    g = z, phi3 = z at 0) the k - 2m rule does not apply; there lambda
    vanishes to order k - m, which decides the status (rule "metric").  The
    measured vanishing order of lambda is always reported alongside.
    """
    loc = p.location if isinstance(p, SpecialPoint) else complex(p)
    if any(abs(loc - q) < 1e-12 for q in data.domain.punctures):
        return BranchInfo("puncture", 0, 0, 0, None)
    m = abs(ex.local_order(data.g, loc))
    k = ex.local_order(data.phi3, loc)
    if k < m:
        raise InadmissibleData(
            f"inadmissible data at {loc}: phi3 order {k} < {m} = |order of g|; F has a pole there", loc
        )
    try:
        lam_order = round(_lambda_order(data, loc), 3)
    except (ex.ExprError, ValueError, FloatingPointError):
        lam_order = None
    if k < 2 * m:
        return BranchInfo("immersed" if k == m else "branch", k - m, m, k, lam_order, rule="metric")
    if k == 2 * m:
        return BranchInfo("immersed", 0, m, k, lam_order)
    return BranchInfo("branch", k - 2 * m, m, k, lam_order)


def _newton_roots(f: ex.Expr, starts: np.ndarray, iters: int = 60) -> np.ndarray:
    """Roots of f reached from ``starts`` by Schroeder's iteration (quadratic at multiple roots)."""
    d1 = ex.derivative(f)
    d2 = ex.derivative(d1)
    z = starts.astype(complex)
    done = np.zeros(len(z), dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(iters):
            a = ex.evaluate(f, z, strict=False)
            b = ex.evaluate(d1, z, strict=False)
            c = ex.evaluate(d2, z, strict=False)
            step = a * b / (b * b - a * c)
            step = np.where(a == 0, 0, step)
            ok = np.isfinite(step)
            z = np.where(ok & ~done, z - step, z)
            done |= ok & (np.abs(step) <= 1e-13 * (1 + np.abs(z)))
            done |= ~ok
            if done.all():
                break
    return z[done & np.isfinite(z)]


def find_special_points(data: WeierstrassData, tol: float = 1e-7) -> list[complex]:
    """Zeros and poles of g and zeros of phi3 in the closed domain, punctures excluded.

    Iterations start from grid nodes where |f| is a local minimum over the
    grid graph; converged points are kept when ``local_order`` confirms them.
    """
    Z, faces, _ = _grid(data.domain)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    scale = 1.0 + float(np.max(np.abs(Z)))
    found: list[complex] = []
    g_inv = ex.parse(f"1/({ex.format_expr(data.g)})")
    for f in (data.g, g_inv, data.phi3):
        with np.errstate(all="ignore"):
            mag = np.abs(ex.evaluate(f, Z, strict=False))
        mag = np.where(np.isfinite(mag), mag, 0.0)
        nb_min = np.full(len(Z), np.inf)
        np.minimum.at(nb_min, edges[:, 0], mag[edges[:, 1]])
        np.minimum.at(nb_min, edges[:, 1], mag[edges[:, 0]])
        starts = np.flatnonzero(mag <= nb_min)
        starts = starts[np.argsort(mag[starts], kind="stable")][:64]
        for z in _newton_roots(f, Z[starts]):
            z = complex(round(z.real, 10), round(z.imag, 10)) + 0j
            if not data.domain.contains(z, closed=True):
                continue
            if any(abs(z - q) < tol * scale for q in list(data.domain.punctures) + found):
                continue
            try:
                if ex.local_order(f, z) <= 0:
                    continue
            except ex.ExprError:
                pass  # not meromorphic there: keep it so classification reports the problem
            found.append(z)
    return sorted(found, key=lambda z: (z.real, z.imag))


def check_admissible(data: WeierstrassData, detect: bool = True) -> list[tuple[complex, BranchInfo]]:
    """Classify declared (and, with ``detect``, automatically found) special points.

    Raises :class:`InadmissibleData` naming the first offending point.
    """
    points = [sp.location for sp in data.special_points]
    if detect:
        scale = 1.0 + max((abs(p) for p in points), default=0.0)
        points += [z for z in find_special_points(data) if all(abs(z - p) > 1e-7 * scale for p in points)]
    out = []
    for z in points:
        sp = next((s for s in data.special_points if s.location == z), SpecialPoint(z))
        try:
            out.append((z, classify_branch(data, sp)))
        except ex.NotMeromorphic as exc:
            raise InadmissibleData(f"inadmissible data at {z}: {exc}", z) from None
    return out


# --------------------------------------------------------------------------
# tessellation


def _perturb_off(z: np.ndarray, punctures) -> np.ndarray:
    z = z.copy()
    for q in punctures:
        close = np.abs(z - q) < 1e-6
        z[close] = q + 1e-6
    return z


def _grid(domain: DomainSpec):
    """Grid nodes, faces and a layout tag ``(kind, n_u, n_v)``."""
    nu, nv = domain.resolution
    b = domain.bounds
    if domain.shape == "rectangle":
        x = np.linspace(b[0], b[1], nu + 1)
        y = np.linspace(b[2], b[3], nv + 1)
        Z = (x[:, None] + 1j * y[None, :]).ravel()
        faces = grid_faces(nu + 1, nv + 1)
        return Z, faces, ("rect", nu + 1, nv + 1)
    ang = 2 * np.pi * np.arange(nu) / nu
    if domain.shape == "annulus":
        r = np.geomspace(b[0], b[1], nv + 1)
        Z = (np.exp(1j * ang)[:, None] * r[None, :]).ravel()
        # (angle, r) ordering is clockwise in the z-plane
        faces = grid_faces(nu, nv + 1, periodic_u=True)[:, ::-1]
        return Z, faces, ("polar", nu, nv + 1)
    # disk: center node, then rings 1..nv with nu nodes each
    r = b[0] * np.arange(1, nv + 1) / nv
    Z = np.concatenate([[0j], (r[:, None] * np.exp(1j * ang)[None, :]).ravel()])
    faces = _ring_faces(nu, nv)
    return Z, faces, ("disk", nu, nv)


def sample_grid(data: WeierstrassData):
    """Parameter grid nodes ``Z`` (flat) and their images ``F`` (n, 3), plus faces."""
    Z, faces, layout = _grid(data.domain)
    Z = _perturb_off(Z, data.domain.punctures)
    punct = _punctures(data)
    kind = layout[0]
    F = np.zeros((len(Z), 3))
    if kind == "rect":
        nx, ny = layout[1], layout[2]
        G = Z.reshape(nx, ny)
        i0, j0 = np.unravel_index(np.argmin(np.abs(Z - data.base_point)), (nx, ny))
        # row through the root, then columns
        row = G[:, j0]
        col_a, col_b = G[:, :-1].ravel(), G[:, 1:].ravel()
        seg_a = np.concatenate([[data.base_point], row[:-1], col_a])
        seg_b = np.concatenate([[G[i0, j0]], row[1:], col_b])
        I = _integrate(data, _segments_pieces(seg_a, seg_b, punct), len(seg_a)).real
        root = I[:, 0]
        I_row = I[:, 1 : nx]
        I_col = I[:, nx:].reshape(3, nx, ny - 1)
        Frow = np.zeros((3, nx))
        Frow[:, i0 + 1 :] = np.cumsum(I_row[:, i0:], axis=1)
        Frow[:, :i0] = -np.cumsum(I_row[:, :i0][:, ::-1], axis=1)[:, ::-1]
        Fg = np.zeros((3, nx, ny))
        Fg[:, :, j0 + 1 :] = np.cumsum(I_col[:, :, j0:], axis=2)
        Fg[:, :, :j0] = -np.cumsum(I_col[:, :, :j0][:, :, ::-1], axis=2)[:, :, ::-1]
        Fg += (Frow + root[:, None])[:, :, None]
        F = Fg.reshape(3, -1).T
        return Z, F, faces
    if kind == "polar":
        nt, nr = layout[1], layout[2]
        G = Z.reshape(nt, nr)
        k0, j0 = np.unravel_index(np.argmin(np.abs(Z - data.base_point)), (nt, nr))
        ring = np.roll(G[:, j0], -k0)  # ring starting at the root angle
        half = nt // 2
        fwd_a, fwd_b = ring[:half], ring[1 : half + 1]
        # backward chain: root -> ring[nt-1] -> ring[nt-2] ... -> ring[half+1]
        back_nodes = [0] + list(range(nt - 1, half, -1))
        bwd_a = ring[back_nodes[:-1]]
        bwd_b = ring[back_nodes[1:]]
        rad_a, rad_b = G[:, :-1].ravel(), G[:, 1:].ravel()
        seg_a = np.concatenate([[data.base_point], fwd_a, bwd_a, rad_a])
        seg_b = np.concatenate([[G[k0, j0]], fwd_b, bwd_b, rad_b])
        I = _integrate(data, _segments_pieces(seg_a, seg_b, punct), len(seg_a)).real
        root = I[:, 0]
        nf, nb = len(fwd_a), len(bwd_a)
        Fring_rolled = np.zeros((3, nt))
        Fring_rolled[:, 1 : half + 1] = np.cumsum(I[:, 1 : 1 + nf], axis=1)
        Fring_rolled[:, back_nodes[1:]] = np.cumsum(I[:, 1 + nf : 1 + nf + nb], axis=1)
        Fring = np.roll(Fring_rolled, k0, axis=1) + root[:, None]
        I_rad = I[:, 1 + nf + nb :].reshape(3, nt, nr - 1)
        Fg = np.zeros((3, nt, nr))
        Fg[:, :, j0 + 1 :] = np.cumsum(I_rad[:, :, j0:], axis=2)
        Fg[:, :, :j0] = -np.cumsum(I_rad[:, :, :j0][:, :, ::-1], axis=2)[:, :, ::-1]
        Fg += Fring[:, :, None]
        return Z, Fg.reshape(3, -1).T, faces
    # disk: integrate base -> center, then rays outward
    nt, nrings = layout[1], layout[2]
    rings = Z[1:].reshape(nrings, nt)
    ray_a = np.concatenate([np.zeros((1, nt), dtype=complex), rings[:-1]]).T.ravel()
    ray_b = rings.T.ravel()
    seg_a = np.concatenate([[data.base_point], ray_a])
    seg_b = np.concatenate([[Z[0]], ray_b])
    I = _integrate(data, _segments_pieces(seg_a, seg_b, punct), len(seg_a)).real
    center = I[:, 0]
    rays = np.cumsum(I[:, 1:].reshape(3, nt, nrings), axis=2) + center[:, None, None]
    F = np.concatenate([center[None, :], rays.transpose(2, 1, 0).reshape(-1, 3)])
    return Z, F, faces


def tessellate(data: WeierstrassData, resolution=None) -> TriMesh:
    """Triangle mesh of F over the domain grid with lambda, K and normal attributes."""
    if resolution is not None:
        data = replace(data, domain=data.domain.with_resolution(resolution))
    check_admissible(data)
    Z, F, faces = sample_grid(data)
    attrs = {
        "lambda": conformal_factor(data, Z),
        "K": gauss_curvature(data, Z),
        "normal": gauss_normal(data, Z).T,
    }
    mesh = TriMesh(F, faces, attrs, check=False)
    return mesh


# --------------------------------------------------------------------------
# associate-family diagnostics


def edge_length_deviation(a: TriMesh, b: TriMesh) -> float:
    """Max relative difference of corresponding edge lengths (same connectivity)."""
    if a.faces.shape != b.faces.shape or np.any(a.faces != b.faces):
        raise WeierstrassError("meshes must share connectivity")
    e = a.edges
    la = np.linalg.norm(a.vertices[e[:, 0]] - a.vertices[e[:, 1]], axis=1)
    lb = np.linalg.norm(b.vertices[e[:, 0]] - b.vertices[e[:, 1]], axis=1)
    return float(np.max(np.abs(la - lb) / la))


def metric_edge_lengths(data: WeierstrassData, resolution=None) -> np.ndarray:
    """Lengths of the images of the tessellation's grid edges, integrated along each edge.

    These are edge lengths in the pullback metric, ordered like ``tessellate(...).edges``.
    Unlike chord lengths they are invariant under the associate family.
    """
    if resolution is not None:
        data = replace(data, domain=data.domain.with_resolution(resolution))
    Z, faces, _ = _grid(data.domain)
    Z = _perturb_off(Z, data.domain.punctures)
    e = TriMesh(np.zeros((len(Z), 3)), faces, check=False).edges
    za, zb = Z[e[:, 0]], Z[e[:, 1]]
    dz = zb - za
    t = 0.5 * (_LEG_X + 1.0)
    pts = za[:, None] + dz[:, None] * t[None, :]
    speed = np.linalg.norm((phi(data, pts) * dz[None, :, None]).real, axis=0)
    return 0.5 * speed @ _LEG_W


def grid_conformality(data: WeierstrassData, resolution=None) -> np.ndarray:
    """Per-cell conformality defect of the sampled immersion, shape (cells, 2).

    Columns are (|F_u|^2 - |F_v|^2, F_u . F_v) divided by (|F_u|^2 + |F_v|^2)/2,
    with (u, v) conformal cell coordinates (x, y on rectangles, angle and
    log-radius on annuli and disks) and derivatives from cell-edge averages.
    On disks, cells inside r < 0.1 R are dropped: in log-radius they stay the
    same shape under refinement.
    """
    if resolution is not None:
        data = replace(data, domain=data.domain.with_resolution(resolution))
    Z, F, _ = sample_grid(data)
    kind, nu, nv = _grid(data.domain)[2]
    if kind == "rect":
        G = F.reshape(nu, nv, 3)
        W = Z.reshape(nu, nv)
        U, V = W.real, W.imag
    else:
        if kind == "disk":
            G = F[1:].reshape(nv, nu, 3).transpose(1, 0, 2)
            W = Z[1:].reshape(nv, nu).T
        else:
            G = F.reshape(nu, nv, 3)
            W = Z.reshape(nu, nv)
        G = np.concatenate([G, G[:1]], axis=0)  # close the periodic angle
        W = np.concatenate([W, W[:1]], axis=0)
        U = np.unwrap(np.angle(W), axis=0)
        V = np.log(np.abs(W))
    du = U[1:, :-1] - U[:-1, :-1]
    dv = V[:-1, 1:] - V[:-1, :-1]
    Fu = 0.5 * (G[1:, :-1] - G[:-1, :-1] + G[1:, 1:] - G[:-1, 1:]) / du[..., None]
    Fv = 0.5 * (G[:-1, 1:] - G[:-1, :-1] + G[1:, 1:] - G[1:, :-1]) / dv[..., None]
    a = np.einsum("...i,...i", Fu, Fu)
    b = np.einsum("...i,...i", Fv, Fv)
    c = np.einsum("...i,...i", Fu, Fv)
    scale = 0.5 * (a + b)
    out = np.stack([(a - b) / scale, c / scale], axis=-1)
    if kind == "disk":
        out = out[:, V[0, :-1] >= np.log(0.1 * data.domain.bounds[0])]
    return out.reshape(-1, 2)


def gauss_map_agreement(mesh: TriMesh) -> float:
    """Max angle (radians) between the ``normal`` attribute and area-weighted face normals."""
    V = mesh.vertices
    f = mesh.faces
    fn = np.cross(V[f[:, 1]] - V[f[:, 0]], V[f[:, 2]] - V[f[:, 0]])
    vn = np.zeros_like(V)
    for k in range(3):
        np.add.at(vn, f[:, k], fn)
    vn /= np.linalg.norm(vn, axis=1)[:, None]
    interior = ~mesh.boundary_mask
    dots = np.einsum("ij,ij->i", vn, mesh.attributes["normal"])[interior]
    return float(np.max(np.arccos(np.clip(dots, -1, 1))))


@dataclass(frozen=True)
class CatenoidFit:
    center: tuple  # axis position (x, y)
    c: float  # neck height
    a: float  # neck radius
    residual: float  # max |rho^2 / (a^2 cosh^2((z - c)/a)) - 1|


def fit_catenoid(points) -> CatenoidFit:
    """Least-squares fit of a vertical catenoid rho = a cosh((z - c)/a)."""
    from scipy.optimize import least_squares

    P = np.asarray(points, dtype=float)
    x0 = [P[:, 0].mean(), P[:, 1].mean(), P[np.argmin(np.hypot(P[:, 0] - P[:, 0].mean(), P[:, 1] - P[:, 1].mean())), 2], 1.0]

    def res(q):
        cx, cy, c, a = q
        rho = np.hypot(P[:, 0] - cx, P[:, 1] - cy)
        return rho - a * np.cosh((P[:, 2] - c) / a)

    sol = least_squares(res, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    cx, cy, c, a = sol.x
    rho2 = (P[:, 0] - cx) ** 2 + (P[:, 1] - cy) ** 2
    rel = np.max(np.abs(rho2 / (a * np.cosh((P[:, 2] - c) / a)) ** 2 - 1))
    return CatenoidFit((float(cx), float(cy)), float(c), float(a), float(rel))


# --------------------------------------------------------------------------
# catalog


def holomorphic_curve(n: int, radius: float | None = None, resolution=(128, 64)) -> TriMesh:
    """The complex curve w = z^n in C^2 = R^4 over the disk |z| < radius."""
    if n < 1:
        raise WeierstrassError("holomorphic_curve needs n >= 1")
    if radius is None:
        radius = 4.0 if n <= 2 else 2.5
    dom = DomainSpec("disk", (radius,), resolution)
    Z, faces, _ = _grid(dom)
    W = Z**n
    V = np.column_stack([Z.real, Z.imag, W.real, W.imag])
    return TriMesh(V, faces)


def catenoid_neck_patch(radius: float = 2.5, n_boundary: int = 128, n_rings: int = 64) -> TriMesh:
    """Simply connected catenoid piece around the neck point F(1) = 0.

    The parameter domain is the disk |w| <= radius in w = log z, meshed with
    concentric rings, so straight rays from the center follow the neck circle
    and the meridian through the center exactly.  ``radius`` must stay below
    pi for the piece not to wrap around the neck.
    """
    if not 0 < radius < math.pi:
        raise WeierstrassError("catenoid_neck_patch radius must lie in (0, pi)")
    from .mesh import _ring_faces, ring_disk_points

    data = catalog("catenoid")
    xy = radius * ring_disk_points(n_boundary, n_rings)
    Z = np.exp(xy[:, 0] + 1j * xy[:, 1])
    attrs = {
        "lambda": conformal_factor(data, Z),
        "K": gauss_curvature(data, Z),
        "normal": gauss_normal(data, Z).T,
    }
    return TriMesh(immerse(data, Z), _ring_faces(n_boundary, n_rings), attrs, check=False)


_NAMED = re.compile(r"^\s*holomorphic_curve\s*\(\s*(\d+)\s*\)\s*$")


def catalog(name: str, **kw):
    """Named surfaces: WeierstrassData for catenoid/helicoid/enneper, meshes otherwise.

    Keyword overrides: ``domain``, ``resolution``, ``theta``, ``base_point`` for the
    Weierstrass entries; ``n``, ``radius``, ``resolution`` for holomorphic_curve;
    ``n_boundary``, ``n_rings`` (or ``resolution`` as that pair) for plane_disk
    and catenoid_neck_patch, which also takes ``radius``.
    """
    m = _NAMED.match(name)
    if m:
        kw.setdefault("n", int(m.group(1)))
        name = "holomorphic_curve"
    if name in ("plane_disk", "catenoid_neck_patch") and "resolution" in kw:
        kw["n_boundary"], kw["n_rings"] = (int(n) for n in kw.pop("resolution"))
    if name == "plane_disk":
        from .mesh import flat_disk

        return flat_disk(kw.get("n_boundary", 192), kw.get("n_rings", 16))
    if name == "catenoid_neck_patch":
        args = {k: kw[k] for k in ("radius", "n_boundary", "n_rings") if k in kw}
        return catenoid_neck_patch(**args)
    if name == "holomorphic_curve":
        args = {k: kw[k] for k in ("radius", "resolution") if k in kw}
        return holomorphic_curve(int(kw.get("n", 2)), **args)
    specs = {
        "catenoid": ("z", "1/z", DomainSpec("annulus", (math.exp(-3), math.exp(3)), (96, 48), (0j,)), 1 + 0j),
        "helicoid": ("exp(i*z)", "1", DomainSpec("rectangle", (-math.pi, math.pi, -1.5, 1.5), (96, 48)), 0j),
        "enneper": ("z", "z", DomainSpec("disk", (1.0,), (64, 64)), 0j),
    }
    if name not in specs:
        raise WeierstrassError(
            f"unknown catalog name {name!r}; choose from catenoid, helicoid, enneper, plane_disk, catenoid_neck_patch, holomorphic_curve(n)"
        )
    g, p3, dom, base = specs[name]
    dom = kw.get("domain", dom)
    if "resolution" in kw:
        dom = dom.with_resolution(kw["resolution"])
    return WeierstrassData(
        ex.parse(g),
        ex.parse(p3),
        dom,
        base_point=kw.get("base_point", base),
        theta=kw.get("theta", 0.0),
        name=name,
    )


# --------------------------------------------------------------------------
# JSON


_DATA_KEYS = {"g", "phi3", "domain", "punctures", "base", "theta", "special_points", "name"}
_DOMAIN_KEYS = {"shape", "bounds", "resolution"}


def load_data(obj: dict | str) -> WeierstrassData:
    """Parse the Weierstrass JSON document (dict or text); unknown keys are rejected.

    Special points are ``[x, y]``, ``[x, y, kind]`` or ``{"location": [x, y], "kind": kind}``.
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict):
        raise WeierstrassError("Weierstrass data must be a JSON object")
    extra = set(obj) - _DATA_KEYS
    if extra:
        raise WeierstrassError(f"unknown keys in Weierstrass data: {sorted(extra)}")
    for key in ("g", "phi3", "domain"):
        if key not in obj:
            raise WeierstrassError(f"missing key {key!r}")
    dom = obj["domain"]
    extra = set(dom) - _DOMAIN_KEYS
    if extra:
        raise WeierstrassError(f"unknown keys in domain: {sorted(extra)}")
    try:
        punct = tuple(complex(p[0], p[1]) for p in obj.get("punctures", []))
        domain = DomainSpec(dom["shape"], tuple(dom["bounds"]), tuple(dom.get("resolution", (64, 64))), punct)
        sps = []
        for sp in obj.get("special_points", []):
            if isinstance(sp, dict):
                if set(sp) - {"location", "kind"}:
                    raise WeierstrassError(f"unknown keys in special point: {sorted(set(sp) - {'location', 'kind'})}")
                loc, kind = sp["location"], sp.get("kind", "unknown")
            else:
                loc, kind = sp[:2], (sp[2] if len(sp) > 2 else "unknown")
            sps.append(SpecialPoint(complex(loc[0], loc[1]), kind))
        base = obj.get("base", [0.0, 0.0])
        base_point = complex(base[0], base[1])
        theta = float(obj.get("theta", 0.0))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        if isinstance(exc, WeierstrassError):
            raise
        raise WeierstrassError(f"malformed Weierstrass data: {exc!r}") from None
    return WeierstrassData(
        ex.parse(obj["g"]),
        ex.parse(obj["phi3"]),
        domain,
        base_point=base_point,
        theta=theta,
        special_points=tuple(sps),
        name=obj.get("name", ""),
    )


def dump_data(data: WeierstrassData) -> dict:
    d = data.domain
    return {
        "g": ex.format_expr(data.g),
        "phi3": ex.format_expr(data.phi3),
        "domain": {"shape": d.shape, "bounds": list(d.bounds), "resolution": list(d.resolution)},
        "punctures": [[p.real, p.imag] for p in d.punctures],
        "base": [data.base_point.real, data.base_point.imag],
        "theta": data.theta,
        "special_points": [[s.location.real, s.location.imag, s.declared_kind] for s in data.special_points],
        "name": data.name,
    }
