"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines.
"""

import math
import time

import numpy as np
import pytest

from minsurf import expr as ex
from minsurf import mesh as M
from minsurf import plateau as P
from minsurf import verify as V
from minsurf import weierstrass as W


def report(n, ok, msg):
    print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
    assert ok, msg


def catenoid_piece(r, res):
    dom = W.DomainSpec("annulus", (math.exp(-r), math.exp(r)), res, (0j,))
    return W.tessellate(W.catalog("catenoid", domain=dom))


def nearest(mesh, p=(0.0, 0.0, 0.0)):
    return int(np.argmin(np.linalg.norm(mesh.vertices - np.asarray(p), axis=1)))


def test_01_catenoid_total_curvature():
    t0 = time.perf_counter()
    mesh = catenoid_piece(3, (192, 96))
    tc = M.angle_defect_curvature(mesh).total_curvature
    dt = time.perf_counter() - t0
    rel = abs(tc - 4 * math.pi) / (4 * math.pi)
    report(1, rel < 0.03 and dt < 10, f"TC/4pi={tc / (4 * math.pi):.4f} rel={rel:.2e} time={dt:.1f}s")


def test_02_catenoid_density_at_infinity():
    t0 = time.perf_counter()
    mesh = catenoid_piece(5, (128, 160))
    prof = V.density_profile(mesh, (0, 0, 0), np.linspace(0.5, 20.0, 40))  # neck radius 1
    dt = time.perf_counter() - t0
    ok = prof.monotone_violation <= 1e-3 and prof.theta[-1] >= 1.9 and dt < 30
    report(2, ok, f"violation={prof.monotone_violation:.2e} theta(20)={prof.theta[-1]:.4f} time={dt:.1f}s")


def test_03_extended_monotonicity():
    t0 = time.perf_counter()
    disk = M.flat_disk()
    pd = V.extended_density_profile(disk, (0, 0, 0), np.geomspace(0.05, 10.0, 40))
    cat = catenoid_piece(2, (96, 48))
    p = V.resolve_center(cat, "neck")
    diam = float(np.ptp(cat.vertices, axis=0).max())
    pc = V.extended_density_profile(cat, p, np.geomspace(0.1, 10 * diam, 40))
    dt = time.perf_counter() - t0
    flat_dev = float(np.abs(pd.theta - 1).max())
    ok = pd.monotone_violation <= 1e-3 and flat_dev <= 1e-3 and pc.monotone_violation <= 1e-3 and dt < 60
    report(3, ok, f"disk violation={pd.monotone_violation:.2e} |theta-1|max={flat_dev:.2e} "
                  f"catenoid violation={pc.monotone_violation:.2e} time={dt:.1f}s")


def test_04_plateau_circle():
    t0 = time.perf_counter()
    disk = P.build_disk(128, 24)
    st = P.solve(P.BoundaryProblem.circle(), disk)
    cl = P.courant_lebesgue_check(disk, st.F)
    hull = M.convex_hull_violation(disk.mesh(st.F))
    dt = time.perf_counter() - t0
    area_rel = abs(st.area - math.pi) / math.pi
    gap_rel = st.gap / st.energy
    ok = (area_rel < 0.01 and gap_rel < 0.01 and hull <= 1e-3 and cl.holds()
          and cl.integral_margin >= 0.05 and cl.min_margin >= 0.05 and dt < 60)
    report(4, ok, f"area rel={area_rel:.2e} gap/E={gap_rel:.2e} hull={hull:.2e} "
                  f"CL margins={cl.integral_margin:.3f}/{cl.min_margin:.3f} time={dt:.1f}s")


def _fourier_problem(rng):
    terms = []
    for base in ("cos(t)", "sin(t)", "0"):
        parts = [base]
        for k in (2, 3, 4):
            a, b = rng.uniform(-0.12, 0.12, 2)
            parts.append(f"({float(a)!r})*cos({k}*t) + ({float(b)!r})*sin({k}*t)")
        terms.append(" + ".join(parts))
    return P.BoundaryProblem.from_parametric(*terms)


def test_05_area_energy_inequality():
    rng = np.random.default_rng(2024)
    disk = P.build_disk(64, 12)
    worst, iterates = -np.inf, 0
    for _ in range(20):
        st = P.solve(_fourier_problem(rng), disk, P.SolverConfig(max_iters=300))
        E, A = np.array(st.energies), np.array(st.areas)
        worst = max(worst, float((A - E).max()))
        iterates += len(E)
    circle = P.solve(P.BoundaryProblem.circle(), P.build_disk(128, 24), P.SolverConfig(init="random", seed=1))
    gaps = np.array(circle.energies) - np.array(circle.areas)
    rise = float(np.diff(gaps).max())
    ok = worst <= 0 and rise <= 0
    report(5, ok, f"max(A-E) over {iterates} iterates={worst:.2e}; circle gap {gaps[0]:.2e}->{gaps[-1]:.2e} "
                  f"max step increase={rise:.2e}")


def test_06_first_variation():
    t0 = time.perf_counter()
    lines, ok = [], True
    for name, mesh in (("disk", M.flat_disk()), ("catenoid", catenoid_piece(2, (96, 48)))):
        r = V.first_variation_check(mesh, ("x", "y", "z"))
        two_area = 2 * M.area(mesh)
        ok &= r.discrepancy < 0.01 and abs(r.lhs - two_area) / two_area < 0.01
        lines.append(f"{name} rel={r.discrepancy:.2e} lhs/2A={r.lhs / two_area:.5f}")
    dt = time.perf_counter() - t0
    report(6, ok and dt < 5, "; ".join(lines) + f" time={dt:.1f}s")


def test_07_divergence_identity():
    lines, ok = [], True
    for name in ("catenoid", "helicoid", "enneper"):
        mesh = W.tessellate(W.catalog(name))
        r = V.divergence_identity_check(mesh, origin=mesh.vertices.mean(axis=0))
        ok &= r.discrepancy < 0.02
        lines.append(f"{name}={r.discrepancy:.2e}")
    h = V.divergence_identity_check(M.hemisphere())
    corr = h.details["corrected_discrepancy"]
    ok &= corr < 0.03
    report(7, ok, " ".join(lines) + f" hemisphere correction mismatch={corr:.2e}")


def test_08_pogorelov():
    disk = M.flat_disk()
    rd = V.pogorelov_check(disk, nearest(disk), 0.5)
    patch = W.catenoid_neck_patch()
    rc = V.pogorelov_check(patch, 0, 1.0)
    big = catenoid_piece(5, (128, 160))
    rw = V.pogorelov_check(big, nearest(big), 8.0)
    ok = (rd.discrepancy < 0.05 and abs(rd.lhs - math.pi) / math.pi < 0.05
          and rc.discrepancy < 0.05 and rw.lhs < 0 and rw.details["unstable_witness"])
    report(8, ok, f"disk Q={rd.lhs:.4f} rel={rd.discrepancy:.2e}; catenoid ball rel={rc.discrepancy:.2e}; "
                  f"witness Q={rw.lhs:.3f} A/R^2={rw.details['A_R'] / 64:.3f}")


def test_09_stability_spectrum():
    def smallest(mesh):
        return float(V.jacobi_spectrum(mesh, 2)[0])

    disk = [smallest(M.flat_disk(64, 8)), smallest(M.flat_disk(128, 16))]
    small = [smallest(catenoid_piece(0.3, res)) for res in ((48, 24), (96, 48))]
    large = [smallest(catenoid_piece(2.0, res)) for res in ((48, 24), (96, 48))]
    ok = min(disk) > 0 and min(small) > 0 and max(large) < 0
    report(9, ok, f"disk={disk[0]:.3f}/{disk[1]:.3f} small catenoid={small[0]:.3f}/{small[1]:.3f} "
                  f"large catenoid={large[0]:.3f}/{large[1]:.3f}")


def test_10_associate_family():
    hel = W.catalog("helicoid")
    l0 = W.metric_edge_lengths(hel)
    dev = max(float(np.abs(W.metric_edge_lengths(W.associate(hel, th)) / l0 - 1).max())
              for th in np.linspace(0.0, 2 * math.pi, 13))
    fit = W.fit_catenoid(W.tessellate(W.associate(hel, math.pi / 2)).vertices)
    report(10, dev < 1e-6 and fit.residual < 1e-4, f"edge-length deviation={dev:.2e} catenoid fit residual={fit.residual:.2e}")


def test_11_holomorphic_curve():
    lines, ok = [], True
    for n in (2, 3):
        tc = M.angle_defect_curvature(W.holomorphic_curve(n)).total_curvature
        target = 2 * math.pi * (n - 1)
        ok &= abs(tc - target) / target < 0.05
        lines.append(f"n={n} TC/target={tc / target:.4f}")
    report(11, ok, " ".join(lines))


def test_12_branch_classification():
    dom = W.DomainSpec("disk", (1.0,), (32, 16))
    got = {}
    for k in (2, 3, 4, 5):
        info = W.classify_branch(W.WeierstrassData(ex.parse("z"), ex.parse(f"z^{k}"), dom), 0j)
        got[k] = (info.status, info.order)
    ok = got[2] == ("immersed", 0) and all(got[k] == ("branch", k - 2) for k in (3, 4, 5))
    report(12, ok, " ".join(f"k={k}:{s}/{o}" for k, (s, o) in got.items()))


def test_13_weierstrass_consistency():
    rng = np.random.default_rng(7)
    worst, ratios = 0.0, []
    for name in ("catenoid", "helicoid", "enneper"):
        d = W.catalog(name)
        z = rng.uniform(-1.5, 1.5, 1000) + 1j * rng.uniform(-1.5, 1.5, 1000)
        z = z[np.abs(z) > 0.05]
        p = W.phi(d, z)
        worst = max(worst, float((np.abs(np.sum(p * p, axis=0)) / np.sum(np.abs(p) ** 2, axis=0)).max()))
        r1 = np.abs(W.grid_conformality(d, (128, 128))).max()
        r2 = np.abs(W.grid_conformality(d, (256, 256))).max()
        ratios.append(r1 / r2)
    ok = worst < 1e-10 and min(ratios) >= 2
    report(13, ok, f"max |phi.phi|/|phi|^2={worst:.2e} refinement ratios=" + "/".join(f"{r:.2f}" for r in ratios))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
