"""Command-line front end: ``minsurf generate | solve | verify | deform | export``.

Exit codes: 0 pass, 1 check failure, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import expr as ex
from . import mesh as M
from . import plateau as P
from . import verify as V
from . import weierstrass as W

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on.  Defaults are part of the interface."""

    command: str
    inputs: list = field(default_factory=list)
    data: str | None = None
    out: str = "."
    resolution: tuple | None = None
    theta: float = 0.0
    thetas: list = field(default_factory=lambda: [0.0, math.pi / 4, math.pi / 2])
    checks: list = field(default_factory=lambda: ["all"])
    center: str = "centroid"
    radii: tuple | None = None
    R: float | None = None
    origin: tuple = (0.0, 0.0, 0.0)
    tol: float | None = None
    max_iters: int | None = None
    restarts: int = 1
    init: str = "uniform"
    seed: int = 0
    format: str = "json"

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise InputError(f"unknown config keys {sorted(extra)}; known: {', '.join(sorted(known))}")
        if "command" not in obj:
            raise InputError("config needs a 'command'")
        cfg = cls(**obj)
        if cfg.format not in ("json", "table"):
            raise InputError(f"format must be json or table, not {cfg.format!r}")
        if cfg.init not in ("uniform", "random"):
            raise InputError(f"init must be uniform or random, not {cfg.init!r}")
        return cfg


# --------------------------------------------------------------------------
# argument parsing


def _parse_res(text: str) -> tuple:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution must look like 96x48, got {text!r}") from None


def _parse_radii(text: str) -> tuple:
    try:
        a, b, n = text.split(":")
        return float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"radii must look like a:b:n, got {text!r}") from None


def _parse_angle(text: str) -> float:
    """Float, optionally written with ``pi`` (e.g. ``pi/2``, ``0.25*pi``)."""
    try:
        val = ex.evaluate(ex.parse(text, variables=("pi",)), pi=math.pi)
    except ex.ExprError as exc:
        raise argparse.ArgumentTypeError(f"bad angle {text!r}: {exc}") from None
    if abs(complex(val).imag) > 0:
        raise argparse.ArgumentTypeError(f"angle must be real: {text!r}")
    return float(complex(val).real)


def _parse_angles(text: str) -> list:
    return [_parse_angle(t) for t in text.split(",") if t.strip()]


def _parse_point(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"point must look like x,y,z, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="minsurf", description="Minimal surface generation, Plateau solving and verification.")
    ap.add_argument("--config", help="JSON file with RunConfig keys; command-line flags override it")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, res=True):
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--format", choices=["json", "table"])
        if res:
            p.add_argument("--res", type=_parse_res, dest="resolution", help="grid resolution, e.g. 96x48")

    g = sub.add_parser("generate", help="tessellate a catalog surface or Weierstrass data file")
    g.add_argument("inputs", nargs="*", metavar="name")
    g.add_argument("--data", help="Weierstrass data JSON")
    g.add_argument("--theta", type=_parse_angle, help="associate angle (radians; 'pi' allowed)")
    common(g)

    s = sub.add_parser("solve", help="solve a Plateau problem")
    s.add_argument("inputs", nargs=1, metavar="problem.json")
    s.add_argument("--restarts", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--init", choices=["uniform", "random"])
    s.add_argument("--tol", type=float)
    s.add_argument("--max-iters", type=int, dest="max_iters")
    common(s, res=False)

    v = sub.add_parser("verify", help="run verification checks on a mesh")
    v.add_argument("inputs", nargs=1, metavar="mesh")
    v.add_argument("checks", nargs="*", help=f"check names or 'all' ({', '.join(sorted(V.CHECKS))})")
    v.add_argument("--center", help="centroid | origin | neck | x,y,z")
    v.add_argument("--radii", type=_parse_radii, help="a:b:n radii for density checks")
    v.add_argument("--R", type=float, dest="R", help="geodesic radius for pogorelov")
    v.add_argument("--origin", type=_parse_point, help="origin for the divergence identity")
    common(v, res=False)

    d = sub.add_parser("deform", help="sweep the associate family")
    d.add_argument("inputs", nargs="*", metavar="name")
    d.add_argument("--data", help="Weierstrass data JSON")
    d.add_argument("--thetas", type=_parse_angles, help="comma-separated angles, e.g. 0,pi/4,pi/2")
    common(d)

    e = sub.add_parser("export", help="write a mesh (file, catalog name or data) as PLY or OBJ")
    e.add_argument("inputs", nargs="*", metavar="source")
    e.add_argument("--data", help="Weierstrass data JSON")
    e.add_argument("--theta", type=_parse_angle)
    e.add_argument("--res", type=_parse_res, dest="resolution")
    e.add_argument("--out", required=True, help="output file (.ply or .obj)")
    e.add_argument("--format", choices=["json", "table"])
    return ap


def config_from_args(argv=None) -> RunConfig:
    ap = build_parser()
    ns = ap.parse_args(argv)
    base = {}
    if ns.config:
        try:
            base = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(base, dict):
            raise InputError("config must be a JSON object")
        RunConfig.from_dict({"command": ns.command, **base})  # reject unknown keys early
    merged = {**base, "command": ns.command}
    for k, val in vars(ns).items():
        if k in ("config", "command") or val is None:
            continue
        if k in ("inputs", "checks") and not val:
            continue
        merged[k] = val
    for k in ("resolution", "radii", "origin"):
        if merged.get(k) is not None:
            merged[k] = tuple(merged[k])
    return RunConfig.from_dict(merged)


# --------------------------------------------------------------------------
# helpers


def _dump(obj) -> str:
    return json.dumps(V._clean(obj), indent=2, sort_keys=True)


def _emit(cfg: RunConfig, payload, table: str | None = None):
    if cfg.format == "table" and table is not None:
        print(table)
    else:
        print(_dump(payload))


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, content: bytes | str):
    if isinstance(content, str):
        content = content.encode()
    path.write_bytes(content)


def _load_source(cfg: RunConfig):
    """Weierstrass data or a ready mesh from --data or a catalog name; returns (label, object)."""
    if cfg.data and cfg.inputs:
        raise InputError("give either a catalog name or --data, not both")
    if cfg.data:
        try:
            text = Path(cfg.data).read_text()
        except OSError as exc:
            raise InputError(f"cannot read {cfg.data}: {exc}") from None
        data = W.load_data(text)
        return data.name or Path(cfg.data).stem, data
    if len(cfg.inputs) != 1:
        raise InputError("need exactly one catalog name or --data")
    name = cfg.inputs[0]
    if name == "hemisphere":
        return name, M.hemisphere()
    kw = {}
    if cfg.resolution is not None:
        kw["resolution"] = cfg.resolution
    obj = W.catalog(name, **kw)
    return _safe_name(name), obj


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name).strip("_")


def _mesh_stats(mesh: M.TriMesh) -> dict:
    cur = M.angle_defect_curvature(mesh)
    b = mesh.boundary_edges
    blen = float(np.linalg.norm(mesh.vertices[b[:, 0]] - mesh.vertices[b[:, 1]], axis=1).sum()) if len(b) else 0.0
    return {
        "vertices": mesh.n_vertices,
        "faces": mesh.n_faces,
        "area": M.area(mesh),
        "total_curvature": cur.total_curvature,
        "total_curvature_over_pi": cur.total_curvature / math.pi,
        "boundary_length": blen,
        "boundary_loops": len(mesh.boundary_loops),
    }


def _kv_table(d: dict) -> str:
    w = max(len(k) for k in d)
    return "\n".join(f"{k.ljust(w)}  {v}" for k, v in d.items())


# --------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig) -> int:
    label, obj = _load_source(cfg)
    out = _out_dir(cfg)
    branch = []
    if isinstance(obj, W.WeierstrassData):
        data = obj
        if cfg.theta:
            data = W.associate(data, cfg.theta)
        if cfg.resolution is not None:
            data = replace(data, domain=data.domain.with_resolution(cfg.resolution))
        for p, info in W.check_admissible(data):
            branch.append({"point": [p.real, p.imag], **info.as_dict()})
        mesh = W.tessellate(data)
    else:
        mesh = obj
    files = [out / f"{label}.ply"]
    _write(files[0], M.export_mesh(mesh, "ply"))
    if mesh.dim == 3:
        files.append(out / f"{label}.obj")
        _write(files[1], M.export_mesh(mesh, "obj"))
    report = {"name": label, **_mesh_stats(mesh), "branch_points": branch, "files": [str(f) for f in files]}
    flat = {k: v for k, v in report.items() if k not in ("branch_points", "files")}
    for b in branch:
        flat[f"point {b['point'][0]:+g}{b['point'][1]:+g}i"] = (
            b["status"] if b["status"] != "branch" else f"branch order {b['order']}"
        )
    _emit(cfg, report, _kv_table(flat))
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    path = Path(cfg.inputs[0])
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    try:
        problem, disk, scfg = P.load_problem(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    scfg = replace(
        scfg,
        tol=cfg.tol if cfg.tol is not None else scfg.tol,
        max_iters=cfg.max_iters if cfg.max_iters is not None else scfg.max_iters,
        restarts=cfg.restarts,
        seed=cfg.seed,
        init=cfg.init,
    )
    state = P.solve(problem, disk, scfg)
    mesh = disk.mesh(state.F)
    out = _out_dir(cfg)
    stem = _safe_name(path.stem)
    _write(out / f"{stem}.ply", M.export_mesh(mesh, "ply"))
    cl = P.courant_lebesgue_check(disk, state.F)
    report = {
        **state.summary(),
        "cl_check": cl.as_dict(),
        "restarts": state.restart_log,
        "seed": cfg.seed,
        "files": [str(out / f"{stem}.ply"), str(out / f"{stem}.json")],
    }
    _write(out / f"{stem}.json", _dump(report) + "\n")
    table = _kv_table({k: V._clean(v) for k, v in state.summary().items()}
                      | {"cl_holds": cl.holds(), "cl_margin": V._clean(cl.margin)}
                      | {f"restart {r['restart']}": f"E={r['energy']:.10g} iters={r['iterations']}" for r in state.restart_log})
    _emit(cfg, report, table)
    if not state.converged:
        print(f"solver did not converge in {state.iteration} iterations", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    path = Path(cfg.inputs[0])
    try:
        mesh = M.import_mesh(path.read_bytes())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    radii = None
    if cfg.radii is not None:
        a, b, n = cfg.radii
        radii = np.linspace(a, b, int(n))
    options = {"origin": cfg.origin}
    if cfg.R is not None:
        options["R"] = cfg.R
    reports = V.run_checks(mesh, cfg.checks, center=cfg.center, radii=radii, options=options)
    _emit(cfg, [r.to_dict() for r in reports], V.format_table(reports))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_deform(cfg: RunConfig) -> int:
    label, data = _load_source(cfg)
    if not isinstance(data, W.WeierstrassData):
        raise InputError(f"{label} is not given by Weierstrass data")
    if cfg.resolution is not None:
        data = replace(data, domain=data.domain.with_resolution(cfg.resolution))
    out = _out_dir(cfg)
    base = W.tessellate(data)
    base_len = W.metric_edge_lengths(data)
    e = base.edges
    base_chord = np.linalg.norm(base.vertices[e[:, 0]] - base.vertices[e[:, 1]], axis=1)
    rows = []
    for th in cfg.thetas:
        d = W.associate(data, th)
        mesh = W.tessellate(d)
        fname = out / f"{label}_theta{th:.6f}.ply"
        _write(fname, M.export_mesh(mesh, "ply"))
        chord = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
        fit = W.fit_catenoid(mesh.vertices)
        rows.append({
            "theta": th,
            "edge_length_deviation": float(np.max(np.abs(W.metric_edge_lengths(d) - base_len) / base_len)),
            "chord_length_deviation": float(np.max(np.abs(chord - base_chord) / base_chord)),
            "max_vertex_shift": float(np.max(np.linalg.norm(mesh.vertices - base.vertices, axis=1))),
            "gauss_map_agreement": W.gauss_map_agreement(mesh),
            "catenoid_fit": {"center": fit.center, "c": fit.c, "a": fit.a, "residual": fit.residual},
            "file": str(fname),
        })
    cols = ("theta", "edge_length_deviation", "chord_length_deviation", "gauss_map_agreement", "catenoid_fit")
    lines = ["  ".join(c for c in cols)]
    for r in rows:
        lines.append("  ".join(f"{v:.6g}" for v in (r["theta"], r["edge_length_deviation"], r["chord_length_deviation"],
                                                     r["gauss_map_agreement"], r["catenoid_fit"]["residual"])))
    _emit(cfg, rows, "\n".join(lines))
    return EXIT_OK


def cmd_export(cfg: RunConfig) -> int:
    target = Path(cfg.out)
    fmt = target.suffix.lower().lstrip(".")
    if fmt not in ("ply", "obj"):
        raise InputError("--out must end in .ply or .obj")
    if not cfg.data and len(cfg.inputs) == 1 and Path(cfg.inputs[0]).is_file():
        mesh = M.import_mesh(Path(cfg.inputs[0]).read_bytes())
    else:
        label, obj = _load_source(cfg)
        if isinstance(obj, W.WeierstrassData):
            if cfg.theta:
                obj = W.associate(obj, cfg.theta)
            mesh = W.tessellate(obj, cfg.resolution)
        else:
            mesh = obj
    target.parent.mkdir(parents=True, exist_ok=True)
    _write(target, M.export_mesh(mesh, fmt))
    _emit(cfg, {"file": str(target), **_mesh_stats(mesh)}, None)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "deform": cmd_deform,
    "export": cmd_export,
}

_INPUT_ERRORS = (InputError, ex.ExprError, W.WeierstrassError, M.MeshError, P.PlateauError, V.VerifyError,
                 OSError, json.JSONDecodeError)
_NUMERIC_ERRORS = (W.QuadratureError, P.SingularSystem, NumericalFailure, np.linalg.LinAlgError,
                   FloatingPointError, ArithmeticError)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # argparse usage errors
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[cfg.command](cfg)
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
