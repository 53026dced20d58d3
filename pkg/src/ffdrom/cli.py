"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 store integrity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build, demo_config, load
from .errors import ConfigError, FFDROMError
from .ffd import apply_parameters, deform_points
from .mesh import check_quality, morph_mesh
from .pipeline import METHODS, cmd_eval, cmd_offline, cmd_report
from .store import Store


def parse_mu(text: str) -> np.ndarray:
    try:
        mu = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"--mu expects comma-separated numbers, got {text!r}") from None
    if mu.size != 2:
        raise ConfigError(f"--mu expects two values, got {mu.size}")
    return mu


def parse_points(text: str) -> np.ndarray:
    return np.array([parse_mu(p) for p in text.split(";") if p.strip()])


def load_config(spec: str, tol: float | None = None) -> RunConfig:
    """``spec`` is a JSON path or the word ``demo`` for the packaged demo."""
    if spec == "demo":
        raw = demo_config()
    else:
        try:
            raw = json.loads(Path(spec).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {spec} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {spec} is not valid JSON: {exc}") from None
    if tol is not None:
        raw = {**raw, "solver": {**raw.get("solver", {}), "tol": tol}}
    return build(raw)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def run_ffd_apply(args) -> int:
    cfg = load_config(args.config)
    mu = cfg.binding.check(parse_mu(args.mu))
    lattice = apply_parameters(cfg.binding, mu, cfg.lattice)
    verts = deform_points(lattice, cfg.mesh.vertices)
    out = {
        "mu": mu.tolist(),
        "n_vertices": int(verts.shape[0]),
        "max_displacement": float(np.max(np.linalg.norm(verts - cfg.mesh.vertices, axis=1))),
        "control_points": lattice.control_points().reshape(-1, 2).tolist(),
    }
    if args.out:
        out["vertices"] = Store(Path(args.out).parent).write_block(Path(args.out).name, verts)
    _emit(out)
    return 0


def run_mesh_check(args) -> int:
    cfg = load_config(args.config)
    points = [parse_mu(args.mu)] if args.mu else [cfg.baseline, *cfg.binding.corners()]
    reports, ok = [], True
    for mu in points:
        mesh = morph_mesh(cfg.mesh, apply_parameters(cfg.binding, cfg.binding.check(mu), cfg.lattice))
        q = check_quality(mesh, cfg.skew_limit, cfg.ortho_limit)
        ok &= q.passed
        reports.append({"mu": np.asarray(mu).tolist(), "mesh_id": mesh.mesh_id, **q.to_dict()})
    _emit(reports)
    return 0 if ok else 2


def run_offline(args) -> int:
    cfg = load_config(args.config, args.tol)
    if args.workers:
        cfg = RunConfig(**{**cfg.__dict__, "workers": args.workers})
    store = args.store or cfg.output
    if not store:
        raise ConfigError("no store directory: pass --store or set 'output' in the config")
    manifest, status = cmd_offline(cfg, store)
    n = sum(1 for s in manifest["snapshots"] if s["role"] == "sampling")
    print(f"{status}: {store} ({n} snapshots, revision {manifest['revision']})")
    return 0


def run_eval(args, method: str | None = None) -> int:
    method = method or args.method
    result = cmd_eval(args.store, parse_mu(args.mu), method, args.out, False if args.no_timing else None, args.tol)
    _emit(result)
    return 0


def run_report(args) -> int:
    points = parse_points(args.validation) if args.validation else None
    rows = cmd_report(args.store, points, False if args.no_timing else None, args.out)
    print(f"{len(rows)} rows written to {Path(args.out or args.store) / 'report.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffdrom", description="FFD-parametrised POD reduced-order models")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    ffd = sub.add_parser("ffd", help="free-form deformation").add_subparsers(dest="action", required=True)
    a = ffd.add_parser("apply", help="morph the configured mesh at --mu")
    a.add_argument("--config", required=True, help="config JSON path or 'demo'")
    a.add_argument("--mu", required=True, help="parameter point 'a,b'")
    a.add_argument("--out", help="write morphed vertices as a .f64 block")
    a.set_defaults(func=run_ffd_apply)

    mesh = sub.add_parser("mesh", help="mesh utilities").add_subparsers(dest="action", required=True)
    c = mesh.add_parser("check", help="quality of the morphed mesh (default: baseline and corners)")
    c.add_argument("--config", required=True)
    c.add_argument("--mu")
    c.set_defaults(func=run_mesh_check)

    o = sub.add_parser("offline", help="sample, solve and build the store")
    o.add_argument("--config", required=True)
    o.add_argument("--store")
    o.add_argument("--tol", type=float, help="override the full-order solver tolerance")
    o.add_argument("--workers", type=int)
    o.set_defaults(func=run_offline)

    def eval_args(q, with_method: bool):
        q.add_argument("--store", required=True)
        q.add_argument("--mu", required=True)
        if with_method:
            q.add_argument("--method", choices=METHODS, default="podi")
        q.add_argument("--out", help="result directory (default <store>/results)")
        q.add_argument("--tol", type=float, help="solver tolerance (fom) or interface tolerance (ddpod)")
        q.add_argument("--no-timing", action="store_true")

    e = sub.add_parser("eval", help="evaluate one parameter point")
    eval_args(e, True)
    e.set_defaults(func=run_eval)
    for name in ("podi", "ddpod"):
        grp = sub.add_parser(name, help=f"{name} shortcuts").add_subparsers(dest="action", required=True)
        q = grp.add_parser("eval", help=f"same as 'eval --method {name}'")
        eval_args(q, False)
        q.set_defaults(func=lambda args, m=name: run_eval(args, m))

    r = sub.add_parser("report", help="error/speed-up table at the validation points")
    r.add_argument("--store", required=True)
    r.add_argument("--validation", help="points 'a,b;c,d;...' (default: from the config)")
    r.add_argument("--out")
    r.add_argument("--no-timing", action="store_true", help="leave timing columns empty (byte-stable output)")
    r.set_defaults(func=run_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FFDROMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
