"""Offline sampling, online evaluation and reporting over a snapshot store."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from pathlib import Path

import numpy as np

from .config import RunConfig, build
from .ddpod import DomainSplit, schwarz_solve, split_domain, write_history
from .delaunay import Triangulation2D
from .errors import ConfigError, DomainError, IntegrityError
from .ffd import apply_parameters
from .fom import Field, output_functional, solve, warmup
from .mesh import StructuredMesh, check_quality, morph_mesh
from .pod import PODBasis, build_basis, reconstruct, truncate
from .podi import PODIModel, build_podi, interpolate_coefficients
from .sampling import IterationRecord, SnapshotDatabase, greedy_sample, grid_points
from .store import Store, sha256

logger = logging.getLogger(__name__)

METHODS = ("fom", "podi", "ddpod")
REPORT_COLUMNS = ["method", "mu", "n_snapshots", "field_err", "qoi_err", "eval_seconds", "speedup"]


class Problem:
    """The parametrised full-order problem described by a configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg

    def morph(self, mu) -> StructuredMesh:
        mu = self.cfg.binding.check(mu)
        return morph_mesh(self.cfg.mesh, apply_parameters(self.cfg.binding, mu, self.cfg.lattice))

    def solve(self, mu, tol: float | None = None) -> tuple[np.ndarray, dict]:
        mesh = self.morph(mu)
        q = check_quality(mesh, self.cfg.skew_limit, self.cfg.ortho_limit)
        if not q.passed:
            raise DomainError(f"morphed mesh at mu={np.asarray(mu).tolist()} fails the quality check: {q.to_dict()}")
        tol = self.cfg.solver_tol if tol is None else tol
        res = solve(mesh, self.cfg.bc, self.cfg.pde, tol=tol, max_iter=self.cfg.solver_max_iter)
        meta = {
            "iterations": int(res.iterations),
            "residual": float(res.residual),
            "tol": float(tol),
            "mesh_id": mesh.mesh_id,
            "qoi": self.qoi(mesh, res.field.values),
        }
        return res.field.values, meta

    def qoi(self, mesh: StructuredMesh, values: np.ndarray) -> float:
        return float(output_functional(mesh, Field(values, mesh.mesh_id), self.cfg.qoi, self.cfg.pde.diffusivity))

    @cached_property
    def split(self) -> DomainSplit:
        # built on the reference mesh so that the cell sets do not depend on mu
        return split_domain(self.cfg.mesh, self.cfg.core_box, self.cfg.overlap_layers)

    @cached_property
    def indicator_cells(self) -> np.ndarray | None:
        p = self.cfg.indicator_patch
        return None if p is None else self.cfg.mesh.patch_cells(p)


def _mu_tag(mu) -> str:
    return "_".join(f"{v:+.6f}" for v in mu)


def _mu_str(mu) -> str:
    return ",".join(repr(float(v)) for v in mu)


# ---------------------------------------------------------------------------
# store access


def load_store(store_dir) -> tuple[Store, dict, RunConfig]:
    store = Store(store_dir)
    manifest = store.load_manifest()
    cfg = build(manifest["config"])
    if cfg.hash != manifest["config_hash"]:
        raise IntegrityError("manifest config does not match its recorded hash")
    return store, manifest, cfg


def load_database(store: Store, manifest: dict) -> SnapshotDatabase:
    snaps = [s for s in manifest["snapshots"] if s["role"] == "sampling"]
    if not snaps:
        raise IntegrityError("store holds no sampling snapshots")
    cols = [store.read_block(s["field"]) for s in snaps]
    return SnapshotDatabase.from_columns([s["mu"] for s in snaps], cols, [s["meta"] for s in snaps])


def load_basis(store: Store, manifest: dict, name: str = "full") -> PODBasis:
    entry = manifest["bases"][name]
    return PODBasis(store.read_block(entry["modes"]), entry["singular_values"])


def load_podi(store: Store, manifest: dict) -> PODIModel:
    entry = manifest["models"]["podi"]
    basis = load_basis(store, manifest, entry["basis"])
    tri = Triangulation2D.from_dict(entry["triangulation"])
    return PODIModel(basis, tri, store.read_block(entry["coefficients"]))


def baseline_field(store: Store, manifest: dict) -> tuple[np.ndarray, float]:
    base = [s for s in manifest.get("snapshots", []) if s.get("baseline")]
    if not base:
        raise ConfigError("store has no baseline snapshot; re-run offline")
    return store.read_block(base[0]["field"]), float(base[0]["meta"]["qoi"])


# ---------------------------------------------------------------------------
# offline


def _snapshot_entry(store: Store, k: int, mu, values, meta, role: str, baseline: bool) -> dict:
    name = f"fields/snapshot_{k:03d}.f64" if role == "sampling" else "fields/baseline.f64"
    return {
        "index": k,
        "mu": [float(v) for v in mu],
        "role": role,
        "baseline": baseline,
        "field": store.write_block(name, values),
        "meta": meta,
    }


def history_csv(records: list[IterationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "max_e", "mean_e", "mu_new_1", "mu_new_2"])
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def cmd_offline(cfg: RunConfig, store_dir) -> tuple[dict, str]:
    """Sample, build bases and the PODI model, and write the store.

    Returns ``(manifest, status)`` with status ``"up to date"`` when the store
    was already complete for this configuration (no solver calls are made).
    """
    store = Store(store_dir)
    problem = Problem(cfg)
    if store.exists():
        manifest = store.load_manifest()
        if manifest.get("config_hash") != cfg.hash:
            raise ConfigError(f"{store_dir} was built from a different configuration; use a fresh store")
        if manifest.get("status") == "complete":
            return manifest, "up to date"
        resumed = True
    else:
        manifest = {
            "config": cfg.raw,
            "config_hash": cfg.hash,
            "status": "partial",
            "revision": 0,
            "mesh": {"header": cfg.mesh.to_header(), "mesh_id": cfg.mesh.mesh_id},
            "snapshots": [],
        }
        manifest["mesh"]["vertices"] = store.write_block("mesh/vertices.f64", cfg.mesh.vertices)
        manifest = store.save_manifest(manifest)
        resumed = False

    snaps = [s for s in manifest["snapshots"] if s["role"] == "sampling"]
    db = None
    if snaps:
        db = SnapshotDatabase.from_columns(
            [s["mu"] for s in snaps], [store.read_block(s["field"]) for s in snaps], [s["meta"] for s in snaps]
        )

    def persist(new_db: SnapshotDatabase) -> None:
        nonlocal manifest
        k = new_db.size - 1
        mu = new_db.xi[k]
        base = bool(np.all(np.abs(mu - cfg.baseline) <= new_db.eps_dup))
        entry = _snapshot_entry(store, k, mu, new_db.theta.columns[:, k], new_db.provenance[k], "sampling", base)
        manifest["snapshots"].append(entry)
        manifest = store.save_manifest(manifest)

    # initial grid: independent solves, fanned out, persisted in grid order
    init = grid_points(cfg.binding, cfg.init_grid)
    todo = [mu for mu in init if db is None or not db.contains(mu)]
    if todo:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for mu, (values, meta) in zip(todo, pool.map(problem.solve, todo)):
                db = SnapshotDatabase.from_columns([mu], [values], [meta]) if db is None else db.add(mu, values, meta)
                persist(db)

    db, records = greedy_sample(
        problem.solve,
        cfg.binding,
        init,
        tol=cfg.sampling_tol,
        max_new=cfg.max_new,
        cells=problem.indicator_cells,
        db=db,
        on_snapshot=persist,
    )

    if not any(s.get("baseline") for s in manifest["snapshots"]):
        values, meta = problem.solve(cfg.baseline)
        manifest["snapshots"].append(_snapshot_entry(store, db.size, cfg.baseline, values, meta, "baseline", True))

    basis = truncate(build_basis(db.theta, cfg.pod_method), cfg.pod_energy)
    bases = {"full": basis}
    if problem.indicator_cells is not None:
        rows = db.theta.columns[problem.indicator_cells]
        bases["restricted"] = truncate(build_basis(rows, cfg.pod_method), cfg.pod_energy)
    manifest["bases"] = {
        name: {
            "modes": store.write_block(f"basis/{name}.f64", b.modes),
            "singular_values": [float(s) for s in b.singular_values],
            "cells": None if name == "full" else problem.indicator_cells.tolist(),
        }
        for name, b in bases.items()
    }
    model = build_podi(db.theta, basis)
    manifest["models"] = {
        "podi": {
            "basis": "full",
            "triangulation": model.triangulation.to_dict(),
            "coefficients": store.write_block("basis/podi_coefficients.f64", model.coeff_table),
        },
        "ddpod": {
            "basis": "full",
            "core_box": list(cfg.core_box),
            "overlap_layers": cfg.overlap_layers,
            "omega1_cells": int(problem.split.omega1.size),
        },
    }
    text = history_csv(records)
    store.write_text("sampling_history.csv", text)
    manifest["sampling"] = {
        "records": [r.to_dict() for r in records],
        "history": {"file": "sampling_history.csv", "sha256": sha256(text.encode())},
        "n_initial": int(init.shape[0]),
    }
    manifest["status"] = "complete"
    manifest = store.save_manifest(manifest)
    return manifest, "resumed" if resumed else "built"


# ---------------------------------------------------------------------------
# online


class Evaluator:
    """Online evaluation with everything loadable kept out of the timed region."""

    def __init__(self, store_dir, timing: bool | None = None):
        self.store, self.manifest, cfg = load_store(store_dir)
        if self.manifest.get("status") != "complete":
            raise ConfigError("store is incomplete; run offline first")
        self.cfg = cfg if timing is None else cfg.with_timing(timing)
        self.problem = Problem(self.cfg)
        self.db = load_database(self.store, self.manifest)
        self.model = load_podi(self.store, self.manifest)
        if self.cfg.timing:
            warmup()

    def _time(self, fn, repeats: int):
        best, out = np.inf, None
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = fn()
            best = min(best, time.perf_counter() - t0)
        return out, (best if self.cfg.timing else None)

    def fom(self, mu, tol=None):
        (values, meta), secs = self._time(lambda: self.problem.solve(mu, tol), 1)
        return values, meta["qoi"], secs, {"iterations": meta["iterations"], "tol": meta["tol"]}

    def podi(self, mu, model: PODIModel | None = None):
        model = self.model if model is None else model
        mu = self.cfg.binding.check(mu)

        def run():
            alpha, _ = interpolate_coefficients(model, mu)
            return reconstruct(model.basis, alpha)

        values, secs = self._time(run, self.cfg.repeats if self.cfg.timing else 1)
        return values, self.problem.qoi(self.problem.morph(mu), values), secs, {}

    def ddpod(self, mu, basis: PODBasis | None = None, db: SnapshotDatabase | None = None, tol=None):
        basis = self.model.basis if basis is None else basis
        db = self.db if db is None else db
        mu = self.cfg.binding.check(mu)
        split = self.problem.split
        tol = self.cfg.ddpod_tol if tol is None else tol

        def run():
            k = int(np.argmin(np.linalg.norm(db.xi - mu, axis=1)))
            alpha0 = basis.modes.T @ db.theta.columns[:, k]
            mesh = self.problem.morph(mu)
            res = schwarz_solve(
                mesh, self.cfg.bc, self.cfg.pde, basis, split, tol=tol, max_outer=self.cfg.ddpod_max_outer, initial_alpha=alpha0
            )
            return mesh, res

        (mesh, res), secs = self._time(run, 1)
        info = {"iterations": res.state.iteration, "tol": tol, "state": res.state}
        return res.composite.values, self.problem.qoi(mesh, res.composite.values), secs, info

    def evaluate(self, mu, method: str, tol=None):
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        if method == "podi":
            return self.podi(mu)
        return getattr(self, method)(mu, tol=tol)


def cmd_eval(store_dir, mu, method: str, out_dir=None, timing: bool | None = None, tol=None) -> dict:
    """Evaluate one parameter point; writes ``<out>/<method>_<mu>.{f64,json}``."""
    ev = Evaluator(store_dir, timing)
    mu = np.asarray(mu, dtype=float)
    values, qoi, secs, info = ev.evaluate(mu, method, tol)
    out = Store(Path(store_dir) / "results" if out_dir is None else out_dir)
    stem = f"{method}_{_mu_tag(mu)}"
    block = out.write_block(f"{stem}.f64", values)
    result = {
        "config_hash": ev.cfg.hash,
        "method": method,
        "mu": [float(v) for v in mu],
        "qoi": qoi,
        "eval_seconds": secs,
        "n_snapshots": ev.db.size,
        "field": {**block, "mesh_id": ev.problem.morph(mu).mesh_id},
    }
    if "iterations" in info:
        result["iterations"] = info["iterations"]
    if "tol" in info:
        result["tol"] = info["tol"]
    if method == "ddpod":
        write_history(info["state"], out.root / f"{stem}_history.csv")
        result["history_file"] = f"{stem}_history.csv"
    out.write_text(f"{stem}.json", json.dumps(result, sort_keys=True, indent=2) + "\n")
    return result


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_report(store_dir, validation=None, timing: bool | None = None, out_dir=None) -> list[dict]:
    """Error and cost table over validation points and database-prefix sizes.

    Errors are relative to the baseline: ``|u - u_N| / |u_base|`` and
    ``|Q - Q_N| / |Q_base|``.  Writes ``report.csv`` and ``report.json``.
    """
    ev = Evaluator(store_dir, timing)
    cfg = ev.cfg
    u_base, q_base = baseline_field(ev.store, ev.manifest)
    nb, qb = np.linalg.norm(u_base), abs(q_base)
    if nb == 0 or qb == 0:
        raise ConfigError("baseline field or QoI is zero; errors cannot be normalised")
    points = cfg.validation if validation is None else np.asarray(validation, dtype=float).reshape(-1, 2)
    n_init = int(ev.manifest["sampling"]["n_initial"])

    models = {}
    for n in range(min(n_init, ev.db.size), ev.db.size + 1):
        sub = ev.db.prefix(n)
        basis = truncate(build_basis(sub.theta, cfg.pod_method), cfg.pod_energy)
        models[n] = (sub, basis, build_podi(sub.theta, basis))

    rows = []

    def add(method, mu, n, u, q, u_ref, q_ref, secs, ref_secs):
        speed = ref_secs / secs if secs and ref_secs else None
        rows.append(
            {
                "method": method,
                "mu": _mu_str(mu),
                "n_snapshots": n,
                "field_err": float(np.linalg.norm(u - u_ref) / nb),
                "qoi_err": float(abs(q - q_ref) / qb),
                "eval_seconds": secs,
                "speedup": speed,
            }
        )

    fom_times = []
    for mu in points:
        u, q, t_fom, _ = ev.fom(mu)
        fom_times.append(t_fom)
        add("fom", mu, None, u, q, u, q, t_fom, t_fom)
        for n, (sub, basis, model) in models.items():
            up, qp, tp, _ = ev.podi(mu, model)
            add("podi", mu, n, up, qp, u, q, tp, t_fom)
            ud, qd, td, _ = ev.ddpod(mu, basis, sub)
            add("ddpod", mu, n, ud, qd, u, q, td, t_fom)

    # PODI at the database points themselves: exact by construction
    ref = float(np.mean(fom_times)) if fom_times and cfg.timing else None
    n_full = ev.db.size
    for k in range(n_full):
        mu = ev.db.xi[k]
        up, qp, tp, _ = ev.podi(mu, models[n_full][2])
        add("podi", mu, n_full, up, qp, ev.db.theta.columns[:, k], ev.db.provenance[k]["qoi"], tp, ref)

    out = Path(store_dir) if out_dir is None else Path(out_dir)
    buf = io.StringIO()
    buf.write(f"# config_hash: {cfg.hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
    store = Store(out)
    store.write_text("report.csv", buf.getvalue())
    doc = {"config_hash": cfg.hash, "columns": REPORT_COLUMNS, "rows": rows, "timing": cfg.timing}
    store.write_text("report.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return rows
