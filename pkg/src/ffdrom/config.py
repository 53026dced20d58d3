"""Run configuration: JSON loading, schema validation and object construction."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .fom import BoundarySpec, PDEParams, QoISpec
from .ffd import FFDLattice, ParameterBinding
from .mesh import StructuredMesh, generate_mesh

DEFAULTS = {
    "solver": {"tol": 1e-8, "max_iter": 100_000},
    "sampling": {"tol": 0.0, "indicator_patch": None},
    "pod": {"method": "auto", "energy": 1.0},
    "ddpod": {"overlap_layers": 2, "tol": 1e-6, "max_outer": 30},
    "baseline": [0.0, 0.0],
    "timing": {"enabled": True, "repeats": 50},
    "workers": 1,
}


def schema() -> dict:
    return json.loads(resources.files("ffdrom").joinpath("data/config.schema.json").read_text())


def demo_config() -> dict:
    return json.loads(resources.files("ffdrom").joinpath("data/demo.json").read_text())


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def _merge(defaults: dict, raw: dict) -> dict:
    out = copy.deepcopy(raw)
    for key, val in defaults.items():
        if isinstance(val, dict):
            out[key] = {**val, **out.get(key, {})}
        else:
            out.setdefault(key, val)
    return out


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    mesh: StructuredMesh
    lattice: FFDLattice
    binding: ParameterBinding
    bc: BoundarySpec
    pde: PDEParams
    qoi: QoISpec
    solver_tol: float
    solver_max_iter: int
    skew_limit: float
    ortho_limit: float
    init_grid: int
    sampling_tol: float
    max_new: int
    indicator_patch: str | None
    pod_method: str
    pod_energy: float
    core_box: tuple
    overlap_layers: int
    ddpod_tol: float
    ddpod_max_outer: int
    baseline: np.ndarray
    validation: np.ndarray
    timing: bool
    repeats: int
    workers: int
    output: str | None

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def with_timing(self, enabled: bool) -> RunConfig:
        """Same run (same hash) with timing switched; timing never enters the hash."""
        return RunConfig(**{**self.__dict__, "timing": enabled})


def validate(raw: dict) -> None:
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def build(raw: dict) -> RunConfig:
    """Validate ``raw`` and construct the problem objects."""
    validate(raw)
    c = _merge(DEFAULTS, raw)
    m = c["mesh"]
    mesh = generate_mesh(
        m["nx"], m["ny"], tuple(m.get("domain", (0.0, 1.0, 0.0, 1.0))), tuple(m["bump"]) if "bump" in m else None
    )
    lattice = FFDLattice.from_dict(c["ffd"]["lattice"])
    binding = ParameterBinding.from_dict(c["ffd"]["binding"])
    if binding.parameter_dim != 2:
        raise ConfigError("exactly two shape parameters are supported")
    bc = BoundarySpec.from_dict(c["bc"])
    bc.resolve(mesh)  # unknown or missing patches fail here
    pde = PDEParams(c["pde"]["diffusivity"], tuple(c["pde"].get("velocity", (0.0, 0.0))), c["pde"].get("source", 0.0))
    q = c["qoi"]
    qoi = QoISpec(q["patch"], tuple(q["direction"]), q.get("normalization", 1.0))
    if qoi.patch not in mesh.patches:
        raise ConfigError(f"QoI patch {qoi.patch!r} is not a mesh patch")
    ind = c["sampling"]["indicator_patch"]
    if ind is not None and ind not in mesh.patches:
        raise ConfigError(f"indicator patch {ind!r} is not a mesh patch")
    baseline = np.asarray(c["baseline"], dtype=float)
    binding.check(baseline)
    validation = np.asarray(c["validation"], dtype=float).reshape(-1, 2)
    for mu in validation:
        binding.check(mu)
    return RunConfig(
        raw=raw,
        mesh=mesh,
        lattice=lattice,
        binding=binding,
        bc=bc,
        pde=pde,
        qoi=qoi,
        solver_tol=float(c["solver"]["tol"]),
        solver_max_iter=int(c["solver"]["max_iter"]),
        skew_limit=float(m.get("skew_limit", 0.5)),
        ortho_limit=float(m.get("ortho_limit", 70.0)),
        init_grid=int(c["sampling"]["init_grid"]),
        sampling_tol=float(c["sampling"]["tol"]),
        max_new=int(c["sampling"]["max_new"]),
        indicator_patch=ind,
        pod_method=c["pod"]["method"],
        pod_energy=float(c["pod"]["energy"]),
        core_box=tuple(c["ddpod"]["core_box"]),
        overlap_layers=int(c["ddpod"]["overlap_layers"]),
        ddpod_tol=float(c["ddpod"]["tol"]),
        ddpod_max_outer=int(c["ddpod"]["max_outer"]),
        baseline=baseline,
        validation=validation,
        timing=bool(c["timing"]["enabled"]),
        repeats=int(c["timing"]["repeats"]),
        workers=int(c["workers"]),
        output=c.get("output"),
    )


def load(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return build(raw)
