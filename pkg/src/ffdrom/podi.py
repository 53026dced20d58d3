"""POD with interpolation: piecewise-linear interpolation of POD coefficients
over a Delaunay triangulation of the parameter samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delaunay import Triangulation2D, delaunay, locate
from .errors import ShapeError
from .pod import PODBasis, SnapshotMatrix, project, reconstruct


@dataclass(frozen=True)
class PODIModel:
    basis: PODBasis
    triangulation: Triangulation2D
    coeff_table: np.ndarray  # (n_points, rank)

    def __post_init__(self) -> None:
        table = np.array(self.coeff_table, dtype=float).reshape(self.triangulation.points.shape[0], -1)
        if table.shape[1] != self.basis.rank:
            raise ShapeError(f"coefficient rows of length {table.shape[1]} for a rank-{self.basis.rank} basis")
        table.setflags(write=False)
        object.__setattr__(self, "coeff_table", table)


def build_podi(db, basis: PODBasis) -> PODIModel:
    """``db`` is a :class:`SnapshotMatrix` or anything exposing ``theta``."""
    theta = db if isinstance(db, SnapshotMatrix) else db.theta
    tri = delaunay(theta.parameter_points)
    if basis.rank == 0:
        table = np.zeros((theta.shape[1], 0))
    else:
        table = np.stack([project(basis, theta.columns[:, k]) for k in range(theta.shape[1])])
    return PODIModel(basis, tri, table)


def interpolate_coefficients(model: PODIModel, mu, seed: int = 0) -> tuple[np.ndarray, int]:
    t, lam = locate(model.triangulation, mu, seed=seed)
    rows = model.coeff_table[model.triangulation.simplices[t]]
    return lam @ rows, t


def coefficients_in_simplex(model: PODIModel, t: int, mu) -> np.ndarray:
    """Barycentric combination using a given triangle (no containment check)."""
    lam = model.triangulation.barycentric(t, mu)
    return lam @ model.coeff_table[model.triangulation.simplices[t]]


def evaluate_podi(model: PODIModel, mu, seed: int = 0) -> np.ndarray:
    alpha, _ = interpolate_coefficients(model, mu, seed)
    return reconstruct(model.basis, alpha)
