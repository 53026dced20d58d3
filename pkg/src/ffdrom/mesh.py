"""Structured quadrilateral meshes, FFD morphing and quality screening.

Vertices are numbered ``v = j * (nx + 1) + i`` and cells ``c = j * nx + i``.
Connectivity is implicit in ``(i, j)`` and is never changed by morphing, so a
field computed on one morphed mesh lives on the same degrees of freedom as a
field computed on any other.

Boundary faces are numbered side by side: south ``0..nx-1``, east
``nx..nx+ny-1``, north, then west, each running in increasing ``i`` or ``j``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError
from .ffd import FFDLattice, deform_points

SIDES = ("S", "E", "N", "W")
PATCH_SIDES = {"bottom": "S", "bump": "S", "outlet": "E", "top": "N", "inlet": "W"}
MESH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class StructuredMesh:
    nx: int
    ny: int
    vertices: np.ndarray
    patches: dict

    def __post_init__(self) -> None:
        verts = np.array(self.vertices, dtype=float).reshape(-1, 2)
        if verts.shape[0] != (self.nx + 1) * (self.ny + 1):
            raise ConfigError(
                f"expected {(self.nx + 1) * (self.ny + 1)} vertices for a {self.nx}x{self.ny} mesh, got {verts.shape[0]}"
            )
        verts.setflags(write=False)
        patches = {}
        for name, faces in self.patches.items():
            arr = np.array(sorted(int(f) for f in faces), dtype=np.int64)
            arr.setflags(write=False)
            patches[name] = arr
        owned = np.concatenate(list(patches.values())) if patches else np.empty(0, dtype=np.int64)
        if owned.size != self.n_boundary_faces or np.unique(owned).size != owned.size:
            raise ConfigError("every boundary face must belong to exactly one patch")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "patches", patches)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_vertices(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_boundary_faces(self) -> int:
        return 2 * (self.nx + self.ny)

    @cached_property
    def mesh_id(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.nx}x{self.ny}".encode())
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def cell_index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def cell_ij(self, c) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(c)
        return c % self.nx, c // self.nx

    @cached_property
    def geometry(self) -> MeshGeometry:
        return MeshGeometry.build(self)

    def patch_cells(self, name: str) -> np.ndarray:
        return self.geometry.bface_cell[self.patches[name]]

    def to_header(self) -> dict:
        return {
            "format_version": MESH_FORMAT_VERSION,
            "nx": self.nx,
            "ny": self.ny,
            "n_vertices": self.n_vertices,
            "patches": {name: faces.tolist() for name, faces in sorted(self.patches.items())},
        }

    @classmethod
    def from_header(cls, header: dict, vertices: np.ndarray) -> StructuredMesh:
        if header.get("format_version") != MESH_FORMAT_VERSION:
            raise ConfigError(f"unsupported mesh format version {header.get('format_version')}")
        return cls(header["nx"], header["ny"], np.asarray(vertices).reshape(-1, 2), header["patches"])


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class MeshGeometry:
    """Derived finite-volume geometry of a :class:`StructuredMesh`.

    Interior faces are oriented owner -> neighbour; boundary normals point out
    of the domain.  Normals are area vectors (length equals face length).
    """

    cell_area: np.ndarray
    cell_centroid: np.ndarray
    iface_owner: np.ndarray
    iface_neigh: np.ndarray
    iface_center: np.ndarray
    iface_normal: np.ndarray
    bface_cell: np.ndarray
    bface_side: np.ndarray
    bface_center: np.ndarray
    bface_normal: np.ndarray

    @classmethod
    def build(cls, mesh: StructuredMesh) -> MeshGeometry:
        nx, ny = mesh.nx, mesh.ny
        V = mesh.vertices.reshape(ny + 1, nx + 1, 2)
        # cell (i, j) corners, counter-clockwise
        q = np.stack([V[:-1, :-1], V[:-1, 1:], V[1:, 1:], V[1:, :-1]], axis=2)  # (ny, nx, 4, 2)
        q_next = np.roll(q, -1, axis=2)
        cr = _cross(q, q_next)
        area = 0.5 * cr.sum(axis=2)
        centroid = ((q + q_next) * cr[..., None]).sum(axis=2) / (6.0 * area[..., None])

        cells = np.arange(nx * ny).reshape(ny, nx)

        def right_normal(a, b):
            e = b - a
            return np.stack([e[..., 1], -e[..., 0]], axis=-1)

        # vertical interior faces: owner (i-1, j), neighbour (i, j); edge (i, j) -> (i, j+1)
        a_v, b_v = V[:-1, 1:-1], V[1:, 1:-1]
        own_v, nb_v = cells[:, :-1], cells[:, 1:]
        # horizontal interior faces: owner (i, j-1), neighbour (i, j); edge (i+1, j) -> (i, j)
        a_h, b_h = V[1:-1, 1:], V[1:-1, :-1]
        own_h, nb_h = cells[:-1, :], cells[1:, :]

        iface_owner = np.concatenate([own_v.ravel(), own_h.ravel()])
        iface_neigh = np.concatenate([nb_v.ravel(), nb_h.ravel()])
        ia = np.concatenate([a_v.reshape(-1, 2), a_h.reshape(-1, 2)])
        ib = np.concatenate([b_v.reshape(-1, 2), b_h.reshape(-1, 2)])

        # boundary faces, each edge ordered so the outward normal is on its right
        sides = [
            (V[0, :-1], V[0, 1:], cells[0, :]),  # S: left -> right
            (V[:-1, -1], V[1:, -1], cells[:, -1]),  # E: bottom -> top
            (V[-1, 1:], V[-1, :-1], cells[-1, :]),  # N: right -> left
            (V[1:, 0], V[:-1, 0], cells[:, 0]),  # W: top -> bottom
        ]
        ba = np.concatenate([s[0] for s in sides])
        bb = np.concatenate([s[1] for s in sides])
        bcell = np.concatenate([s[2] for s in sides])
        bside = np.concatenate([np.full(len(s[2]), k) for k, s in enumerate(sides)])

        return cls(
            cell_area=area.ravel(),
            cell_centroid=centroid.reshape(-1, 2),
            iface_owner=iface_owner,
            iface_neigh=iface_neigh,
            iface_center=0.5 * (ia + ib),
            iface_normal=right_normal(ia, ib),
            bface_cell=bcell,
            bface_side=bside,
            bface_center=0.5 * (ba + bb),
            bface_normal=right_normal(ba, bb),
        )


@dataclass(frozen=True)
class QualityReport:
    min_area: float
    max_skewness: float
    max_nonorthogonality: float
    passed: bool

    @property
    def pass_(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {
            "min_area": self.min_area,
            "max_skewness": self.max_skewness,
            "max_nonorthogonality": self.max_nonorthogonality,
            "pass": self.passed,
        }


def generate_mesh(
    nx: int,
    ny: int,
    domain: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    bump: tuple[float, float] | None = None,
) -> StructuredMesh:
    """Uniform ``nx`` x ``ny`` mesh of ``domain = (x0, x1, y0, y1)``.

    South faces whose midpoint lies in ``bump = (xa, xb)`` form the ``bump``
    patch; the remaining south faces are ``bottom``.
    """
    if nx < 4 or ny < 4:
        raise ConfigError(f"mesh needs at least 4 cells per axis, got {nx}x{ny}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ConfigError(f"degenerate domain {domain}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    south = np.arange(nx)
    patches = {
        "outlet": nx + np.arange(ny),
        "top": nx + ny + np.arange(nx),
        "inlet": 2 * nx + ny + np.arange(ny),
    }
    if bump is not None:
        xa, xb = bump
        mid = 0.5 * (xs[:-1] + xs[1:])
        on_bump = (mid >= xa) & (mid <= xb)
        if not np.any(on_bump):
            raise ConfigError(f"bump interval {bump} covers no bottom face")
        patches["bump"] = south[on_bump]
        patches["bottom"] = south[~on_bump]
    else:
        patches["bottom"] = south
    patches = {k: v for k, v in patches.items() if v.size}
    return StructuredMesh(nx, ny, vertices, patches)


def morph_mesh(mesh: StructuredMesh, lattice: FFDLattice) -> StructuredMesh:
    """Move every vertex through the FFD map; connectivity and patches are kept."""
    return StructuredMesh(mesh.nx, mesh.ny, deform_points(lattice, mesh.vertices), mesh.patches)


# Metrics below this are round-off on an orthogonal grid and are reported as 0.
_ROUNDOFF = 1e-9  # metric values below this are centroid roundoff


def face_metrics(mesh: StructuredMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-face skewness (interior faces) and non-orthogonality in degrees.

    Returns ``(skewness, nonortho_interior, nonortho_boundary)``.
    """
    g = mesh.geometry
    cp, cn = g.cell_centroid[g.iface_owner], g.cell_centroid[g.iface_neigh]
    length = np.linalg.norm(g.iface_normal, axis=1)
    skew = np.linalg.norm(g.iface_center - 0.5 * (cp + cn), axis=1) / length
    skew[skew < _ROUNDOFF] = 0.0

    def angle(u, v):
        ang = np.degrees(np.arctan2(np.abs(_cross(u, v)), np.einsum("ij,ij->i", u, v)))
        ang[ang < _ROUNDOFF] = 0.0
        return ang

    nonortho_i = angle(cn - cp, g.iface_normal)
    nonortho_b = angle(g.bface_center - g.cell_centroid[g.bface_cell], g.bface_normal)
    return skew, nonortho_i, nonortho_b


def check_quality(mesh: StructuredMesh, skew_limit: float = 0.5, ortho_limit: float = 70.0) -> QualityReport:
    """Screen a mesh; a bad mesh gives ``passed=False`` rather than an exception."""
    g = mesh.geometry
    min_area = float(g.cell_area.min())
    with np.errstate(invalid="ignore", divide="ignore"):
        skew, no_i, no_b = face_metrics(mesh)
    max_skew = float(np.nanmax(skew)) if skew.size else 0.0
    max_no = float(np.nanmax(np.concatenate([no_i, no_b])))
    finite = np.isfinite(max_skew) and np.isfinite(max_no)
    passed = bool(finite and min_area > 0 and max_skew <= skew_limit and max_no <= ortho_limit)
    return QualityReport(min_area, max_skew, max_no, passed)
