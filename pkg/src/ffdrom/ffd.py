"""Free-form deformation of points through a Bernstein control lattice.

The deformation is the composition of an axis-aligned affine map onto the
unit box, a tensor-product Bernstein blend of displaced control points, and
the inverse affine map.  Displacements live in reference coordinates, so a
displacement of 0.1 along x moves a control point by a tenth of the box
length in x.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import BoundsError, ConfigError, DomainError

MAX_DEGREE = 20
_BINOM = [np.array([comb(n, i) for i in range(n + 1)], dtype=float) for n in range(MAX_DEGREE + 1)]


def bernstein(i: int, n: int, t: float) -> float:
    """Bernstein polynomial ``C(n, i) t**i (1 - t)**(n - i)``."""
    if not 0 <= i <= n:
        raise DomainError(f"bernstein index {i} outside [0, {n}]")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"bernstein argument {t} outside [0, 1]")
    coeff = _BINOM[n][i] if n <= MAX_DEGREE else float(comb(n, i))
    return float(coeff * t**i * (1.0 - t) ** (n - i))


def bernstein_all(n: int, t: np.ndarray) -> np.ndarray:
    """All degree-``n`` Bernstein values at ``t``; shape ``t.shape + (n + 1,)``."""
    if n > MAX_DEGREE:
        raise ConfigError(f"lattice degree {n} exceeds {MAX_DEGREE}")
    t = np.asarray(t, dtype=float)[..., None]
    i = np.arange(n + 1)
    return _BINOM[n] * t**i * (1.0 - t) ** (n - i)


def bernstein_derivative_all(n: int, t: np.ndarray) -> np.ndarray:
    """d/dt of :func:`bernstein_all`, via ``n (B_{i-1,n-1} - B_{i,n-1})``."""
    t = np.asarray(t, dtype=float)
    low = bernstein_all(n - 1, t)
    out = np.zeros(t.shape + (n + 1,))
    out[..., 1:] += low
    out[..., :-1] -= low
    return n * out


@dataclass(frozen=True)
class FFDLattice:
    """Axis-aligned control box with per-control-point displacements.

    ``displacements`` has shape ``dims + (d,)`` and is expressed in reference
    (unit box) coordinates.
    """

    origin: np.ndarray
    box_lengths: np.ndarray
    dims: tuple[int, ...]
    displacements: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=float).copy()
        lengths = np.asarray(self.box_lengths, dtype=float).copy()
        dims = tuple(int(n) for n in self.dims)
        d = len(dims)
        if origin.shape != (d,) or lengths.shape != (d,):
            raise ConfigError("origin, box_lengths and dims must share one dimension")
        if any(n < 2 for n in dims):
            raise ConfigError(f"each lattice axis needs at least 2 control points, got {dims}")
        if any(n - 1 > MAX_DEGREE for n in dims):
            raise ConfigError(f"lattice degree above {MAX_DEGREE} is not supported")
        if not np.all(lengths > 0):
            raise ConfigError("box_lengths must be strictly positive")
        if self.displacements is None:
            disp = np.zeros(dims + (d,))
        else:
            disp = np.array(self.displacements, dtype=float)
            if disp.size != int(np.prod(dims)) * d:
                raise ConfigError(
                    f"expected {int(np.prod(dims))} displacement vectors, got array of shape {disp.shape}"
                )
            disp = disp.reshape(dims + (d,))
        for arr in (origin, lengths, disp):
            arr.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "box_lengths", lengths)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "displacements", disp)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.box_lengths

    def with_displacements(self, displacements: np.ndarray) -> FFDLattice:
        return FFDLattice(self.origin, self.box_lengths, self.dims, displacements)

    def reference_grid(self) -> np.ndarray:
        """Unperturbed control points in reference coordinates, shape ``dims + (d,)``."""
        axes = [np.linspace(0.0, 1.0, n) for n in self.dims]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def control_points(self) -> np.ndarray:
        """Displaced control points in physical coordinates."""
        return self.origin + self.box_lengths * (self.reference_grid() + self.displacements)

    def to_dict(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "box_lengths": self.box_lengths.tolist(),
            "dims": list(self.dims),
        }

    @classmethod
    def from_dict(cls, data: dict) -> FFDLattice:
        return cls(np.array(data["origin"]), np.array(data["box_lengths"]), tuple(data["dims"]))


@dataclass(frozen=True)
class BindingEntry:
    index: tuple[int, ...]
    axis: int
    parameter: int
    scale: float = 1.0


@dataclass(frozen=True)
class ParameterBinding:
    """Maps a parameter vector onto control-point displacements."""

    entries: tuple[BindingEntry, ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        entries = tuple(
            e if isinstance(e, BindingEntry) else BindingEntry(tuple(e[0]), int(e[1]), int(e[2]), float(e[3]))
            for e in self.entries
        )
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        for lo, hi in bounds:
            if not lo < hi:
                raise ConfigError(f"parameter bounds must satisfy lower < upper, got ({lo}, {hi})")
        for e in entries:
            if not 0 <= e.parameter < len(bounds):
                raise ConfigError(f"binding entry refers to unknown parameter {e.parameter}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "bounds", bounds)

    @property
    def parameter_dim(self) -> int:
        return len(self.bounds)

    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def corners(self) -> np.ndarray:
        """The ``2**n`` vertices of the parameter box."""
        return np.array(list(itertools.product(*self.bounds)))

    def check(self, mu: np.ndarray) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.shape != (self.parameter_dim,):
            raise BoundsError(f"expected {self.parameter_dim} parameters, got {mu.shape[0]}")
        if not np.all(np.isfinite(mu)) or np.any(mu < self.lower()) or np.any(mu > self.upper()):
            raise BoundsError(f"parameter {mu.tolist()} outside bounds {list(self.bounds)}")
        return mu

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"index": list(e.index), "axis": e.axis, "parameter": e.parameter, "scale": e.scale}
                for e in self.entries
            ],
            "bounds": [list(b) for b in self.bounds],
        }

    @classmethod
    def from_dict(cls, data: dict) -> ParameterBinding:
        entries = tuple(
            BindingEntry(tuple(e["index"]), int(e["axis"]), int(e["parameter"]), float(e.get("scale", 1.0)))
            for e in data["entries"]
        )
        return cls(entries, tuple(tuple(b) for b in data["bounds"]))


def to_reference(lattice: FFDLattice, p: np.ndarray) -> np.ndarray:
    """Affine map of a physical point onto the unit box.

    Raises :class:`DomainError` for points outside the lattice box.
    """
    p = np.asarray(p, dtype=float)
    if not _inside(lattice, p[None, :])[0]:
        raise DomainError(f"point {p.tolist()} lies outside the FFD box")
    return (p - lattice.origin) / lattice.box_lengths


def apply_parameters(binding: ParameterBinding, mu, base: FFDLattice) -> FFDLattice:
    mu = binding.check(mu)
    disp = np.zeros(base.dims + (base.ndim,))
    for e in binding.entries:
        if len(e.index) != base.ndim or any(not 0 <= k < n for k, n in zip(e.index, base.dims)):
            raise ConfigError(f"binding index {e.index} outside lattice dims {base.dims}")
        if not 0 <= e.axis < base.ndim:
            raise ConfigError(f"binding axis {e.axis} invalid for a {base.ndim}-d lattice")
        disp[e.index + (e.axis,)] += e.scale * mu[e.parameter]
    return base.with_displacements(disp)


def _inside(lattice: FFDLattice, pts: np.ndarray) -> np.ndarray:
    return np.all((pts >= lattice.origin) & (pts <= lattice.upper), axis=1)


def _blend(lattice: FFDLattice, s: np.ndarray) -> np.ndarray:
    """Sum of displacement vectors weighted by the tensor-product Bernstein basis."""
    weights = [bernstein_all(n - 1, s[:, a]) for a, n in enumerate(lattice.dims)]
    if lattice.ndim == 2:
        return np.einsum("pi,pj,ijc->pc", weights[0], weights[1], lattice.displacements)
    if lattice.ndim == 3:
        return np.einsum("pi,pj,pk,ijkc->pc", weights[0], weights[1], weights[2], lattice.displacements)
    raise ConfigError("only 2-d and 3-d lattices are supported")


def deform_points(lattice: FFDLattice, points: np.ndarray) -> np.ndarray:
    """Vectorised :func:`deform_point` over an ``(npts, d)`` array.

    Uses the displacement form ``p + L * sum(d B)``: the undisplaced grid term
    reproduces ``s`` exactly (linear precision of the Bernstein basis), and
    keeping it out makes the zero-displacement map bit-exact.
    """
    pts = np.asarray(points, dtype=float)
    out = pts.copy()
    if not np.any(lattice.displacements):
        return out
    mask = _inside(lattice, pts)
    if np.any(mask):
        s = (pts[mask] - lattice.origin) / lattice.box_lengths
        out[mask] = pts[mask] + lattice.box_lengths * _blend(lattice, s)
    return out


def deform_point(lattice: FFDLattice, p) -> np.ndarray:
    return deform_points(lattice, np.asarray(p, dtype=float)[None, :])[0]


def jacobian(lattice: FFDLattice, p) -> np.ndarray:
    """Spatial derivative of the deformation at ``p`` (inside the box)."""
    s = to_reference(lattice, p)
    d = lattice.ndim
    vals = [bernstein_all(n - 1, s[a]) for a, n in enumerate(lattice.dims)]
    ders = [bernstein_derivative_all(n - 1, s[a]) for a, n in enumerate(lattice.dims)]
    grad = np.empty((d, d))  # grad[c, b] = d(blend_c)/d(s_b)
    for b in range(d):
        factors = [ders[a] if a == b else vals[a] for a in range(d)]
        if d == 2:
            grad[:, b] = np.einsum("i,j,ijc->c", *factors, lattice.displacements)
        else:
            grad[:, b] = np.einsum("i,j,k,ijkc->c", *factors, lattice.displacements)
    return np.eye(d) + grad * lattice.box_lengths[:, None] / lattice.box_lengths[None, :]
