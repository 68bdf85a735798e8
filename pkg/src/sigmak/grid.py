"""Uniform grids in Fermi coordinates and second-order difference operators.

Two chart types:

* ``BoxGrid``: tangential axes on [-1, 1], the normal axis x_n (last axis)
  on [0, 1]. The face x_n = 0 is the umbilic boundary; every other face is
  a "framed" face carrying Dirichlet data from a reference solution.
* ``RadialGrid``: r in [0, R] for radially symmetric fields; r = 0 is closed
  by evenness.
"""
import csv
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ParameterError

MIN_POINTS = 5


@dataclass(frozen=True)
class BoxGrid:
    n: int
    points: tuple
    extents: tuple = dc_field(default=None)

    def __post_init__(self):
        pts = tuple(int(p) for p in np.broadcast_to(self.points, (self.n,)))
        if self.n < 2:
            raise ParameterError("box grid needs n >= 2", n=self.n)
        if min(pts) < MIN_POINTS:
            raise ParameterError(f"need at least {MIN_POINTS} points per axis", points=pts)
        object.__setattr__(self, "points", pts)
        if self.extents is None:
            ext = tuple([(-1.0, 1.0)] * (self.n - 1) + [(0.0, 1.0)])
        else:
            ext = tuple((float(a), float(b)) for a, b in self.extents)
        object.__setattr__(self, "extents", ext)

    kind = "box"

    @property
    def shape(self):
        return self.points

    @property
    def h(self):
        return tuple((b - a) / (p - 1) for (a, b), p in zip(self.extents, self.points))

    @property
    def hmax(self):
        return max(self.h)

    def axes(self):
        return [np.linspace(a, b, p) for (a, b), p in zip(self.extents, self.points)]

    def coordinates(self):
        """Point coordinates, shape (*points, n)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def sigma_mask(self):
        """Points on the umbilic face x_n = 0, excluding its rim on framed faces."""
        m = np.zeros(self.shape, dtype=bool)
        m[..., 0] = True
        return m & ~self._tangential_rim()

    def framed_mask(self):
        m = self._tangential_rim()
        m[..., -1] = True
        return m

    def interior_mask(self):
        return ~(self.sigma_mask() | self.framed_mask() | self._normal_face())

    def _tangential_rim(self):
        m = np.zeros(self.shape, dtype=bool)
        for ax in range(self.n - 1):
            idx = [slice(None)] * self.n
            idx[ax] = 0
            m[tuple(idx)] = True
            idx[ax] = -1
            m[tuple(idx)] = True
        return m

    def _normal_face(self):
        m = np.zeros(self.shape, dtype=bool)
        m[..., 0] = True
        return m

    def header(self):
        return {"type": "box", "n": self.n, "points": list(self.points),
                "extents": [list(e) for e in self.extents], "h": list(self.h)}


@dataclass(frozen=True)
class RadialGrid:
    R: float
    points: int
    n: int = 3

    kind = "radial"

    def __post_init__(self):
        if not self.R > 0:
            raise ParameterError("radial grid needs R > 0", R=self.R)
        if self.points < MIN_POINTS:
            raise ParameterError(f"need at least {MIN_POINTS} points", points=self.points)
        if self.n < 2:
            raise ParameterError("ambient dimension must be >= 2", n=self.n)

    @property
    def shape(self):
        return (self.points,)

    @property
    def h(self):
        return self.R / (self.points - 1)

    @property
    def hmax(self):
        return self.h

    @property
    def r(self):
        return np.linspace(0.0, self.R, self.points)

    def coordinates(self):
        return self.r[:, None]

    def header(self):
        return {"type": "radial", "R": self.R, "points": self.points, "n": self.n,
                "h": self.h}


@dataclass(frozen=True)
class Field:
    grid: object
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != tuple(self.grid.shape):
            raise ParameterError("field values do not match grid shape",
                                 values=list(v.shape), grid=list(self.grid.shape))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(coords)`` where coords has shape (..., n) (box) or (N,) radii."""
        if grid.kind == "radial":
            return cls(grid, func(grid.r))
        return cls(grid, func(grid.coordinates()))


# -- one-dimensional stencils -------------------------------------------------

def first_difference(v, h, axis):
    """Central interior, second-order one-sided at both ends."""
    return np.gradient(v, h, axis=axis, edge_order=2)


def second_difference(v, h, axis):
    v = np.moveaxis(np.asarray(v, dtype=float), axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


# -- field operators ----------------------------------------------------------

def gradient(field, bd=None):
    """List of derivative fields, one per axis.

    With boundary data ``bd`` the box normal derivative on x_n = 0 comes from
    the ghost layer, i.e. equals the imposed value mu_hat e^{-u} - mu.
    """
    g = field.grid
    if g.kind == "radial":
        return [Field(g, radial_derivatives(field)[0])]
    v = field.values if bd is None else neumann_ghost_closure(field, bd)
    out = []
    for ax, h in enumerate(g.h):
        d = first_difference(v, h, ax)
        if bd is not None:
            d = d[..., 1:]
        out.append(Field(g, d))
    return out


def hessian(field, bd=None):
    """Hessian array of shape (*points, n, n); symmetric by construction."""
    g = field.grid
    if g.kind == "radial":
        return radial_derivatives(field)[1][:, None, None]
    v = field.values if bd is None else neumann_ghost_closure(field, bd)
    n, h = g.n, g.h
    H = np.empty(v.shape + (n, n))
    firsts = [first_difference(v, h[a], a) for a in range(n)]
    for a in range(n):
        H[..., a, a] = second_difference(v, h[a], a)
        for b in range(a + 1, n):
            mixed = first_difference(firsts[a], h[b], b)
            H[..., a, b] = mixed
            H[..., b, a] = mixed
    if bd is not None:
        # the x_n = 0 row is interior to the ghosted array, so its normal
        # stencils above were already centered
        H = H[..., 1:, :, :]
    return H


def radial_derivatives(field):
    """(u_r, u_rr) on a radial grid; evenness at r = 0, one-sided at r = R."""
    u = field.values
    h = field.grid.h
    ur = np.empty_like(u)
    urr = np.empty_like(u)
    ur[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    ur[0] = 0.0
    ur[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    urr[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    urr[0] = 2.0 * (u[1] - u[0]) / h**2
    urr[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / h**2
    return ur, urr


def neumann_ghost_closure(field, bd):
    """Values with one ghost layer at x_n = -h prepended along the normal axis.

    The ghost is the reflection u(-h) = u(h) - 2h (mu_hat e^{-u(0)} - mu), so the
    centered normal derivative at x_n = 0 is exactly the imposed one.
    """
    g = field.grid
    if g.kind != "box":
        raise ParameterError("ghost closure applies to box grids only")
    v = field.values
    h = g.h[-1]
    target = bd.mu_hat * np.exp(-v[..., 0]) - bd.mu
    ghost = v[..., 1] - 2.0 * h * target
    return np.concatenate([ghost[..., None], v], axis=-1)


def norms(field):
    """(sup, rms) of the field values."""
    v = np.asarray(field.values if isinstance(field, Field) else field, dtype=float)
    if v.size == 0:
        return 0.0, 0.0
    return float(np.max(np.abs(v))), float(np.sqrt(np.mean(v * v)))


# -- serialization ------------------------------------------------------------

def write_field(field, csv_path, header_path=None):
    """CSV rows of (coordinates..., value); optional JSON grid header."""
    g = field.grid
    coords = g.coordinates().reshape(-1, g.coordinates().shape[-1])
    vals = field.values.reshape(-1)
    names = ["r"] if g.kind == "radial" else [f"x{i + 1}" for i in range(g.n)]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["value"])
        for c, v in zip(coords, vals):
            w.writerow([repr(float(x)) for x in c] + [repr(float(v))])
    if header_path is not None:
        with open(header_path, "w") as fh:
            json.dump(g.header(), fh, indent=2)


def grid_from_header(header):
    if header["type"] == "box":
        return BoxGrid(header["n"], tuple(header["points"]),
                       tuple(tuple(e) for e in header["extents"]))
    if header["type"] == "radial":
        return RadialGrid(header["R"], header["points"], header.get("n", 3))
    raise ParameterError(f"unknown grid type {header['type']!r}")


def read_field(csv_path, header_path):
    with open(header_path) as fh:
        g = grid_from_header(json.load(fh))
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    vals = np.array([float(r[-1]) for r in rows])
    return Field(g, vals.reshape(g.shape))
