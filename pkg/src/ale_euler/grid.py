"""Computational domain and field containers.

The domain is the periodic channel [0,1) x [0,1) x [0,1]: periodic in x and
y, solid flat walls at z = 0 and z = 1.  Nodes are vertex-centered on a
uniform grid; x and y omit the duplicate periodic node (hx = 1/nx,
hy = 1/ny) while z includes both walls (hz = 1/(nz-1)).

Arrays are laid out (nx, ny, nz) with any tensor components trailing, e.g.
a velocity field has shape (nx, ny, nz, 3) and a coefficient matrix
(nx, ny, nz, 3, 3).

Quadrature is the rectangle rule in the periodic directions and the
trapezoid rule in z; the combination is exact for fields linear in z and
for full-period trigonometric polynomials in x, y.
"""

from __future__ import annotations

import numpy as np

from .errors import GridError


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


class Grid:
    """Uniform node-centered grid on the periodic channel.

    nx, ny must be powers of two (>= 8): the dyadic cube scan used by the
    BMO norm relies on it.  nz >= 9 so the one-sided wall stencils fit.
    """

    def __init__(self, nx: int, ny: int, nz: int):
        if not (_is_power_of_two(nx) and nx >= 8):
            raise GridError(f"nx must be a power of two >= 8, got {nx}")
        if not (_is_power_of_two(ny) and ny >= 8):
            raise GridError(f"ny must be a power of two >= 8, got {ny}")
        if nz < 9:
            raise GridError(f"nz must be >= 9, got {nz}")
        self.nx, self.ny, self.nz = int(nx), int(ny), int(nz)
        self.hx = 1.0 / nx
        self.hy = 1.0 / ny
        self.hz = 1.0 / (nz - 1)
        self.x = np.arange(nx) * self.hx
        self.y = np.arange(ny) * self.hy
        self.z = np.linspace(0.0, 1.0, nz)

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def num_nodes(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def min_spacing(self) -> float:
        return min(self.hx, self.hy, self.hz)

    def mesh(self):
        """Broadcastable coordinate arrays X, Y, Z of shapes
        (nx,1,1), (1,ny,1), (1,1,nz)."""
        return (self.x[:, None, None], self.y[None, :, None],
                self.z[None, None, :])

    def node_weights(self) -> np.ndarray:
        """Quadrature weight per node (rectangle x,y + trapezoid z)."""
        wz = np.full(self.nz, self.hz)
        wz[0] *= 0.5
        wz[-1] *= 0.5
        w = np.empty(self.shape)
        w[...] = wz[None, None, :] * (self.hx * self.hy)
        return w

    @property
    def wall_weight(self) -> float:
        """Area weight of one wall node (rectangle rule on a wall plane)."""
        return self.hx * self.hy

    def nu_extension(self) -> "VectorField":
        """Smooth interior extension of the outward wall normal:
        nu(x) = (0, 0, 2z - 1); equals n on each wall."""
        data = np.zeros(self.shape + (3,))
        data[..., 2] = 2.0 * self.z[None, None, :] - 1.0
        return VectorField(self, data)

    def __eq__(self, other):
        return (isinstance(other, Grid)
                and self.shape == other.shape)

    def __hash__(self):
        return hash(self.shape)

    def __repr__(self):
        return f"Grid(nx={self.nx}, ny={self.ny}, nz={self.nz})"


class _Field:
    """Shared checks for the typed field containers."""

    _comp_shape: tuple = ()

    def __init__(self, grid: Grid, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        want = grid.shape + self._comp_shape
        if data.shape != want:
            raise GridError(
                f"{type(self).__name__} expects shape {want}, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise GridError(f"{type(self).__name__} contains non-finite values")
        self.grid = grid
        self.data = data

    def copy(self):
        return type(self)(self.grid, self.data.copy())

    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid, np.zeros(grid.shape + cls._comp_shape))


class ScalarField(_Field):
    _comp_shape = ()

    @classmethod
    def from_function(cls, grid: Grid, fn):
        X, Y, Z = grid.mesh()
        return cls(grid, np.broadcast_to(fn(X, Y, Z), grid.shape).copy())


class VectorField(_Field):
    _comp_shape = (3,)

    @classmethod
    def from_functions(cls, grid: Grid, fns):
        X, Y, Z = grid.mesh()
        data = np.zeros(grid.shape + (3,))
        for i, fn in enumerate(fns):
            data[..., i] = fn(X, Y, Z)
        return cls(grid, data)


class MatrixField(_Field):
    _comp_shape = (3, 3)

    @classmethod
    def identity(cls, grid: Grid):
        data = np.zeros(grid.shape + (3, 3))
        for i in range(3):
            data[..., i, i] = 1.0
        return cls(grid, data)


def _as_array(f):
    return f.data if isinstance(f, _Field) else np.asarray(f, dtype=np.float64)


def integrate_volume(f, grid: Grid | None = None) -> float:
    """Volume integral over the channel: rectangle rule in x,y, trapezoid
    in z.  Accepts a ScalarField or a bare (nx,ny,nz) array (then `grid`
    is required)."""
    if isinstance(f, _Field):
        grid = f.grid
    data = _as_array(f)
    if grid is None:
        raise GridError("integrate_volume needs a grid for bare arrays")
    if data.shape != grid.shape:
        raise GridError(f"expected shape {grid.shape}, got {data.shape}")
    col = data.sum(axis=(0, 1))
    s = 0.5 * (col[0] + col[-1]) + col[1:-1].sum()
    return float(s * grid.hx * grid.hy * grid.hz)


def integrate_boundary(f, grid: Grid | None = None) -> float:
    """Integral over both walls with the rectangle rule.  Accepts a
    ScalarField / full array (its z=0 and z=1 planes are used) or a
    (bottom, top) pair of (nx,ny) wall arrays."""
    if isinstance(f, tuple):
        bot, top = (np.asarray(w, dtype=np.float64) for w in f)
        if grid is None:
            raise GridError("integrate_boundary needs a grid for wall pairs")
        if bot.shape != (grid.nx, grid.ny) or top.shape != (grid.nx, grid.ny):
            raise GridError("wall arrays must have shape (nx, ny)")
        return float((bot.sum() + top.sum()) * grid.wall_weight)
    if isinstance(f, _Field):
        grid = f.grid
    data = _as_array(f)
    if grid is None:
        raise GridError("integrate_boundary needs a grid for bare arrays")
    return float((data[:, :, 0].sum() + data[:, :, -1].sum()) * grid.wall_weight)


def domain_volume(grid: Grid) -> float:
    """|Omega|; identically 1 for the unit channel, kept explicit so the
    mean-correction formulas read like their definitions."""
    return 1.0
