"""Discrete differential operators and norms on the channel grid.

Derivatives are second-order centered stencils; in the wall-normal
direction the wall rows use one-sided second-order stencils.  Two stencil
variants exist for special purposes:

* ``ddz_flux``: first-order one-sided wall rows chosen so that the
  discrete divergence theorem  sum_w D(f) = f(top) - f(bottom)  holds
  exactly against the trapezoid weights (summation-by-parts pairing).
  Used when assembling divergence-form right-hand sides whose integral
  must match a boundary integral to machine precision.
* ``ddz_advect``: third-order one-sided wall rows, used for the advection
  derivative in the transport stage.

Index conventions for gradients (derivative index first):
  grad_scalar(q)[..., k]      = d_k q
  grad_vector(v)[..., k, i]   = d_k v_i
  grad_matrix(m)[..., l, j, i] = d_l m_{ji}

Norms: integer-order Sobolev norms are finite-difference derivative sums
against the grid quadrature; the BMO seminorm scans a dyadic family of
axis-aligned cubes (sides 2^k cells, anchors at half-side stride,
periodic wrap in x,y, clipped at the walls) plus the whole domain, and is
a documented lower bound of the true discrete BMO within a factor of 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GridError
from .grid import Grid, ScalarField, VectorField, _as_array, integrate_volume

EPS3 = np.zeros((3, 3, 3))
EPS3[0, 1, 2] = EPS3[1, 2, 0] = EPS3[2, 0, 1] = 1.0
EPS3[0, 2, 1] = EPS3[2, 1, 0] = EPS3[1, 0, 2] = -1.0


# ---------------------------------------------------------------------------
# first derivatives

def ddx(f: np.ndarray, grid: Grid) -> np.ndarray:
    return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * grid.hx)


def ddy(f: np.ndarray, grid: Grid) -> np.ndarray:
    return (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2.0 * grid.hy)


def ddz(f: np.ndarray, grid: Grid) -> np.ndarray:
    h = grid.hz
    out = np.empty_like(f)
    out[:, :, 1:-1] = (f[:, :, 2:] - f[:, :, :-2]) / (2.0 * h)
    out[:, :, 0] = (-3.0 * f[:, :, 0] + 4.0 * f[:, :, 1] - f[:, :, 2]) / (2.0 * h)
    out[:, :, -1] = (3.0 * f[:, :, -1] - 4.0 * f[:, :, -2] + f[:, :, -3]) / (2.0 * h)
    return out


def ddz_flux(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Wall rows (f1-f0)/h and (fN-fN-1)/h: exact summation by parts
    against the trapezoid weights."""
    h = grid.hz
    out = np.empty_like(f)
    out[:, :, 1:-1] = (f[:, :, 2:] - f[:, :, :-2]) / (2.0 * h)
    out[:, :, 0] = (f[:, :, 1] - f[:, :, 0]) / h
    out[:, :, -1] = (f[:, :, -1] - f[:, :, -2]) / h
    return out


def ddz_advect(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Third-order one-sided wall rows (advection stencil)."""
    h = grid.hz
    out = np.empty_like(f)
    out[:, :, 1:-1] = (f[:, :, 2:] - f[:, :, :-2]) / (2.0 * h)
    out[:, :, 0] = (-11.0 * f[:, :, 0] + 18.0 * f[:, :, 1]
                    - 9.0 * f[:, :, 2] + 2.0 * f[:, :, 3]) / (6.0 * h)
    out[:, :, -1] = (11.0 * f[:, :, -1] - 18.0 * f[:, :, -2]
                     + 9.0 * f[:, :, -3] - 2.0 * f[:, :, -4]) / (6.0 * h)
    return out


_DERIVS = (ddx, ddy, ddz)


def deriv(f: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    return _DERIVS[axis](f, grid)


def grad_scalar(q: np.ndarray, grid: Grid) -> np.ndarray:
    return np.stack([ddx(q, grid), ddy(q, grid), ddz(q, grid)], axis=-1)


def grad_vector(v: np.ndarray, grid: Grid) -> np.ndarray:
    """G[..., k, i] = d_k v_i for v of shape (nx,ny,nz,3)."""
    return np.stack([ddx(v, grid), ddy(v, grid), ddz(v, grid)], axis=-2)


def grad_matrix(m: np.ndarray, grid: Grid) -> np.ndarray:
    """G[..., l, j, i] = d_l m_{ji} for m of shape (nx,ny,nz,3,3)."""
    return np.stack([ddx(m, grid), ddy(m, grid), ddz(m, grid)], axis=-3)


# ---------------------------------------------------------------------------
# vector calculus

def gradient(f, grid: Grid | None = None) -> VectorField:
    """Gradient of a scalar field."""
    if isinstance(f, ScalarField):
        grid = f.grid
    return VectorField(grid, grad_scalar(_as_array(f), grid))


def divergence(v, grid: Grid | None = None) -> ScalarField:
    if isinstance(v, VectorField):
        grid = v.grid
    d = _as_array(v)
    out = ddx(d[..., 0], grid) + ddy(d[..., 1], grid) + ddz(d[..., 2], grid)
    return ScalarField(grid, out)


def variable_divergence(v, b, grid: Grid | None = None) -> ScalarField:
    """b_{ji} d_j v_i."""
    if isinstance(v, VectorField):
        grid = v.grid
    gv = grad_vector(_as_array(v), grid)
    out = np.einsum("...ji,...ji->...", _as_array(b), gv)
    return ScalarField(grid, out)


def curl(v, grid: Grid | None = None) -> VectorField:
    if isinstance(v, VectorField):
        grid = v.grid
    gv = grad_vector(_as_array(v), grid)
    out = np.einsum("ijk,...jk->...i", EPS3, gv)
    return VectorField(grid, out)


def variable_curl(v, b, grid: Grid | None = None) -> VectorField:
    """zeta_i = eps_{ijk} b_{lj} d_l v_k; reduces to the classical curl
    for b = I (same stencils, same code path)."""
    if isinstance(v, VectorField):
        grid = v.grid
    gv = grad_vector(_as_array(v), grid)
    out = np.einsum("ijk,...lj,...lk->...i", EPS3, _as_array(b), gv)
    return VectorField(grid, out)


def wall_ddx(plane: np.ndarray, grid: Grid) -> np.ndarray:
    return (np.roll(plane, -1, axis=0) - np.roll(plane, 1, axis=0)) / (2.0 * grid.hx)


def wall_ddy(plane: np.ndarray, grid: Grid) -> np.ndarray:
    return (np.roll(plane, -1, axis=1) - np.roll(plane, 1, axis=1)) / (2.0 * grid.hy)


def tangential_derivative(f, k: int, grid: Grid | None = None):
    """Tangential wall derivative d^tau_k = (delta_{kl} - n_k n_l) d_l.

    On the flat walls this is d_x for k=1, d_y for k=2 and 0 for k=3.
    Accepts a full scalar field or a (bottom, top) pair of wall arrays;
    returns a (bottom, top) pair."""
    if isinstance(f, ScalarField):
        grid = f.grid
        walls = (f.data[:, :, 0], f.data[:, :, -1])
    elif isinstance(f, tuple):
        walls = (np.asarray(f[0], dtype=float), np.asarray(f[1], dtype=float))
    else:
        data = np.asarray(f, dtype=float)
        walls = (data[:, :, 0], data[:, :, -1])
    if grid is None:
        raise GridError("tangential_derivative needs a grid for bare arrays")
    if k == 1:
        return wall_ddx(walls[0], grid), wall_ddx(walls[1], grid)
    if k == 2:
        return wall_ddy(walls[0], grid), wall_ddy(walls[1], grid)
    if k == 3:
        return np.zeros_like(walls[0]), np.zeros_like(walls[1])
    raise GridError(f"tangential direction k must be 1, 2 or 3, got {k}")


# ---------------------------------------------------------------------------
# norms

def l2_norm(f, grid: Grid | None = None) -> float:
    if isinstance(f, (ScalarField, VectorField)):
        grid = f.grid
    d = _as_array(f)
    if d.ndim == 4:
        sq = (d * d).sum(axis=-1)
    else:
        sq = d * d
    return float(np.sqrt(max(integrate_volume(sq, grid), 0.0)))


def linf_norm(f) -> float:
    return float(np.abs(_as_array(f)).max())


def sobolev_norm(f, s: int, grid: Grid | None = None) -> float:
    """H^s norm, s in {0,1,2,3}: sqrt of the sum of ||D^alpha f||_L2^2
    over all multi-indices |alpha| <= s (mixed centered / one-sided
    stencils, applied by composition)."""
    if s not in (0, 1, 2, 3):
        raise GridError(f"integer Sobolev order must be 0..3, got {s}")
    if isinstance(f, (ScalarField, VectorField)):
        grid = f.grid
    d = _as_array(f)
    comps = [d[..., i] for i in range(d.shape[-1])] if d.ndim == 4 else [d]
    total = 0.0
    for comp in comps:
        level = {(0, 0, 0): comp}
        total += integrate_volume(comp * comp, grid)
        for _ in range(s):
            nxt = {}
            for alpha, arr in level.items():
                for ax in range(3):
                    beta = list(alpha)
                    beta[ax] += 1
                    beta = tuple(beta)
                    if beta not in nxt:
                        nxt[beta] = deriv(arr, ax, grid)
            for arr in nxt.values():
                total += integrate_volume(arr * arr, grid)
            level = nxt
    return float(np.sqrt(max(total, 0.0)))


def w1inf_norm(f, grid: Grid | None = None) -> float:
    """max over nodes of |f| and of every first-derivative component."""
    if isinstance(f, (ScalarField, VectorField)):
        grid = f.grid
    d = _as_array(f)
    worst = float(np.abs(d).max())
    for ax in range(3):
        worst = max(worst, float(np.abs(deriv(d, ax, grid)).max()))
    return worst


def log_plus(x: float) -> float:
    return max(0.0, float(np.log(x))) if x > 0.0 else 0.0


def _cube_levels(grid: Grid):
    kmax = int(np.log2(min(grid.nx, grid.ny)))
    return [2 ** k for k in range(1, kmax + 1)]


def bmo_norm(f, grid: Grid | None = None) -> float:
    """Mean-oscillation seminorm over the dyadic cube family plus the
    whole domain.  Means inside a cube are plain node averages."""
    if isinstance(f, (ScalarField, VectorField)):
        grid = f.grid
    d = _as_array(f)
    if d.ndim == 4:
        return max(bmo_norm(d[..., i], grid) for i in range(3))
    nx, ny, nz = grid.shape
    mean = d.mean()
    best = float(np.abs(d - mean).mean())
    for s in _cube_levels(grid):
        stride = s // 2
        fp = np.concatenate([d, d[: s - 1]], axis=0)
        fp = np.concatenate([fp, fp[:, : s - 1]], axis=1)
        # full-depth windows
        if nz >= s:
            win = sliding_window_view(fp, (s, s, s))
            win = win[::stride, ::stride, ::stride]
            m = win.mean(axis=(-3, -2, -1))
            osc = np.abs(win - m[..., None, None, None]).mean(axis=(-3, -2, -1))
            best = max(best, float(osc.max()))
        # wall-clipped windows near the top
        z0_first = ((nz - s) // stride + 1) * stride if nz >= s else 0
        for z0 in range(max(z0_first, 0), nz - 1, stride):
            depth = nz - z0
            if depth < 2:
                continue
            win = sliding_window_view(fp[:, :, z0:], (s, s), axis=(0, 1))
            win = win[::stride, ::stride]
            m = win.mean(axis=(2, -2, -1))
            osc = np.abs(win - m[:, :, None, None, None]).mean(axis=(2, -2, -1))
            best = max(best, float(osc.max()))
    return best


@dataclass
class NormReport:
    """One row of norm bookkeeping for a named field at a fixed time."""
    field: str
    t: float
    l2: float
    h1: float
    h2: float
    h3: float
    linf: float
    w1inf: float
    bmo: float

    CSV_HEADER = "t,field,l2,h1,h2,h3,linf,w1inf,bmo"

    def csv_row(self) -> str:
        return (f"{self.t!r},{self.field},{self.l2!r},{self.h1!r},{self.h2!r},"
                f"{self.h3!r},{self.linf!r},{self.w1inf!r},{self.bmo!r}")


def norm_report(name: str, f, t: float, grid: Grid | None = None) -> NormReport:
    if isinstance(f, (ScalarField, VectorField)):
        grid = f.grid
    d = _as_array(f)
    return NormReport(
        field=name, t=t,
        l2=l2_norm(d, grid),
        h1=sobolev_norm(d, 1, grid),
        h2=sobolev_norm(d, 2, grid),
        h3=sobolev_norm(d, 3, grid),
        linf=linf_norm(d),
        w1inf=w1inf_norm(d, grid),
        bmo=bmo_norm(d, grid),
    )
