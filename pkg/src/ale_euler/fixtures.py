"""Named velocity fixtures and generators used by configurations and tests."""

from __future__ import annotations

import numpy as np

from . import fields as afields
from .coefficients import CoefficientSet
from .elliptic import VelocityView
from .errors import ConfigError
from .grid import Grid
from .snapshots import read_snapshot


def shear_flow(amplitude: float = 1.0) -> afields.AnalyticVector:
    """Steady shear v = amplitude (sin 2 pi z, cos 2 pi z, 0): an exact
    steady solution of the classical reduction (zero advection, constant
    pressure, zero wall-normal velocity)."""
    return afields.AnalyticVector([
        afields.AnalyticScalar([afields.scalar_term(amplitude, None, None, ("sin", 2))]),
        afields.AnalyticScalar([afields.scalar_term(amplitude, None, None, ("cos", 2))]),
        afields.AnalyticScalar([]),
    ])


def divergence_free_view(cs: CoefficientSet, potential: afields.AnalyticVector,
                         t: float = 0.0) -> VelocityView:
    """Velocity with vanishing variable divergence, built by pulling a
    solenoidal field back through the coefficient rows: solve
    b_{ji} v_i = (curl A)_j nodewise.  Values and exact gradients."""
    g = cs.grid
    s = cs.sample(t)
    u_field = potential.curl()
    u = u_field.eval(g, t)
    gu = u_field.grad(g, t)
    B = s.b
    v = np.linalg.solve(B, u[..., None])[..., 0]
    gb = s.grad_b
    dv = np.empty(g.shape + (3, 3))
    for l in range(3):
        rhs = gu[..., l, :] - np.einsum("...ji,...i->...j", gb[..., l, :, :], v)
        dv[..., l, :] = np.linalg.solve(B, rhs[..., None])[..., 0]
    return VelocityView(v, dv)


def random_divergence_free_view(cs: CoefficientSet, rng, amplitude: float,
                                t: float = 0.0) -> VelocityView:
    """Random solenoidal fixture normalized so max|v| = amplitude."""
    pot = afields.random_wall_safe_potential(rng, 1.0)
    view = divergence_free_view(cs, pot, t)
    scale = amplitude / max(float(np.abs(view.values).max()), 1e-30)
    return VelocityView(scale * view.values, scale * view.grad)


def initial_velocity(kind: str, grid: Grid, cs: CoefficientSet,
                     amplitude: float = 0.1, seed: int = 0,
                     path: str = "") -> np.ndarray:
    """Initial-condition dispatch for the shipped configuration kinds."""
    if kind == "zero":
        return np.zeros(grid.shape + (3,))
    if kind == "shear":
        return shear_flow(amplitude).eval(grid, 0.0)
    if kind == "ale_divfree":
        from .elliptic import project_velocity
        rng = np.random.default_rng(seed)
        raw = random_divergence_free_view(cs, rng, amplitude).values
        # land well inside the discrete constraint set, not just O(h^2) near it
        return project_velocity(cs, raw, 0.0, sweeps=4).data
    if kind == "psi":
        return cs.sample(0.0).psi.copy()
    if kind == "file":
        if not path:
            raise ConfigError("initial.kind = 'file' requires initial.path")
        snap = read_snapshot(path)
        if "v" not in snap.fields:
            raise ConfigError(f"snapshot {path} has no velocity field 'v'")
        if snap.grid != grid:
            raise ConfigError("initial-condition snapshot grid does not match")
        return snap.fields["v"].data.copy()
    raise ConfigError(f"unknown initial-condition kind '{kind}'")
