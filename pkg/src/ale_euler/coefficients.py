"""Coefficient data for the variable-coefficient Euler system.

A coefficient set supplies, at any time t, the matrix a and its cofactor
companions

    J = det(a^-1),    b = cof(a^-1)^T = J a,

together with the transport field psi and the time derivatives a_t, b_t,
J_t, psi_t.  Structural requirements: a invertible with J bounded away
from 0 and infinity, b row-divergence free (d_j b_{ji} = 0, checked
discretely), and the ellipticity of the pressure tensor c_{jk} =
b_{ji} a_{ki} = J a a^T.

Three generators are provided:

* identity coefficients (classical Euler reduction, psi = 0);
* coefficients induced by a channel deformation map
  Phi(x,t) = (x, y, z + z * eta(x,y,t) * chi(z)) with a quintic cutoff
  chi (chi(0)=0, chi(1)=1, chi' = chi'' = 0 at both ends), all
  derivatives in closed form;
* an identity-metric set with a prescribed wall-normal transport field
  psi = (0, 0, eps*t*z), the canonical violator of the flux
  compatibility condition (used for the inhomogeneous-divergence
  experiments);

plus ingestion of user-supplied key-framed fields from snapshot files,
gated on the Piola residual and determinant bounds (cubic interpolation
in time).
"""

from __future__ import annotations

import numpy as np

from . import fields as afields
from .calculus import ddx, ddy, ddz, grad_matrix, grad_vector
from .errors import CoefficientError
from .grid import (Grid, MatrixField, ScalarField, VectorField,
                   _as_array, domain_volume, integrate_boundary)

# quintic cutoff: chi(0)=0, chi(1)=1, vanishing first and second
# derivatives at both ends (descending-power coefficients)
CHI_COEFFS = np.array([6.0, -15.0, 10.0, 0.0, 0.0, 0.0])
ZCHI = np.concatenate([CHI_COEFFS, [0.0]])           # z*chi(z)
ZCHI_D1 = np.polyder(ZCHI)                           # (z*chi)'
ZCHI_D2 = np.polyder(ZCHI, 2)


class CoeffSample:
    """All coefficient arrays frozen at one time; gradients are computed
    lazily (they are only needed by assemblies and diagnostics)."""

    def __init__(self, t, a, b, J, a_t, b_t, J_t, psi, psi_t, grad_provider):
        self.t = t
        self.a, self.b, self.J = a, b, J
        self.a_t, self.b_t, self.J_t = a_t, b_t, J_t
        self.psi, self.psi_t = psi, psi_t
        self._grad_provider = grad_provider
        self._grads = None

    def _ensure_grads(self):
        if self._grads is None:
            self._grads = self._grad_provider(self.t)
        return self._grads

    @property
    def grad_b(self):
        """G[..., l, j, i] = d_l b_{ji}."""
        return self._ensure_grads()[0]

    @property
    def grad_a(self):
        return self._ensure_grads()[1]

    @property
    def grad_psi(self):
        """G[..., k, i] = d_k psi_i."""
        return self._ensure_grads()[2]

    def pressure_tensor(self):
        """c_{jk} = b_{ji} a_{ki}, symmetrized to kill roundoff skew."""
        c = np.einsum("...ji,...ki->...jk", self.b, self.a)
        return 0.5 * (c + np.swapaxes(c, -1, -2))


class CoefficientSet:
    """Base class: time-sampling interface plus shared certificates."""

    time_dependent = True

    def __init__(self, grid: Grid):
        self.grid = grid
        self._cache: dict[float, CoeffSample] = {}

    # subclasses implement _build_sample(t) -> CoeffSample
    def _build_sample(self, t: float) -> CoeffSample:
        raise NotImplementedError

    def sample(self, t: float) -> CoeffSample:
        key = 0.0 if not self.time_dependent else float(t)
        s = self._cache.get(key)
        if s is None:
            s = self._build_sample(key)
            if len(self._cache) > 6:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = s
        return s

    def certify_j_bounds(self, t0: float, t1: float, samples: int = 9):
        """Min/max of J over a time sweep; raises if J is not positively
        bounded below."""
        ts = np.linspace(t0, t1, samples) if self.time_dependent else [0.0]
        jmin, jmax = np.inf, -np.inf
        for t in ts:
            J = self.sample(float(t)).J
            jmin = min(jmin, float(J.min()))
            jmax = max(jmax, float(J.max()))
        if jmin <= 0.0:
            raise CoefficientError(f"J not positive over [{t0}, {t1}]: min {jmin}")
        self.j_min, self.j_max = jmin, jmax
        return jmin, jmax


def cofactor_fields(a, grid: Grid | None = None):
    """(b, J) from the matrix field a: J = det(a^-1) = 1/det(a) and
    b = cof(a^-1)^T = J a.  The identity a = J^-1 b then holds exactly."""
    if isinstance(a, MatrixField):
        grid = a.grid
    adata = _as_array(a)
    det = np.linalg.det(adata)
    bad = np.abs(det) <= 1e-12
    if bad.any():
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise CoefficientError(f"a is singular (|det| <= 1e-12) at node {loc}")
    J = 1.0 / det
    b = J[..., None, None] * adata
    return MatrixField(grid, b), ScalarField(grid, J)


def piola_residual(b, grid: Grid | None = None) -> VectorField:
    """r_i = d_j b_{ji}, by the standard stencils; vanishes identically
    for cofactors of deformation gradients at the continuum."""
    if isinstance(b, MatrixField):
        grid = b.grid
    bd = _as_array(b)
    out = np.empty(grid.shape + (3,))
    for i in range(3):
        out[..., i] = (ddx(bd[..., 0, i], grid) + ddy(bd[..., 1, i], grid)
                       + ddz(bd[..., 2, i], grid))
    return VectorField(grid, out)


def wall_normal_rows(sample: CoeffSample):
    """beta_i = n_j b_{ji} on each wall: (bottom, top) arrays (nx,ny,3).
    n = (0,0,-1) at z=0 and (0,0,+1) at z=1."""
    b = sample.b
    return -b[:, :, 0, 2, :], b[:, :, -1, 2, :]


def flux_integral(cs: CoefficientSet, v, t: float) -> float:
    """Boundary flux integral of v against the coefficient normal:
    int_{dOmega} n_j b_{ji} v_i."""
    s = cs.sample(t)
    vd = _as_array(v)
    bot, top = wall_normal_rows(s)
    fb = np.einsum("xyi,xyi->xy", bot, vd[:, :, 0, :])
    ft = np.einsum("xyi,xyi->xy", top, vd[:, :, -1, :])
    return integrate_boundary((fb, ft), cs.grid)


def compatibility_integral(cs: CoefficientSet, t: float) -> float:
    """int_{dOmega} d_t(n_j b_{ji} psi_i), expanded by the product rule
    (the wall normal is time-independent)."""
    s = cs.sample(t)
    g = cs.grid
    fb = (np.einsum("xyi,xyi->xy", -s.b_t[:, :, 0, 2, :], s.psi[:, :, 0, :])
          + np.einsum("xyi,xyi->xy", -s.b[:, :, 0, 2, :], s.psi_t[:, :, 0, :]))
    ft = (np.einsum("xyi,xyi->xy", s.b_t[:, :, -1, 2, :], s.psi[:, :, -1, :])
          + np.einsum("xyi,xyi->xy", s.b[:, :, -1, 2, :], s.psi_t[:, :, -1, :]))
    return integrate_boundary((fb, ft), g)


def divergence_target(cs: CoefficientSet, t: float) -> float:
    """Spatially constant divergence value carried by the transport data:
    |Omega|^-1 int_{dOmega} n_j b_{ji} psi_i."""
    s = cs.sample(t)
    return flux_integral(cs, s.psi, t) / domain_volume(cs.grid)


def ellipticity_certificate(cs: CoefficientSet, t: float):
    """(lambda_min, lambda_max) of the symmetrized pressure tensor over
    all nodes."""
    c = cs.sample(t).pressure_tensor()
    eig = np.linalg.eigvalsh(c)
    return float(eig[..., 0].min()), float(eig[..., -1].max())


# ---------------------------------------------------------------------------
# generators

class IdentityCoefficients(CoefficientSet):
    """a = b = I, J = 1, psi = 0: the classical Euler reduction."""

    time_dependent = False

    def _build_sample(self, t):
        g = self.grid
        eye = np.zeros(g.shape + (3, 3))
        for i in range(3):
            eye[..., i, i] = 1.0
        zero3 = np.zeros(g.shape + (3,))
        zero33 = np.zeros(g.shape + (3, 3))

        def grads(_t):
            z = np.zeros(g.shape + (3, 3, 3))
            return z, z.copy(), np.zeros(g.shape + (3, 3))

        return CoeffSample(t, eye, eye.copy(), np.ones(g.shape),
                           zero33, zero33.copy(), np.zeros(g.shape),
                           zero3, zero3.copy(), grads)


class AleMapCoefficients(CoefficientSet):
    """Coefficients from the channel deformation
    Phi(x,t) = (x, y, z + z*eta(x,y,t)*chi(z)).

    eta is an analytic displacement profile on the top wall (an
    AnalyticScalar in x, y, t); mean-zero eta preserves the channel
    volume and with it the flux compatibility condition.  All spatial
    and time derivatives are closed-form.
    """

    def __init__(self, grid: Grid, eta: afields.AnalyticScalar,
                 certify_span=(0.0, 1.0)):
        super().__init__(grid)
        self.eta = eta
        self._eta_cache: dict[tuple, np.ndarray] = {}
        self.certify_j_bounds(*certify_span)

    def _eta_plane(self, t, dx=0, dy=0, dt_=0):
        key = (float(t), dx, dy, dt_)
        arr = self._eta_cache.get(key)
        if arr is None:
            e = self.eta
            for _ in range(dx):
                e = e.dx()
            for _ in range(dy):
                e = e.dy()
            for _ in range(dt_):
                e = e.dt()
            arr = e.eval_xy(self.grid, t)
            if len(self._eta_cache) > 64:
                self._eta_cache.clear()
            self._eta_cache[key] = arr
        return arr

    def _g_arrays(self, t):
        """g1 = (z chi) eta_x, g2 = (z chi) eta_y, g3 = 1 + eta (z chi)',
        as (nx,ny,nz) arrays, plus their needed partials."""
        g = self.grid
        zchi = np.polyval(ZCHI, g.z)[None, None, :]
        w = np.polyval(ZCHI_D1, g.z)[None, None, :]
        eta = self._eta_plane(t)[:, :, None]
        ex = self._eta_plane(t, dx=1)[:, :, None]
        ey = self._eta_plane(t, dy=1)[:, :, None]
        return zchi, w, eta, ex, ey

    def _build_sample(self, t):
        g = self.grid
        zchi, w, eta, ex, ey = self._g_arrays(t)
        et = self._eta_plane(t, dt_=1)[:, :, None]
        ext = self._eta_plane(t, dx=1, dt_=1)[:, :, None]
        eyt = self._eta_plane(t, dy=1, dt_=1)[:, :, None]
        ett = self._eta_plane(t, dt_=2)[:, :, None]

        g1, g2, g3 = zchi * ex, zchi * ey, 1.0 + eta * w
        if g3.min() <= 0.0:
            raise CoefficientError(
                f"deformation map not invertible at t={t}: min det = {g3.min():.3e}")
        g1t, g2t, g3t = zchi * ext, zchi * eyt, et * w

        shape = g.shape
        b = np.zeros(shape + (3, 3))
        b[..., 0, 0] = g3
        b[..., 1, 1] = g3
        b[..., 2, 0] = -g1
        b[..., 2, 1] = -g2
        b[..., 2, 2] = 1.0
        J = g3.copy()

        b_t = np.zeros(shape + (3, 3))
        b_t[..., 0, 0] = g3t
        b_t[..., 1, 1] = g3t
        b_t[..., 2, 0] = -g1t
        b_t[..., 2, 1] = -g2t
        J_t = g3t * np.ones(shape)

        a = b / J[..., None, None]
        a_t = (b_t - a * J_t[..., None, None]) / J[..., None, None]

        psi = np.zeros(shape + (3,))
        psi[..., 2] = zchi * et
        psi_t = np.zeros(shape + (3,))
        psi_t[..., 2] = zchi * ett

        return CoeffSample(t, a, b, J, a_t, b_t, J_t, psi, psi_t,
                           self._grad_arrays)

    def _grad_arrays(self, t):
        g = self.grid
        zchi, w, eta, ex, ey = self._g_arrays(t)
        wprime = np.polyval(ZCHI_D2, g.z)[None, None, :]
        exx = self._eta_plane(t, dx=2)[:, :, None]
        exy = self._eta_plane(t, dx=1, dy=1)[:, :, None]
        eyy = self._eta_plane(t, dy=2)[:, :, None]
        et = self._eta_plane(t, dt_=1)[:, :, None]
        ext = self._eta_plane(t, dx=1, dt_=1)[:, :, None]
        eyt = self._eta_plane(t, dy=1, dt_=1)[:, :, None]
        one = np.ones(g.shape)

        # partials of g1, g2, g3 (derivative axis first: x, y, z)
        dg1 = (zchi * exx * one, zchi * exy * one, w * ex * one)
        dg2 = (zchi * exy * one, zchi * eyy * one, w * ey * one)
        dg3 = (ex * w * one, ey * w * one, eta * wprime * one)

        grad_b = np.zeros(g.shape + (3, 3, 3))
        for l in range(3):
            grad_b[..., l, 0, 0] = dg3[l]
            grad_b[..., l, 1, 1] = dg3[l]
            grad_b[..., l, 2, 0] = -dg1[l]
            grad_b[..., l, 2, 1] = -dg2[l]

        # a = b / J with J = g3: d(a) = (d(b) - a d(J)) / J
        s = self.sample(t)
        grad_a = np.empty_like(grad_b)
        for l in range(3):
            grad_a[..., l, :, :] = (grad_b[..., l, :, :]
                                    - s.a * dg3[l][..., None, None]) / s.J[..., None, None]

        grad_psi = np.zeros(g.shape + (3, 3))
        grad_psi[..., 0, 2] = zchi * ext * one
        grad_psi[..., 1, 2] = zchi * eyt * one
        grad_psi[..., 2, 2] = w * et * one
        return grad_b, grad_a, grad_psi


class FluxPsiCoefficients(CoefficientSet):
    """Identity metric with psi = (0, 0, eps*t*z).  The boundary flux of
    b psi grows linearly in time, so the compatibility condition fails
    by design and the induced divergence target is eps*t."""

    def __init__(self, grid: Grid, eps: float):
        super().__init__(grid)
        self.eps = float(eps)

    def _build_sample(self, t):
        g = self.grid
        eye = np.zeros(g.shape + (3, 3))
        for i in range(3):
            eye[..., i, i] = 1.0
        zcol = g.z[None, None, :] * np.ones(g.shape)
        psi = np.zeros(g.shape + (3,))
        psi[..., 2] = self.eps * t * zcol
        psi_t = np.zeros(g.shape + (3,))
        psi_t[..., 2] = self.eps * zcol

        def grads(tt):
            gb = np.zeros(g.shape + (3, 3, 3))
            gp = np.zeros(g.shape + (3, 3))
            gp[..., 2, 2] = self.eps * tt
            return gb, gb.copy(), gp

        return CoeffSample(t, eye, eye.copy(), np.ones(g.shape),
                           np.zeros(g.shape + (3, 3)), np.zeros(g.shape + (3, 3)),
                           np.zeros(g.shape), psi, psi_t, grads)


class FileCoefficients(CoefficientSet):
    """Key-framed nodal coefficients with cubic interpolation in time.

    Ingestion is gated: every keyframe must satisfy the discrete Piola
    residual tolerance and positive determinant bounds; spatial
    derivatives are taken with the grid stencils."""

    def __init__(self, grid: Grid, times, a_frames, psi_frames,
                 piola_tol: float = 1e-6):
        super().__init__(grid)
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise CoefficientError("need at least two keyframe times")
        if not np.all(np.diff(times) > 0):
            raise CoefficientError("keyframe times must be strictly increasing")
        a_frames = np.asarray(a_frames, dtype=float)
        psi_frames = np.asarray(psi_frames, dtype=float)
        if a_frames.shape != (len(times),) + grid.shape + (3, 3):
            raise CoefficientError("a keyframes have wrong shape")
        if psi_frames.shape != (len(times),) + grid.shape + (3,):
            raise CoefficientError("psi keyframes have wrong shape")
        for k in range(len(times)):
            b, J = cofactor_fields(a_frames[k], grid)
            res = float(np.abs(piola_residual(b).data).max())
            if res > piola_tol:
                raise CoefficientError(
                    f"keyframe {k}: Piola residual {res:.3e} exceeds {piola_tol:.1e}")
            if J.data.min() <= 0.0:
                raise CoefficientError(f"keyframe {k}: J not positive")
        from scipy.interpolate import CubicSpline
        self._a_spline = CubicSpline(times, a_frames, axis=0)
        self._psi_spline = CubicSpline(times, psi_frames, axis=0)

    def _build_sample(self, t):
        g = self.grid
        a = self._a_spline(t)
        a_t = self._a_spline(t, 1)
        psi = self._psi_spline(t)
        psi_t = self._psi_spline(t, 1)
        bf, Jf = cofactor_fields(a, g)
        b, J = bf.data, Jf.data
        # J = 1/det(a): J_t = -J * tr(a^-1 a_t); b = J a
        tr = np.einsum("...ij,...ji->...", np.linalg.inv(a), a_t)
        J_t = -J * tr
        b_t = J_t[..., None, None] * a + J[..., None, None] * a_t

        def grads(tt):
            s = self.sample(tt)
            return (grad_matrix(s.b, g), grad_matrix(s.a, g),
                    grad_vector(s.psi, g))

        return CoeffSample(t, a, b, J, a_t, b_t, J_t, psi, psi_t, grads)


def standard_eta(amplitude: float, frequency: int = 1, rate: float = 1.0,
                 volume_preserving: bool = True):
    """Displacement profile used by the shipped configurations: mean-zero
    modes with cos(rate t) profiles, so the wall starts at rest
    (psi(.,0) = 0 and simulations can start from flux-free data).  With
    volume preservation switched off a spatially constant part is added,
    which breaks the compatibility condition."""
    terms = [afields.scalar_term(amplitude, ("cos", frequency), ("sin", frequency),
                                 None, ("cos", rate)),
             afields.scalar_term(0.6 * amplitude, ("sin", frequency), None,
                                 None, ("cos", 0.8 * rate))]
    if not volume_preserving:
        terms.append(afields.scalar_term(0.5 * amplitude, None, None, None,
                                         ("cos", rate)))
    return afields.AnalyticScalar(terms)
