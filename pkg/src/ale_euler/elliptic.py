"""Variable-coefficient Neumann solver and the pressure assemblies.

Operator
--------
The elliptic operator -d_j(c_{jk} d_k .) with c = b a^T (symmetric,
uniformly positive definite) is discretized with trilinear elements on
the hexahedral cells, 2x2x2 Gauss quadrature and trilinear interpolation
of the nodal coefficient tensor.  The assembled object is a 27-point
node stencil stored as one array per offset, so the matrix-vector
product is a handful of rolled multiply-adds.  The construction is
conservative (flux form with cell-averaged coefficients), symmetric by
construction, positive semidefinite with kernel exactly the constants,
and handles the natural (Neumann) boundary data through wall load
terms.  Null space: the right-hand side and the iterates are projected
against constants; solutions are returned with zero volume mean.

Assemblies
----------
Both forms of the pressure problem are assembled:

* ``assemble_raw``: interior right-hand side in pure divergence form,
  boundary data obtained by restricting the momentum balance to the
  walls;
* ``assemble_reduced``: the rearranged form whose right-hand side
  carries at most first derivatives of the velocity, plus the
  spatially-constant mean correction E(t) that restores the Neumann
  solvability condition int_Omega f = int_dOmega g.

The discretization is compatibility-mimetic: divergence-form interior
terms use the summation-by-parts wall rows (``ddz_flux``), boundary
products are expanded in Leibniz form with coefficient derivatives
sampled analytically, and the mean-correction integrals reuse the same
nodal arrays as the interior assembly.  The discrete defect
int_Omega f - int_dOmega g then cancels to machine precision exactly as
in the continuum argument, for any velocity iterate and any grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import ddx, ddy, ddz_flux, grad_scalar, grad_vector
from .coefficients import CoefficientSet, divergence_target
from .errors import SolverError
from .fields import AnalyticVector
from .grid import (Grid, ScalarField, VectorField, _Field, domain_volume,
                   integrate_boundary, integrate_volume)

# ---------------------------------------------------------------------------
# reference-element tensor for the trilinear stencil

_CORNERS = [(gx, gy, gz) for gx in (0, 1) for gy in (0, 1) for gz in (0, 1)]


def _shape_tables():
    gp = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
    pts = [(a, b, c) for a in gp for b in gp for c in gp]
    N = np.zeros((8, 8))      # [q, corner]
    dN = np.zeros((8, 3, 8))  # [q, dir, corner]
    for qi, (px, py, pz) in enumerate(pts):
        for ci, (gx, gy, gz) in enumerate(_CORNERS):
            fx = px if gx else 1.0 - px
            fy = py if gy else 1.0 - py
            fz = pz if gz else 1.0 - pz
            N[qi, ci] = fx * fy * fz
            dN[qi, 0, ci] = (1.0 if gx else -1.0) * fy * fz
            dN[qi, 1, ci] = (1.0 if gy else -1.0) * fx * fz
            dN[qi, 2, ci] = (1.0 if gz else -1.0) * fx * fy
    return N, dN


def _element_tensor():
    """M[j,k,alpha,beta,gamma] = sum_q w_q N_gamma dN_j(alpha) dN_k(beta)
    on the reference cell (w_q = 1/8)."""
    N, dN = _shape_tables()
    return np.einsum("qg,qja,qkb->jkabg", N, dN, dN) / 8.0


_M0 = _element_tensor()


class ChannelOperator:
    """27-point symmetric stencil for -d_j(c_{jk} d_k .) with natural
    boundary conditions on the walls."""

    def __init__(self, grid: Grid, c: np.ndarray, ellipticity_floor: float = 0.0):
        if c.shape != grid.shape + (3, 3):
            raise SolverError(f"coefficient tensor has shape {c.shape}")
        self.grid = grid
        eigmin = float(np.linalg.eigvalsh(c)[..., 0].min())
        if eigmin <= ellipticity_floor:
            raise SolverError(
                f"ellipticity floor violated: min eigenvalue {eigmin:.3e}")
        self.coeff_min_eig = eigmin
        self._assemble(c)

    def _assemble(self, c: np.ndarray):
        g = self.grid
        nx, ny, nz = g.shape
        nzc = nz - 1
        h = (g.hx, g.hy, g.hz)
        vol = g.hx * g.hy * g.hz
        pairs = [(a, b) for a in range(8) for b in range(a, 8)]
        K = {p: np.zeros((nx, ny, nzc)) for p in pairs}
        for gi, (gx, gy, gz) in enumerate(_CORNERS):
            slab = np.roll(c, (-gx, -gy), axis=(0, 1))[:, :, gz:gz + nzc]
            for (a, b) in pairs:
                acc = K[(a, b)]
                for j in range(3):
                    for k in range(j, 3):
                        m = _M0[j, k, a, b, gi] + (_M0[k, j, a, b, gi] if k > j else 0.0)
                        if abs(m) < 1e-15:
                            continue
                        acc += (m * vol / (h[j] * h[k])) * slab[..., j, k]
        stencil = {}
        for (a, b), Kab in K.items():
            da = _CORNERS[a]
            db = _CORNERS[b]
            for src, dst in (((a, da), (b, db)),) if a == b else (((a, da), (b, db)), ((b, db), (a, da))):
                off = (dst[1][0] - src[1][0], dst[1][1] - src[1][1], dst[1][2] - src[1][2])
                tgt = stencil.setdefault(off, np.zeros((nx, ny, nz)))
                tgt[:, :, src[1][2]:src[1][2] + nzc] += np.roll(Kab, (src[1][0], src[1][1]), axis=(0, 1))
        self.stencil = stencil
        self.diag = stencil[(0, 0, 0)]

    def matvec(self, q: np.ndarray) -> np.ndarray:
        nz = self.grid.nz
        out = np.zeros_like(q)
        for (dx_, dy_, dz_), S in self.stencil.items():
            shifted = np.roll(q, (-dx_, -dy_), axis=(0, 1)) if (dx_ or dy_) else q
            lo = max(0, -dz_)
            hi = nz - max(0, dz_)
            out[:, :, lo:hi] += S[:, :, lo:hi] * shifted[:, :, lo + dz_:hi + dz_]
        return out


@dataclass
class SolverStats:
    iterations: int
    final_residual: float
    projected_mean: float


def _pcg(matvec, diag, rhs, tol, max_iter, x0=None, project=True):
    n = rhs.size
    if project:
        rhs = rhs - rhs.sum() / n
    bnorm = float(np.sqrt(np.vdot(rhs, rhs).real))
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0, 0.0
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    if project:
        x -= x.sum() / n
    r = rhs - matvec(x)
    z = r / diag
    p = z.copy()
    rz = float(np.vdot(r, z).real)
    res = float(np.sqrt(np.vdot(r, r).real))
    it = 0
    while res > tol * bnorm and it < max_iter:
        Ap = matvec(p)
        alpha = rz / float(np.vdot(p, Ap).real)
        x += alpha * p
        r -= alpha * Ap
        if project and it % 50 == 49:
            x -= x.sum() / n
            r -= r.sum() / n
        z = r / diag
        rz_new = float(np.vdot(r, z).real)
        p = z + (rz_new / rz) * p
        rz = rz_new
        res = float(np.sqrt(np.vdot(r, r).real))
        it += 1
    return x, it, res / bnorm


# ---------------------------------------------------------------------------
# velocity views (grid iterates vs analytic fixtures)

class VelocityView:
    """Nodal values and gradient of a velocity argument.  Grid fields are
    differentiated with the stencils; analytic fixtures supply exact
    derivatives."""

    def __init__(self, values: np.ndarray, grad: np.ndarray):
        self.values = values
        self.grad = grad

    @classmethod
    def resolve(cls, vel, grid: Grid, t: float = 0.0) -> "VelocityView":
        if isinstance(vel, cls):
            return vel
        if isinstance(vel, AnalyticVector):
            return cls(vel.eval(grid, t), vel.grad(grid, t))
        data = vel.data if isinstance(vel, _Field) else np.asarray(vel, dtype=float)
        return cls(data, grad_vector(data, grid))


# ---------------------------------------------------------------------------
# pressure system

@dataclass
class PressureSystem:
    grid: Grid
    c: np.ndarray                      # pressure tensor at nodes
    interior: np.ndarray               # right-hand side f (includes E)
    boundary: tuple                    # (bottom, top) wall data g
    mean_correction: float             # E(t); 0 for the raw form
    form: str                          # 'raw' | 'reduced'
    t: float = 0.0

    def compatibility_residual(self) -> float:
        return (integrate_volume(self.interior, self.grid)
                - integrate_boundary(self.boundary, self.grid))


class _Workspace:
    """Shared nodal arrays for one (coefficients, velocity, time) triple."""

    def __init__(self, cs: CoefficientSet, vel, t: float):
        g = cs.grid
        s = cs.sample(t)
        vv = VelocityView.resolve(vel, g, t)
        self.grid, self.s, self.vv = g, s, vv
        self.rel = vv.values - s.psi                              # v - psi
        self.A = np.einsum("...m,...km->...k", self.rel, s.a)     # A_k
        adv = np.einsum("...k,...ki->...i", self.A, vv.grad)      # A_k d_k v_i
        self.Y = np.einsum("...ji,...i->...j", s.b, adv)
        self.W = self.Y - np.einsum("...ji,...i->...j", s.b_t, vv.values)
        self.bdiv = np.einsum("...ji,...ji->...", s.b, vv.grad)

    def flux_divergence(self) -> np.ndarray:
        g = self.grid
        return (ddx(self.W[..., 0], g) + ddy(self.W[..., 1], g)
                + ddz_flux(self.W[..., 2], g))

    def wall(self, top: bool):
        """Per-wall boundary pieces; sigma is the outward-normal sign."""
        zi = -1 if top else 0
        sigma = 1.0 if top else -1.0
        s, vv = self.s, self.vv
        b_w = s.b[:, :, zi, 2, :]          # b_{3i}
        bt_w = s.b_t[:, :, zi, 2, :]
        gb_w = s.grad_b[:, :, zi, :, 2, :]  # d_l b_{3i}, l = 0,1
        gp_w = s.grad_psi[:, :, zi, :, :]
        psi_w = s.psi[:, :, zi, :]
        psit_w = s.psi_t[:, :, zi, :]
        v_w = vv.values[:, :, zi, :]
        dv_w = vv.grad[:, :, zi, :, :]
        A_w = self.A[:, :, zi, :]
        rel_w = self.rel[:, :, zi, :]

        dt_nbpsi = sigma * (np.einsum("xyi,xyi->xy", bt_w, psi_w)
                            + np.einsum("xyi,xyi->xy", b_w, psit_w))
        nbt_v = sigma * np.einsum("xyi,xyi->xy", bt_w, v_w)

        # tangential Leibniz pieces, k = x, y only (flat walls)
        g3 = np.zeros(dt_nbpsi.shape)   # A_k d^tau_k (n b psi)
        g4 = np.zeros(dt_nbpsi.shape)   # A_k d^tau_k (n b) v
        e2 = np.zeros(dt_nbpsi.shape)   # A_k d^tau_k (n b (v - psi))
        for k in range(2):
            nb_dk = sigma * gb_w[:, :, k, :]
            g3 += A_w[:, :, k] * (np.einsum("xyi,xyi->xy", b_w, gp_w[:, :, k, :]) * sigma
                                  + np.einsum("xyi,xyi->xy", nb_dk, psi_w))
            g4 += A_w[:, :, k] * np.einsum("xyi,xyi->xy", nb_dk, v_w)
            e2 += A_w[:, :, k] * (
                sigma * np.einsum("xyi,xyi->xy", b_w, dv_w[:, :, k, :] - gp_w[:, :, k, :])
                + np.einsum("xyi,xyi->xy", nb_dk, rel_w))
        # normal-derivative piece: (A n)(n b)(n d) v
        e3 = sigma * A_w[:, :, 2] * np.einsum("xyi,xyi->xy", b_w, dv_w[:, :, 2, :])
        flux_W = sigma * self.W[:, :, zi, 2]
        flux_Y = sigma * self.Y[:, :, zi, 2]
        return {"dt_nbpsi": dt_nbpsi, "nbt_v": nbt_v, "g3": g3, "g4": g4,
                "e2": e2, "e3": e3, "flux_W": flux_W, "flux_Y": flux_Y}


def _mean_correction(ws: _Workspace) -> tuple[float, np.ndarray]:
    """E(t) and its (pointwise) volume integrand A_k d_k(b_{ji} d_j v_i)."""
    g = ws.grid
    evol = np.einsum("...k,...k->...", ws.A, grad_scalar(ws.bdiv, g))
    walls = (ws.wall(False), ws.wall(True))
    t1 = integrate_boundary((walls[0]["dt_nbpsi"], walls[1]["dt_nbpsi"]), g)
    t2 = integrate_boundary((walls[0]["e2"], walls[1]["e2"]), g)
    t3 = integrate_boundary((walls[0]["e3"], walls[1]["e3"]), g)
    t4 = integrate_volume(evol, g)
    corr = (t1 - t2 - t3 + t4) / domain_volume(g)
    return corr, evol


def compatibility_term(cs: CoefficientSet, vel, t: float) -> float:
    """The spatially constant correction E(t): two wall integrals with
    tangential derivatives, one wall integral with the normal derivative,
    and one volume integral, divided by |Omega|."""
    return _mean_correction(_Workspace(cs, vel, t))[0]


def assemble_raw(cs: CoefficientSet, vel, t: float) -> PressureSystem:
    """Divergence-form pressure problem (no mean correction): compatible
    exactly when the data satisfies the flux compatibility condition."""
    ws = _Workspace(cs, vel, t)
    interior = ws.flux_divergence()
    walls = (ws.wall(False), ws.wall(True))
    bnd = tuple(w["dt_nbpsi"] - w["nbt_v"] + w["flux_Y"] for w in walls)
    return PressureSystem(ws.grid, ws.s.pressure_tensor(), interior, bnd,
                          0.0, "raw", t)


def assemble_reduced(cs: CoefficientSet, vel, t: float,
                     include_correction: bool = True) -> PressureSystem:
    """First-order-in-velocity pressure problem with the mean correction.

    The velocity argument may be a grid field (stencil derivatives, as in
    the fixed-point iteration) or an analytic fixture (exact
    derivatives)."""
    ws = _Workspace(cs, vel, t)
    corr, evol = _mean_correction(ws)
    if not include_correction:
        corr = 0.0
    interior = ws.flux_divergence() - evol + corr
    walls = (ws.wall(False), ws.wall(True))
    bnd = tuple(w["dt_nbpsi"] - w["nbt_v"] + w["g3"] - w["g4"] for w in walls)
    return PressureSystem(ws.grid, ws.s.pressure_tensor(), interior, bnd,
                          corr, "reduced", t)


def verify_compatibility(sys: PressureSystem, compat_tol: float | None = None) -> float:
    """int_Omega f - int_dOmega g.  When a tolerance is supplied and the
    system is a reduced one carrying its correction, a violation raises."""
    res = sys.compatibility_residual()
    if compat_tol is not None and sys.form == "reduced":
        if abs(res) > compat_tol:
            raise SolverError(
                f"compatibility defect {res:.3e} exceeds {compat_tol:.1e}")
    return res


def load_vector(sys: PressureSystem) -> np.ndarray:
    """Quadrature-weighted load: volume term minus wall terms."""
    g = sys.grid
    rhs = g.node_weights() * sys.interior
    rhs[:, :, 0] -= g.wall_weight * sys.boundary[0]
    rhs[:, :, -1] -= g.wall_weight * sys.boundary[1]
    return rhs


def solve_neumann(sys: PressureSystem, tol: float = 1e-10,
                  max_iter: int = 5000, operator: ChannelOperator | None = None,
                  x0: np.ndarray | None = None):
    """Zero-mean solution of the assembled Neumann problem.

    Returns (q, stats).  Raises SolverError on lost ellipticity or
    non-convergence."""
    op = operator if operator is not None else ChannelOperator(sys.grid, sys.c)
    rhs = load_vector(sys)
    projected = float(rhs.sum())
    x, it, rel = _pcg(op.matvec, op.diag, rhs, tol, max_iter, x0=x0)
    if rel > tol:
        raise SolverError(
            f"Neumann solve did not converge: {it} iterations, "
            f"relative residual {rel:.3e}")
    x -= integrate_volume(x, sys.grid) / domain_volume(sys.grid)
    q = ScalarField(sys.grid, x)
    return q, SolverStats(iterations=it, final_residual=rel,
                          projected_mean=abs(projected))


# ---------------------------------------------------------------------------
# projection onto the divergence/boundary constraint set

def normal_trace_defect(cs: CoefficientSet, v: np.ndarray, t: float):
    """U = n_j b_{ji} (v_i - psi_i) on the two walls."""
    s = cs.sample(t)
    rel_b = v[:, :, 0, :] - s.psi[:, :, 0, :]
    rel_t = v[:, :, -1, :] - s.psi[:, :, -1, :]
    Ub = -np.einsum("xyi,xyi->xy", s.b[:, :, 0, 2, :], rel_b)
    Ut = np.einsum("xyi,xyi->xy", s.b[:, :, -1, 2, :], rel_t)
    return Ub, Ut


def variable_divergence_defect(cs: CoefficientSet, v: np.ndarray,
                               t: float) -> np.ndarray:
    """b_{ji} d_j v_i at the nodes (stencil derivatives)."""
    s = cs.sample(t)
    return np.einsum("...ji,...ji->...", s.b, grad_vector(v, cs.grid))


def restore_wall_flux(cs: CoefficientSet, v: np.ndarray, t: float) -> np.ndarray:
    """Remove the wall-normal trace defect exactly by subtracting, on each
    wall plane, the component of v along the coefficient normal row."""
    s = cs.sample(t)
    out = v.copy()
    for zi, sigma in ((0, -1.0), (-1, 1.0)):
        beta = sigma * s.b[:, :, zi, 2, :]
        U = np.einsum("xyi,xyi->xy", beta, v[:, :, zi, :] - s.psi[:, :, zi, :])
        norm2 = np.einsum("xyi,xyi->xy", beta, beta)
        out[:, :, zi, :] -= (U / norm2)[..., None] * beta
    return out


def project_velocity(cs: CoefficientSet, f, t: float, tol: float = 1e-10,
                     max_iter: int = 5000, sweeps: int = 2,
                     div_target: float | None = None,
                     operator: ChannelOperator | None = None,
                     enforce_wall: bool = True) -> VectorField:
    """Project a vector field onto the constraint set
    { b_{ji} d_j u_i = div_target,  n_j b_{ji}(u_i - psi_i) = 0 }.

    u = f - a^T grad(phi) with phi solving the induced Neumann problem;
    repeated sweeps contract the defect left by the mismatch between the
    weak solve and the strong stencil divergence."""
    g = cs.grid
    s = cs.sample(t)
    if div_target is None:
        div_target = divergence_target(cs, t)
    u = f.data.copy() if isinstance(f, _Field) else np.asarray(f, dtype=float).copy()
    op = operator if operator is not None else ChannelOperator(g, s.pressure_tensor())
    x0 = None
    for _ in range(sweeps):
        bf = np.einsum("...ji,...i->...j", s.b, u)
        interior = -(ddx(bf[..., 0], g) + ddy(bf[..., 1], g)
                     + ddz_flux(bf[..., 2], g)) + div_target
        gb = -np.einsum("xyi,xyi->xy", -s.b[:, :, 0, 2, :],
                        u[:, :, 0, :] - s.psi[:, :, 0, :])
        gt = -np.einsum("xyi,xyi->xy", s.b[:, :, -1, 2, :],
                        u[:, :, -1, :] - s.psi[:, :, -1, :])
        sys = PressureSystem(g, s.pressure_tensor(), interior, (gb, gt),
                             0.0, "projection", t)
        phi, _ = solve_neumann(sys, tol=tol, max_iter=max_iter,
                               operator=op, x0=x0)
        x0 = phi.data
        u -= np.einsum("...ki,...k->...i", s.a, grad_scalar(phi.data, g))
    if enforce_wall:
        u = restore_wall_flux(cs, u, t)
    return VectorField(g, u)


# ---------------------------------------------------------------------------
# Dirichlet variant (penalized wall rows), used by the reconstruction

def solve_dirichlet(grid: Grid, c: np.ndarray, interior: np.ndarray,
                    wall_values: tuple, tol: float = 1e-10,
                    max_iter: int = 5000,
                    operator: ChannelOperator | None = None):
    """Solve -d_j(c_{jk} d_k F) = interior with F prescribed on the walls
    via a dominant penalty on the wall rows (documented second-order)."""
    op = operator if operator is not None else ChannelOperator(grid, c)
    penalty = 1e8 * float(op.diag.max())
    mask = np.zeros(grid.shape)
    mask[:, :, 0] = 1.0
    mask[:, :, -1] = 1.0

    def matvec(q):
        return op.matvec(q) + penalty * (mask * q)

    diag = op.diag + penalty * mask
    rhs = grid.node_weights() * interior
    rhs[:, :, 0] += penalty * wall_values[0]
    rhs[:, :, -1] += penalty * wall_values[1]
    x, it, rel = _pcg(matvec, diag, rhs, tol, max_iter, project=False)
    if rel > tol:
        raise SolverError(
            f"Dirichlet solve did not converge: {it} iterations, rel {rel:.3e}")
    return ScalarField(grid, x), SolverStats(it, rel, 0.0)
