"""Time evolution: linearized transport, per-step fixed-point iteration,
and the CFL-controlled outer loop.

One step advances the state with a three-stage strong-stability-
preserving Runge-Kutta scheme whose stage velocities and stage pressures
are supplied by the previous sweep of a Picard iteration: sweep n+1
advects the running stage values with the advector fields of sweep n and
re-solves the reduced pressure problem (with its mean correction) at
every stage time.  At the fixed point the sweeps reproduce the fully
nonlinear Runge-Kutta step, so the converged scheme is third order in
time; the sweep-to-sweep contraction factor scales like dt and is
reported per step.

Discrete drift control: the evolving field satisfies the wall-flux and
divergence constraints only up to truncation, so after every accepted
step the wall-normal trace is restored exactly, and the full elliptic
projection runs whenever a defect exceeds half its tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculus import (EPS3, bmo_norm, ddx, ddy, ddz_advect, grad_scalar,
                       grad_vector, l2_norm, linf_norm, sobolev_norm,
                       w1inf_norm)
from .coefficients import (CoefficientSet, compatibility_integral,
                           divergence_target, flux_integral)
from .elliptic import (ChannelOperator, assemble_reduced, normal_trace_defect,
                       project_velocity, restore_wall_flux, solve_neumann,
                       variable_divergence_defect)
from .errors import StepError
from .grid import ScalarField, VectorField, _as_array
from .snapshots import Snapshot


@dataclass
class State:
    v: VectorField
    q: ScalarField
    t: float


@dataclass
class StepReport:
    dt: float
    picard_iterations: int
    contraction_factor: float
    pressure_iterations: int
    max_boundary_defect: float
    div_defect_linf: float
    projected: bool = False


@dataclass
class MonitorRecord:
    t: float
    dt: float
    l2_v: float
    h1_v: float
    h3_v: float
    w1inf_v: float
    bmo_zeta: float
    bkm_integrand: float
    max_boundary_defect: float
    div_defect_linf: float
    div_target: float
    flux_residual: float
    picard_iterations: int
    contraction_factor: float

    CSV_HEADER = ("t,dt,l2_v,h1_v,h3_v,w1inf_v,bmo_zeta,bkm_integrand,"
                  "max_U,div_defect_linf,div_target,flux_residual,"
                  "picard_iters,contraction")

    def csv_row(self) -> str:
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in (
            self.t, self.dt, self.l2_v, self.h1_v, self.h3_v, self.w1inf_v,
            self.bmo_zeta, self.bkm_integrand, self.max_boundary_defect,
            self.div_defect_linf, self.div_target, self.flux_residual,
            self.picard_iterations, self.contraction_factor))


def transport_rhs(cs: CoefficientSet, w, v, q, t: float) -> np.ndarray:
    """-(w - psi)_m a_{km} d_k v_i - a_{ki} d_k q, with third-order
    one-sided wall rows for the advection derivative."""
    g = cs.grid
    s = cs.sample(t)
    wd, vd = _as_array(w), _as_array(v)
    A = np.einsum("...m,...km->...k", wd - s.psi, s.a)
    adv = (A[..., 0, None] * ddx(vd, g) + A[..., 1, None] * ddy(vd, g)
           + A[..., 2, None] * ddz_advect(vd, g))
    press = np.einsum("...ki,...k->...i", s.a, grad_scalar(_as_array(q), g))
    return -(adv + press)


def boundary_defect(cs: CoefficientSet, state: State):
    """U = n_j b_{ji}(v_i - psi_i) on the two walls (bottom, top)."""
    return normal_trace_defect(cs, state.v.data, state.t)


def divergence_defect(cs: CoefficientSet, state: State):
    """(b_{ji} d_j v_i as a field, divergence target |Omega|^-1 flux)."""
    bdiv = variable_divergence_defect(cs, state.v.data, state.t)
    return ScalarField(cs.grid, bdiv), divergence_target(cs, state.t)


class _OperatorCache:
    def __init__(self, cs: CoefficientSet, keep: int = 6):
        self.cs = cs
        self.keep = keep
        self._ops: dict[float, ChannelOperator] = {}

    def get(self, t: float) -> ChannelOperator:
        key = 0.0 if not self.cs.time_dependent else float(t)
        op = self._ops.get(key)
        if op is None:
            op = ChannelOperator(self.cs.grid,
                                 self.cs.sample(key).pressure_tensor())
            if len(self._ops) >= self.keep:
                self._ops.pop(next(iter(self._ops)))
            self._ops[key] = op
        return op


def _stage_pressure(cs, vel, t, ops, tol, max_iter, x0):
    sys = assemble_reduced(cs, vel, t)
    q, stats = solve_neumann(sys, tol=tol, max_iter=max_iter,
                             operator=ops.get(t), x0=x0)
    return q.data, stats


def picard_step(cs: CoefficientSet, state: State, dt: float,
                picard_tol: float = 1e-8, max_picard: int = 12,
                elliptic_tol: float = 1e-10, elliptic_max_iter: int = 5000,
                ops: _OperatorCache | None = None,
                warm: dict | None = None):
    """One accepted time step; returns (new State, StepReport)."""
    if ops is None:
        ops = _OperatorCache(cs)
    if warm is None:
        warm = {}
    g = cs.grid
    u0 = state.v.data
    t = state.t
    t2, t3 = t + dt, t + 0.5 * dt

    # stage-1 pressure is determined by the known state
    q1 = state.q.data
    w2, w3 = u0, u0
    q2, st2 = _stage_pressure(cs, w2, t2, ops, elliptic_tol,
                              elliptic_max_iter, warm.get("q2"))
    q3, st3 = _stage_pressure(cs, w3, t3, ops, elliptic_tol,
                              elliptic_max_iter, warm.get("q3"))
    press_iters = st2.iterations + st3.iterations

    prev = None
    prev_diff = None
    factor = 0.0
    sweeps = 0
    vnew = u0
    for sweeps in range(1, max_picard + 1):
        r1 = transport_rhs(cs, u0, u0, q1, t)
        u1 = u0 + dt * r1
        r2 = transport_rhs(cs, w2, u1, q2, t2)
        u2 = 0.75 * u0 + 0.25 * (u1 + dt * r2)
        r3 = transport_rhs(cs, w3, u2, q3, t3)
        vnew = (u0 + 2.0 * (u2 + dt * r3)) / 3.0

        if prev is not None:
            diff = sobolev_norm(vnew - prev, 1, g)
            ref = max(sobolev_norm(prev, 1, g), 1e-14)
            # ratios at the roundoff floor are noise, not contraction rates
            if prev_diff is not None and prev_diff > 1e-13 * ref:
                factor = diff / prev_diff
            prev_diff = diff
            if diff <= picard_tol * ref:
                prev = vnew
                break
        prev = vnew
        w2, w3 = u1, u2
        q2, st2 = _stage_pressure(cs, w2, t2, ops, elliptic_tol,
                                  elliptic_max_iter, q2)
        q3, st3 = _stage_pressure(cs, w3, t3, ops, elliptic_tol,
                                  elliptic_max_iter, q3)
        press_iters += st2.iterations + st3.iterations
    else:
        raise StepError(
            f"no contraction within {max_picard} sweeps at t={t:.6g} "
            f"(last factor {factor:.3f})")

    warm["q2"], warm["q3"] = q2, q3
    qnew, stN = _stage_pressure(cs, vnew, t2, ops, elliptic_tol,
                                elliptic_max_iter, q2)
    press_iters += stN.iterations

    new_state = State(VectorField(g, vnew), ScalarField(g, qnew), t2)
    ub, ut = normal_trace_defect(cs, vnew, t2)
    bdiv = variable_divergence_defect(cs, vnew, t2)
    dtarget = divergence_target(cs, t2)
    report = StepReport(
        dt=dt, picard_iterations=sweeps, contraction_factor=factor,
        pressure_iterations=press_iters,
        max_boundary_defect=max(linf_norm(ub), linf_norm(ut)),
        div_defect_linf=linf_norm(bdiv - dtarget))
    return new_state, report


@dataclass
class SimulationResult:
    states: list = field(default_factory=list)      # kept State objects
    records: list = field(default_factory=list)     # MonitorRecord per step
    reports: list = field(default_factory=list)     # StepReport per step
    snapshots: list = field(default_factory=list)   # (step, Snapshot)
    guard_tripped: bool = False
    final: State | None = None


def _monitor(cs, state, dt, report) -> MonitorRecord:
    g = cs.grid
    v = state.v.data
    s = cs.sample(state.t)
    zeta = np.einsum("ijk,...lj,...lk->...i", EPS3, s.b, grad_vector(v, g))
    ub, ut = normal_trace_defect(cs, v, state.t)
    bdiv = variable_divergence_defect(cs, v, state.t)
    dtarget = divergence_target(cs, state.t)
    h1 = sobolev_norm(v, 1, g)
    bmo_z = bmo_norm(zeta, g)
    return MonitorRecord(
        t=state.t, dt=dt,
        l2_v=l2_norm(v, g), h1_v=h1, h3_v=sobolev_norm(v, 3, g),
        w1inf_v=w1inf_norm(v, g), bmo_zeta=bmo_z, bkm_integrand=h1 + bmo_z,
        max_boundary_defect=max(linf_norm(ub), linf_norm(ut)),
        div_defect_linf=linf_norm(bdiv - dtarget), div_target=dtarget,
        flux_residual=abs(flux_integral(cs, v, state.t)
                          - flux_integral(cs, cs.sample(state.t).psi, state.t)),
        picard_iterations=report.picard_iterations if report else 0,
        contraction_factor=report.contraction_factor if report else 0.0)


def initial_condition_gate(cs: CoefficientSet, v0, tol: float,
                           elliptic_tol: float = 1e-10) -> float:
    """|| P(v0) - v0 ||_L2: the data must already satisfy the divergence
    and wall-flux conditions at t = 0."""
    v0d = _as_array(v0)
    proj = project_velocity(cs, v0d, 0.0, tol=elliptic_tol)
    return l2_norm(proj.data - v0d, cs.grid)


def simulate(cs: CoefficientSet, v0, tfinal: float, cfl: float = 0.5,
             dt_min: float = 1e-8, dt_max: float = 0.05,
             fixed_dt: float = 0.0,
             picard_tol: float = 1e-8, max_picard: int = 12,
             elliptic_tol: float = 1e-10, elliptic_max_iter: int = 5000,
             bc_tol: float = 1e-6, div_tol: float = 1e-5,
             ic_gate_tol: float = 1e-5,
             allow_inhomogeneous_divergence: bool = False,
             compat_check_tol: float = 1e-8,
             w1inf_ceiling: float = 100.0,
             every_n_steps: int = 10,
             keep_states: bool = False,
             provenance: dict | None = None,
             progress=None) -> SimulationResult:
    """Advance from v0 to t = tfinal under CFL control.

    Raises StepError on CFL collapse, invariant violation, or a
    compatibility-condition violation without the explicit opt-in; a
    tripped blow-up guard ends the run normally with the flag set so the
    monitor can take over.
    """
    g = cs.grid
    cs.certify_j_bounds(0.0, tfinal)

    for ts in np.linspace(0.0, tfinal, 9):
        if abs(compatibility_integral(cs, float(ts))) > compat_check_tol:
            if not allow_inhomogeneous_divergence:
                raise StepError(
                    "the coefficient data violates the flux compatibility "
                    "condition, so the divergence law is inhomogeneous; set "
                    "allow_inhomogeneous_divergence to run this experiment")
            break

    gate = initial_condition_gate(cs, v0, ic_gate_tol, elliptic_tol)
    if gate > ic_gate_tol * max(1.0, l2_norm(_as_array(v0), g)):
        raise StepError(
            f"initial data fails the divergence/boundary gate: "
            f"||P(v0)-v0|| = {gate:.3e}")

    ops = _OperatorCache(cs)
    warm: dict = {}
    sys0 = assemble_reduced(cs, v0, 0.0)
    q0, _ = solve_neumann(sys0, tol=elliptic_tol, max_iter=elliptic_max_iter,
                          operator=ops.get(0.0))
    state = State(VectorField(g, _as_array(v0).copy()), q0, 0.0)

    result = SimulationResult()
    result.records.append(_monitor(cs, state, 0.0, None))
    result.snapshots.append((0, _snapshot(state, provenance, 0)))
    if keep_states:
        result.states.append(state)

    step = 0
    while state.t < tfinal - 1e-12:
        s = cs.sample(state.t)
        A = np.einsum("...m,...km->...k", state.v.data - s.psi, s.a)
        speed = max(float(np.abs(A).max()), 1e-12)
        dt = fixed_dt if fixed_dt > 0.0 else min(cfl * g.min_spacing / speed,
                                                 dt_max)
        dt = min(dt, tfinal - state.t)
        if dt < dt_min:
            raise StepError(f"time step collapsed below dt_min at t={state.t:.6g}")

        state, report = picard_step(
            cs, state, dt, picard_tol=picard_tol, max_picard=max_picard,
            elliptic_tol=elliptic_tol, elliptic_max_iter=elliptic_max_iter,
            ops=ops, warm=warm)
        step += 1

        # drift control: exact wall restore every step, full projection
        # when a defect exceeds half its tolerance
        v = restore_wall_flux(cs, state.v.data, state.t)
        dtarget = divergence_target(cs, state.t)
        bdiv = variable_divergence_defect(cs, v, state.t)
        if (report.max_boundary_defect > 0.5 * bc_tol
                or linf_norm(bdiv - dtarget) > 0.5 * div_tol):
            v = project_velocity(cs, v, state.t, tol=elliptic_tol,
                                 max_iter=elliptic_max_iter,
                                 div_target=dtarget,
                                 operator=ops.get(state.t)).data
            report.projected = True
        state = State(VectorField(g, v), state.q, state.t)

        record = _monitor(cs, state, dt, report)
        result.records.append(record)
        result.reports.append(report)
        if keep_states:
            result.states.append(state)
        if record.max_boundary_defect > bc_tol:
            raise StepError(
                f"wall-flux defect {record.max_boundary_defect:.3e} exceeds "
                f"{bc_tol:.1e} at t={state.t:.6g}")
        if record.div_defect_linf > div_tol:
            raise StepError(
                f"divergence-law defect {record.div_defect_linf:.3e} exceeds "
                f"{div_tol:.1e} at t={state.t:.6g}")
        if every_n_steps > 0 and step % every_n_steps == 0:
            result.snapshots.append((step, _snapshot(state, provenance, step)))
        if progress is not None:
            progress(step, state, record)
        if record.w1inf_v > w1inf_ceiling:
            result.guard_tripped = True
            break

    if not result.snapshots or result.snapshots[-1][0] != step:
        result.snapshots.append((step, _snapshot(state, provenance, step)))
    result.final = state
    return result


def _snapshot(state: State, provenance, step: int) -> Snapshot:
    prov = dict(provenance or {})
    prov["step"] = step
    return Snapshot(grid=state.v.grid, t=state.t,
                    fields={"v": state.v.copy(), "q": state.q.copy()},
                    provenance=prov)
