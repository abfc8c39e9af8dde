"""Blow-up monitor bookkeeping.

Tracks the integrand L(t) = ||v||_H1 + ||zeta||_BMO, its running time
integral, the logarithmic bound on the stretching norm ||v||_W1inf, and
the nested-exponential continuation envelope K built from

    F(t) = log+ ||v0||_H3 + t + int_0^t L,
    K    = exp( F(T) + exp(int_0^T L) * int_0^T F L ).

The constants hidden in the underlying inequalities are not tracked by
the theory, so the stretching check calibrates its constant once at
t = 0 and acts as a regression tripwire; log+ replaces log throughout so
small-data runs stay finite (degenerate-log policy: the exponent is
floored at -50).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import (EPS3, bmo_norm, grad_vector, l2_norm, log_plus,
                       sobolev_norm, w1inf_norm)
from .coefficients import CoefficientSet
from .dynamics import State
from .errors import AleEulerError


@dataclass
class BKMRecord:
    t: float
    l2_v: float
    h1_v: float
    h3_v: float
    bmo_zeta: float
    integrand: float            # L(t) = h1_v + bmo_zeta
    w1inf_v: float
    cumulative: float = 0.0     # int_0^t L ds (trapezoid), filled later
    rhs_bound: float = 0.0      # C (1 + L (1 + log+ h3)), filled later
    growth: float = 0.0         # F(t), filled later

    CSV_HEADER = "t,l2_v,h1_v,h3_v,bmo_zeta,L,w1inf_v,cum_L,rhs_bound,F"

    def csv_row(self) -> str:
        return ",".join(repr(float(x)) for x in (
            self.t, self.l2_v, self.h1_v, self.h3_v, self.bmo_zeta,
            self.integrand, self.w1inf_v, self.cumulative, self.rhs_bound,
            self.growth))


def bkm_integrand(cs: CoefficientSet, state: State) -> BKMRecord:
    """All pointwise monitor quantities of one state."""
    g = cs.grid
    v = state.v.data
    s = cs.sample(state.t)
    zeta = np.einsum("ijk,...lj,...lk->...i", EPS3, s.b, grad_vector(v, g))
    h1 = sobolev_norm(v, 1, g)
    bmo_z = bmo_norm(zeta, g)
    return BKMRecord(
        t=state.t, l2_v=l2_norm(v, g), h1_v=h1,
        h3_v=sobolev_norm(v, 3, g), bmo_zeta=bmo_z,
        integrand=h1 + bmo_z, w1inf_v=w1inf_norm(v, g))


def cumulative_integral(records) -> np.ndarray:
    """Trapezoid running integral of L; also stored on the records."""
    ts = np.array([r.t for r in records])
    ls = np.array([r.integrand for r in records])
    cum = np.zeros(len(records))
    if len(records) > 1:
        cum[1:] = np.cumsum(0.5 * (ls[1:] + ls[:-1]) * np.diff(ts))
    for r, c in zip(records, cum):
        r.cumulative = float(c)
    return cum


def calibrate_stretching_constant(record: BKMRecord, safety: float = 1.1) -> float:
    """Constant making the logarithmic stretching bound tight at one
    record (with a safety factor); used at t = 0."""
    denom = 1.0 + record.integrand * (1.0 + log_plus(record.h3_v))
    return safety * record.w1inf_v / denom


def stretching_bound_check(record: BKMRecord, constant: float) -> float:
    """margin = C (1 + L (1 + log+ ||v||_H3)) - ||v||_W1inf.

    A negative margin flags the run for attention; it never aborts."""
    bound = constant * (1.0 + record.integrand * (1.0 + log_plus(record.h3_v)))
    record.rhs_bound = bound
    return bound - record.w1inf_v


def gronwall_envelope(records, v0_h3: float | None = None):
    """Continuation envelope K from a monitored trajectory.

    Returns (K, threshold_ok) where threshold_ok reports whether
    ||v(t)||_H3 <= 2K held at every record."""
    if not records:
        raise AleEulerError("no records to build the envelope from")
    if v0_h3 is None:
        v0_h3 = records[0].h3_v
    cum = cumulative_integral(records)
    ts = np.array([r.t for r in records])
    ls = np.array([r.integrand for r in records])
    F = log_plus(v0_h3) + ts + cum
    for r, f in zip(records, F):
        r.growth = float(f)
    total_l = float(cum[-1])
    fl_integral = float(np.trapz(F * ls, ts))
    exponent = F[-1] + np.exp(min(total_l, 700.0)) * fl_integral
    exponent = min(max(float(exponent), -50.0), 700.0)
    K = float(np.exp(exponent))
    threshold_ok = bool(all(r.h3_v <= 2.0 * K + 1e-12 for r in records))
    return K, threshold_ok


def monitor_summary(records, stretch_constant: float | None = None) -> dict:
    """Summary block for a trajectory: envelope, integral, extremes."""
    K, ok = gronwall_envelope(records)
    if stretch_constant is None:
        stretch_constant = calibrate_stretching_constant(records[0])
    margins = [stretching_bound_check(r, stretch_constant) for r in records]
    return {
        "K": K,
        "h3_within_2K": ok,
        "bkm_integral": records[-1].cumulative,
        "stretch_constant": stretch_constant,
        "min_stretch_margin": min(margins),
        "max_h3": max(r.h3_v for r in records),
    }
