"""Closed-form separable fields.

Analytic data (boundary displacement profiles, vector potentials,
manufactured solutions, test fixtures) is built from sums of separable
terms  c * fx(x) * fy(y) * fz(z) * ft(t)  where each factor is either a
cosine  cos(w*u + phase)  or a polynomial.  The family is closed under
partial differentiation, so exact derivatives of any order are available
without symbolic machinery.

Periodic factors use w = 2*pi*k; wall-normal factors typically use
w = m*pi (vanishing odd derivatives at both walls) or plain polynomials.
"""

from __future__ import annotations

import math

import numpy as np

_HALF_PI = 0.5 * math.pi


class Factor:
    """One 1-D factor: either ('cos', w, phase) -> cos(w*u + phase)
    or ('poly', coeffs) with coeffs in descending powers (np.polyval)."""

    __slots__ = ("kind", "w", "phase", "coeffs")

    def __init__(self, kind, w=0.0, phase=0.0, coeffs=None):
        self.kind = kind
        self.w = float(w)
        self.phase = float(phase)
        self.coeffs = None if coeffs is None else np.asarray(coeffs, dtype=float)

    @classmethod
    def one(cls):
        return cls("cos", 0.0, 0.0)

    @classmethod
    def cos(cls, w, phase=0.0):
        return cls("cos", w, phase)

    @classmethod
    def sin(cls, w, phase=0.0):
        return cls("cos", w, phase - _HALF_PI)

    @classmethod
    def poly(cls, coeffs):
        return cls("poly", coeffs=coeffs)

    def __call__(self, u):
        if self.kind == "cos":
            return np.cos(self.w * u + self.phase)
        return np.polyval(self.coeffs, u)

    def derivative(self):
        """(factor, scale) such that d/du f = scale * factor(u)."""
        if self.kind == "cos":
            if self.w == 0.0:
                return Factor.one(), 0.0
            return Factor("cos", self.w, self.phase + _HALF_PI), self.w
        if len(self.coeffs) <= 1:
            return Factor.one(), 0.0
        return Factor.poly(np.polyder(self.coeffs)), 1.0

    def is_constant_one(self):
        return self.kind == "cos" and self.w == 0.0 and self.phase == 0.0


class Term:
    __slots__ = ("c", "factors")

    def __init__(self, c, fx, fy, fz, ft):
        self.c = float(c)
        self.factors = (fx, fy, fz, ft)

    def diff(self, axis):
        f, scale = self.factors[axis].derivative()
        if scale == 0.0 or self.c == 0.0:
            return None
        new = list(self.factors)
        new[axis] = f
        return Term(self.c * scale, *new)


class AnalyticScalar:
    """Sum of separable terms; differentiable in x, y, z, t."""

    def __init__(self, terms=()):
        self.terms = [t for t in terms if t is not None and t.c != 0.0]

    def diff(self, axis) -> "AnalyticScalar":
        return AnalyticScalar([t.diff(axis) for t in self.terms])

    def dx(self):
        return self.diff(0)

    def dy(self):
        return self.diff(1)

    def dz(self):
        return self.diff(2)

    def dt(self):
        return self.diff(3)

    def __add__(self, other):
        return AnalyticScalar(self.terms + other.terms)

    def scaled(self, c) -> "AnalyticScalar":
        return AnalyticScalar([Term(t.c * c, *t.factors) for t in self.terms])

    def eval(self, grid, t: float) -> np.ndarray:
        out = np.zeros(grid.shape)
        X, Y, Z = grid.mesh()
        for term in self.terms:
            fx, fy, fz, ft = term.factors
            out += (term.c * ft(t)) * (fx(X) * fy(Y) * fz(Z))
        return out

    def eval_xy(self, grid, t: float) -> np.ndarray:
        """Evaluate on an (nx, ny) plane; the z factor must be trivial."""
        out = np.zeros((grid.nx, grid.ny))
        for term in self.terms:
            fx, fy, fz, ft = term.factors
            if not fz.is_constant_one():
                raise ValueError("eval_xy requires z-independent terms")
            out += (term.c * ft(t)) * (fx(grid.x[:, None]) * fy(grid.y[None, :]))
        return out


class AnalyticVector:
    """Triple of AnalyticScalar components."""

    def __init__(self, components):
        self.components = tuple(components)

    def eval(self, grid, t: float) -> np.ndarray:
        out = np.zeros(grid.shape + (3,))
        for i, comp in enumerate(self.components):
            out[..., i] = comp.eval(grid, t)
        return out

    def grad(self, grid, t: float) -> np.ndarray:
        """G[..., k, i] = d_k v_i, evaluated exactly."""
        out = np.zeros(grid.shape + (3, 3))
        for i, comp in enumerate(self.components):
            for k in range(3):
                out[..., k, i] = comp.diff(k).eval(grid, t)
        return out

    def dt(self) -> "AnalyticVector":
        return AnalyticVector([c.dt() for c in self.components])

    def curl(self) -> "AnalyticVector":
        c = self.components
        return AnalyticVector([
            c[2].dy() + c[1].dz().scaled(-1.0),
            c[0].dz() + c[2].dx().scaled(-1.0),
            c[1].dx() + c[0].dy().scaled(-1.0),
        ])


def scalar_term(c, kx=None, ky=None, zf=None, tf=None):
    """Convenience builder.  kx/ky: ('cos'|'sin', k) periodic factors;
    zf: ('cos'|'sin', m) with w = m*pi, or ('poly', coeffs), or None;
    tf: ('cos'|'sin', omega, phase) or ('poly', coeffs) or None."""

    def per(spec):
        if spec is None:
            return Factor.one()
        kind, k = spec
        w = 2.0 * math.pi * k
        return Factor.cos(w) if kind == "cos" else Factor.sin(w)

    def zfac(spec):
        if spec is None:
            return Factor.one()
        if spec[0] == "poly":
            return Factor.poly(spec[1])
        kind, m = spec
        w = math.pi * m
        return Factor.cos(w) if kind == "cos" else Factor.sin(w)

    def tfac(spec):
        if spec is None:
            return Factor.one()
        if spec[0] == "poly":
            return Factor.poly(spec[1])
        kind, w = spec[0], spec[1]
        phase = spec[2] if len(spec) > 2 else 0.0
        if kind == "cos":
            return Factor("cos", w, phase)
        return Factor("cos", w, phase - _HALF_PI)

    return Term(c, per(kx), per(ky), zfac(zf), tfac(tf))


def constant(c) -> AnalyticScalar:
    return AnalyticScalar([scalar_term(c)])


def random_trig_scalar(rng, amplitude, max_mode=2, z_modes=(1, 2),
                       time_freq=0.0) -> AnalyticScalar:
    """Random band-limited scalar: a few separable terms with periodic
    x,y factors and sin/cos(m*pi*z) wall-normal factors."""
    terms = []
    n_terms = rng.integers(2, 5)
    for _ in range(n_terms):
        kx = int(rng.integers(0, max_mode + 1))
        ky = int(rng.integers(0, max_mode + 1))
        m = int(rng.choice(z_modes))
        amp = amplitude * (0.3 + 0.7 * rng.random()) / n_terms
        tf = None if time_freq == 0.0 else ("cos", time_freq, 2 * math.pi * rng.random())
        terms.append(scalar_term(
            amp,
            ("cos" if rng.random() < 0.5 else "sin", kx) if kx else None,
            ("cos" if rng.random() < 0.5 else "sin", ky) if ky else None,
            ("cos" if rng.random() < 0.5 else "sin", m),
            tf,
        ))
    return AnalyticScalar(terms)


def random_wall_safe_potential(rng, amplitude, max_mode=2) -> AnalyticVector:
    """Random vector potential whose curl has zero wall flux: the x,y
    components carry sin(m*pi*z) factors, so (curl A)_3 vanishes on both
    walls."""
    def comp(z_kinds):
        terms = []
        for _ in range(int(rng.integers(2, 4))):
            kx = int(rng.integers(0, max_mode + 1))
            ky = int(rng.integers(0, max_mode + 1))
            m = int(rng.integers(1, 3))
            kind = z_kinds[int(rng.integers(0, len(z_kinds)))]
            amp = amplitude * (0.3 + 0.7 * rng.random())
            terms.append(scalar_term(
                amp,
                ("cos" if rng.random() < 0.5 else "sin", kx) if kx else None,
                ("cos" if rng.random() < 0.5 else "sin", ky) if ky else None,
                (kind, m),
            ))
        return AnalyticScalar(terms)

    return AnalyticVector([comp(("sin",)), comp(("sin",)), comp(("cos", "sin"))])
