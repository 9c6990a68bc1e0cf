"""Measure-valued solution around a piston trajectory and its verification.

A solved trajectory determines the whole solution: constant gas states,
vacuum gaps and a Dirac atom riding on the piston whose weights follow from
mass and momentum balance.  This module reconstructs those pieces, evaluates
the face forces, checks the over-compression inequalities, and measures how
well the weak (integral) identities hold for compactly supported test
functions using Gauss-Legendre quadrature.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .ode import OdeProblem, newton_rhs
from .trajectory import Trajectory

__all__ = [
    "DeltaWeights",
    "MeasureField",
    "TestFunction",
    "Constant",
    "Vacuum",
    "PistonBody",
    "Atom",
    "EntropyReport",
    "UnresolvedSupport",
    "delta_weights",
    "piston_forces",
    "entropy_check",
    "sample",
    "weak_residual_cauchy",
    "weak_residual_ibvp",
    "rh_consistency",
    "write_residual_csv",
    "RESIDUAL_HEADER",
]

RESIDUAL_HEADER = ("phi_id", "x0", "t0", "order", "r_mass", "r_momentum")


class UnresolvedSupport(ValueError):
    """The test function reaches beyond the trajectory's computed time range."""


@dataclass(frozen=True)
class Constant:
    rho: float
    u: float


@dataclass(frozen=True)
class Vacuum:
    pass


@dataclass(frozen=True)
class PistonBody:
    """Interior of the piston slab (physical view only)."""


@dataclass(frozen=True)
class Atom:
    alpha: float
    velocity: float


def _out(t, values):
    return float(values) if np.ndim(t) == 0 else values


def _acceleration(traj: Trajectory, t):
    """Analytic ``x1''`` from the Newton form, using the regime in force at ``t``."""
    t = np.asarray(t, dtype=float)
    s = traj.setup
    x = np.asarray(traj.position(t), dtype=float)
    v = np.asarray(traj.velocity(t), dtype=float)
    left = t >= traj.left_contact
    right = t >= traj.right_contact
    acc = np.zeros(np.shape(t))
    for lf in (False, True):
        for rf in (False, True):
            mask = (left == lf) & (right == rf)
            if not np.any(mask) or not (lf or rf):
                continue
            prob = OdeProblem.from_setup(s, left=lf, right=rf)
            with np.errstate(divide="ignore", invalid="ignore"):
                acc[mask] = newton_rhs(x[mask], v[mask], t[mask], prob)
    return _out(t, acc)


@dataclass(frozen=True)
class DeltaWeights:
    """Weights of the Dirac atom and the forces on the piston faces.

    Every field is a vectorized function of time.  ``alpha1``/``alpha2`` are
    the masses stuck to the left/right faces, ``accel`` is ``x1''``.
    """

    alpha: Callable
    wm: Callable
    wn: Callable
    wp1: Callable
    wp2: Callable
    alpha1: Callable
    alpha2: Callable
    accel: Callable

    def replace(self, **changes) -> "DeltaWeights":
        return dataclasses.replace(self, **changes)

    def scaled(self, **factors) -> "DeltaWeights":
        """Copy with selected weights multiplied by constants (fault injection)."""
        changes = {}
        for name, k in factors.items():
            f = getattr(self, name)
            changes[name] = (lambda f, k: lambda t: k * np.asarray(f(t)))(f, float(k))
        return self.replace(**changes)


def delta_weights(traj: Trajectory, setup=None) -> DeltaWeights:
    """Atom mass, momentum and second-moment weights plus face forces.

    A face not yet touched by gas (or facing vacuum) contributes nothing.
    """
    s = setup or traj.setup

    def parts(t):
        t = np.asarray(t, dtype=float)
        r1, u1, r2, u2 = traj.near_states(t)
        x = np.asarray(traj.position(t), dtype=float)
        a1 = r1 * (u1 * t - x)
        a2 = r2 * (x - u2 * t)
        return t, x, r1, u1, r2, u2, a1, a2

    def alpha1(t):
        t_, *_, a1, _ = parts(t)
        return _out(t, a1)

    def alpha2(t):
        *_, a2 = parts(t)
        return _out(t, a2)

    def alpha(t):
        *_, a1, a2 = parts(t)
        return _out(t, a1 + a2 + s.m0)

    def wm(t):
        _, _, _, u1, _, u2, a1, a2 = parts(t)
        return _out(t, u1 * a1 + u2 * a2 + s.m0 * s.u0)

    def wn(t):
        return _out(t, np.asarray(wm(t)) * np.asarray(traj.velocity(t)))

    def forces(t):
        t_, x, r1, u1, r2, u2, a1, a2 = parts(t)
        v = np.asarray(traj.velocity(t_), dtype=float)
        acc = np.asarray(_acceleration(traj, t_))
        f1 = np.where(r1 > 0, r1 * (u1 - v) ** 2 - a1 * acc, 0.0)
        f2 = np.where(r2 > 0, r2 * (u2 - v) ** 2 + a2 * acc, 0.0)
        return f1, f2

    return DeltaWeights(
        alpha=alpha,
        wm=wm,
        wn=wn,
        wp1=lambda t: _out(t, forces(t)[0]),
        wp2=lambda t: _out(t, forces(t)[1]),
        alpha1=alpha1,
        alpha2=alpha2,
        accel=lambda t: _acceleration(traj, t),
    )


def piston_forces(traj: Trajectory, setup=None, t=0.0):
    """``(wp1, wp2)``: momentum flux delivered to the left and right faces."""
    w = delta_weights(traj, setup)
    return w.wp1(t), w.wp2(t)


@dataclass(frozen=True)
class EntropyReport:
    passed: bool
    worst_margin: float
    worst_time: float

    def __bool__(self):
        return self.passed


def entropy_check(traj: Trajectory, setup=None, grid=None, tol: float = 1e-9) -> EntropyReport:
    """Over-compression check ``u1 >= x1' >= u2`` on the sample grid.

    Where a face meets vacuum the gas front must stay on its own side of the
    piston instead (no gas may be overtaken without being absorbed).  Margins
    below ``-tol (1 + scale)`` fail.
    """
    s = setup or traj.setup
    grid = np.linspace(0.0, min(traj.t_max, 10.0), 201) if grid is None else np.asarray(grid, dtype=float)
    t = grid
    x = np.asarray(traj.position(t), dtype=float)
    v = np.asarray(traj.velocity(t), dtype=float)
    left = t >= traj.left_contact
    right = t >= traj.right_contact
    margins = []
    if s.rho_left > 0:
        m = np.where(left, s.u_left - v, x - s.u_left * t)
        margins.append(m / (1.0 + np.abs(s.u_left) + np.abs(v) + np.where(left, 0.0, np.abs(x))))
    if s.rho_right > 0:
        m = np.where(right, v - s.u_right, s.u_right * t - x)
        margins.append(m / (1.0 + np.abs(s.u_right) + np.abs(v) + np.where(right, 0.0, np.abs(x))))
    if not margins:
        return EntropyReport(True, math.inf, math.nan)
    worst = np.min(np.vstack(margins), axis=0)
    k = int(np.argmin(worst))
    return EntropyReport(bool(worst[k] >= -tol), float(worst[k]), float(t[k]))


def rh_consistency(traj: Trajectory, t: float, h: float, weights: DeltaWeights | None = None):
    """Central difference of ``alpha`` against its balance law at ``t``.

    Returns the absolute difference between ``(alpha(t+h) - alpha(t-h)) / 2h``
    and ``rho1 (u1 - x1') + rho2 (x1' - u2)``.
    """
    w = weights or delta_weights(traj)
    fd = (w.alpha(t + h) - w.alpha(t - h)) / (2.0 * h)
    r1, u1, r2, u2 = traj.near_states(t)
    v = traj.velocity(t)
    return abs(fd - (r1 * (u1 - v) + r2 * (v - u2)))


# -- regions -----------------------------------------------------------------

def _regions(traj: Trajectory, view: str):
    """Region list ``(lo(t), hi(t), state)`` ordered left to right.

    In the ``"riemann"`` view the slab is collapsed onto ``x1``; in the
    ``"piston"`` view the right gas is offset by ``l`` and the slab is a region.
    """
    s = traj.setup
    shift = s.l if view == "piston" else 0.0
    lc, rc = traj.left_contact, traj.right_contact
    x1 = lambda t: np.asarray(traj.position(t), dtype=float)
    x2 = lambda t: x1(t) + shift
    regions = []
    if s.rho_left > 0:
        edge = lambda t: np.where(np.asarray(t) >= lc, x1(t), s.u_left * np.asarray(t, dtype=float))
        regions.append((lambda t: np.full(np.shape(t), -np.inf), edge, Constant(s.rho_left, s.u_left)))
        regions.append((edge, x1, Vacuum()))
    else:
        regions.append((lambda t: np.full(np.shape(t), -np.inf), x1, Vacuum()))
    if view == "piston" and shift > 0:
        regions.append((x1, x2, PistonBody()))
    if s.rho_right > 0:
        edge = lambda t: np.where(np.asarray(t) >= rc, x2(t), s.u_right * np.asarray(t, dtype=float) + shift)
        regions.append((x2, edge, Vacuum()))
        regions.append((edge, lambda t: np.full(np.shape(t), np.inf), Constant(s.rho_right, s.u_right)))
    else:
        regions.append((x2, lambda t: np.full(np.shape(t), np.inf), Vacuum()))
    return regions


@dataclass(frozen=True)
class MeasureField:
    """Gas states, vacuum and the piston atom for a solved trajectory.

    ``view`` is ``"piston"`` (physical coordinates, slab ``[x1, x1+l]``) or
    ``"riemann"`` (slab collapsed to a point).
    """

    trajectory: Trajectory
    weights: DeltaWeights
    view: str = "piston"
    locate_rel_tol: float = 1e-9

    @classmethod
    def from_trajectory(cls, traj: Trajectory, view: str = "piston", **kw) -> "MeasureField":
        if view not in ("piston", "riemann"):
            raise ValueError("view must be 'piston' or 'riemann'")
        return cls(traj, delta_weights(traj), view, **kw)

    def with_weights(self, weights: DeltaWeights) -> "MeasureField":
        return dataclasses.replace(self, weights=weights)

    def with_view(self, view: str) -> "MeasureField":
        return dataclasses.replace(self, view=view)

    @property
    def piston_length(self) -> float:
        return self.trajectory.setup.l

    def regions(self, t: float):
        """Nonempty ``(lo, hi, state)`` intervals at time ``t``."""
        out = []
        for lo, hi, state in _regions(self.trajectory, self.view):
            a, b = float(lo(t)), float(hi(t))
            if b > a:
                out.append((a, b, state))
        return out

    def atom(self, t: float) -> dict:
        w = self.weights
        return {
            "x": float(self.trajectory.position(t)),
            "alpha": float(w.alpha(t)),
            "wm": float(w.wm(t)),
            "v": float(self.trajectory.velocity(t)),
        }

    def snapshot(self, t: float) -> dict:
        """JSON-ready description; infinite bounds become ``null``."""
        def num(v):
            return None if math.isinf(v) else v

        regions = []
        for a, b, state in self.regions(t):
            item = {"lo": num(a), "hi": num(b)}
            if isinstance(state, Constant):
                item.update(rho=state.rho, u=state.u)
            elif isinstance(state, PistonBody):
                item["piston"] = True
            else:
                item["vacuum"] = True
            regions.append(item)
        return {"t": float(t), "regions": regions, "atom": self.atom(t)}

    def to_json(self, t: float) -> str:
        return json.dumps(self.snapshot(t), sort_keys=True)


def sample(field: MeasureField, x: float, t: float, locate_tol: float | None = None):
    """State at ``(x, t)``: ``Constant``, ``Vacuum`` or the piston ``Atom``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    x1 = float(field.trajectory.position(t))
    tol = field.locate_rel_tol * (1.0 + abs(x)) if locate_tol is None else locate_tol
    x2 = x1 + (field.piston_length if field.view == "piston" else 0.0)
    if x1 - tol <= x <= x2 + tol:
        return Atom(float(field.weights.alpha(t)), float(field.trajectory.velocity(t)))
    for a, b, state in field.regions(t):
        if a < x < b:
            return state
    # exactly on a gas front: report the gas side
    for a, b, state in field.regions(t):
        if a <= x <= b and isinstance(state, Constant):
            return state
    return Vacuum()


# -- test functions and quadrature ------------------------------------------

def _bump(s):
    """``1 - S(|s|)`` with the quintic smoothstep ``S``; value and slope vanish at ``|s| = 1``."""
    a = np.minimum(np.abs(s), 1.0)
    return 1.0 - a * a * a * (10.0 - 15.0 * a + 6.0 * a * a)


def _bump_d(s):
    a = np.minimum(np.abs(s), 1.0)
    return -np.sign(s) * 30.0 * a * a * (1.0 - a) ** 2


@dataclass(frozen=True)
class TestFunction:
    """Tensor-product bump centred at ``(x0, t0)`` with half-widths ``(sx, st)``."""

    __test__ = False  # not a pytest class

    x0: float
    t0: float
    sx: float
    st: float
    phi_id: str = "phi"

    def __post_init__(self):
        if not (self.sx > 0 and self.st > 0):
            raise ValueError("widths must be positive")

    @property
    def t_range(self):
        return self.t0 - self.st, self.t0 + self.st

    @property
    def x_range(self):
        return self.x0 - self.sx, self.x0 + self.sx

    def __call__(self, x, t):
        return _bump((x - self.x0) / self.sx) * _bump((t - self.t0) / self.st)

    def dx(self, x, t):
        return _bump_d((x - self.x0) / self.sx) / self.sx * _bump((t - self.t0) / self.st)

    def dt(self, x, t):
        return _bump((x - self.x0) / self.sx) * _bump_d((t - self.t0) / self.st) / self.st


def _crossings(f, level, ta, tb, n=256):
    """Times in ``(ta, tb)`` where ``f(t) = level``, found by sampling plus bracketing."""
    ts = np.linspace(ta, tb, n + 1)
    g = np.asarray(f(ts), dtype=float) - level
    out = []
    for k in range(n):
        if not (np.isfinite(g[k]) and np.isfinite(g[k + 1])):
            continue
        if g[k] == 0.0 and 0 < k:
            out.append(ts[k])
        elif g[k] * g[k + 1] < 0.0:
            out.append(brentq(lambda t: float(f(t)) - level, ts[k], ts[k + 1], xtol=1e-15, rtol=1e-15))
    return out


def _time_breaks(field: MeasureField, phi: TestFunction, ta, tb, curves):
    traj = field.trajectory
    br = {ta, tb, phi.t0}
    for c in (traj.t1, traj.left_contact, traj.right_contact):
        if c is not None and ta < c < tb:
            br.add(c)
    for f in curves:
        for level in (phi.x_range[0], phi.x0, phi.x_range[1]):
            br.update(_crossings(f, level, ta, tb))
    br = sorted(b for b in br if ta <= b <= tb)
    return [(a, b) for a, b in zip(br[:-1], br[1:]) if b > a]


def _check_support(traj: Trajectory, phi: TestFunction):
    if phi.t_range[1] > traj.t_max * (1 + 1e-12):
        raise UnresolvedSupport(
            f"test function reaches t={phi.t_range[1]} beyond computed range {traj.t_max}"
        )


def _area(regions, phi, order, intervals, integrand):
    """Sum over regions of the double integral of ``integrand(x, t, state)``."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    xa, xb = phi.x_range
    total = 0.0
    for ta, tb in intervals:
        tn = 0.5 * (tb - ta) * gx + 0.5 * (ta + tb)
        tw = 0.5 * (tb - ta) * gw
        for lo_f, hi_f, state in regions:
            if not isinstance(state, Constant):
                continue
            lo = np.maximum(np.asarray(lo_f(tn), dtype=float), xa)
            hi = np.minimum(np.asarray(hi_f(tn), dtype=float), xb)
            for a, b in ((lo, np.minimum(hi, phi.x0)), (np.maximum(lo, phi.x0), hi)):
                width = np.maximum(b - a, 0.0)
                xn = 0.5 * width[:, None] * gx[None, :] + 0.5 * (a + b)[:, None]
                xw = 0.5 * width[:, None] * gw[None, :]
                tt = np.broadcast_to(tn[:, None], xn.shape)
                vals = integrand(xn, tt, state)
                total += float(np.sum(tw[:, None] * xw * vals))
    return total


def _line(intervals, order, integrand):
    gx, gw = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for ta, tb in intervals:
        tn = 0.5 * (tb - ta) * gx + 0.5 * (ta + tb)
        total += float(np.sum(0.5 * (tb - ta) * gw * integrand(tn)))
    return total


def _initial_line(phi, order, segments):
    """Integral over ``t = 0`` of ``rho0 phi`` and ``rho0 u0 phi`` on the given segments."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    xa, xb = phi.x_range
    mass = mom = 0.0
    for lo, hi, rho, u in segments:
        pieces = ((max(lo, xa), min(hi, phi.x0)), (max(lo, phi.x0), min(hi, xb)))
        for a, b in pieces:
            if b <= a:
                continue
            xn = 0.5 * (b - a) * gx + 0.5 * (a + b)
            val = float(np.sum(0.5 * (b - a) * gw * phi(xn, 0.0)))
            mass += rho * val
            mom += rho * u * val
    return mass, mom


def _flux_integrands(phi):
    def mass(x, t, st):
        return st.rho * (phi.dt(x, t) + st.u * phi.dx(x, t))

    def mom(x, t, st):
        return st.rho * st.u * (phi.dt(x, t) + st.u * phi.dx(x, t))

    return mass, mom


def weak_residual_cauchy(field: MeasureField, phi: TestFunction, quadrature_order: int = 32):
    """Residuals of the mass and momentum integral identities in the collapsed view.

    Gas regions are integrated by tensor Gauss quadrature, the atom along its
    path, and the initial data on ``t = 0`` including the point mass.
    """
    traj = field.trajectory
    s = traj.setup
    _check_support(traj, phi)
    fld = field.with_view("riemann")
    regions = _regions(traj, "riemann")
    ta, tb = max(phi.t_range[0], 0.0), phi.t_range[1]
    if tb <= 0.0:
        return 0.0, 0.0
    curves = [lambda t: traj.position(t)]
    if s.rho_left > 0:
        curves.append(lambda t: s.u_left * np.asarray(t))
    if s.rho_right > 0:
        curves.append(lambda t: s.u_right * np.asarray(t))
    intervals = _time_breaks(fld, phi, ta, tb, curves)
    fm, fp = _flux_integrands(phi)
    n = quadrature_order
    r_mass = _area(regions, phi, n, intervals, fm)
    r_mom = _area(regions, phi, n, intervals, fp)
    w = field.weights

    def atom_mass(t):
        x = np.asarray(traj.position(t))
        return np.asarray(w.alpha(t)) * phi.dt(x, t) + np.asarray(w.wm(t)) * phi.dx(x, t)

    def atom_mom(t):
        x = np.asarray(traj.position(t))
        return np.asarray(w.wm(t)) * phi.dt(x, t) + np.asarray(w.wn(t)) * phi.dx(x, t)

    r_mass += _line(intervals, n, atom_mass)
    r_mom += _line(intervals, n, atom_mom)
    if phi.t_range[0] < 0.0:
        segs = []
        if s.rho_left > 0:
            segs.append((-math.inf, 0.0, s.rho_left, s.u_left))
        if s.rho_right > 0:
            segs.append((0.0, math.inf, s.rho_right, s.u_right))
        im, ip = _initial_line(phi, n, segs)
        p0 = float(phi(0.0, 0.0))
        r_mass += im + s.m0 * p0
        r_mom += ip + s.m0 * s.u0 * p0
    return r_mass, r_mom


def weak_residual_ibvp(side: str, field: MeasureField, phi: TestFunction, quadrature_order: int = 32):
    """Residuals of the one-sided gas problem with the piston face as moving boundary.

    ``side`` is ``"left"`` or ``"right"``.  The gas stuck on the face is a
    line measure carried along the face and the face force enters as a
    boundary source.  Works in physical coordinates.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    traj = field.trajectory
    s = traj.setup
    _check_support(traj, phi)
    regions = _regions(traj, "piston")
    keep = regions[:2] if side == "left" else regions[-2:]
    ta, tb = max(phi.t_range[0], 0.0), phi.t_range[1]
    if tb <= 0.0:
        return 0.0, 0.0
    shift = s.l if side == "right" else 0.0
    face = lambda t: np.asarray(traj.position(t), dtype=float) + shift
    curves = [face]
    if side == "left" and s.rho_left > 0:
        curves.append(lambda t: s.u_left * np.asarray(t))
    if side == "right" and s.rho_right > 0:
        curves.append(lambda t: s.u_right * np.asarray(t) + s.l)
    intervals = _time_breaks(field, phi, ta, tb, curves)
    fm, fp = _flux_integrands(phi)
    n = quadrature_order
    r_mass = _area(keep, phi, n, intervals, fm)
    r_mom = _area(keep, phi, n, intervals, fp)
    w = field.weights
    layer = w.alpha1 if side == "left" else w.alpha2
    force = w.wp1 if side == "left" else w.wp2
    sign = -1.0 if side == "left" else 1.0

    def line_mass(t):
        x, v = face(t), np.asarray(traj.velocity(t))
        return np.asarray(layer(t)) * (phi.dt(x, t) + v * phi.dx(x, t))

    def line_mom(t):
        x, v = face(t), np.asarray(traj.velocity(t))
        return np.asarray(layer(t)) * v * (phi.dt(x, t) + v * phi.dx(x, t)) + sign * np.asarray(force(t)) * phi(x, t)

    r_mass += _line(intervals, n, line_mass)
    r_mom += _line(intervals, n, line_mom)
    if phi.t_range[0] < 0.0:
        if side == "left" and s.rho_left > 0:
            im, ip = _initial_line(phi, n, [(-math.inf, 0.0, s.rho_left, s.u_left)])
        elif side == "right" and s.rho_right > 0:
            im, ip = _initial_line(phi, n, [(s.l, math.inf, s.rho_right, s.u_right)])
        else:
            im = ip = 0.0
        r_mass += im
        r_mom += ip
    return r_mass, r_mom


def write_residual_csv(rows, stream=None) -> str:
    """Rows of ``(phi, order, r_mass, r_momentum)`` as ``phi_id,x0,t0,order,r_mass,r_momentum``."""
    own = stream is None
    out = io.StringIO() if own else stream
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RESIDUAL_HEADER)
    for phi, order, rm, rp in rows:
        w.writerow([phi.phi_id, repr(float(phi.x0)), repr(float(phi.t0)), int(order), repr(float(rm)), repr(float(rp))])
    return out.getvalue() if own else ""
