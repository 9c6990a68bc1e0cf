"""Numerical integration of the piston equation of motion.

Two equivalent forms are supported.  The first-order form is the momentum
balance of the piston plus everything stuck to it,

    (m0 + m1 + m2) x1' = m0 u0 + m1 u1 + m2 u2,
    m1 = rho1 (u1 t - x1),  m2 = rho2 (x1 - u2 t),

and the second-order form is its time derivative.  A face that is separated
from its gas by vacuum contributes nothing until the piston catches up with
the gas front; that instant is located as an event and the face is switched
on.  Free flight (no gas on either face) is integrated exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import DOP853
from scipy.interpolate import BPoly

from .problem import RiemannSetup, classify, effective_u0
from .trajectory import Trajectory

__all__ = [
    "OdeProblem",
    "IntegratorConfig",
    "CatchUpEvent",
    "DenominatorVanished",
    "StepSizeUnderflow",
    "EventNotBracketed",
    "momentum_rhs",
    "newton_rhs",
    "integrate",
    "FIRST_ORDER",
    "SECOND_ORDER",
]

log = logging.getLogger(__name__)

FIRST_ORDER = "first"
SECOND_ORDER = "second"


class DenominatorVanished(ArithmeticError):
    pass


class StepSizeUnderflow(RuntimeError):
    pass


class EventNotBracketed(RuntimeError):
    pass


@dataclass(frozen=True)
class OdeProblem:
    """Piston datum plus the gas states currently touching each face.

    A face in contact with vacuum carries zero density.
    """

    setup: RiemannSetup
    rho1: float
    u1: float
    rho2: float
    u2: float
    form: str = FIRST_ORDER

    @classmethod
    def from_setup(cls, setup, left=True, right=True, form=FIRST_ORDER):
        return cls(
            setup,
            setup.rho_left if left else 0.0,
            setup.u_left,
            setup.rho_right if right else 0.0,
            setup.u_right,
            form,
        )

    @property
    def left_active(self) -> bool:
        return self.rho1 > 0.0

    @property
    def right_active(self) -> bool:
        return self.rho2 > 0.0


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.1
    event_tol: float = 1e-10
    t_end: float = 10.0

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "event_tol", "t_end"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number")

    @classmethod
    def from_dict(cls, data: dict) -> "IntegratorConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown integrator field(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass(frozen=True)
class CatchUpEvent:
    time: float
    side: str
    pre_velocity: float
    post_velocity: float


def _accreted(x, t, rho1, u1, rho2, u2):
    return rho1 * (u1 * t - x), rho2 * (x - u2 * t)


def _velocity(x, t, m0, u0, rho1, u1, rho2, u2):
    m1, m2 = _accreted(x, t, rho1, u1, rho2, u2)
    d = m0 + m1 + m2
    return u0 + (m1 * (u1 - u0) + m2 * (u2 - u0)) / d, d


def momentum_rhs(x1, t, problem: OdeProblem):
    """Piston velocity from conservation of momentum of the accreted cluster."""
    s = problem.setup
    m1, m2 = _accreted(x1, t, problem.rho1, problem.u1, problem.rho2, problem.u2)
    if s.m0 > 0.0 and np.any(np.abs(s.m0 + m1 + m2) < 1e-12 * s.m0):
        raise DenominatorVanished(f"total piston mass vanished at t={t}")
    return _velocity(x1, t, s.m0, s.u0, problem.rho1, problem.u1, problem.rho2, problem.u2)[0]


def newton_rhs(x1, v, t, problem: OdeProblem):
    """Piston acceleration: net momentum flux over the current total mass."""
    s = problem.setup
    r1, u1, r2, u2 = problem.rho1, problem.u1, problem.rho2, problem.u2
    m1, m2 = _accreted(x1, t, r1, u1, r2, u2)
    d = s.m0 + m1 + m2
    if s.m0 > 0.0 and np.any(np.abs(d) < 1e-12 * s.m0):
        raise DenominatorVanished(f"total piston mass vanished at t={t}")
    return (r1 * (u1 - v) ** 2 - r2 * (u2 - v) ** 2) / d


def _initial_contacts(setup: RiemannSetup) -> tuple[bool, bool]:
    tag = classify(setup).tag
    left = tag in (1, 2, 3) and setup.rho_left > 0.0
    right = tag in (1, 4, 5) and setup.rho_right > 0.0
    return left, right


def _gap(side, x, t, s: RiemannSetup):
    # positive once the face has reached the gas front on that side
    return x - s.u_right * t if side == "right" else s.u_left * t - x


def _free_flight(setup, config, form) -> tuple[Trajectory, list]:
    u0 = effective_u0(setup)
    return Trajectory(
        setup=setup,
        case=classify(setup),
        position=lambda t: u0 * np.asarray(t, dtype=float) if np.ndim(t) else u0 * float(t),
        velocity=lambda t: np.full(np.shape(t), u0) if np.ndim(t) else u0,
        left_contact=math.inf,
        right_contact=math.inf,
        branches=((0.0, "free"),),
        t_max=config.t_end,
        source=f"ode-{form}",
    ), []


def _branch_name(left, right):
    if left and right:
        return "two-sided"
    if left:
        return "left-only"
    if right:
        return "right-only"
    return "free"


def integrate(setup: RiemannSetup, config: IntegratorConfig | None = None,
              form: str = FIRST_ORDER) -> tuple[Trajectory, list[CatchUpEvent]]:
    """Integrate the piston path on ``[0, config.t_end]``.

    Returns the trajectory (quintic Hermite interpolant through accepted steps)
    and the catch-up events found on the way.
    """
    config = config or IntegratorConfig()
    if form not in (FIRST_ORDER, SECOND_ORDER):
        raise ValueError(f"unknown form {form!r}")
    if setup.m0 <= 0.0:
        raise ValueError("integration needs m0 > 0; use the closed form for a massless piston")
    s = setup
    left, right = _initial_contacts(s)
    if not (left or right):
        return _free_flight(s, config, form)

    t, x, v = 0.0, 0.0, s.u0
    ts, xs, vs = [t], [x], [v]
    events: list[CatchUpEvent] = []
    branches = [(0.0, _branch_name(left, right))]
    contact = {"left": 0.0 if left else math.inf, "right": 0.0 if right else math.inf}

    while t < config.t_end:
        problem = OdeProblem.from_setup(s, left, right, form)
        watch = [side for side, on, rho in (("left", left, s.rho_left), ("right", right, s.rho_right))
                 if not on and rho > 0.0]
        if form == FIRST_ORDER:
            fun = lambda tt, y, p=problem: np.array([momentum_rhs(y[0], tt, p)])
            y0 = np.array([x])
        else:
            fun = lambda tt, y, p=problem: np.array([y[1], newton_rhs(y[0], y[1], tt, p)])
            y0 = np.array([x, v])
        solver = DOP853(fun, t, y0, config.t_end, max_step=config.max_step,
                        rtol=config.rel_tol, atol=config.abs_tol)
        hit = None
        while solver.status == "running":
            t_old, y_old = solver.t, solver.y.copy()
            msg = solver.step()
            if solver.status == "failed":
                raise StepSizeUnderflow(f"integration failed at t={solver.t}: {msg}")
            t_new, y_new = solver.t, solver.y
            for side in watch:
                g_old = _gap(side, y_old[0], t_old, s)
                g_new = _gap(side, y_new[0], t_new, s)
                if g_new > 0.0 >= g_old:
                    hit = (side, t_old, t_new, solver.dense_output())
                    break
                # a double crossing inside one step can only hide near the front
                reach = 2.0 * (t_new - t_old) * (max(abs(s.u_left), abs(s.u_right), abs(s.u0)) + 1.0)
                if max(g_old, g_new) > -reach:
                    dense = solver.dense_output()
                    probe = np.linspace(t_old, t_new, 5)[1:-1]
                    if np.any(_gap(side, dense(probe)[0], probe, s) > 0.0):
                        raise EventNotBracketed(f"{side} gas front crossed inside step ending at {t_new}")
            if hit:
                break
            ts.append(t_new)
            xs.append(float(y_new[0]))
            vs.append(float(momentum_rhs(y_new[0], t_new, problem) if form == FIRST_ORDER else y_new[1]))
        if hit is None:
            break

        side, lo, hi, dense = hit
        g = lambda tt: _gap(side, dense(tt)[0], tt, s)
        if not g(hi) > 0.0 >= g(lo):
            raise EventNotBracketed(f"no sign change of the {side} gap on [{lo}, {hi}]")
        while hi - lo > config.event_tol:
            mid = 0.5 * (lo + hi)
            if g(mid) > 0.0:
                hi = mid
            else:
                lo = mid
        tev = 0.5 * (lo + hi)
        y_ev = dense(tev)
        v_ev = float(momentum_rhs(y_ev[0], tev, problem)) if form == FIRST_ORDER else float(y_ev[1])
        front = s.u_right if side == "right" else s.u_left
        slope = (v_ev - front) if side == "right" else (front - v_ev)
        if slope > 0.0:
            polished = tev - g(tev) / slope
            if abs(polished - tev) <= config.event_tol:
                tev = polished
                y_ev = dense(tev)
        x = float(y_ev[0])
        pre_v = float(momentum_rhs(x, tev, problem)) if form == FIRST_ORDER else float(y_ev[1])
        if side == "left":
            left = True
        else:
            right = True
        contact[side] = tev
        problem = OdeProblem.from_setup(s, left, right, form)
        post_v = float(momentum_rhs(x, tev, problem)) if form == FIRST_ORDER else pre_v
        events.append(CatchUpEvent(tev, side, pre_v, post_v))
        log.debug("catch-up on the %s at t=%.12g", side, tev)
        branches.append((tev, _branch_name(left, right)))
        t, v = tev, post_v
        if tev > ts[-1]:
            ts.append(tev)
            xs.append(x)
            vs.append(v)

    return _build_trajectory(s, form, config, ts, xs, vs, contact, branches, events), events


def _build_trajectory(s, form, config, ts, xs, vs, contact, branches, events):
    ts, xs, vs = np.array(ts), np.array(xs), np.array(vs)
    r1 = np.where(ts >= contact["left"], s.rho_left, 0.0)
    r2 = np.where(ts >= contact["right"], s.rho_right, 0.0)
    acc = np.array([newton_rhs(x, v, t, OdeProblem(s, a, s.u_left, b, s.u_right))
                    for x, v, t, a, b in zip(xs, vs, ts, r1, r2)])
    # the acceleration jumps at a catch-up, so interpolate each regime apart
    starts = [b for b, _ in branches]
    pieces = []
    for k, start in enumerate(starts):
        stop = starts[k + 1] if k + 1 < len(starts) else ts[-1]
        idx = np.nonzero((ts >= start) & (ts <= stop))[0]
        if len(idx) < 2:
            continue
        sel = slice(idx[0], idx[-1] + 1)
        if k + 1 < len(starts):
            # regime k ends at the event node; use its one-sided acceleration
            a_end = newton_rhs(xs[idx[-1]], vs[idx[-1]], ts[idx[-1]],
                               OdeProblem(s, r1[idx[0]], s.u_left, r2[idx[0]], s.u_right))
            a_seg = acc[sel].copy()
            a_seg[-1] = a_end
        else:
            a_seg = acc[sel]
        data = np.stack([xs[sel], vs[sel], a_seg], axis=1)[:, :, None]
        pieces.append(BPoly.from_derivatives(ts[sel], data))
    bounds = np.array([p.x[0] for p in pieces[1:]])
    t_end = ts[-1]

    def _eval(t, nu):
        tt = np.clip(np.asarray(t, dtype=float), 0.0, t_end)
        which = np.searchsorted(bounds, tt, side="right")
        out = np.empty_like(tt)
        for k, piece in enumerate(pieces):
            mask = which == k
            if np.any(mask):
                out[mask] = piece(tt[mask], nu=nu).reshape(-1)
        return float(out) if np.ndim(t) == 0 else out

    def position(t):
        return _eval(t, 0)

    if form == FIRST_ORDER:
        def velocity(t):
            tt = np.asarray(t, dtype=float)
            x = _eval(tt, 0)
            rr1 = np.where(tt >= contact["left"], s.rho_left, 0.0)
            rr2 = np.where(tt >= contact["right"], s.rho_right, 0.0)
            v, _ = _velocity(x, tt, s.m0, s.u0, rr1, s.u_left, rr2, s.u_right)
            return float(v) if np.ndim(t) == 0 else v
    else:
        def velocity(t):
            return _eval(t, 1)

    return Trajectory(
        setup=s,
        case=classify(s),
        position=position,
        velocity=velocity,
        t1=events[0].time if events else None,
        left_contact=contact["left"],
        right_contact=contact["right"],
        branches=tuple(branches),
        t_max=t_end,
        source=f"ode-{form}",
    )


def with_config(config: IntegratorConfig, **changes) -> IntegratorConfig:
    return replace(config, **changes)
