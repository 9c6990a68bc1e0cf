"""Exact piston trajectories for the six cases.

The formulas are evaluated in cancellation-free forms.  With the delta weight

    alpha(t) = sqrt(P t^2 + 2 Q t + m0^2)

(``P = rho1 rho2 (u1-u2)^2``, ``Q = m0 [rho1 (u1-u0) - rho2 (u2-u0)]``) the
two-sided path is ``x1 = (A - alpha) / (rho1 - rho2)`` with ``A = (rho1 u1 -
rho2 u2) t + m0``; multiplying by the conjugate gives a form that stays finite
as ``rho1 -> rho2`` and coincides with the equal-density formula there.  The
velocity is the momentum weight divided by ``alpha``.
"""

from __future__ import annotations

import math

import numpy as np

from .problem import (
    CaseId,
    RiemannSetup,
    classify,
    effective_u0,
    mean_velocity,
    reflect,
)
from .trajectory import Trajectory, VacuumRecord

__all__ = [
    "ClosedFormDomainError",
    "solve",
    "solve_case1",
    "solve_case2",
    "solve_case3",
    "solve_case6",
    "zero_mass_velocity",
    "catch_up_time",
    "splice_velocity",
]

_SQRT_GUARD = 1e-13


class ClosedFormDomainError(ValueError):
    """A radicand is negative beyond rounding, or the case does not match."""


def _out(t, values):
    return float(values) if np.ndim(t) == 0 else values


def _guarded_sqrt(radicand, scale):
    radicand = np.asarray(radicand, dtype=float)
    bad = radicand < -_SQRT_GUARD * np.maximum(scale, 1e-300)
    if np.any(bad):
        raise ClosedFormDomainError("negative radicand in closed-form trajectory")
    return np.sqrt(np.maximum(radicand, 0.0))


def zero_mass_velocity(rho1: float, u1: float, rho2: float, u2: float) -> float:
    """Delta-shock speed of a massless piston (the '+' root).

    Equals ``(u1 + u2) / 2`` for equal densities.
    """
    if rho1 < 0 or rho2 < 0:
        raise ValueError("densities must be nonnegative")
    if rho1 == 0 and rho2 == 0:
        raise ValueError("at least one density must be positive")
    if rho1 == rho2:
        return 0.5 * (u1 + u2)
    return mean_velocity(rho1, u1, rho2, u2)


def _two_sided(rho1, u1, rho2, u2, m0, u0):
    """Position and velocity functions for gas touching both faces from t=0."""
    if m0 == 0.0:
        v = zero_mass_velocity(rho1, u1, rho2, u2)
        return (lambda t: _out(t, v * np.asarray(t, dtype=float)),
                lambda t: _out(t, np.full(np.shape(t), v)))

    a = rho1 * u1 - rho2 * u2
    b = rho1 * u1 * u1 - rho2 * u2 * u2
    p = rho1 * rho2 * (u1 - u2) ** 2
    q = m0 * (rho1 * (u1 - u0) - rho2 * (u2 - u0))
    drho = rho1 - rho2

    def weight(t):
        radicand = (p * t + 2.0 * q) * t + m0 * m0
        return _guarded_sqrt(radicand, p * t * t + abs(2.0 * q * t) + m0 * m0)

    def position(t):
        t = np.asarray(t, dtype=float)
        alpha = weight(t)
        big_a = a * t + m0
        with np.errstate(divide="ignore", invalid="ignore"):
            conj = (b * t + 2.0 * m0 * u0) * t / (big_a + alpha)
            direct = (big_a - alpha) / drho if drho != 0.0 else conj
        return _out(t, np.where(big_a > 0.0, conj, direct))

    def velocity(t):
        t = np.asarray(t, dtype=float)
        x = np.asarray(position(t))
        v = (b * t - a * x + m0 * u0) / weight(t)
        return _out(t, np.where(t == 0.0, u0, v))

    return position, velocity


def _one_sided(rho1, u1, m0, u0):
    """Position and velocity with gas only on the left face (``m0 > 0``)."""

    def weight(t):
        radicand = 2.0 * m0 * rho1 * (u1 - u0) * t + m0 * m0
        return _guarded_sqrt(radicand, abs(2.0 * m0 * rho1 * (u1 - u0) * t) + m0 * m0)

    def position(t):
        t = np.asarray(t, dtype=float)
        x = u1 * t - 2.0 * m0 * (u1 - u0) * t / (m0 + weight(t))
        return _out(t, x)

    def velocity(t):
        t = np.asarray(t, dtype=float)
        return _out(t, u1 - m0 * (u1 - u0) / weight(t))

    return position, velocity


def _require(setup: RiemannSetup, tags) -> CaseId:
    case = classify(setup)
    if case.tag not in tags:
        raise ClosedFormDomainError(f"setup is {case.name}, expected Case{'/'.join(map(str, tags))}")
    return case


def solve_case1(setup: RiemannSetup) -> Trajectory:
    """Both faces accrete gas for all ``t > 0`` (``u2 <= u0 <= u1``)."""
    case = _require(setup, (1,))
    s = setup
    pos, vel = _two_sided(s.rho_left, s.u_left, s.rho_right, s.u_right, s.m0, effective_u0(s))
    return Trajectory(
        setup=s,
        case=case,
        position=pos,
        velocity=vel,
        limit_velocity=zero_mass_velocity(s.rho_left, s.u_left, s.rho_right, s.u_right),
        branches=((0.0, "two-sided"),),
    )


def solve_case2(setup: RiemannSetup) -> tuple[Trajectory, VacuumRecord]:
    """Left gas pushes the piston, which never reaches the right gas."""
    case = _require(setup, (2,))
    s = setup
    pos, vel = _one_sided(s.rho_left, s.u_left, s.m0, s.u0)
    traj = Trajectory(
        setup=s,
        case=case,
        position=pos,
        velocity=vel,
        limit_velocity=s.u_left,
        right_contact=math.inf,
        branches=((0.0, "left-only"),),
    )
    return traj, VacuumRecord("right", traj)


def catch_up_time(rho1: float, u1: float, u2: float, m0: float, u0: float) -> float:
    """Time at which a left-driven piston reaches the right gas front."""
    return 2.0 * m0 * (u2 - u0) / (rho1 * (u1 - u2) ** 2)


def splice_velocity(u1: float, u2: float, u0: float) -> float:
    """Piston velocity at the catch-up instant."""
    return (2.0 * u1 * u2 - u0 * u2 - u0 * u1) / (u1 + u2 - 2.0 * u0)


def solve_case3(setup: RiemannSetup) -> Trajectory:
    """Left-only accretion until catch-up at ``t1``, two-sided afterwards."""
    case = _require(setup, (3,))
    s = setup
    rho1, u1, rho2, u2 = s.rho_left, s.u_left, s.rho_right, s.u_right
    t1 = catch_up_time(rho1, u1, u2, s.m0, s.u0)
    pre_pos, pre_vel = _one_sided(rho1, u1, s.m0, s.u0)
    x_t1 = pre_pos(t1)
    mass_t1 = rho1 * u1 * t1 - rho1 * x_t1 + s.m0
    v_t1 = splice_velocity(u1, u2, s.u0)
    post_pos, post_vel = _two_sided(rho1, u1, rho2, u2, mass_t1, v_t1)

    def position(t):
        t = np.asarray(t, dtype=float)
        early = t <= t1
        x = np.where(early, pre_pos(np.where(early, t, t1)),
                     np.asarray(post_pos(np.maximum(t - t1, 0.0))) + x_t1)
        return _out(t, x)

    def velocity(t):
        t = np.asarray(t, dtype=float)
        early = t <= t1
        v = np.where(early, pre_vel(np.where(early, t, t1)),
                     post_vel(np.maximum(t - t1, 0.0)))
        return _out(t, v)

    return Trajectory(
        setup=s,
        case=case,
        position=position,
        velocity=velocity,
        t1=t1,
        limit_velocity=zero_mass_velocity(rho1, u1, rho2, u2),
        right_contact=t1,
        branches=((0.0, "left-only"), (t1, "two-sided")),
    )


def solve_case6(setup: RiemannSetup) -> tuple[Trajectory, VacuumRecord, VacuumRecord]:
    """No gas reaches the piston; it coasts at ``u0``."""
    case = _require(setup, (6,))
    u0 = effective_u0(setup)
    traj = Trajectory(
        setup=setup,
        case=case,
        position=lambda t: _out(t, u0 * np.asarray(t, dtype=float)),
        velocity=lambda t: _out(t, np.full(np.shape(t), u0)),
        limit_velocity=u0,
        left_contact=math.inf,
        right_contact=math.inf,
        branches=((0.0, "free"),),
    )
    return traj, VacuumRecord("left", traj), VacuumRecord("right", traj)


_MIRROR_BRANCH = {"left-only": "right-only", "right-only": "left-only"}


def _mirror_back(setup: RiemannSetup, case: CaseId, mirrored: Trajectory) -> Trajectory:
    pos, vel = mirrored.position, mirrored.velocity
    return Trajectory(
        setup=setup,
        case=case,
        position=lambda t: -pos(t),
        velocity=lambda t: -vel(t),
        t1=mirrored.t1,
        limit_velocity=None if mirrored.limit_velocity is None else -mirrored.limit_velocity,
        left_contact=mirrored.right_contact,
        right_contact=mirrored.left_contact,
        branches=tuple((t, _MIRROR_BRANCH.get(n, n)) for t, n in mirrored.branches),
        t_max=mirrored.t_max,
        source=mirrored.source,
    )


def solve(setup: RiemannSetup) -> Trajectory:
    """Classify and return the exact trajectory; Cases 4/5 go through reflection."""
    case = classify(setup)
    if case.tag == 1:
        return solve_case1(setup)
    if case.tag == 2:
        return solve_case2(setup)[0]
    if case.tag == 3:
        return solve_case3(setup)
    if case.tag == 6:
        return solve_case6(setup)[0]
    mirrored, _ = reflect(setup)
    return _mirror_back(setup, case, solve(mirrored))


def vacuum_records(traj: Trajectory) -> list[VacuumRecord]:
    """Vacuum regions adjacent to the piston for a solved trajectory."""
    records = []
    if traj.left_contact > 0.0:
        records.append(VacuumRecord("left", traj, traj.left_contact))
    if traj.right_contact > 0.0:
        records.append(VacuumRecord("right", traj, traj.right_contact))
    return records
