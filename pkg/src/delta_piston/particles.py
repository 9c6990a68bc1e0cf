"""Event-driven sticky-particle model of the free piston.

The gas on each side is cut into equal-mass particles that move ballistically
and stick on contact (perfectly inelastic collisions).  The piston is one more
cluster.  Positions are kept with the piston slab collapsed to a point, so the
piston length only enters when physical coordinates are reported.

Masses and momenta are carried as double-double pairs so that merges conserve
them to far below double rounding; every merge's residual defect is measured
exactly with ``math.fsum`` and accumulated into the reported drift.
"""

from __future__ import annotations

import concurrent.futures
import csv
import heapq
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .problem import RiemannSetup, effective_u0
from .trajectory import Trajectory

__all__ = [
    "ParticleSystem",
    "AccretionRecord",
    "ParticleRun",
    "NegativeEventTime",
    "discretize",
    "run",
    "required_half_width",
    "convergence_study",
    "simulate",
    "EVENT_LOG_HEADER",
]

EVENT_LOG_HEADER = ("t", "event_side", "piston_mass", "piston_velocity", "piston_x1")
SIMULTANEOUS = 1e-14
LEFT, PISTON, RIGHT = -1, 0, 1
_SIDE_NAME = {LEFT: "left", RIGHT: "right", PISTON: "both"}


class NegativeEventTime(RuntimeError):
    pass


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _dd_add(a_hi, a_lo, b_hi, b_lo):
    s, e = _two_sum(a_hi, b_hi)
    e += a_lo + b_lo
    hi = s + e
    return hi, e - (hi - s)


@dataclass
class ParticleSystem:
    """Clusters ordered left to right, one of which is the piston.

    Cluster ``i`` sits at ``x_ref[i] + v_i (t - t_ref[i])`` where ``v_i`` is its
    momentum over its mass.  ``side`` marks left gas, right gas or the piston.
    """

    mass_hi: list[float]
    mass_lo: list[float]
    mom_hi: list[float]
    mom_lo: list[float]
    x_ref: list[float]
    t_ref: list[float]
    side: list[int]
    piston_index: int
    setup: RiemannSetup
    n_per_side: int
    half_width: float
    time: float = 0.0
    prev: list[int] = field(default_factory=list)
    next: list[int] = field(default_factory=list)
    alive: list[bool] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.mass_hi)
        if not self.prev:
            self.prev = [i - 1 for i in range(n)]
            self.next = [i + 1 if i + 1 < n else -1 for i in range(n)]
            self.alive = [True] * n

    def velocity(self, i: int) -> float:
        m = self.mass_hi[i] + self.mass_lo[i]
        if m == 0.0:
            return effective_u0(self.setup)
        return (self.mom_hi[i] + self.mom_lo[i]) / m

    def position(self, i: int, t: float | None = None) -> float:
        t = self.time if t is None else t
        dt = t - self.t_ref[i]
        return self.x_ref[i] + self.velocity(i) * dt if dt else self.x_ref[i]

    def clusters(self):
        """Current ``(mass, velocity, physical position)`` of every cluster, left to right."""
        out = []
        i = self._head()
        while i != -1:
            x = self.position(i)
            if self.side[i] == RIGHT:
                x += self.setup.l
            out.append((self.mass_hi[i] + self.mass_lo[i], self.velocity(i), x))
            i = self.next[i]
        return out

    def _head(self) -> int:
        for i, a in enumerate(self.alive):
            if a:
                while self.prev[i] != -1:
                    i = self.prev[i]
                return i
        return -1

    def total_mass(self) -> float:
        return math.fsum(v for i, a in enumerate(self.alive) if a for v in (self.mass_hi[i], self.mass_lo[i]))

    def total_momentum(self) -> float:
        return math.fsum(v for i, a in enumerate(self.alive) if a for v in (self.mom_hi[i], self.mom_lo[i]))


@dataclass
class AccretionRecord:
    """Mass stuck to the left and right faces, sampled at event times."""

    t: np.ndarray
    m1: np.ndarray
    m2: np.ndarray


@dataclass
class ParticleRun:
    system: ParticleSystem
    event_t: np.ndarray
    event_side: list[str]
    event_mass: np.ndarray
    event_velocity: np.ndarray
    event_x1: np.ndarray
    grid_t: np.ndarray
    grid_x1: np.ndarray
    grid_v: np.ndarray
    accretion: AccretionRecord
    max_momentum_drift: float
    max_mass_drift: float
    t_end: float

    @property
    def event_count(self) -> int:
        return len(self.event_t) - 1

    def trajectory(self) -> Trajectory:
        """Exact piecewise-linear piston path through the event log."""
        ts = np.append(self.event_t, self.t_end) if self.event_t[-1] < self.t_end else self.event_t
        xs = np.append(self.event_x1, self.event_x1[-1] + self.event_velocity[-1] * (self.t_end - self.event_t[-1])) \
            if self.event_t[-1] < self.t_end else self.event_x1
        vs = self.event_velocity
        tev = self.event_t

        def position(t):
            out = np.interp(t, ts, xs)
            return float(out) if np.ndim(t) == 0 else out

        def velocity(t):
            k = np.searchsorted(tev, t, side="right") - 1
            out = vs[np.clip(k, 0, len(vs) - 1)]
            return float(out) if np.ndim(t) == 0 else out

        from .problem import classify

        s = self.system.setup
        return Trajectory(
            setup=s,
            case=classify(s),
            position=position,
            velocity=velocity,
            branches=((0.0, "particles"),),
            t_max=self.t_end,
            source="particles",
        )

    def event_log_csv(self, stream=None) -> str:
        own = stream is None
        out = io.StringIO() if own else stream
        w = csv.writer(out, lineterminator="\n")
        w.writerow(EVENT_LOG_HEADER)
        for row in zip(self.event_t, self.event_side, self.event_mass, self.event_velocity, self.event_x1):
            t, side, m, v, x = row
            w.writerow([repr(float(t)), side, repr(float(m)), repr(float(v)), repr(float(x))])
        return out.getvalue() if own else ""


def discretize(setup: RiemannSetup, n_per_side: int, L: float) -> ParticleSystem:
    """Cut ``L`` of gas on each side into ``n_per_side`` cell-centred particles."""
    if int(n_per_side) != n_per_side or n_per_side < 1:
        raise ValueError("n_per_side must be a positive integer")
    if not (math.isfinite(L) and L > 0):
        raise ValueError("L must be positive and finite")
    n = int(n_per_side)
    h = L / n
    mass_hi, mom_hi, x_ref, side = [], [], [], []
    if setup.rho_left > 0.0:
        m = setup.rho_left * h
        for j in range(n - 1, -1, -1):
            mass_hi.append(m)
            mom_hi.append(m * setup.u_left)
            x_ref.append(-(j + 0.5) * h)
            side.append(LEFT)
    piston = len(mass_hi)
    mass_hi.append(setup.m0)
    mom_hi.append(setup.m0 * setup.u0)
    x_ref.append(0.0)
    side.append(PISTON)
    if setup.rho_right > 0.0:
        m = setup.rho_right * h
        for j in range(n):
            mass_hi.append(m)
            mom_hi.append(m * setup.u_right)
            # collapsed coordinates: physical position is this plus l
            x_ref.append((j + 0.5) * h)
            side.append(RIGHT)
    k = len(mass_hi)
    return ParticleSystem(
        mass_hi=mass_hi,
        mass_lo=[0.0] * k,
        mom_hi=mom_hi,
        mom_lo=[0.0] * k,
        x_ref=x_ref,
        t_ref=[0.0] * k,
        side=side,
        piston_index=piston,
        setup=setup,
        n_per_side=n,
        half_width=float(L),
    )


def required_half_width(setup: RiemannSetup, t_end: float) -> float:
    """Gas extent that can reach the piston before ``t_end``.

    The piston velocity stays within the range of the initial velocities, so
    only gas within ``(relative speed) * t_end`` of a face can hit it.
    """
    u0 = effective_u0(setup)
    vs = [u0]
    if setup.rho_left > 0:
        vs.append(setup.u_left)
    if setup.rho_right > 0:
        vs.append(setup.u_right)
    need = 0.0
    if setup.rho_left > 0:
        need = max(need, (setup.u_left - min(vs)) * t_end)
    if setup.rho_right > 0:
        need = max(need, (max(vs) - setup.u_right) * t_end)
    return need


def _pair_time(sys: ParticleSystem, i: int, j: int, now: float) -> float:
    xi, xj = sys.position(i, now), sys.position(j, now)
    gap = xj - xi
    if gap < 0.0:
        if gap < -1e-9 * (abs(xi) + abs(xj) + sys.half_width):
            raise NegativeEventTime(f"clusters {i} and {j} overlap by {-gap} at t={now}")
        gap = 0.0
    closing = sys.velocity(i) - sys.velocity(j)
    if closing <= 0.0:
        return math.inf
    return now + gap / closing


def run(system: ParticleSystem, t_end: float, grid=None, margin: float = 0.05) -> ParticleRun:
    """Advance the system to ``t_end`` merging clusters at every contact.

    Refuses to run when the truncated gas could reach the piston before
    ``t_end`` (``L`` too small).
    """
    s = system.setup
    need = required_half_width(s, t_end - system.time)
    h = system.half_width / system.n_per_side
    if system.half_width <= need * (1.0 + margin) + h and need > 0.0:
        raise ValueError(
            f"L={system.half_width} too small: gas within {need:.6g} (+{margin:.0%} and one cell) can reach the piston"
        )
    grid = np.zeros(0) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")

    sysm = system
    p = sysm.piston_index
    version = [0] * len(sysm.mass_hi)
    heap: list = []

    def push(i):
        j = sysm.next[i]
        if i == -1 or j == -1:
            return
        tc = _pair_time(sysm, i, j, sysm.time)
        if tc <= t_end:
            heapq.heappush(heap, (tc, i, j, version[i], version[j]))

    i = sysm._head()
    while i != -1:
        push(i)
        i = sysm.next[i]

    scale_m = math.fsum(abs(m * sysm.velocity(k)) for k, m in enumerate(sysm.mass_hi) if sysm.alive[k])
    scale_m = scale_m or 1.0
    scale_mass = sysm.total_mass() or 1.0
    drift_mom, drift_mass = 0.0, 0.0
    max_drift_mom, max_drift_mass = 0.0, 0.0
    m1 = m2 = 0.0

    ev_t = [sysm.time]
    ev_side = ["init"]
    ev_mass = [sysm.mass_hi[p] + sysm.mass_lo[p]]
    ev_v = [sysm.velocity(p)]
    ev_x = [sysm.position(p)]
    acc_t, acc_m1, acc_m2 = [sysm.time], [0.0], [0.0]
    gx, gv = [], []
    gi = 0

    def find(k):
        while not sysm.alive[k]:
            k = absorbed_into[k]
        return k

    absorbed_into: dict[int, int] = {}

    while heap:
        tc, i, j, vi, vj = heapq.heappop(heap)
        if not (sysm.alive[i] and sysm.alive[j] and version[i] == vi and version[j] == vj):
            continue
        if tc < sysm.time - SIMULTANEOUS:
            raise NegativeEventTime(f"event at {tc} before current time {sysm.time}")
        tc = max(tc, sysm.time)
        while gi < len(grid) and grid[gi] < tc:
            gx.append(sysm.position(p, grid[gi]))
            gv.append(sysm.velocity(p))
            gi += 1
        batch = [(i, j)]
        while heap and heap[0][0] <= tc + SIMULTANEOUS:
            _, a, b, va, vb = heapq.heappop(heap)
            if sysm.alive[a] and sysm.alive[b] and version[a] == va and version[b] == vb:
                batch.append((a, b))
        batch.sort()
        sides = set()
        touched = []
        for a, b in batch:
            a, b = find(a), find(b)
            if a == b:
                continue
            keep, gone = (b, a) if b == p else (a, b)
            x_keep = sysm.position(keep, tc)
            if keep == p:
                gm = sysm.mass_hi[gone] + sysm.mass_lo[gone]
                if gone == a:
                    m1 += gm
                    sides.add(LEFT)
                else:
                    m2 += gm
                    sides.add(RIGHT)
            old = (sysm.mass_hi[keep], sysm.mass_lo[keep], sysm.mass_hi[gone], sysm.mass_lo[gone])
            mh, ml = _dd_add(*old)
            drift_mass += math.fsum((mh, ml, -old[0], -old[1], -old[2], -old[3]))
            oldp = (sysm.mom_hi[keep], sysm.mom_lo[keep], sysm.mom_hi[gone], sysm.mom_lo[gone])
            ph, pl = _dd_add(*oldp)
            drift_mom += math.fsum((ph, pl, -oldp[0], -oldp[1], -oldp[2], -oldp[3]))
            sysm.mass_hi[keep], sysm.mass_lo[keep] = mh, ml
            sysm.mom_hi[keep], sysm.mom_lo[keep] = ph, pl
            sysm.x_ref[keep], sysm.t_ref[keep] = x_keep, tc
            sysm.alive[gone] = False
            absorbed_into[gone] = keep
            pv, nx = sysm.prev[a], sysm.next[b]
            if keep == a:
                sysm.next[a] = nx
                if nx != -1:
                    sysm.prev[nx] = a
            else:
                sysm.prev[b] = pv
                if pv != -1:
                    sysm.next[pv] = b
            version[keep] += 1
            touched.append(keep)
        sysm.time = tc
        max_drift_mom = max(max_drift_mom, abs(drift_mom) / scale_m)
        max_drift_mass = max(max_drift_mass, abs(drift_mass) / scale_mass)
        for k in dict.fromkeys(touched):
            if sysm.alive[k]:
                if sysm.prev[k] != -1:
                    push(sysm.prev[k])
                push(k)
        if sides or p in touched:
            ev_t.append(tc)
            ev_side.append(_SIDE_NAME[PISTON] if len(sides) == 2 else _SIDE_NAME[next(iter(sides))] if sides else "gas")
            ev_mass.append(sysm.mass_hi[p] + sysm.mass_lo[p])
            ev_v.append(sysm.velocity(p))
            ev_x.append(sysm.x_ref[p])
            acc_t.append(tc)
            acc_m1.append(m1)
            acc_m2.append(m2)

    while gi < len(grid):
        if grid[gi] > t_end * (1 + 1e-12):
            raise ValueError("grid extends beyond t_end")
        gx.append(sysm.position(p, grid[gi]))
        gv.append(sysm.velocity(p))
        gi += 1

    return ParticleRun(
        system=sysm,
        event_t=np.array(ev_t),
        event_side=ev_side,
        event_mass=np.array(ev_mass),
        event_velocity=np.array(ev_v),
        event_x1=np.array(ev_x),
        grid_t=grid,
        grid_x1=np.array(gx),
        grid_v=np.array(gv),
        accretion=AccretionRecord(np.array(acc_t), np.array(acc_m1), np.array(acc_m2)),
        max_momentum_drift=max_drift_mom,
        max_mass_drift=max_drift_mass,
        t_end=float(t_end),
    )


def simulate(setup: RiemannSetup, n_per_side: int, t_end: float, grid=None,
             L: float | None = None, margin: float = 0.1) -> ParticleRun:
    """Discretize with the smallest safe ``L`` (unless given) and run."""
    if L is None:
        need = required_half_width(setup, t_end)
        L = need * (1.0 + margin) if need > 0 else 1.0
        L += 2.0 * L / n_per_side
    return run(discretize(setup, n_per_side, L), t_end, grid)


def _probe_error(args):
    setup, n, t_probe, exact = args
    out = simulate(setup, n, t_probe, grid=[t_probe])
    return n, abs(out.grid_x1[0] - exact)


def convergence_study(setup: RiemannSetup, n_list, t_probe: float, jobs: int = 1):
    """Error of the particle piston position at ``t_probe`` for each ``n``.

    Returns ``(rows, order)`` where rows are ``(n, error)`` and ``order`` is
    the least-squares slope of ``log(error)`` against ``log(1/n)`` (``None``
    when some error is zero).
    """
    from .closed_form import solve

    exact = solve(setup).position(t_probe)
    tasks = [(setup, int(n), t_probe, exact) for n in n_list]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_probe_error, tasks))
    else:
        rows = [_probe_error(t) for t in tasks]
    errs = np.array([e for _, e in rows])
    order = None
    if len(rows) > 1 and np.all(errs > 0):
        ns = np.array([n for n, _ in rows], dtype=float)
        order = float(-np.polyfit(np.log(ns), np.log(errs), 1)[0])
    return rows, order
