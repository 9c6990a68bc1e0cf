"""Piston trajectories shared by every backend, and their CSV export."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problem import CaseId, RiemannSetup

__all__ = ["Trajectory", "VacuumRecord", "write_trajectory_csv", "CSV_HEADER"]

CSV_HEADER = ("t", "x1", "v", "case", "branch")


@dataclass(frozen=True)
class Trajectory:
    """Left-face path ``x1(t)`` of the piston.

    ``position`` and ``velocity`` accept scalars or arrays of times.  Gas on
    the left (right) touches the piston from ``left_contact``
    (``right_contact``) on; ``inf`` means never.  ``branches`` lists
    ``(start_time, name)`` pairs naming the formula or regime in force.
    """

    setup: RiemannSetup
    case: CaseId
    position: Callable
    velocity: Callable
    t1: float | None = None
    limit_velocity: float | None = None
    left_contact: float = 0.0
    right_contact: float = 0.0
    branches: tuple[tuple[float, str], ...] = ((0.0, "two-sided"),)
    t_max: float = math.inf
    source: str = "closed"

    @property
    def piston_length(self) -> float:
        return self.setup.l

    def x1(self, t):
        return self.position(t)

    def x2(self, t):
        return self.position(t) + self.setup.l

    def replace(self, **changes) -> "Trajectory":
        return dataclasses.replace(self, **changes)

    def branch(self, t: float) -> str:
        name = self.branches[0][1]
        for start, label in self.branches:
            if t >= start:
                name = label
        return name

    def near_states(self, t):
        """Gas states in contact with the piston at ``t``.

        Returns ``(rho1, u1, rho2, u2)``; a side not yet (or never) in
        contact has zero density.
        """
        t = np.asarray(t, dtype=float)
        s = self.setup
        rho1 = np.where(t >= self.left_contact, s.rho_left, 0.0)
        rho2 = np.where(t >= self.right_contact, s.rho_right, 0.0)
        u1 = np.full_like(t, s.u_left)
        u2 = np.full_like(t, s.u_right)
        if t.ndim == 0:
            return float(rho1), float(u1), float(rho2), float(u2)
        return rho1, u1, rho2, u2

    def check_range(self, t_hi: float) -> None:
        if t_hi > self.t_max * (1 + 1e-12):
            raise ValueError(f"time {t_hi} beyond computed range [0, {self.t_max}]")

    def sample(self, grid) -> dict[str, np.ndarray]:
        grid = np.asarray(grid, dtype=float)
        self.check_range(float(grid.max()))
        return {
            "t": grid,
            "x1": np.asarray(self.position(grid), dtype=float),
            "v": np.asarray(self.velocity(grid), dtype=float),
            "branch": np.array([self.branch(float(t)) for t in grid]),
        }


@dataclass(frozen=True)
class VacuumRecord:
    """Vacuum between one piston face and the receding gas front on that side."""

    side: str
    trajectory: Trajectory
    active_until: float = math.inf

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")

    def interval(self, t):
        """Open interval ``(lo, hi)`` of vacuum at time ``t`` (physical view)."""
        s = self.trajectory.setup
        t = np.asarray(t, dtype=float)
        if self.side == "right":
            lo = self.trajectory.x2(t)
            hi = s.u_right * t + s.l if s.rho_right > 0.0 else np.full_like(t, np.inf)
        else:
            lo = s.u_left * t if s.rho_left > 0.0 else np.full_like(t, -np.inf)
            hi = self.trajectory.x1(t)
        active = t < self.active_until
        lo = np.where(active, lo, np.nan)
        hi = np.where(active, hi, np.nan)
        if t.ndim == 0:
            return float(lo), float(hi)
        return lo, hi


def write_trajectory_csv(traj: Trajectory, grid, stream=None) -> str:
    """Write ``t,x1,v,case,branch`` rows; returns the text when ``stream`` is None."""
    data = traj.sample(grid)
    own = stream is None
    out = io.StringIO() if own else stream
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for t, x, v, b in zip(data["t"], data["x1"], data["v"], data["branch"]):
        writer.writerow([repr(float(t)), repr(float(x)), repr(float(v)), traj.case.tag, b])
    return out.getvalue() if own else ""
