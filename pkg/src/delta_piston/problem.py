"""Problem data, case classification and the symmetry maps between cases.

A free piston of mass ``m0`` and length ``l`` sits with its left face at the
origin, moving at ``u0``.  Pressureless gas fills the tube on both sides with
constant states ``(rho_left, u_left)`` for ``x < 0`` and ``(rho_right,
u_right)`` for ``x > l``.  Collapsing the piston to a point gives the singular
Riemann problem with a Dirac mass ``m0`` at the origin.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any

__all__ = [
    "RiemannSetup",
    "CaseId",
    "SetupTransform",
    "classify",
    "reflect",
    "galilean_shift",
    "time_shift",
    "effective_u0",
    "mean_velocity",
    "SETUP_KEYS",
]

SETUP_KEYS = ("rho_left", "u_left", "rho_right", "u_right", "m0", "u0", "l")

# canonical order of the flags reported by ``classify``
_FLAG_ORDER = ("u0=u1", "u0=u2", "u1=u2", "rho1=0", "rho2=0", "m0=0")


@dataclass(frozen=True)
class RiemannSetup:
    """Two constant gas states separated by a free piston.

    Units only need to be consistent: density is mass per length (unit tube
    cross-section), ``m0`` a mass and ``l`` a length.
    """

    rho_left: float
    u_left: float
    rho_right: float
    u_right: float
    m0: float
    u0: float
    l: float = 0.0

    def __post_init__(self):
        for name in SETUP_KEYS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name in ("rho_left", "rho_right", "m0", "l"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")

    def replace(self, **changes) -> "RiemannSetup":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in SETUP_KEYS}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RiemannSetup":
        missing = [k for k in SETUP_KEYS if k not in data]
        if missing:
            raise KeyError(f"setup is missing field(s): {', '.join(missing)}")
        unknown = sorted(set(data) - set(SETUP_KEYS))
        if unknown:
            raise KeyError(f"unknown setup field(s): {', '.join(unknown)}")
        return cls(**{k: data[k] for k in SETUP_KEYS})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RiemannSetup":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CaseId:
    """Case number 1-6 plus the equalities that put the setup on a boundary.

    ``boundary_flags`` holds entries such as ``"u0=u1"`` for degenerate
    inequalities and ``"rho2=0"`` when a side carries no gas.
    """

    tag: int
    boundary_flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.tag not in range(1, 7):
            raise ValueError(f"case tag must be in 1..6, got {self.tag}")

    @property
    def name(self) -> str:
        return f"Case{self.tag}"

    def __str__(self) -> str:
        return f"case={self.tag} boundary={','.join(self.boundary_flags)}"


def mean_velocity(rho1: float, u1: float, rho2: float, u2: float) -> float:
    """Square-root-density weighted mean of ``u1`` and ``u2``."""
    s1, s2 = math.sqrt(rho1), math.sqrt(rho2)
    return (s1 * u1 + s2 * u2) / (s1 + s2)


def effective_u0(setup: RiemannSetup) -> float:
    """Piston velocity used by the solvers.

    A massless piston cannot carry its own velocity; it moves with the
    zero-mass delta-shock speed instead.
    """
    if setup.m0 > 0.0 or (setup.rho_left == 0.0 and setup.rho_right == 0.0):
        return setup.u0
    return mean_velocity(setup.rho_left, setup.u_left, setup.rho_right, setup.u_right)


def _flags(*pairs: tuple[str, bool]) -> tuple[str, ...]:
    on = {name for name, hit in pairs if hit}
    return tuple(f for f in _FLAG_ORDER if f in on)


def classify(setup: RiemannSetup) -> CaseId:
    """Assign one of the six cases, resolving boundary orderings.

    Equalities not covered by the strict list fall to Case 6, then 2, then 5,
    and finally to Case 1 extended to ``u2 <= u0 <= u1``.  A side without gas
    is treated as vacuum, so only the ordering against the other side counts.
    """
    for name in SETUP_KEYS:
        if not math.isfinite(getattr(setup, name)):
            raise ValueError(f"{name} must be finite")
    u1, u2 = setup.u_left, setup.u_right
    u0 = effective_u0(setup)
    r1, r2 = setup.rho_left == 0.0, setup.rho_right == 0.0
    extra = [("rho1=0", r1), ("rho2=0", r2), ("m0=0", setup.m0 == 0.0)]

    if r1 and r2:
        return CaseId(6, _flags(*extra))
    if r2:
        if u0 < u1:
            return CaseId(2, _flags(*extra))
        return CaseId(6, _flags(("u0=u1", u0 == u1), *extra))
    if r1:
        if u0 > u2:
            return CaseId(4, _flags(*extra))
        return CaseId(6, _flags(("u0=u2", u0 == u2), *extra))

    if u1 <= u0 <= u2:
        return CaseId(6, _flags(("u0=u1", u0 == u1), ("u0=u2", u0 == u2), *extra))
    if u0 < u1 <= u2:
        return CaseId(2, _flags(("u1=u2", u1 == u2), *extra))
    if u2 <= u1 < u0:
        return CaseId(5, _flags(("u1=u2", u1 == u2), *extra))
    if u2 < u0 < u1:
        return CaseId(1, _flags(*extra))
    if u0 < u2 < u1:
        return CaseId(3, _flags(*extra))
    if u1 < u2 < u0:
        return CaseId(4, _flags(*extra))
    # only u2 < u0 == u1 and u2 == u0 < u1 remain
    return CaseId(1, _flags(("u0=u1", u0 == u1), ("u0=u2", u0 == u2), *extra))


@dataclass(frozen=True)
class SetupTransform:
    """Record of how a setup was normalized.

    ``kind`` is ``"reflection"``, ``"galilean"`` or ``"time_shift"``.  The
    position maps take a left-face trajectory in the transformed frame back to
    the original frame.
    """

    kind: str
    speed: float = 0.0
    # time_shift: new origin (x, t) and the piston datum before/after
    origin: tuple[float, float] = (0.0, 0.0)
    piston_before: tuple[float, float] = (0.0, 0.0)
    piston_after: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("reflection", "galilean", "time_shift"):
            raise ValueError(f"unknown transform kind {self.kind!r}")

    def apply(self, setup: RiemannSetup) -> RiemannSetup:
        if self.kind == "reflection":
            return setup.replace(
                rho_left=setup.rho_right,
                u_left=-setup.u_right,
                rho_right=setup.rho_left,
                u_right=-setup.u_left,
                u0=-setup.u0,
            )
        if self.kind == "galilean":
            s = self.speed
            return setup.replace(u_left=setup.u_left - s, u_right=setup.u_right - s, u0=setup.u0 - s)
        m0, u0 = self.piston_after
        return setup.replace(m0=m0, u0=u0)

    def inverse(self) -> "SetupTransform":
        if self.kind == "reflection":
            return self
        if self.kind == "galilean":
            return SetupTransform("galilean", speed=-self.speed)
        x, t = self.origin
        return SetupTransform(
            "time_shift",
            origin=(-x, -t),
            piston_before=self.piston_after,
            piston_after=self.piston_before,
        )

    def original_time(self, t):
        """Time in the original frame for transformed time ``t``."""
        return t + self.origin[1] if self.kind == "time_shift" else t

    def position_back(self, x, t):
        """Left-face position in the original frame.

        ``x`` is the transformed left-face position at transformed time ``t``.
        """
        if self.kind == "reflection":
            return -x
        if self.kind == "galilean":
            return x + self.speed * t
        return x + self.origin[0]

    def velocity_back(self, v):
        if self.kind == "reflection":
            return -v
        if self.kind == "galilean":
            return v + self.speed
        return v


def reflect(setup: RiemannSetup) -> tuple[RiemannSetup, SetupTransform]:
    """Mirror ``x -> l - x`` so the piston occupies ``[0, l]`` again.

    The gas sides swap and every velocity changes sign; the mirrored left face
    is the original right face, so ``x1 = -x1_mirrored``.
    """
    tr = SetupTransform("reflection")
    return tr.apply(setup), tr


def galilean_shift(setup: RiemannSetup, speed: float) -> tuple[RiemannSetup, SetupTransform]:
    """Move to a frame travelling at ``speed``."""
    if not math.isfinite(speed):
        raise ValueError("speed must be finite")
    tr = SetupTransform("galilean", speed=float(speed))
    return tr.apply(setup), tr


def time_shift(
    setup: RiemannSetup, t0: float, x0: float, m0: float, u0: float
) -> tuple[RiemannSetup, SetupTransform]:
    """Restart the problem at ``(x0, t0)`` with a new piston datum.

    Only valid when both gas states still reach the piston unchanged at the
    new origin, as at a catch-up instant.
    """
    tr = SetupTransform(
        "time_shift",
        origin=(float(x0), float(t0)),
        piston_before=(setup.m0, setup.u0),
        piston_after=(float(m0), float(u0)),
    )
    return tr.apply(setup), tr
