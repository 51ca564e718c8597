"""Two-segment leg geometry and knee spring-damper force laws.

The leg is two equal-or-unequal segments joined at a knee; the hip mass sits
on top and the foot on the ground. Knee angle ``beta`` is the interior angle
between the segments, so the leg shortens as ``beta`` decreases (flexion).
Angles are radians throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields


class GeometryError(ValueError):
    """Knee angle or leg length outside the valid open interval."""


class SingularityError(ArithmeticError):
    """Leg Jacobian vanishes (fully folded or fully stretched leg)."""


@dataclass(frozen=True)
class LegParams:
    """Geometric, inertial and elastic constants of the leg.

    Defaults are the published hardware values; ``g`` is not given there and
    is fixed at 9.81 m/s^2 (reproduces the 560 mJ reference release energy).
    """

    m: float = 0.408
    lambda1: float = 0.15
    lambda2: float = 0.15
    k: float = 5900.0
    r_k: float = 0.025
    r_d: float = 0.02
    beta0: float = math.radians(110.0)
    g: float = 9.81

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{f.name} must be finite and > 0, got {value!r}")
        if not self.beta0 < math.pi:
            raise ValueError(f"beta0 must lie in (0, pi), got {self.beta0!r}")
        l0 = self.l0
        if not 0 < l0 < self.lambda1 + self.lambda2:
            raise ValueError(f"resting leg length {l0!r} is degenerate")

    @property
    def l0(self) -> float:
        """Resting leg length at the knee resting angle."""
        return _length(self.beta0, self.lambda1, self.lambda2)

    @property
    def spring_rate(self) -> float:
        """Rotational knee stiffness ``k * r_k**2`` [N m/rad]."""
        return self.k * self.r_k**2


@dataclass(frozen=True)
class DamperSpec:
    """Knee damper law: viscous coefficient ``d_v``, Coulomb coefficient ``d_c``.

    Pure viscous has ``d_c == 0``, pure Coulomb has ``d_v == 0``; both nonzero
    is allowed. Below ``velocity_deadband`` (rad/s) the damper produces no torque.
    """

    d_v: float = 0.0
    d_c: float = 0.0
    velocity_deadband: float = 1e-6

    def __post_init__(self):
        for name in ("d_v", "d_c"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if not (math.isfinite(self.velocity_deadband) and self.velocity_deadband > 0):
            raise ValueError(
                f"velocity_deadband must be > 0, got {self.velocity_deadband!r}"
            )

    @classmethod
    def viscous(cls, d_v: float, **kwargs) -> "DamperSpec":
        return cls(d_v=d_v, d_c=0.0, **kwargs)

    @classmethod
    def coulomb(cls, d_c: float, **kwargs) -> "DamperSpec":
        return cls(d_v=0.0, d_c=d_c, **kwargs)

    @property
    def is_passive(self) -> bool:
        """True when the damper has no effect at all."""
        return self.d_v == 0 and self.d_c == 0


@dataclass(frozen=True)
class StanceState:
    y: float
    ydot: float
    beta: float
    betadot: float


def _length(beta, lambda1, lambda2):
    return math.sqrt(
        lambda1**2 + lambda2**2 - 2.0 * lambda1 * lambda2 * math.cos(beta)
    )


def _beta(y, lambda1, lambda2):
    c = (lambda1**2 + lambda2**2 - y * y) / (2.0 * lambda1 * lambda2)
    return math.acos(min(1.0, max(-1.0, c)))


def leg_length(beta: float, params: LegParams) -> float:
    """Hip-to-foot distance for knee angle ``beta`` (law of cosines)."""
    if not 0 < beta < math.pi:
        raise GeometryError(f"knee angle {beta!r} outside (0, pi)")
    return _length(beta, params.lambda1, params.lambda2)


def beta_from_length(y: float, params: LegParams) -> float:
    """Knee angle giving leg length ``y``; inverse of :func:`leg_length`."""
    lo = abs(params.lambda1 - params.lambda2)
    hi = params.lambda1 + params.lambda2
    if not lo < y < hi:
        raise GeometryError(f"leg length {y!r} outside ({lo}, {hi})")
    return _beta(y, params.lambda1, params.lambda2)


def length_jacobian(beta: float, params: LegParams) -> float:
    """d(leg_length)/d(beta)."""
    lam = params.lambda1 * params.lambda2
    return lam * math.sin(beta) / _length(beta, params.lambda1, params.lambda2)


def betadot_from(y: float, ydot: float, params: LegParams) -> float:
    """Knee angular velocity implied by hip velocity under ground contact."""
    beta = beta_from_length(y, params)
    s = math.sin(beta)
    if s <= 0.0 or beta <= 0.0 or beta >= math.pi:
        raise SingularityError(f"leg Jacobian singular at beta={beta!r}")
    return ydot * y / (params.lambda1 * params.lambda2 * s)


def damper_torque(betadot: float, spec: DamperSpec, params: LegParams) -> float:
    """Damper torque; zero while the knee extends (tendon goes slack).

    During flexion (``betadot < 0``) the torque is positive and opposes the
    flexion. Speeds inside the deadband produce no torque.
    """
    if betadot >= 0.0 or -betadot < spec.velocity_deadband:
        return 0.0
    r_d = params.r_d
    # sign(betadot) == -1 here
    return spec.d_c * r_d - spec.d_v * r_d * r_d * betadot


def spring_torque(beta: float, params: LegParams) -> float:
    """Knee spring torque, positive (extending) when the knee is flexed."""
    return params.spring_rate * (params.beta0 - beta)


def knee_torque(
    beta: float, betadot: float, spec: DamperSpec, params: LegParams
) -> float:
    """Total knee torque of the parallel spring and damper."""
    return spring_torque(beta, params) + damper_torque(betadot, spec, params)


def leg_force(y: float, beta: float, tau: float, params: LegParams) -> float:
    """Vertical leg force from knee torque; zero while the foot is airborne."""
    if y > params.l0:
        return 0.0
    s = math.sin(beta)
    if abs(s) < 1e-12:
        raise SingularityError(f"leg force singular at beta={beta!r}")
    return y * tau / (params.lambda1 * params.lambda2 * s)


def spring_energy(beta: float, params: LegParams) -> float:
    """Elastic energy stored in the knee spring."""
    return 0.5 * params.spring_rate * (params.beta0 - beta) ** 2
