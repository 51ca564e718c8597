"""Dissipated energy, perturbation response and work-loop analysis."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .leg import LegParams
from .simulate import SimTrajectory


class EmptyStanceError(ValueError):
    """Trajectory or record has no ground-contact samples."""


@dataclass
class WorkLoop:
    """Leg force against leg length, ordered in time from touch-down.

    ``length`` is in meters; ``l0`` (optional) only serves the percent view.
    The loop is closed implicitly from the last sample back to the first.
    """

    length: np.ndarray
    force: np.ndarray
    l0: Optional[float] = None
    closed: bool = False

    def __post_init__(self):
        self.length = np.asarray(self.length, dtype=float)
        self.force = np.asarray(self.force, dtype=float)
        if self.length.shape != self.force.shape or self.length.ndim != 1:
            raise ValueError("length and force must be 1-d arrays of equal size")

    def __len__(self):
        return len(self.length)

    def reversed(self) -> "WorkLoop":
        return WorkLoop(self.length[::-1], self.force[::-1], self.l0, self.closed)

    def percent_of_l0(self) -> np.ndarray:
        if self.l0 is None:
            raise ValueError("loop has no resting length attached")
        return 100.0 * self.length / self.l0

    def to_csv(self, path, comment: Optional[str] = None):
        with open(path, "w", newline="") as fh:
            if comment:
                for line in comment.splitlines():
                    fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["leg_length_m", "force_N"])
            for a, b in zip(self.length, self.force):
                writer.writerow([repr(float(a)), repr(float(b))])


@dataclass(frozen=True)
class EnergyBreakdown:
    """Loop energy split into Coulomb friction, impact and viscous parts [J]."""

    E_effective: float
    E_cfriction: float
    E_impact: float
    E_viscous: float

    @property
    def total(self) -> float:
        return math.fsum((self.E_cfriction, self.E_impact, self.E_viscous))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path, extra: Optional[dict] = None):
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def _trapezoid(y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def dissipated_energy(traj: SimTrajectory) -> float:
    """Damper work over stance, trapezoid rule on the sampled power."""
    st = traj.stance()
    if len(st) == 0:
        raise EmptyStanceError("trajectory has no stance samples")
    power = np.maximum(0.0, -st.tau_d * st.betadot)
    return _trapezoid(power, st.t)


def delta_Ed(E_D_perturbed: float, E_D0: float) -> float:
    """Change of dissipated energy relative to the reference drop."""
    return E_D_perturbed - E_D0


def full_rejection(delta_h: float, params: LegParams) -> float:
    """Dissipation change that would exactly cancel a height perturbation."""
    return params.m * params.g * delta_h


def workloop_from_trajectory(traj: SimTrajectory, l0: Optional[float] = None) -> WorkLoop:
    st = traj.stance()
    return WorkLoop(st.y.copy(), st.F_leg.copy(), l0=l0)


def signed_area(loop: WorkLoop) -> float:
    """Shoelace area; positive for counter-clockwise traversal."""
    if len(loop) < 3:
        raise ValueError(f"work loop needs at least 3 samples, got {len(loop)}")
    x, y = loop.length, loop.force
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def loop_area(loop: WorkLoop) -> float:
    """Energy enclosed by the loop (magnitude of the signed area)."""
    return abs(signed_area(loop))


def decompose_energy(E_effective: float, E_cfriction: float, E_impact: float) -> EnergyBreakdown:
    """Viscous loss as what remains of the loop energy after friction and impact."""
    for name, value in (
        ("E_effective", E_effective),
        ("E_cfriction", E_cfriction),
        ("E_impact", E_impact),
    ):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")
    # exact rational difference, then the adjacent float whose re-sum lands on E_effective
    viscous = float(Fraction(E_effective) - Fraction(E_cfriction) - Fraction(E_impact))
    for v in (viscous, math.nextafter(viscous, -math.inf), math.nextafter(viscous, math.inf)):
        if math.fsum((E_cfriction, E_impact, v)) == E_effective:
            viscous = v
            break
    if viscous < 0:
        warnings.warn(
            f"negative viscous loss {viscous:.6g} J: friction and impact exceed the "
            "measured loop energy",
            RuntimeWarning,
            stacklevel=2,
        )
    return EnergyBreakdown(E_effective, E_cfriction, E_impact, viscous)


def truncate_to_max_compression(slow: WorkLoop, free: WorkLoop) -> WorkLoop:
    """Drop slow-drop samples compressed beyond the free drop's deepest point."""
    if len(slow) == 0 or len(free) == 0:
        raise ValueError("both loops must be nonempty")
    cut = free.length.min()
    if slow.length.max() < cut or free.length.max() < slow.length.min():
        raise ValueError("slow and free loops cover disjoint leg-length ranges")
    keep = slow.length >= cut
    return WorkLoop(slow.length[keep], slow.force[keep], slow.l0, slow.closed)
