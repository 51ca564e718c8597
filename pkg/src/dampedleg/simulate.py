"""Single vertical drop of the damped two-segment leg.

Flight before touch-down is ballistic and handled in closed form. Stance is
integrated in hip height ``y`` and velocity ``ydot`` with an adaptive
Dormand-Prince 5(4) scheme; knee angle and rate follow from the contact
constraint. Events (max compression, lift-off, bottom-out) are located by
bisection inside the accepted step so every phase boundary coincides with a
step boundary.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import _dopri
from ._roots import bisect
from .leg import (
    DamperSpec,
    LegParams,
    StanceState,
    beta_from_length,
    betadot_from,
    leg_force,
    knee_torque,
    leg_length,
    spring_energy,
)

FLIGHT = "flight"
FLEXION = "stance-flexion"
EXTENSION = "stance-extension"

LIFTED_OFF = "lifted-off"
SETTLED = "settled"
BOTTOMED_OUT = "bottomed-out"

TRAJECTORY_COLUMNS = ("t", "y", "ydot", "beta", "betadot", "F_leg", "tau_d", "phase")


class IntegrationError(RuntimeError):
    """Stance integration produced a non-finite state or ran out of time."""


@dataclass(frozen=True)
class SolverSettings:
    abs_tol: float = 1e-5
    rel_tol: float = 1e-5
    max_step: float = 1e-5
    max_sim_time: float = 2.0
    settle_speed_eps: float = 1e-3
    settle_duration: float = 0.05
    beta_min: float = math.radians(20.0)

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def event_tol(self) -> float:
        """Time resolution of event localization."""
        return self.max_step * 1e-4


@dataclass(frozen=True)
class DropConfig:
    h: float = 0.14
    h0: float = 0.14
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h >= 0):
            raise ValueError(f"h must be finite and >= 0, got {self.h!r}")
        if not (math.isfinite(self.h0) and self.h0 > 0):
            raise ValueError(f"h0 must be finite and > 0, got {self.h0!r}")

    @property
    def delta_h(self) -> float:
        return self.h - self.h0


@dataclass(frozen=True)
class Event:
    name: str
    t: float


@dataclass
class SimTrajectory:
    """Time-resolved record of one drop, one row per accepted step."""

    t: np.ndarray
    y: np.ndarray
    ydot: np.ndarray
    beta: np.ndarray
    betadot: np.ndarray
    F_leg: np.ndarray
    tau_d: np.ndarray
    phase: np.ndarray
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    @property
    def stance_mask(self) -> np.ndarray:
        return self.phase != FLIGHT

    def stance(self) -> "SimTrajectory":
        """Sub-trajectory from touch-down to the end of the run."""
        mask = self.stance_mask
        return SimTrajectory(
            *(getattr(self, c)[mask] for c in TRAJECTORY_COLUMNS),
            events=[e for e in self.events],
        )

    def event_time(self, name: str) -> Optional[float]:
        for e in self.events:
            if e.name == name:
                return e.t
        return None

    def to_csv(self, path, comment: Optional[str] = None):
        with open(path, "w", newline="") as fh:
            if comment:
                for line in comment.splitlines():
                    fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(TRAJECTORY_COLUMNS)
            for row in zip(*(getattr(self, c) for c in TRAJECTORY_COLUMNS)):
                writer.writerow([repr(float(v)) for v in row[:-1]] + [row[-1]])

    def events_to_json(self, path):
        with open(path, "w") as fh:
            json.dump([asdict(e) for e in self.events], fh, indent=2)


@dataclass(frozen=True)
class DropSummary:
    h: float
    v_td: float
    E_T: float
    E_D: float
    v_lo: Optional[float]
    max_compression: float
    outcome: str
    t_td: float
    t_end: float

    def to_dict(self) -> dict:
        return asdict(self)


def touchdown_state(h: float, params: LegParams) -> StanceState:
    """State at the instant the foot reaches the ground after a release from ``h``."""
    if not h >= 0:
        raise ValueError(f"drop height must be >= 0, got {h!r}")
    ydot = -math.sqrt(2.0 * params.g * h)
    y = params.l0
    return StanceState(y, ydot, params.beta0, betadot_from(y, ydot, params))


def stance_rhs(state: StanceState, params: LegParams, spec: DamperSpec) -> np.ndarray:
    """Time derivative ``(ydot, yddot)`` of the stance state."""
    tau = knee_torque(state.beta, state.betadot, spec, params)
    force = leg_force(state.y, state.beta, tau, params)
    return np.array([state.ydot, force / params.m - params.g])


def stance_state(y: float, ydot: float, params: LegParams) -> StanceState:
    """Complete a contact state from hip height and velocity."""
    return StanceState(y, ydot, beta_from_length(y, params), betadot_from(y, ydot, params))


def _make_rhs(params: LegParams, spec: DamperSpec):
    # Inlined version of stance_rhs on plain lists; this is the hot path.
    l1, l2 = params.lambda1, params.lambda2
    lam = l1 * l2
    csum = l1 * l1 + l2 * l2
    m, g = params.m, params.g
    kr, b0 = params.spring_rate, params.beta0
    r_d = params.r_d
    dc_r = spec.d_c * r_d
    dv_r2 = spec.d_v * r_d * r_d
    deadband = spec.velocity_deadband
    acos, sqrt = math.acos, math.sqrt

    def rhs(t, x):
        y, yd = x[0], x[1]
        c = (csum - y * y) / (2.0 * lam)
        if c > 1.0:
            c = 1.0
        elif c < -1.0:
            c = -1.0
        beta = acos(c)
        s = sqrt(1.0 - c * c)
        bd = yd * y / (lam * s)
        if bd < 0.0 and -bd >= deadband:
            td = dc_r - dv_r2 * bd
            power = -td * bd
        else:
            td = 0.0
            power = 0.0
        force = y * (kr * (b0 - beta) + td) / (lam * s)
        return [yd, force / m - g, power]

    return rhs


def _stance_columns(t, y, ydot, phase, params, spec):
    """Derived stance columns, vectorized over samples."""
    lam = params.lambda1 * params.lambda2
    c = (params.lambda1**2 + params.lambda2**2 - y * y) / (2.0 * lam)
    beta = np.arccos(np.clip(c, -1.0, 1.0))
    betadot = ydot * y / (lam * np.sin(beta))
    r_d = params.r_d
    active = (betadot < 0) & (-betadot >= spec.velocity_deadband)
    tau_d = np.where(active, spec.d_c * r_d - spec.d_v * r_d * r_d * betadot, 0.0)
    tau = params.spring_rate * (params.beta0 - beta) + tau_d
    force = np.where(y > params.l0, 0.0, y * tau / (lam * np.sin(beta)))
    return [t, y, ydot, beta, betadot, force, tau_d, phase]


def _bisect_event(rhs, t, x, h, k1, g, tol):
    """Smallest fraction of the step at which event function ``g`` changes sign."""
    lo, hi = 0.0, 1.0
    g0 = g(x)
    while (hi - lo) * h > tol:
        mid = 0.5 * (lo + hi)
        xm = _dopri.step(rhs, t, x, mid * h, k1)[0]
        if (g(xm) > 0) == (g0 > 0):
            lo = mid
        else:
            hi = mid
    return hi


def _quasi_static(params, cfg):
    """Zero-height drop: the leg is set down slowly onto its spring equilibrium."""
    def excess(beta):
        y = leg_length(beta, params)
        tau = params.spring_rate * (params.beta0 - beta)
        return leg_force(y, beta, tau, params) - params.m * params.g

    t_end = cfg.solver.settle_duration
    outcome, end_event = SETTLED, "settled"
    if excess(cfg.solver.beta_min) > 0:
        beta_eq = bisect(excess, cfg.solver.beta_min, params.beta0, xtol=1e-14)
    else:
        # spring too soft to carry the body before the knee stop
        beta_eq = cfg.solver.beta_min
        outcome, end_event = BOTTOMED_OUT, "bottom-out"
    y_eq = leg_length(beta_eq, params)
    cols = _stance_columns(
        np.array([0.0, t_end]), np.array([params.l0, y_eq]), np.zeros(2),
        np.array([FLEXION, FLEXION], dtype=object), params, DamperSpec(),
    )
    traj = SimTrajectory(*cols, events=[Event("touch-down", 0.0), Event(end_event, t_end)])
    summary = DropSummary(
        h=0.0, v_td=0.0, E_T=0.0, E_D=0.0, v_lo=None, max_compression=y_eq,
        outcome=outcome, t_td=0.0, t_end=t_end,
    )
    return traj, summary


def _flight_columns(h, params, n=20):
    t = np.linspace(0.0, math.sqrt(2.0 * h / params.g), n + 1)[:-1]
    zeros = np.zeros(n)
    return [
        t, params.l0 + h - 0.5 * params.g * t * t, -params.g * t,
        np.full(n, params.beta0), zeros, zeros, zeros,
        np.full(n, FLIGHT, dtype=object),
    ]


def simulate_drop(
    params: LegParams, spec: DamperSpec, cfg: DropConfig
) -> tuple[SimTrajectory, DropSummary]:
    """Drop the leg from foot clearance ``cfg.h`` and integrate through stance.

    The run ends at lift-off, when the hip comes to rest (settled), or when the
    knee folds past ``solver.beta_min`` (bottomed-out).
    """
    sv = cfg.solver
    if not sv.beta_min < params.beta0:
        raise ValueError("solver.beta_min must be below the knee resting angle")
    if cfg.h == 0:
        return _quasi_static(params, cfg)

    t_td = math.sqrt(2.0 * cfg.h / params.g)
    l0 = params.l0
    y_min = leg_length(sv.beta_min, params)
    td_state = touchdown_state(cfg.h, params)
    rhs = _make_rhs(params, spec)

    t = t_td
    x = [l0, td_state.ydot, 0.0]
    k1 = rhs(t, x)
    h = sv.max_step
    phase = FLEXION if x[1] < 0 else EXTENSION
    events = [Event("touch-down", t_td)]
    rows = [(t, x[0], x[1], phase)]
    min_y = l0
    settle_start = None
    outcome = None
    v_lo = None
    event_fns = {
        "lift-off": lambda s: s[0] - l0,
        "max-compression": lambda s: s[1],
        "re-flexion": lambda s: s[1],
        "bottom-out": lambda s: s[0] - y_min,
    }

    while outcome is None:
        if t - t_td > sv.max_sim_time:
            raise IntegrationError(
                f"no lift-off or settling within {sv.max_sim_time} s of touch-down"
            )
        x_new, err, k7 = _dopri.step(rhs, t, x, h, k1)
        if not all(math.isfinite(v) for v in x_new):
            if h <= 1e-14:
                raise IntegrationError(f"non-finite state at t={t!r}")
            h *= 0.25
            continue
        norm = _dopri.error_norm(err, x, x_new, sv.abs_tol, sv.rel_tol)
        if norm > 1.0:
            h = _dopri.next_step_size(h, norm)
            continue

        crossed = []
        if x[0] < l0 <= x_new[0] and x_new[1] > 0:
            crossed.append("lift-off")
        if x[1] < 0 <= x_new[1]:
            crossed.append("max-compression")
        elif x[1] > 0 >= x_new[1]:
            crossed.append("re-flexion")
        if x_new[0] < y_min <= x[0]:
            crossed.append("bottom-out")

        hit = None
        if crossed:
            located = [
                (_bisect_event(rhs, t, x, h, k1, event_fns[name], sv.event_tol), name)
                for name in crossed
            ]
            theta, hit = min(located)
            h_taken = theta * h
            x_new = _dopri.step(rhs, t, x, h_taken, k1)[0]
            k7 = rhs(t + h_taken, x_new)
        else:
            h_taken = h

        t += h_taken
        x = x_new
        k1 = k7
        min_y = min(min_y, x[0])

        if hit is not None:
            events.append(Event(hit, t))
            if hit == "max-compression":
                phase = EXTENSION
            elif hit == "re-flexion":
                phase = FLEXION
            elif hit == "lift-off":
                outcome = LIFTED_OFF
                v_lo = x[1]
            elif hit == "bottom-out":
                outcome = BOTTOMED_OUT
        rows.append((t, x[0], x[1], phase))

        if outcome is None and abs(x[1]) < sv.settle_speed_eps and x[0] < l0:
            if settle_start is None:
                settle_start = t
            elif t - settle_start >= sv.settle_duration:
                events.append(Event("settled", t))
                outcome = SETTLED
        else:
            settle_start = None

        h = min(_dopri.next_step_size(h, norm), sv.max_step)

    ts, ys, yds, phases = zip(*rows)
    stance = _stance_columns(
        np.array(ts), np.array(ys), np.array(yds),
        np.array(phases, dtype=object), params, spec,
    )
    flight = _flight_columns(cfg.h, params)
    traj = SimTrajectory(
        *(np.concatenate([f, s]) for f, s in zip(flight, stance)), events=events
    )
    summary = DropSummary(
        h=cfg.h,
        v_td=-td_state.ydot,
        E_T=params.m * params.g * cfg.h,
        E_D=x[2],
        v_lo=v_lo,
        max_compression=min_y,
        outcome=outcome,
        t_td=t_td,
        t_end=t,
    )
    return traj, summary


def mechanical_energy(traj: SimTrajectory, params: LegParams) -> np.ndarray:
    """Kinetic + gravitational (datum at l0) + spring energy per sample."""
    spring = np.array([spring_energy(b, params) for b in traj.beta])
    return 0.5 * params.m * traj.ydot**2 + params.m * params.g * (traj.y - params.l0) + spring


def energy_audit(traj: SimTrajectory, params: LegParams) -> np.ndarray:
    """Residual of the stance energy balance at every sample.

    Mechanical energy change since touch-down plus the damper work integrated
    by the trapezoid rule; zero for an exact trajectory.
    """
    st = traj.stance()
    e = mechanical_energy(st, params)
    power = np.maximum(0.0, -st.tau_d * st.betadot)
    dissipated = np.concatenate(
        ([0.0], np.cumsum(0.5 * (power[1:] + power[:-1]) * np.diff(st.t)))
    )
    return e - e[0] + dissipated
