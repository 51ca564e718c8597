"""Drop-bench sensor processing: ingestion, smoothing, alignment, envelopes,
measured work loops and isolated-damper rate fits.

Channel files are CSV with a header ``t_s,<channel>`` (SI units, decimal
point). Lines starting with ``#`` are comments. Force channels are named
``F_N``, encoder channels ``y_m``, velocity channels ``v_mps``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .energy import EmptyStanceError, WorkLoop
from .simulate import SimTrajectory

FORCE = "F_N"
POSITION = "y_m"
VELOCITY = "v_mps"


class ParseError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class AlignmentError(ValueError):
    pass


class WindowError(ValueError):
    pass


@dataclass
class TimeSeries:
    name: str
    t: np.ndarray
    values: np.ndarray
    rate: Optional[float] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ValueError("t and values must be 1-d arrays of equal size")
        if len(self.t) and not np.all(np.isfinite(self.t) & np.isfinite(self.values)):
            raise ValueError(f"channel {self.name!r} contains non-finite samples")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError(f"channel {self.name!r} times are not strictly increasing")
        if self.rate is None and len(self.t) > 1:
            self.rate = float(1.0 / np.median(np.diff(self.t)))

    def __len__(self):
        return len(self.t)

    def with_values(self, values, name=None) -> "TimeSeries":
        return TimeSeries(name or self.name, self.t.copy(), values, self.rate)

    def shifted(self, dt: float) -> "TimeSeries":
        return TimeSeries(self.name, self.t - dt, self.values.copy(), self.rate)

    def window(self, t_start: float, t_end: float) -> "TimeSeries":
        keep = (self.t >= t_start) & (self.t <= t_end)
        return TimeSeries(self.name, self.t[keep], self.values[keep], self.rate)

    def to_csv(self, path, comment: Optional[str] = None):
        with open(path, "w", newline="") as fh:
            if comment:
                for line in comment.splitlines():
                    fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["t_s", self.name])
            for a, b in zip(self.t, self.values):
                writer.writerow([repr(float(a)), repr(float(b))])


def load_channel(path, channel: Optional[str] = None) -> TimeSeries:
    """Read a two-column channel file; ``channel`` pins the expected column name."""
    t, v = [], []
    header = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            cells = [c.strip() for c in stripped.split(",")]
            if header is None:
                if len(cells) != 2 or cells[0] != "t_s":
                    raise ParseError(path, lineno, f"expected header 't_s,<channel>', got {stripped!r}")
                if channel is not None and cells[1] != channel:
                    raise ParseError(path, lineno, f"expected channel {channel!r}, got {cells[1]!r}")
                header = cells
                continue
            if len(cells) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(cells)}")
            try:
                a, b = float(cells[0]), float(cells[1])
            except ValueError:
                raise ParseError(path, lineno, f"non-numeric row {stripped!r}") from None
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ParseError(path, lineno, "non-finite value")
            if t and a <= t[-1]:
                raise ParseError(path, lineno, f"timestamp {a!r} does not increase")
            t.append(a)
            v.append(b)
    if header is None:
        raise ParseError(path, 0, "empty file")
    if not t:
        raise ParseError(path, 0, "no data rows")
    return TimeSeries(header[1], np.array(t), np.array(v))


def moving_average(series: TimeSeries, span: int) -> TimeSeries:
    """Centered moving mean over ``span`` samples (odd).

    Near the ends the window shrinks symmetrically so it stays centered; the
    first and last samples are returned unchanged.
    """
    span = int(span)
    if span < 1 or span % 2 == 0:
        raise ValueError(f"span must be a positive odd integer, got {span}")
    n = len(series)
    if span > n:
        raise ValueError(f"span {span} exceeds series length {n}")
    x = series.values
    half = span // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    w = np.minimum(np.minimum(idx, n - 1 - idx), half)
    out = (csum[idx + w + 1] - csum[idx - w]) / (2 * w + 1)
    return series.with_values(out)


@dataclass
class AlignedTrial:
    """Force and hip height on the encoder time base, touch-down at ``t == 0``."""

    t: np.ndarray
    force: np.ndarray
    y: np.ndarray
    shift: float
    force_channel: Optional[TimeSeries] = None


def touchdown_time(force: TimeSeries, threshold: float = 2.0) -> float:
    """First upward crossing of ``threshold``, linearly interpolated."""
    f = force.values
    above = f >= threshold
    if not above.any():
        raise AlignmentError(f"force never reaches the {threshold} N threshold")
    i = int(np.argmax(above))
    if i == 0:
        return float(force.t[0])
    t0, t1 = force.t[i - 1], force.t[i]
    f0, f1 = f[i - 1], f[i]
    return float(t0 + (threshold - f0) * (t1 - t0) / (f1 - f0))


def align_trial(force: TimeSeries, encoder: TimeSeries, threshold: float = 2.0) -> AlignedTrial:
    """Shift both channels to touch-down and resample force onto the encoder base."""
    shift = touchdown_time(force, threshold)
    t_enc = encoder.t - shift
    t_f = force.t - shift
    keep = (t_enc >= t_f[0]) & (t_enc <= t_f[-1])
    if keep.sum() < 2:
        raise AlignmentError("force and encoder records do not overlap")
    t = t_enc[keep]
    return AlignedTrial(
        t=t,
        force=np.interp(t, t_f, force.values),
        y=encoder.values[keep],
        shift=shift,
        force_channel=force.shifted(shift),
    )


def stance_window(aligned: AlignedTrial, threshold: float = 2.0, l0: Optional[float] = None) -> tuple:
    """Index range ``[start, stop)`` on the encoder base covering ground contact.

    Contact is bracketed by the last force sample below ``threshold`` before
    touch-down and the first one below it after the force peak, so a coarse
    force channel does not clip the rise and fall off the loop. When the
    resting length ``l0`` is known, the encoder refines both ends: contact
    starts where the hip first drops to ``l0`` and ends where it returns.
    """
    fc = aligned.force_channel
    if fc is None:
        fc = TimeSeries(FORCE, aligned.t, aligned.force)
    ft, fv = fc.t, fc.values
    i0 = int(np.searchsorted(ft, 0.0))
    if i0 >= len(fv) or not np.any(fv[i0:] >= threshold):
        raise EmptyStanceError("no ground contact in record")
    peak = i0 + int(np.argmax(fv[i0:]))
    below = np.nonzero(fv[peak:] < threshold)[0]
    if len(below) == 0:
        raise WindowError("lift-off not detected: force never returns below threshold")
    t_stop = ft[peak + int(below[0])]
    before = np.nonzero(fv[:i0] < threshold)[0]
    t_start = ft[before[-1]] if len(before) else ft[0]
    start = int(np.searchsorted(aligned.t, t_start))
    stop = int(np.searchsorted(aligned.t, t_stop, side="right"))
    if l0 is not None:
        y = aligned.y
        down = np.nonzero(y[start:] <= l0)[0]
        if len(down):
            start += int(down[0])
        k_peak = int(np.searchsorted(aligned.t, ft[peak]))
        up = np.nonzero(y[k_peak:] >= l0)[0]
        if len(up):
            stop = k_peak + int(up[0]) + 1
    return start, stop


def measured_workloop(
    force: TimeSeries,
    encoder: TimeSeries,
    l0: Optional[float] = None,
    threshold: float = 2.0,
) -> WorkLoop:
    """Work loop (hip height vs force) over the stance of a measured drop.

    With ``l0`` given, the force inside the sample interval where contact
    begins is held at the first force sample taken in contact instead of
    being interpolated up from the last airborne sample; a force jump at
    touch-down is otherwise smeared over a whole force-sampling period.
    """
    if not np.any(force.values >= threshold):
        raise EmptyStanceError(f"force never reaches the {threshold} N contact threshold")
    aligned = align_trial(force, encoder, threshold)
    start, stop = stance_window(aligned, threshold, l0)
    y = aligned.y[start:stop].copy()
    f = aligned.force[start:stop].copy()
    if l0 is not None:
        fc = aligned.force_channel
        k1 = min(int(np.searchsorted(fc.t, aligned.t[start])), len(fc.t) - 1)
        rise = aligned.t[start:stop] < fc.t[k1]
        f[rise] = fc.values[k1]
    if len(y) < 3:
        raise EmptyStanceError("stance window shorter than 3 samples")
    return WorkLoop(y, f, l0=l0)


@dataclass
class Envelope:
    t: np.ndarray
    mean: np.ndarray
    half_width: np.ndarray
    multiplier: float = 1.0

    @property
    def lo(self):
        return self.mean - self.half_width

    @property
    def hi(self):
        return self.mean + self.half_width

    def to_csv(self, path, comment: Optional[str] = None):
        with open(path, "w", newline="") as fh:
            if comment:
                for line in comment.splitlines():
                    fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["t", "mean", "lo", "hi"])
            for row in zip(self.t, self.mean, self.lo, self.hi):
                writer.writerow([repr(float(v)) for v in row])


def trial_envelope(trials: Sequence[TimeSeries], multiplier: float = 1.0) -> Envelope:
    """Pointwise mean and ``multiplier`` x population std across trials.

    All trials are resampled onto the first trial's times within the common
    time span.
    """
    if len(trials) < 2:
        raise ValueError("an envelope needs at least 2 trials")
    if multiplier < 0:
        raise ValueError("multiplier must be >= 0")
    t_start = max(tr.t[0] for tr in trials)
    t_end = min(tr.t[-1] for tr in trials)
    base = trials[0].t
    base = base[(base >= t_start) & (base <= t_end)]
    if len(base) == 0:
        raise ValueError("trials do not overlap in time")
    stack = np.vstack([np.interp(base, tr.t, tr.values) for tr in trials])
    return Envelope(base, stack.mean(axis=0), multiplier * stack.std(axis=0), multiplier)


@dataclass
class DamperFit:
    rate: float
    intercept: float
    window: tuple
    residual_rms: float
    dissipated_work: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path, extra: Optional[dict] = None):
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def fit_settling_slope(
    force: TimeSeries, velocity: TimeSeries, window: Optional[tuple] = None
) -> DamperFit:
    """Least-squares damping rate on the post-peak branch of force vs speed.

    ``window`` restricts the fit to speeds in ``[v_lo, v_hi]``; by default the
    whole branch after the force peak is used. The intercept is the
    speed-independent (Coulomb-like) part of the force.
    """
    speed = np.abs(np.interp(force.t, velocity.t, velocity.values))
    f = force.values
    peak = int(np.argmax(f))
    branch_v, branch_f = speed[peak:], f[peak:]
    if window is None:
        window = (float(branch_v.min()), float(branch_v.max()))
    v_lo, v_hi = window
    keep = (branch_v >= v_lo) & (branch_v <= v_hi)
    if keep.sum() < 10:
        raise ValueError(f"only {int(keep.sum())} points in fit window, need 10")
    v, fv = branch_v[keep], branch_f[keep]
    if np.ptp(v) == 0:
        raise ValueError("speed is constant inside the fit window")
    slope, intercept = np.polyfit(v, fv, 1)
    resid = fv - (slope * v + intercept)
    if slope < 0:
        warnings.warn(f"negative damping rate {slope:.3g} N s/m", RuntimeWarning, stacklevel=2)
    power = f * speed
    work = float(np.sum(0.5 * (power[1:] + power[:-1]) * np.diff(force.t)))
    return DamperFit(
        rate=float(slope),
        intercept=float(intercept),
        window=(float(v_lo), float(v_hi)),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        dissipated_work=work,
        n_points=int(keep.sum()),
    )


def velocity_from_position(position: TimeSeries) -> TimeSeries:
    """Finite-difference velocity of a position channel."""
    return TimeSeries(VELOCITY, position.t.copy(), np.gradient(position.values, position.t), position.rate)


def impulse(force: TimeSeries) -> TimeSeries:
    """Cumulative trapezoidal integral of force from the first sample [N s]."""
    f, t = force.values, force.t
    steps = 0.5 * (f[1:] + f[:-1]) * np.diff(t)
    return TimeSeries("impulse_Ns", t.copy(), np.concatenate(([0.0], np.cumsum(steps))), force.rate)


def export_sensor_channels(
    traj: SimTrajectory,
    params,
    force_rate: float = 1000.0,
    encoder_rate: float = 8000.0,
    t_after: float = 0.05,
    force_offset: float = 0.0,
    encoder_offset: float = 0.0,
) -> tuple:
    """Sample a simulated drop like the bench sensors would.

    The record runs from release to ``t_after`` past the end of the run; after
    lift-off the hip follows a ballistic arc. Offsets shift the first sample of
    each channel to emulate unsynchronized clocks.
    """
    t_end = traj.t[-1]
    v_end = traj.ydot[-1]
    y_end = traj.y[-1]
    lifted = traj.event_time("lift-off") is not None

    def hip(ts):
        y = np.interp(ts, traj.t, traj.y)
        if lifted:
            late = ts > t_end
            dt = ts[late] - t_end
            y[late] = y_end + v_end * dt - 0.5 * params.g * dt * dt
        return y

    st = traj.stance()

    def grf(ts):
        # force jumps at touch-down; interpolate within stance only
        inside = (ts >= st.t[0]) & (ts <= t_end)
        return np.where(inside, np.interp(ts, st.t, st.F_leg), 0.0)

    stop = t_end + t_after
    t_force = np.arange(force_offset, stop, 1.0 / force_rate)
    t_enc = np.arange(encoder_offset, stop, 1.0 / encoder_rate)
    return (
        TimeSeries(FORCE, t_force, grf(t_force), force_rate),
        TimeSeries(POSITION, t_enc, hip(t_enc), encoder_rate),
    )
