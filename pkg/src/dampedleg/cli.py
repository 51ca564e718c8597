"""Command-line front end.

Subcommands: simulate, table2, calibrate, sweep, analyze, characterize,
envelope. All numeric inputs are SI except the explicitly named ``*-deg``
flags. A JSON config file (``--config``) can supply any model field; flags
win over the file. Exit codes: 0 success, 1 input or validation error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import calibration as cal
from ._roots import ConvergenceError
from .energy import (
    decompose_energy,
    loop_area,
    truncate_to_max_compression,
)
from .expdata import (
    FORCE,
    POSITION,
    VELOCITY,
    export_sensor_channels,
    fit_settling_slope,
    load_channel,
    measured_workloop,
    moving_average,
    trial_envelope,
    velocity_from_position,
)
from .leg import DamperSpec, LegParams
from .simulate import DropConfig, IntegrationError, SolverSettings, simulate_drop

log = logging.getLogger("dampedleg")

EXIT_INPUT = 1
EXIT_NUMERIC = 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# flag dest -> (section, field, converter from flag units to SI)
_OVERRIDES = {
    "m": ("params", "m", float),
    "lambda1": ("params", "lambda1", float),
    "lambda2": ("params", "lambda2", float),
    "k": ("params", "k", float),
    "r_k": ("params", "r_k", float),
    "r_d": ("params", "r_d", float),
    "beta0_deg": ("params", "beta0", math.radians),
    "g": ("params", "g", float),
    "dv": ("damper", "d_v", float),
    "dc": ("damper", "d_c", float),
    "deadband": ("damper", "velocity_deadband", float),
    "height": ("drop", "h", float),
    "h0": ("drop", "h0", float),
    "abs_tol": ("solver", "abs_tol", float),
    "rel_tol": ("solver", "rel_tol", float),
    "max_step": ("solver", "max_step", float),
    "max_sim_time": ("solver", "max_sim_time", float),
    "settle_speed_eps": ("solver", "settle_speed_eps", float),
    "settle_duration": ("solver", "settle_duration", float),
    "beta_min_deg": ("solver", "beta_min", math.radians),
}

_SECTIONS = {
    "params": LegParams,
    "damper": DamperSpec,
    "drop": DropConfig,
    "solver": SolverSettings,
}


def _add_model_flags(p, damper=True):
    g = p.add_argument_group("leg parameters")
    g.add_argument("--m", type=float, help="mass [kg]")
    g.add_argument("--lambda1", type=float, help="upper segment length [m]")
    g.add_argument("--lambda2", type=float, help="lower segment length [m]")
    g.add_argument("--k", type=float, help="spring stiffness [N/m]")
    g.add_argument("--r-k", dest="r_k", type=float, help="spring lever arm [m]")
    g.add_argument("--r-d", dest="r_d", type=float, help="damper lever arm [m]")
    g.add_argument("--beta0-deg", type=float, help="knee resting angle [deg]")
    g.add_argument("--g", type=float, help="gravity [m/s^2]")
    if damper:
        d = p.add_argument_group("damper")
        d.add_argument("--dv", type=float, help="viscous coefficient [N s/m]")
        d.add_argument("--dc", type=float, help="Coulomb coefficient [N]")
        d.add_argument("--deadband", type=float, help="damper speed deadband [rad/s]")
    s = p.add_argument_group("drop and solver")
    s.add_argument("--height", type=float, help="drop height (foot clearance) [m]")
    s.add_argument("--h0", type=float, help="reference drop height [m]")
    s.add_argument("--abs-tol", type=float)
    s.add_argument("--rel-tol", type=float)
    s.add_argument("--max-step", type=float, help="[s]")
    s.add_argument("--max-sim-time", type=float, help="[s]")
    s.add_argument("--settle-speed-eps", type=float, help="[m/s]")
    s.add_argument("--settle-duration", type=float, help="[s]")
    s.add_argument("--beta-min-deg", type=float, help="bottom-out knee angle [deg]")
    p.add_argument("--config", type=Path, help="JSON config file (flags take precedence)")


def resolve_config(args) -> dict:
    """Merge config file and flags into validated model objects.

    Unknown config keys and invalid values raise :class:`UsageError`.
    """
    raw = {name: {} for name in _SECTIONS}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        for section, values in data.items():
            if section not in _SECTIONS:
                raise UsageError(f"unknown config section {section!r}")
            allowed = {f.name for f in fields(_SECTIONS[section])} - {"solver"}
            for key, value in values.items():
                if key not in allowed:
                    raise UsageError(f"unknown key {section}.{key}")
                raw[section][key] = value
    for dest, (section, key, conv) in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            raw[section][key] = conv(value)
    try:
        params = LegParams(**raw["params"])
        damper = DamperSpec(**raw["damper"])
        solver = SolverSettings(**raw["solver"])
        drop = DropConfig(**raw["drop"], solver=solver)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return {"params": params, "damper": damper, "drop": drop}


def _provenance(cfg: dict, **extra) -> dict:
    out = {
        "params": asdict(cfg["params"]),
        "damper": asdict(cfg["damper"]),
        "drop": {"h": cfg["drop"].h, "h0": cfg["drop"].h0},
        "solver": asdict(cfg["drop"].solver),
    }
    out.update(extra)
    return out


def _comment(prov: dict) -> str:
    return "config: " + json.dumps(prov, sort_keys=True)


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _range(text: str, n_default=None):
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad range {text!r}") from None
    if len(values) == 2 and n_default is None:
        return tuple(values)
    if len(values) == 3:
        lo, hi, n = values
        if n < 2 or n != int(n):
            raise UsageError(f"range {text!r}: point count must be an integer >= 2")
        return np.linspace(lo, hi, int(n))
    raise UsageError(f"bad range {text!r}")


def _pair(text: str):
    parts = [p for p in text.split(",") if p]
    if len(parts) != 2:
        raise UsageError(f"expected 'force.csv,encoder.csv', got {text!r}")
    return parts


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj, summary = simulate_drop(cfg["params"], cfg["damper"], cfg["drop"])
    prov = _provenance(cfg, command="simulate")
    traj.to_csv(out / f"{args.prefix}_trajectory.csv", comment=_comment(prov))
    _write_json(out / f"{args.prefix}_events.json", {
        "config": prov, "events": [asdict(e) for e in traj.events],
    })
    _write_json(out / f"{args.prefix}_summary.json", {"config": prov, "summary": summary.to_dict()})
    if args.sensor_dir:
        sdir = Path(args.sensor_dir)
        sdir.mkdir(parents=True, exist_ok=True)
        force, enc = export_sensor_channels(
            traj, cfg["params"], force_rate=args.force_rate, encoder_rate=args.encoder_rate
        )
        force.to_csv(sdir / f"{args.prefix}_force.csv", comment=_comment(prov))
        enc.to_csv(sdir / f"{args.prefix}_encoder.csv", comment=_comment(prov))
    print(
        f"h={summary.h:.4f} m  E_T={summary.E_T * 1e3:.1f} mJ  "
        f"E_D={summary.E_D * 1e3:.1f} mJ  outcome={summary.outcome}"
    )
    return 0


def cmd_table2(args) -> int:
    cfg = resolve_config(args)
    sets = args.sets or [1, 2, 3, 4, 5]
    for s in sets:
        if s not in cal.PAPER_COEFFICIENTS:
            raise UsageError(f"unknown damping set {s}")
    result = cal.run_table2(
        cfg["params"], cfg["drop"], sets=sets, delta_h=args.dh,
        paper_coefficients=not args.calibrate, n_jobs=args.jobs,
    )
    result.config["command"] = "table2"
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    if args.format in ("csv", "both"):
        result.to_csv(prefix.with_suffix(".csv"))
    if args.format in ("json", "both"):
        result.to_json(prefix.with_suffix(".json"))
    print(f"{'set':>3} {'mode':<8} {'coef':>7} {'step-up':>16} {'reference':>16} {'step-down':>16}")
    for s in sets:
        for mode in cal.MODES:
            cells = [result.cell(s, mode, c) for c in (cal.STEP_UP, cal.REFERENCE, cal.STEP_DOWN)]
            text = [
                f"{c.E_D * 1e3:6.1f} mJ ({c.ratio * 100:4.0f}%)"
                if math.isfinite(c.ratio) else f"{c.E_D * 1e3:6.1f} mJ (  - )"
                for c in cells
            ]
            print(f"{s:>3} {mode:<8} {cells[0].coefficient:7.2f} " + " ".join(f"{t:>16}" for t in text))
    return 0


def cmd_calibrate(args) -> int:
    cfg = resolve_config(args)
    bracket = _range(args.bracket) if args.bracket else None
    results = []
    for target_mj in args.target_mj:
        target = cal.DampingTarget(target_mj * 1e-3, args.mode, bracket, args.tol_mj * 1e-3)
        coef = cal.calibrate(cfg["params"], target, cfg["drop"])
        achieved = cal.reference_dissipation(cfg["params"], args.mode, coef, cfg["drop"])
        results.append({"target_J": target.E_D0_target, "mode": args.mode,
                        "coefficient": coef, "achieved_J": achieved})
        unit = "N s/m" if args.mode == cal.VISCOUS else "N"
        print(f"target {target_mj:.1f} mJ  {args.mode}  coefficient {coef:.3f} {unit}  "
              f"(achieved {achieved * 1e3:.2f} mJ)")
    if args.out:
        _write_json(args.out, {"config": _provenance(cfg, command="calibrate"), "results": results})
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    if args.set is not None:
        if args.set not in cal.PAPER_COEFFICIENTS:
            raise UsageError(f"unknown damping set {args.set}")
        spec = cal.damper_for(args.mode, cal.PAPER_COEFFICIENTS[args.set][args.mode])
        cfg["damper"] = spec
    else:
        spec = cfg["damper"]
    grid = _range(args.dh_range, n_default=21)
    curve = cal.sweep_delta_h(cfg["params"], spec, cfg["drop"], grid, n_jobs=args.jobs)
    slope, _, r2 = curve.linear_fit()
    prov = _provenance(cfg, command="sweep", dh_range=args.dh_range)
    curve.to_csv(args.out, comment=_comment(prov))
    print(f"{len(grid)} points  E_D0={curve.E_D0 * 1e3:.1f} mJ  slope={slope:.3f} J/m  "
          f"full-rejection slope={cfg['params'].m * cfg['params'].g:.3f} J/m  R^2={r2:.5f}")
    return 0


def _load_pair(force_path, encoder_path, args):
    force = load_channel(force_path, FORCE)
    enc = load_channel(encoder_path, POSITION)
    if args.force_span > 1:
        force = moving_average(force, args.force_span)
    if args.encoder_span > 1:
        enc = moving_average(enc, args.encoder_span)
    return force, enc


def cmd_analyze(args) -> int:
    cfg = resolve_config(args)
    l0 = cfg["params"].l0
    free = measured_workloop(*_load_pair(args.force, args.encoder, args), l0, args.threshold)
    slow = measured_workloop(*_load_pair(*_pair(args.slow), args), l0, args.threshold)
    slow_cut = truncate_to_max_compression(slow, free)
    e_eff = loop_area(free)
    e_cf = loop_area(slow_cut)
    if args.impact_mj is not None:
        e_imp = args.impact_mj * 1e-3
    elif args.spring and args.spring_slow:
        sp_free = measured_workloop(*_load_pair(*_pair(args.spring), args), l0, args.threshold)
        sp_slow = measured_workloop(*_load_pair(*_pair(args.spring_slow), args), l0, args.threshold)
        e_imp = loop_area(sp_free) - loop_area(truncate_to_max_compression(sp_slow, sp_free))
    else:
        raise UsageError("give --impact-mj or both --spring and --spring-slow")
    breakdown = decompose_energy(e_eff, e_cf, e_imp)
    prov = _provenance(cfg, command="analyze", force=str(args.force), encoder=str(args.encoder),
                       slow=args.slow, threshold=args.threshold,
                       force_span=args.force_span, encoder_span=args.encoder_span)
    breakdown.to_json(args.out, extra={"config": prov})
    if args.loop_out:
        free.to_csv(args.loop_out, comment=_comment(prov))
    print("  ".join(f"{k}={v * 1e3:.1f} mJ" for k, v in breakdown.to_dict().items()))
    return 0


def cmd_characterize(args) -> int:
    force = load_channel(args.force, FORCE)
    if args.force_span > 1:
        force = moving_average(force, args.force_span)
    if args.velocity:
        vel = load_channel(args.velocity, VELOCITY)
    elif args.position:
        pos = load_channel(args.position)
        if args.position_span > 1:
            pos = moving_average(pos, args.position_span)
        vel = velocity_from_position(pos)
    else:
        raise UsageError("give --velocity or --position")
    window = _range(args.window) if args.window else None
    fit = fit_settling_slope(force, vel, window)
    prov = {"command": "characterize", "force": str(args.force),
            "velocity": str(args.velocity or ""), "position": str(args.position or ""),
            "window": args.window, "force_span": args.force_span}
    fit.to_json(args.out, extra={"config": prov})
    print(f"damping rate {fit.rate:.1f} N s/m  intercept {fit.intercept:.2f} N  "
          f"rms {fit.residual_rms:.3f} N  work {fit.dissipated_work * 1e3:.1f} mJ")
    return 0


def cmd_envelope(args) -> int:
    trials = [load_channel(p) for p in args.trials]
    if args.span > 1:
        trials = [moving_average(t, args.span) for t in trials]
    env = trial_envelope(trials, args.multiplier)
    prov = {"command": "envelope", "trials": [str(p) for p in args.trials],
            "span": args.span, "multiplier": args.multiplier}
    env.to_csv(args.out, comment=_comment(prov))
    print(f"{len(trials)} trials  {len(env.t)} samples  max half-width {env.half_width.max():.4g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dampedleg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate one drop")
    _add_model_flags(p)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--prefix", default="drop")
    p.add_argument("--sensor-dir", help="also write force/encoder channels at sensor rates")
    p.add_argument("--force-rate", type=float, default=1000.0)
    p.add_argument("--encoder-rate", type=float, default=8000.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table2", help="dissipation grid for the five damping sets")
    _add_model_flags(p, damper=False)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--paper-coefficients", action="store_true",
                      help="use the published coefficients (default)")
    mode.add_argument("--calibrate", action="store_true",
                      help="calibrate coefficients to the reference dissipation levels")
    p.add_argument("--sets", type=int, nargs="+")
    p.add_argument("--dh", type=float, default=0.025, help="height perturbation [m]")
    p.add_argument("--out", default="table2", help="output path prefix")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_table2)

    p = sub.add_parser("calibrate", help="find damping coefficients for target dissipation")
    _add_model_flags(p, damper=False)
    p.add_argument("--target-mj", type=float, nargs="+", required=True)
    p.add_argument("--mode", choices=cal.MODES, default=cal.VISCOUS)
    p.add_argument("--bracket", help="lo:hi coefficient bracket")
    p.add_argument("--tol-mj", type=float, default=0.5)
    p.add_argument("--out", help="JSON output path")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="dissipation change vs drop-height perturbation")
    _add_model_flags(p)
    p.add_argument("--dh-range", default="-0.025:0.025:21", help="lo:hi:n [m]")
    p.add_argument("--set", type=int, help="use a published damping set instead of --dv/--dc")
    p.add_argument("--mode", choices=cal.MODES, default=cal.VISCOUS)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="work-loop energy decomposition of measured drops")
    _add_model_flags(p, damper=False)
    p.add_argument("--force", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--slow", required=True, help="slow-drop force.csv,encoder.csv")
    p.add_argument("--impact-mj", type=float)
    p.add_argument("--spring", help="spring-only free drop force.csv,encoder.csv")
    p.add_argument("--spring-slow", help="spring-only slow drop force.csv,encoder.csv")
    p.add_argument("--threshold", type=float, default=2.0, help="touch-down force [N]")
    p.add_argument("--force-span", type=int, default=1)
    p.add_argument("--encoder-span", type=int, default=35)
    p.add_argument("--out", default="breakdown.json")
    p.add_argument("--loop-out", help="write the free-drop work loop CSV")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("characterize", help="damping-rate fit of an isolated damper drop")
    p.add_argument("--force", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--velocity")
    src.add_argument("--position")
    p.add_argument("--window", help="speed window lo:hi [m/s]")
    p.add_argument("--force-span", type=int, default=1)
    p.add_argument("--position-span", type=int, default=35)
    p.add_argument("--out", default="damper_fit.json")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("envelope", help="mean +- std band across repeated trials")
    p.add_argument("trials", nargs="+")
    p.add_argument("--span", type=int, default=1)
    p.add_argument("--multiplier", type=float, default=1.0)
    p.add_argument("--out", default="envelope.csv")
    p.set_defaults(func=cmd_envelope)
    return parser


# flags whose "lo:hi" values may start with a minus sign
_RANGE_FLAGS = ("--dh-range", "--bracket", "--window")


def _join_range_values(argv):
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _RANGE_FLAGS:
            value = next(it, None)
            out.append(tok if value is None else f"{tok}={value}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_range_values(sys.argv[1:] if argv is None else list(argv)))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IntegrationError, cal.CalibrationError, cal.SweepError, ConvergenceError) as exc:
        print(f"dampedleg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"dampedleg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
