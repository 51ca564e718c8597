"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from dampedleg import DamperSpec, DropConfig, simulate_drop
from dampedleg.calibration import MODES, PAPER_COEFFICIENTS, damper_for, sweep_delta_h
from dampedleg.cli import main
from dampedleg.energy import decompose_energy, dissipated_energy, loop_area, workloop_from_trajectory
from dampedleg.expdata import export_sensor_channels, measured_workloop, moving_average
from dampedleg.leg import beta_from_length, leg_force, leg_length, length_jacobian
from dampedleg.simulate import energy_audit
from conftest import HEIGHTS, PAPER_TABLE2
from oracles import rk4_drop_batch

pytestmark = pytest.mark.slow

CONDITIONS = ("step-up", "reference", "step-down")


def test_table2_reproduction(tmp_path, report):
    start = time.perf_counter()
    code = main(["table2", "--paper-coefficients", "--out", str(tmp_path / "t2"), "--format", "json"])
    runtime = time.perf_counter() - start
    assert code == 0
    sets = json.loads((tmp_path / "t2.json").read_text())["sets"]
    worst_mj, worst_pts, failures = 0.0, 0.0, []
    for (s, mode), row in PAPER_TABLE2.items():
        for k, cond in enumerate(CONDITIONS):
            cell = sets[str(s)][mode][cond]
            e_mj = cell["E_D"] * 1e3
            pct = abs(cell["ratio"]) * 100
            d_e = abs(e_mj - row[2 * k])
            d_p = abs(pct - row[2 * k + 1])
            worst_mj, worst_pts = max(worst_mj, d_e), max(worst_pts, d_p)
            if d_e > 5 or d_p > 3:
                failures.append(f"set {s} {mode} {cond}: {e_mj:.1f} mJ ({pct:.1f}%)")
    anchors = (
        sets["3"]["viscous"]["reference"]["E_D"] * 1e3,
        sets["5"]["coulomb"]["step-down"]["E_D"] * 1e3,
        sets["1"]["viscous"]["step-up"]["E_D"] * 1e3,
    )
    passed = not failures and runtime < 300
    report(
        "1 Table 2 reproduction",
        passed,
        f"30 cells, worst |dE_D| {worst_mj:.2f} mJ (tol 5), worst |d%| {worst_pts:.2f} pts (tol 3), "
        f"runtime {runtime:.0f} s (limit 300); anchors {anchors[0]:.1f}/{anchors[1]:.1f}/{anchors[2]:.1f} mJ",
    )
    assert not failures, failures
    assert runtime < 300


def _calibrate_cli(tmp_path, targets, mode):
    out = tmp_path / f"cal_{mode}.json"
    assert main(["calibrate", "--target-mj", *map(str, targets), "--mode", mode, "--out", str(out)]) == 0
    return [r["coefficient"] for r in json.loads(out.read_text())["results"]]


def test_calibration_cross_check(tmp_path, report):
    targets = [97, 197, 295, 393, 492]
    lines, worst = [], 0.0
    for mode in MODES:
        published = [PAPER_COEFFICIENTS[s][mode] for s in range(1, 6)]
        found = _calibrate_cli(tmp_path, targets, mode)
        for t, c, p in zip(targets, found, published):
            err = abs(c / p - 1)
            worst = max(worst, err)
            if err > 0.05:
                lines.append(f"{mode} {t} mJ -> {c:.2f} (published {p})")
    fig_v = _calibrate_cli(tmp_path, [156], "viscous")[0]
    fig_c = _calibrate_cli(tmp_path, [156], "coulomb")[0]
    for c, p in ((fig_v, 51.0), (fig_c, 13.2)):
        err = abs(c / p - 1)
        worst = max(worst, err)
        if err > 0.05:
            lines.append(f"156 mJ -> {c:.2f} (published {p})")
    report(
        "2 calibration cross-check",
        not lines,
        f"10 set targets + 156 mJ pair, worst relative error {worst * 100:.2f}% (tol 5%); "
        f"156 mJ -> d_v {fig_v:.2f}, d_c {fig_c:.2f}",
    )
    assert not lines, lines


def test_dominance_and_spread(table2_runs, params, report):
    h0 = HEIGHTS[1]
    ratios = {}
    for (s, mode, h), (_, summary) in table2_runs.items():
        if h == h0:
            continue
        e0 = table2_runs[s, mode, h0][1].E_D
        ratios[s, mode, h] = abs(summary.E_D - e0) / (params.m * params.g * abs(h - h0))
    dominance = [
        (s, h) for s in PAPER_COEFFICIENTS for h in (HEIGHTS[0], HEIGHTS[2])
        if not ratios[s, "viscous", h] > ratios[s, "coulomb", h]
    ]
    spread = {}
    for s in (1, 3, 5):
        d = {m: table2_runs[s, m, HEIGHTS[2]][1].E_D - table2_runs[s, m, h0][1].E_D for m in MODES}
        spread[s] = (d["viscous"] - d["coulomb"]) * 1e3
    expected = {1: 8, 3: 18, 5: 16}
    spread_ok = all(abs(spread[s] - expected[s]) <= 3 for s in expected)
    report(
        "3 dominance and spread",
        not dominance and spread_ok,
        f"viscous beats Coulomb in {10 - len(dominance)}/10 (set, step) pairs; "
        f"spread sets 1/3/5 = {spread[1]:.1f}/{spread[3]:.1f}/{spread[5]:.1f} mJ (expect 8/18/16 +- 3)",
    )
    assert not dominance, dominance
    assert spread_ok, spread


def test_linearity(params, report):
    cfg = DropConfig()
    rows, failures = [], []
    for s, coefs in PAPER_COEFFICIENTS.items():
        for mode in MODES:
            curve = sweep_delta_h(params, damper_for(mode, coefs[mode]), cfg)
            assert len(curve.delta_h) == 21
            slope, _, r2 = curve.linear_fit()
            rows.append((s, mode, slope, r2))
            if not (r2 > 0.99 and slope < params.m * params.g):
                failures.append((s, mode, slope, r2))
    min_r2 = min(r[3] for r in rows)
    max_slope = max(r[2] for r in rows)
    report(
        "4 linearity",
        not failures,
        f"10 sweeps x 21 points, min R^2 {min_r2:.5f} (> 0.99), max slope {max_slope:.3f} J/m "
        f"(< m g = {params.m * params.g:.3f})",
    )
    assert not failures, failures


def test_physics_invariants(table2_runs, params, report):
    # (a) conservative drops
    worst_e, worst_v = 0.0, 0.0
    for h in (0.05, 0.115, 0.14, 0.165):
        traj, s = simulate_drop(params, DamperSpec(), DropConfig(h=h))
        worst_e = max(worst_e, abs(s.E_D), np.max(np.abs(energy_audit(traj, params))))
        worst_v = max(worst_v, abs(s.v_lo - s.v_td))
    ok_a = worst_e < 1e-4 and worst_v < 1e-3

    # (b) energy audit on every Table 2 run
    worst_audit = max(np.max(np.abs(energy_audit(traj, params))) for traj, _ in table2_runs.values())
    ok_b = worst_audit < 1e-4

    # (c) fixed-step oracle
    keys = sorted(table2_runs)
    e_rk4, _ = rk4_drop_batch(
        params.m, params.lambda1, params.lambda2, params.k, params.r_k, params.r_d,
        params.beta0, params.g,
        heights=[k[2] for k in keys],
        d_v=[PAPER_COEFFICIENTS[k[0]]["viscous"] if k[1] == "viscous" else 0.0 for k in keys],
        d_c=[PAPER_COEFFICIENTS[k[0]]["coulomb"] if k[1] == "coulomb" else 0.0 for k in keys],
        dt=1e-6,
    )
    worst_oracle = max(abs(table2_runs[k][1].E_D - e) for k, e in zip(keys, e_rk4))
    ok_c = worst_oracle < 5e-4

    # (d) loop area against integrated damper work
    worst_loop = max(
        abs(loop_area(workloop_from_trajectory(traj)) - dissipated_energy(traj))
        for traj, _ in table2_runs.values()
    )
    ok_d = worst_loop < 1e-3

    report(
        "5 physics invariants",
        ok_a and ok_b and ok_c and ok_d,
        f"(a) undamped energy error {worst_e * 1e3:.2e} mJ, |v_lo - v_td| {worst_v:.1e} m/s; "
        f"(b) audit {worst_audit:.1e} J; (c) RK4 dt=1e-6 diff {worst_oracle * 1e3:.1e} mJ; "
        f"(d) loop vs E_D {worst_loop * 1e3:.1e} mJ",
    )
    assert ok_a and ok_b and ok_c and ok_d


def test_geometry(params, report):
    ok_l0 = abs(params.l0 - 0.246) <= 1e-3
    betas = np.linspace(0.05, math.pi - 0.05, 2001)
    worst_rt = max(abs(beta_from_length(leg_length(b, params), params) - b) for b in betas)
    rng = np.random.default_rng(2024)
    worst_vw = 0.0
    # contact states only: beyond the resting angle the foot is airborne and the force is zero
    for beta, tau in zip(rng.uniform(0.1, params.beta0, 1000), rng.uniform(-10, 10, 1000)):
        f = leg_force(leg_length(beta, params), beta, tau, params)
        worst_vw = max(worst_vw, abs(f * length_jacobian(beta, params) - tau) / abs(tau))
    passed = ok_l0 and worst_rt < 1e-10 and worst_vw < 1e-9
    report(
        "6 geometry",
        passed,
        f"l0 = {params.l0:.6f} m; round trip {worst_rt:.1e} rad; virtual work {worst_vw:.1e} relative",
    )
    assert passed


def test_pipeline_end_to_end(table2_runs, params, report):
    worst = 0.0
    for traj, _ in table2_runs.values():
        force, enc = export_sensor_channels(traj, params, force_offset=3e-4, encoder_offset=5e-5)
        loop = measured_workloop(force, moving_average(enc, 35), l0=params.l0)
        worst = max(worst, abs(loop_area(loop) / dissipated_energy(traj) - 1))
    hydraulic = decompose_energy(150, 60, 31).E_viscous
    diaphragm = decompose_energy(100, 67, 31).E_viscous
    passed = worst < 0.02 and hydraulic == 59 and diaphragm == 2
    report(
        "7 pipeline end-to-end",
        passed,
        f"30 drops at 1 kHz force / 8 kHz encoder, worst loop-area error {worst * 100:.2f}% (tol 2%); "
        f"decomposition (150,60,31) -> {hydraulic:g} mJ, (100,67,31) -> {diaphragm:g} mJ",
    )
    assert passed
