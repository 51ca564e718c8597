import json
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dampedleg import DamperSpec, DropConfig, LegParams, simulate_drop
from dampedleg.energy import (
    EmptyStanceError,
    EnergyBreakdown,
    WorkLoop,
    decompose_energy,
    delta_Ed,
    dissipated_energy,
    full_rejection,
    loop_area,
    signed_area,
    truncate_to_max_compression,
    workloop_from_trajectory,
)
from oracles import shoelace, time_domain_loop_work

P = LegParams()


@pytest.fixture(scope="module")
def set3_viscous():
    return simulate_drop(P, DamperSpec.viscous(119.4), DropConfig())


@pytest.fixture(scope="module")
def undamped():
    return simulate_drop(P, DamperSpec(), DropConfig())


def test_dissipated_energy_undamped(undamped):
    assert dissipated_energy(undamped[0]) == pytest.approx(0.0, abs=1e-4)


def test_dissipated_energy_set1_reference():
    traj, _ = simulate_drop(P, DamperSpec.viscous(29.5), DropConfig())
    assert dissipated_energy(traj) * 1e3 == pytest.approx(97, abs=5)


def test_dissipated_energy_matches_integrator(set3_viscous):
    traj, s = set3_viscous
    assert dissipated_energy(traj) == pytest.approx(s.E_D, abs=1e-6)


def test_dissipated_energy_needs_stance(set3_viscous):
    traj, _ = set3_viscous
    flight = traj.stance()
    flight.phase[:] = "flight"
    with pytest.raises(EmptyStanceError):
        dissipated_energy(flight)


def test_delta_Ed_examples():
    assert delta_Ed(0.341, 0.295) == pytest.approx(0.046, abs=1e-12)
    assert delta_Ed(0.341, 0.295) / 0.100 == pytest.approx(0.46, abs=1e-9)
    assert delta_Ed(0.249, 0.295) == pytest.approx(-0.046, abs=1e-12)
    assert delta_Ed(0.295, 0.295) == 0.0


def test_full_rejection():
    assert full_rejection(0.025, P) * 1e3 == pytest.approx(100.1, abs=0.05)
    assert full_rejection(0.0, P) == 0.0
    assert full_rejection(0.05, P) == pytest.approx(2 * full_rejection(0.025, P), rel=1e-15)
    heavy = LegParams(m=2 * P.m)
    assert full_rejection(0.025, heavy) == pytest.approx(2 * full_rejection(0.025, P), rel=1e-15)


def test_rectangle_area():
    loop = WorkLoop([0, 0.01, 0.01, 0], [0, 0, 10, 10])
    assert loop_area(loop) == pytest.approx(0.1, rel=1e-12)
    assert signed_area(loop) == pytest.approx(0.1, rel=1e-12)
    assert signed_area(loop.reversed()) == pytest.approx(-0.1, rel=1e-12)


def test_retracing_path_has_no_area():
    x = np.linspace(0.2, 0.246, 50)
    f = 200 * (0.246 - x)
    loop = WorkLoop(np.concatenate([x[::-1], x]), np.concatenate([f[::-1], f]))
    assert loop_area(loop) == pytest.approx(0.0, abs=1e-15)


def test_degenerate_loop():
    with pytest.raises(ValueError):
        loop_area(WorkLoop([0.2, 0.21], [1, 2]))


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-100, 100)), min_size=3, max_size=40))
def test_shoelace_matches_oracle(points):
    xs, ys = zip(*points)
    assert signed_area(WorkLoop(xs, ys)) == pytest.approx(shoelace(xs, ys), abs=1e-9)


def test_undamped_loop_encloses_nothing(undamped):
    assert loop_area(workloop_from_trajectory(undamped[0])) < 1e-4


def test_simulated_loop_area(set3_viscous):
    traj, s = set3_viscous
    loop = workloop_from_trajectory(traj, l0=P.l0)
    assert loop.length[0] == P.l0
    assert loop_area(loop) * 1e3 == pytest.approx(295, abs=5)
    assert loop_area(loop) == pytest.approx(dissipated_energy(traj), abs=1e-3)
    assert signed_area(loop) > 0
    assert loop.percent_of_l0()[0] == pytest.approx(100.0)


@pytest.mark.parametrize("spec", [DamperSpec.viscous(68), DamperSpec.coulomb(46.1), DamperSpec(d_v=40, d_c=10)])
def test_shoelace_and_time_domain_agree(spec):
    traj, _ = simulate_drop(P, spec, DropConfig(h=0.12))
    st_ = traj.stance()
    area = loop_area(workloop_from_trajectory(traj))
    assert time_domain_loop_work(st_.t, st_.y, st_.F_leg) == pytest.approx(area, rel=5e-3)


def test_decompose_table3_examples():
    hydraulic = decompose_energy(150, 60, 31)
    assert hydraulic.E_viscous == 59
    diaphragm = decompose_energy(100, 67, 31)
    assert diaphragm.E_viscous == 2
    assert decompose_energy(0.123, 0, 0).E_viscous == 0.123


def test_decompose_in_joules():
    b = decompose_energy(0.150, 0.060, 0.031)
    assert b.E_viscous == pytest.approx(0.059, abs=1e-15)
    assert b.total == 0.150


def test_decompose_negative_warns():
    with pytest.warns(RuntimeWarning):
        b = decompose_energy(0.05, 0.04, 0.031)
    assert b.E_viscous < 0


def test_decompose_rejects_non_finite():
    with pytest.raises(ValueError):
        decompose_energy(float("nan"), 0, 0)
    with pytest.raises(ValueError):
        decompose_energy(0.1, float("inf"), 0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_decompose_resums_exactly(e, a, b):
    # friction and impact as shares of the loop energy, so the viscous rest is >= 0
    c, i = e * a * (1 - b), e * a * b
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        out = decompose_energy(e, c, i)
    assert out.total == e
    assert out.E_viscous >= 0


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_decompose_viscous_is_nearest(e, c, i):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        v = decompose_energy(e, c, i).E_viscous
    exact = Fraction(e) - Fraction(c) - Fraction(i)
    assert abs(Fraction(v) - exact) <= Fraction(math.ulp(float(exact)))


def test_breakdown_json(tmp_path):
    path = tmp_path / "b.json"
    decompose_energy(0.15, 0.06, 0.031).to_json(path, extra={"config": {"a": 1}})
    data = json.loads(path.read_text())
    assert set(data) == {"E_effective", "E_cfriction", "E_impact", "E_viscous", "config"}
    assert EnergyBreakdown(**{k: data[k] for k in data if k != "config"}).E_viscous == pytest.approx(0.059)


def test_truncate_drops_deeper_samples():
    slow_len = np.linspace(0.246, 0.18, 67)
    slow = WorkLoop(slow_len, np.full(67, 5.0))
    free = WorkLoop(np.linspace(0.246, 0.20, 10), np.ones(10))
    cut = truncate_to_max_compression(slow, free)
    assert cut.length.min() >= 0.20
    assert np.array_equal(cut.length, slow_len[slow_len >= 0.20])


def test_truncate_keeps_shallower_loop():
    slow = WorkLoop(np.linspace(0.246, 0.21, 20), np.ones(20))
    free = WorkLoop(np.linspace(0.246, 0.19, 20), np.ones(20))
    cut = truncate_to_max_compression(slow, free)
    assert np.array_equal(cut.length, slow.length)


def test_truncate_disjoint_and_empty():
    with pytest.raises(ValueError):
        truncate_to_max_compression(WorkLoop([0.10, 0.12], [1, 1]), WorkLoop([0.20, 0.24], [1, 1]))
    with pytest.raises(ValueError):
        truncate_to_max_compression(WorkLoop([], []), WorkLoop([0.2], [1]))


def test_truncation_changes_area_by_known_amount():
    # trapezoidal slow loop: compression along F = 100 (l0 - l) + 5, return along F = 100 (l0 - l)
    l0 = 0.25
    down = np.linspace(l0, 0.18, 71)
    up = down[::-1]
    slow = WorkLoop(
        np.concatenate([down, up]),
        np.concatenate([100 * (l0 - down) + 5, 100 * (l0 - up)]),
    )
    free = WorkLoop(np.array([l0, 0.20, l0]), np.array([0.0, 10.0, 0.0]))
    before = abs(shoelace(slow.length, slow.force))
    cut = truncate_to_max_compression(slow, free)
    after = abs(shoelace(cut.length, cut.force))
    # the constant 5 N gap spans the loop's length range
    assert before == pytest.approx(5 * 0.07, rel=1e-9)
    assert after == pytest.approx(5 * 0.05, rel=1e-9)
    assert loop_area(cut) == pytest.approx(after, rel=1e-12)


def test_workloop_csv(tmp_path, set3_viscous):
    loop = workloop_from_trajectory(set3_viscous[0])
    path = tmp_path / "loop.csv"
    loop.to_csv(path, comment="config: {}")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "leg_length_m,force_N"
    assert len(lines) == len(loop) + 2
    assert math.isclose(float(lines[2].split(",")[0]), loop.length[0])
