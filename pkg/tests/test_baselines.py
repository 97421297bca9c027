"""Reference flight schemes: geometry, speed profiles, and energy anchors."""

import dataclasses

import numpy as np
import pytest

from uavmon.baselines import (
    DEFAULT_WAYPOINT,
    BaselineKind,
    calibrate_sigma2,
    evaluate,
    generate,
)
from uavmon.model import (
    PRESETS,
    PropulsionParams,
    ScenarioPreset,
    SolarParams,
    SystemParams,
    find_min_power_speed,
)

# Noise power that prices the low-speed scheme's jamming at 623.7 J on the
# neither-endpoint-covered mission (same constant as in test_energy.py).
CAL_SIGMA2 = 5.854329934981421e-17


@pytest.fixture
def nf():
    return PRESETS["NF"]


@pytest.fixture
def fine():
    return SystemParams(T=30, T_w=300)  # delta = 0.1 s


@pytest.fixture
def pp():
    return PropulsionParams()


@pytest.fixture
def sp():
    return SolarParams()


# ---------------------------------------------------------------- geometry


def test_all_kinds_pin_mission_endpoints(nf, fine, pp):
    for kind in BaselineKind:
        traj = generate(kind, nf, fine, pp)
        assert traj.points.shape == (fine.T_w + 1, 2)
        np.testing.assert_allclose(traj.points[0], nf.start, atol=1e-9)
        np.testing.assert_allclose(traj.points[-1], nf.end, atol=1e-9)


def test_low_speed_is_uniform_straight_line(nf, fine, pp):
    traj = generate(BaselineKind.LowSpeed, nf, fine, pp)
    v = traj.speeds(fine.delta)
    np.testing.assert_allclose(v, nf.d_min / fine.T, rtol=1e-12)
    assert v[0] == pytest.approx(7.4536, abs=1e-3)


def test_fly_half_moves_then_freezes(nf, fine, pp):
    traj = generate(BaselineKind.FlyHalf, nf, fine, pp)
    v = traj.speeds(fine.delta)
    half = fine.T_w // 2
    np.testing.assert_allclose(v[:half], 2.0 * nf.d_min / fine.T, rtol=1e-9)
    assert v[0] == pytest.approx(14.907, abs=1e-3)
    # hover slots are exact zero displacement, not merely small
    assert np.array_equal(traj.points[half:], np.tile(nf.end, (fine.T_w + 1 - half, 1)))


def test_two_lines_passes_waypoint_at_constant_speed(nf, fine, pp):
    traj = generate(BaselineKind.TwoLines, nf, fine, pp)
    v = traj.speeds(fine.delta)
    np.testing.assert_allclose(v, 10.0, rtol=1e-9)
    gap = np.linalg.norm(traj.points - np.asarray(DEFAULT_WAYPOINT), axis=1)
    assert gap.min() < 1e-9


def test_two_lines_honors_custom_waypoint(nf, fine, pp):
    traj = generate(BaselineKind.TwoLines, nf, fine, pp, waypoint=(250.0, 300.0))
    gap = np.linalg.norm(traj.points - np.array([250.0, 300.0]), axis=1)
    assert gap.min() < 1e-9


def test_fly_first_cruises_at_power_optimal_speed_then_hovers(nf, fine, pp):
    v_e, _ = find_min_power_speed(pp)
    traj = generate(BaselineKind.FlyFirst, nf, fine, pp)
    v = traj.speeds(fine.delta)
    moving = v > 1e-9
    # all full-speed slots at V_e; one partial slot at the handover
    assert v.max() == pytest.approx(v_e, rel=1e-9)
    assert np.sum(np.abs(v - v_e) < 1e-9) >= moving.sum() - 1
    tail = traj.points[np.argmin(moving) :] if not moving.all() else traj.points[-1:]
    assert np.array_equal(tail, np.tile(nf.end, (len(tail), 1)))


def test_hover_first_is_fly_first_reversed(nf, fine, pp):
    ff = generate(BaselineKind.FlyFirst, nf, fine, pp)
    hf = generate(BaselineKind.HoverFirst, nf, fine, pp)
    # same speed multiset slot for slot, in reverse order
    np.testing.assert_allclose(
        hf.speeds(fine.delta), ff.speeds(fine.delta)[::-1], rtol=1e-9, atol=1e-9
    )
    assert np.array_equal(hf.points[0], hf.points[1])  # starts hovering


def test_round_trip_retraces_the_segment(nf, fine, pp):
    traj = generate(BaselineKind.RoundTrip, nf, fine, pp)
    v = traj.speeds(fine.delta)
    np.testing.assert_allclose(v, 3.0 * nf.d_min / fine.T, rtol=1e-9)
    assert v[0] == pytest.approx(22.3607, abs=1e-3)
    # the far turn-around point is visited at one third of the mission
    third = fine.T_w // 3
    np.testing.assert_allclose(traj.points[third], nf.end, atol=1e-6)
    np.testing.assert_allclose(traj.points[2 * third], nf.start, atol=1e-6)


def test_speed_limit_violations_raise(nf, pp):
    tight = SystemParams(T=10, T_w=100)  # 3 * d_min / T = 67 m/s
    with pytest.raises(ValueError, match="limit"):
        generate(BaselineKind.RoundTrip, nf, tight, pp)
    with pytest.raises(ValueError, match="limit"):
        generate(BaselineKind.FlyHalf, nf, tight, pp)


def test_generate_is_deterministic(nf, fine, pp):
    a = generate(BaselineKind.TwoLines, nf, fine, pp)
    b = generate(BaselineKind.TwoLines, nf, fine, pp)
    assert np.array_equal(a.points, b.points)


# ------------------------------------------------------------ energy anchors


def test_propulsion_anchors_fine_grid(nf, fine, pp, sp):
    anchors = {
        BaselineKind.FlyFirst: 2850.0,
        BaselineKind.HoverFirst: 2850.0,
        BaselineKind.RoundTrip: 1255.2,
        BaselineKind.LowSpeed: 2427.5,
        BaselineKind.TwoLines: 1968.6,
    }
    for kind, ref in anchors.items():
        prop = evaluate(kind, nf, fine, pp, sp).total_prop_J
        assert prop == pytest.approx(ref, rel=0.02), kind
    assert evaluate(BaselineKind.RoundTrip, nf, fine, pp, sp).total_prop_J == pytest.approx(
        1255.2, rel=0.01
    )


def test_fly_first_and_hover_first_propulsion_match(nf, fine, pp, sp):
    ff = evaluate(BaselineKind.FlyFirst, nf, fine, pp, sp).total_prop_J
    hf = evaluate(BaselineKind.HoverFirst, nf, fine, pp, sp).total_prop_J
    assert ff == pytest.approx(hf, rel=1e-9)


def test_jamming_scales_linearly_with_noise(nf, pp, sp):
    base = SystemParams(T=30, T_w=60, sigma2_override=CAL_SIGMA2)
    double = dataclasses.replace(base, sigma2_override=2.0 * CAL_SIGMA2)
    j1 = evaluate(BaselineKind.TwoLines, nf, base, pp, sp).total_jam_J
    j2 = evaluate(BaselineKind.TwoLines, nf, double, pp, sp).total_jam_J
    assert j2 == pytest.approx(2.0 * j1, rel=1e-12)
    assert j1 > 0


def test_calibration_hits_target_and_matches_pinned_constant(nf, fine, pp, sp):
    k = calibrate_sigma2(nf, fine)
    assert k == pytest.approx(CAL_SIGMA2, rel=1e-12)
    cal = dataclasses.replace(fine, sigma2_override=k)
    assert evaluate(BaselineKind.LowSpeed, nf, cal, pp, sp).total_jam_J == pytest.approx(
        623.7, rel=1e-9
    )


def test_calibrated_jamming_anchors(nf, fine, pp, sp):
    cal = dataclasses.replace(fine, sigma2_override=CAL_SIGMA2)
    hf = evaluate(BaselineKind.HoverFirst, nf, cal, pp, sp).total_jam_J
    tl = evaluate(BaselineKind.TwoLines, nf, cal, pp, sp).total_jam_J
    assert hf == pytest.approx(396.3, rel=0.10)
    assert tl == pytest.approx(412.8, rel=0.10)


def test_round_trip_jamming_equals_low_speed(nf, fine, pp, sp):
    # retracing the same segment at uniform speed spends the same fraction of
    # the mission at every position as the single slow pass does, so the two
    # jamming totals agree up to slot discretization
    cal = dataclasses.replace(fine, sigma2_override=CAL_SIGMA2)
    rt = evaluate(BaselineKind.RoundTrip, nf, cal, pp, sp).total_jam_J
    ls = evaluate(BaselineKind.LowSpeed, nf, cal, pp, sp).total_jam_J
    assert rt == pytest.approx(ls, rel=1e-3)


def test_calibration_rejects_jamming_free_missions(pp):
    params = SystemParams(T=30, T_w=60)
    with pytest.raises(ValueError, match="never jams"):
        calibrate_sigma2(PRESETS["JF"], params)
    with pytest.raises(ValueError, match="positive"):
        calibrate_sigma2(PRESETS["NF"], params, target_J=-1.0)


def test_degenerate_mission_hovers_throughout(pp, sp):
    still = ScenarioPreset(name="still", start=(10.0, 20.0), end=(10.0, 20.0))
    params = SystemParams(T=10, T_w=20)
    traj = generate(BaselineKind.LowSpeed, still, params, pp)
    assert np.array_equal(traj.points, np.tile([10.0, 20.0], (params.T_w + 1, 1)))
