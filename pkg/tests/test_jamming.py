import numpy as np
import pytest

from uavmon import convex, jamming_opt, model
from uavmon.jamming_opt import (
    NonOutageConfig,
    TwoLinkParams,
    algorithm1,
    algorithm1_nlos,
    algorithm1_two_links,
    apply_non_outage,
    closed_form_profile,
    closed_form_total_J,
    feasibility_jf,
    init_feasible,
    jamming_free_intersection,
    solve_subproblem_A,
    tight_slacks,
    update_w,
)
from uavmon.model import PRESETS, NLoSParams, ScenarioPreset, SystemParams, Trajectory


@pytest.fixture
def coarse():
    # 2.5 s slots keep the solver instances small
    return SystemParams(T=30, T_w=12)


@pytest.fixture
def nf():
    return PRESETS["NF"]


# ---------------------------------------------------------------------------
# initialization and slack bookkeeping
# ---------------------------------------------------------------------------


def test_init_feasible_jf_zero(coarse):
    _, prof, _ = init_feasible(PRESETS["JF"], coarse)
    assert np.all(prof.powers == 0.0)


def test_init_feasible_matches_independent_formula(coarse, nf):
    traj, prof, slack = init_feasible(nf, coarse)
    d2, h2 = coarse.d ** 2, coarse.H ** 2
    x, y = traj.points[1:, 0], traj.points[1:, 1]
    u = x ** 2 + y ** 2 + h2
    w = (coarse.d - x) ** 2 + y ** 2 + h2
    want = coarse.sigma2 / (coarse.beta0 * d2) * w * np.maximum(0.0, u - d2)
    assert np.allclose(prof.powers, want, rtol=1e-12)
    # slacks sit at equality
    assert np.allclose(slack.u, u, rtol=1e-12)
    assert np.allclose(slack.w, np.maximum(h2, u - 2 * coarse.d * x + d2), rtol=1e-12)
    assert np.all(slack.u >= h2) and np.all(slack.w >= h2)


def test_init_state_satisfies_monitoring_predicate(coarse, nf):
    traj, prof, _ = init_feasible(nf, coarse)
    for t in range(1, coarse.T_w + 1):
        g_d, g_u = model.sinr_pair(traj.points[t], prof.powers[t - 1], coarse)
        assert g_u >= g_d * (1 - 1e-12)


def test_update_w_rules(coarse):
    d2, h2 = coarse.d ** 2, coarse.H ** 2
    pts = np.array([[0.0, 0.0]] * 3 + [[50.0, 10.0]] * 10)
    traj = Trajectory(pts)
    u = pts[1:, 0] ** 2 + pts[1:, 1] ** 2 + h2
    w = update_w((traj, None, model.SlackState(u, None)), coarse)
    # x = 0 slots: w = u + d^2
    assert w[0] == pytest.approx(u[0] + d2, rel=1e-12)
    # all slots here are inside the jamming-free area yet the rule still applies
    assert np.allclose(w, np.maximum(h2, u - 2 * coarse.d * pts[1:, 0] + d2), rtol=1e-12)


# ---------------------------------------------------------------------------
# subproblem A
# ---------------------------------------------------------------------------


def random_outside_trajectory(n, rng):
    """Short random walk kept well outside the jamming-free disk."""
    pts = [np.array([300.0, 200.0])]
    for _ in range(n):
        step = rng.uniform(-15.0, 15.0, size=2)
        cand = pts[-1] + step
        while np.hypot(*cand) < 250.0:
            cand = cand + np.array([30.0, 30.0])
        pts.append(cand)
    return Trajectory(np.array(pts))


def test_pinned_positions_recover_closed_form():
    rng = np.random.default_rng(21)
    params = SystemParams(T=3, T_w=6)
    for _ in range(5):
        traj = random_outside_trajectory(6, rng)
        sc = ScenarioPreset("probe", tuple(traj.points[0]), tuple(traj.points[-1]))
        prof = closed_form_profile(traj, params)
        slack = tight_slacks(traj, params)
        frozen = update_w((traj, prof, slack), params)
        settings = convex.SolverSettings(kkt_tol=1e-9)
        _, solved, _, res = solve_subproblem_A((traj, prof, slack), frozen, params,
                                               settings, freeze_positions=True)
        assert res.status is convex.Status.Converged
        assert np.all(prof.powers > 0)
        assert np.max(np.abs(solved.powers - prof.powers) / prof.powers) < 1e-6


def test_subproblem_jf_objective_near_zero(coarse):
    # the barrier keeps powers strictly positive; only the closed-form
    # evaluation yields exact zeros
    state = init_feasible(PRESETS["JF"], coarse)
    frozen = update_w(state, coarse)
    _, prof, _, res = solve_subproblem_A(state, frozen, coarse)
    assert res.status is convex.Status.Converged
    assert prof.powers.sum() * coarse.delta < 1e-2
    # the floor shrinks with the duality-gap tolerance
    _, prof2, _, _ = solve_subproblem_A(state, frozen, coarse,
                                        convex.SolverSettings(kkt_tol=1e-9))
    assert prof2.powers.sum() * coarse.delta < 1e-5


def test_subproblem_descends(coarse, nf):
    state = init_feasible(nf, coarse)
    before = closed_form_total_J(state[0], coarse)
    frozen = update_w(state, coarse)
    cand, _, u, res = solve_subproblem_A(state, frozen, coarse)
    after = closed_form_total_J(cand, coarse)
    assert after <= before * (1 + 1e-9)
    assert after < 0.5 * before  # the straight line is far from optimal here
    # returned u is a valid over-estimate of the squared S distance
    a = cand.points[1:, 0] ** 2 + cand.points[1:, 1] ** 2 + coarse.H ** 2
    assert np.all(u >= a - 1e-6 * coarse.d ** 2)


# ---------------------------------------------------------------------------
# the alternating loop
# ---------------------------------------------------------------------------


def test_algorithm1_jf_exact_zero(coarse):
    traj, prof, slack, rep = algorithm1(PRESETS["JF"], coarse)
    assert rep.objective_trace_J[-1] == 0.0
    assert np.all(prof.powers == 0.0)
    assert rep.termination == "zero-optimal"
    traj.validate(PRESETS["JF"], coarse)


def test_algorithm1_nf_descends_and_is_feasible(coarse, nf):
    traj, prof, slack, rep = algorithm1(nf, coarse)
    trace = rep.objective_trace_J
    assert np.all(np.diff(trace) <= 1e-9)
    assert trace[-1] < 0.5 * trace[0]
    assert rep.iterations <= 100
    assert rep.max_violation.max() <= 1e-6
    traj.validate(nf, coarse)
    # monitoring holds at every slot with the returned powers
    for t in range(1, coarse.T_w + 1):
        g_d, g_u = model.sinr_pair(traj.points[t], prof.powers[t - 1], coarse)
        assert g_u >= g_d * (1 - 1e-9)
    # slacks tight where jamming is positive
    d2 = coarse.d ** 2
    act = prof.powers > 1e-9
    lhs = slack.u * slack.w / d2 - slack.w - prof.powers * coarse.beta0 / coarse.sigma2
    assert np.max(np.abs(lhs[act]) / (slack.w[act])) < 1e-5


def test_algorithm1_total_insensitive_to_horizon(nf):
    j30 = algorithm1(nf, SystemParams(T=30, T_w=12))[3].objective_trace_J[-1]
    j60 = algorithm1(nf, SystemParams(T=60, T_w=24))[3].objective_trace_J[-1]
    assert abs(j60 - j30) <= 0.05 * j30


def test_algorithm1_degenerate_no_slack_time():
    # start-end distance exactly v_max * T: the straight line is forced
    params = SystemParams(T=10, T_w=8)
    sc = ScenarioPreset("tight", (300.0, 0.0), (300.0 + params.v_max * params.T, 0.0))
    traj, prof, _, rep = algorithm1(sc, params)
    want = Trajectory.straight_line(sc, params.T_w)
    assert np.allclose(traj.points, want.points, atol=1e-9)
    assert np.all(np.diff(rep.objective_trace_J) <= 1e-9)


# ---------------------------------------------------------------------------
# jamming-free feasibility
# ---------------------------------------------------------------------------


def test_feasibility_jf_inside(coarse):
    traj = feasibility_jf(PRESETS["JF"], coarse)
    r2 = traj.points[:, 0] ** 2 + traj.points[:, 1] ** 2
    assert np.all(r2 + coarse.H ** 2 <= coarse.d ** 2 + 1e-6)
    assert np.all(traj.speeds(coarse.delta) <= coarse.v_max + 1e-9)


def test_feasibility_jf_constant_when_start_equals_end():
    params = SystemParams(T=10, T_w=4)
    sc = ScenarioPreset("still", (10.0, 20.0), (10.0, 20.0))
    traj = feasibility_jf(sc, params)
    assert np.allclose(traj.points, [10.0, 20.0])


def test_feasibility_jf_rejects_outside_endpoint(coarse):
    with pytest.raises(ValueError):
        feasibility_jf(PRESETS["NF"], coarse)


# ---------------------------------------------------------------------------
# non-outage
# ---------------------------------------------------------------------------


def test_non_outage_example():
    prof = model.JammingProfile(np.array([3.0, 1.0, 2.0]))
    out, kept = apply_non_outage(prof, NonOutageConfig(p_non=2 / 3))
    assert np.allclose(out.powers, [0.0, 1.0, 2.0])
    assert kept.tolist() == [False, True, True]


def test_non_outage_limits():
    prof = model.JammingProfile(np.array([5.0, 0.5, 2.0, 2.0]))
    same, kept1 = apply_non_outage(prof, NonOutageConfig(1.0))
    assert np.array_equal(same.powers, prof.powers) and kept1.all()
    zero, kept0 = apply_non_outage(prof, NonOutageConfig(0.0))
    assert np.all(zero.powers == 0.0) and not kept0.any()


def test_non_outage_ties_drop_earlier_slot():
    prof = model.JammingProfile(np.array([2.0, 2.0, 1.0]))
    out, kept = apply_non_outage(prof, NonOutageConfig(p_non=2 / 3))
    assert np.allclose(out.powers, [0.0, 2.0, 1.0])


def test_non_outage_counts_and_total():
    rng = np.random.default_rng(9)
    prof = model.JammingProfile(rng.uniform(0, 10, size=40))
    for p_non in (0.0, 0.25, 0.5, 0.9, 1.0):
        out, kept = apply_non_outage(prof, NonOutageConfig(p_non))
        assert int((~kept).sum()) == int(np.floor((1 - p_non) * 40))
        assert out.powers.sum() <= prof.powers.sum()
    with pytest.raises(ValueError):
        NonOutageConfig(1.5)


# ---------------------------------------------------------------------------
# two links
# ---------------------------------------------------------------------------


def test_intersection_membership(coarse):
    tl = TwoLinkParams(s2=100.0)
    assert jamming_free_intersection((0.0, 50.0), tl, coarse)
    assert jamming_free_intersection((0.0, 0.0), tl, coarse)
    assert not jamming_free_intersection((300.0, 50.0), tl, coarse)
    # s2 = 0 reduces to the single-link membership test
    tl0 = TwoLinkParams(s2=0.0)
    rng = np.random.default_rng(2)
    for _ in range(50):
        pt = rng.uniform(-300, 400, size=2)
        assert jamming_free_intersection(pt, tl0, coarse) == model.in_jamming_free(pt, coarse)


def test_intersection_empty_when_far_apart(coarse):
    tl = TwoLinkParams(s2=2 * coarse.d + 1.0)
    xs, ys = np.meshgrid(np.linspace(-400, 400, 41), np.linspace(-400, 900, 61))
    assert not any(jamming_free_intersection((x, y), tl, coarse)
                   for x, y in zip(xs.ravel(), ys.ravel()))


def test_two_link_profile_is_per_link_max(coarse):
    s2 = 300.0
    # near the first pair's area, the mirrored link dominates the requirement
    traj = Trajectory(np.array([[150.0, -50.0]] * (coarse.T_w + 1)))
    prof = closed_form_profile(traj, coarse, s2=s2)
    p1 = model.jamming_power_closed_form((150.0, -50.0), coarse)
    p2 = model.jamming_power_closed_form((150.0, -50.0 - s2), coarse)
    assert np.allclose(prof.powers, max(p1, p2))
    assert p2 > p1


def test_two_links_zero_offset_matches_single(coarse, nf):
    single = algorithm1(nf, coarse)
    double = algorithm1_two_links(nf, coarse, TwoLinkParams(s2=0.0))
    j1 = single[3].objective_trace_J[-1]
    j2 = double.report.objective_trace_J[-1]
    assert j2 == pytest.approx(j1, rel=1e-6)
    # inside the jamming-free disk the objective is flat (both profiles are
    # zero there), so the duplicated barrier may park those waypoints a few
    # meters apart; where jamming is positive the paths must coincide
    outside = ~np.array([model.in_jamming_free(pt, coarse) for pt in single[0].points])
    drift = np.hypot(*(double.trajectory.points - single[0].points).T)
    assert drift[outside].max() < 1e-3
    assert np.allclose(double.profile.powers, single[1].powers, rtol=1e-5,
                       atol=1e-6 * single[1].powers.max())


def test_two_links_inside_intersection_zero():
    params = SystemParams(T=10, T_w=4)
    sc = ScenarioPreset("both-in", (0.0, 10.0), (20.0, 40.0))
    sol = algorithm1_two_links(sc, params, TwoLinkParams(s2=60.0))
    assert sol.report.objective_trace_J[-1] == 0.0
    assert all(jamming_free_intersection(pt, TwoLinkParams(60.0), params)
               for pt in sol.trajectory.points)


def test_two_links_descends(coarse, nf):
    sol = algorithm1_two_links(nf, coarse, TwoLinkParams(s2=150.0))
    trace = sol.report.objective_trace_J
    assert np.all(np.diff(trace) <= 1e-9)
    assert trace[-1] < trace[0]
    # shared power covers both pairs at every slot
    for t in range(1, coarse.T_w + 1):
        x, y = sol.trajectory.points[t]
        p = sol.profile.powers[t - 1]
        for pt in ((x, y), (x, y - 150.0)):
            g_d, g_u = model.sinr_pair(pt, p, coarse)
            assert g_u >= g_d * (1 - 1e-9)


# ---------------------------------------------------------------------------
# NLoS
# ---------------------------------------------------------------------------


def test_nlos_collapse_to_los(coarse, nf):
    nl = NLoSParams(C=10.0, D=0.6, zeta=0.2, eta1=coarse.beta0, eta2=0.0)
    sol = algorithm1_nlos(nf, coarse, nl, xi=np.ones(coarse.T_w))
    base = algorithm1(nf, coarse)
    assert np.allclose(sol.trajectory.points, base[0].points, atol=1e-9)
    assert np.allclose(sol.profile.powers, base[1].powers, rtol=1e-9, atol=1e-12)


def test_nlos_trace_monotone_and_better_gain_never_hurts(coarse, nf):
    nl_small = NLoSParams(C=10.0, D=0.6, eta1=coarse.beta0, eta2=0.0)
    nl_large = NLoSParams(C=10.0, D=0.6, eta1=coarse.beta0, eta2=1e-17)
    a = algorithm1_nlos(nf, coarse, nl_small, seed=5)
    b = algorithm1_nlos(nf, coarse, nl_large, seed=5)
    assert np.all(np.diff(a.report.objective_trace_J) <= 1e-9)
    assert b.report.objective_trace_J[-1] <= a.report.objective_trace_J[-1] + 1e-9
    assert np.array_equal(a.sd_gains, b.sd_gains)


def test_nlos_rejects_bad_inputs(coarse, nf):
    with pytest.raises(ValueError):
        algorithm1_nlos(nf, coarse, NLoSParams(C=10.0, D=0.6, kappa=3.0))
    with pytest.raises(ValueError):
        algorithm1_nlos(nf, coarse, NLoSParams(C=10.0, D=0.6), xi=np.ones(3))
