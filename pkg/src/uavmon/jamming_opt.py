"""Jamming-energy minimization by alternating convex optimization.

The monitor succeeds in a slot when its SNR at least matches the suspicious
receiver's SINR; the minimum jamming power enforcing that has a closed form in
the UAV position.  The trajectory problem is nonconvex, so it is solved by
alternating a convex subproblem over {P_j, x, y, u} (distance slacks u, frozen
w) with a closed-form w update, always keeping the incumbent when a candidate
does not improve the true objective.  Extensions: jamming-free feasibility,
non-outage slot dropping, a second suspicious pair, and an NLoS channel.

Internally everything is normalized by the S-D distance d (positions by d,
squared distances by d^2, powers by sigma^2 d^2 / beta0), which makes the
subproblems scale-free; public interfaces use physical units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import convex, model
from .convex import ConvexProgram, SmoothFunction, SolverSettings, SolveResult
from .model import (
    JammingProfile,
    ScenarioPreset,
    SlackState,
    SystemParams,
    Trajectory,
)


@dataclass(frozen=True)
class NonOutageConfig:
    """Required fraction of slots with successful monitoring."""

    p_non: float

    def __post_init__(self):
        if not 0.0 <= self.p_non <= 1.0:
            raise ValueError("p_non must lie in [0, 1]")


@dataclass(frozen=True)
class TwoLinkParams:
    """Second suspicious pair, mirrored about y = s2."""

    s2: float

    def __post_init__(self):
        if not math.isfinite(self.s2):
            raise ValueError("s2 must be finite")


@dataclass
class AOReport:
    objective_trace_J: np.ndarray  # incumbent objective after each iteration
    iterations: int
    max_violation: np.ndarray  # per recorded iterate, on the original problem
    termination: str


@dataclass
class TwoLinkSolution:
    trajectory: Trajectory
    profile: JammingProfile
    slack: SlackState
    slack2: SlackState
    report: AOReport


@dataclass
class NLoSSolution:
    trajectory: Trajectory
    profile: JammingProfile
    slack: SlackState
    report: AOReport
    sd_gains: np.ndarray  # per-slot faded S-D gain realization


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def closed_form_profile(traj: Trajectory, params: SystemParams, s2: Optional[float] = None
                        ) -> JammingProfile:
    """Per-slot minimum jamming power along a trajectory (max over links)."""
    pows = np.empty(traj.n_slots)
    for t in range(1, traj.n_slots + 1):
        p = model.jamming_power_closed_form(traj.points[t], params)
        if s2 is not None:
            x, y = traj.points[t]
            p = max(p, model.jamming_power_closed_form((x, y - s2), params))
        pows[t - 1] = p
    return JammingProfile(pows)


def closed_form_total_J(traj: Trajectory, params: SystemParams, s2: Optional[float] = None
                        ) -> float:
    return float(closed_form_profile(traj, params, s2).powers.sum() * params.delta)


def tight_slacks(traj: Trajectory, params: SystemParams, s2: Optional[float] = None):
    """Slack state(s) at equality: u = |q-S|^2, w = max(H^2, u - 2dx + d^2)."""
    d, h2 = params.d, params.H ** 2
    x, y = traj.points[1:, 0], traj.points[1:, 1]
    out = []
    for off in ([0.0] if s2 is None else [0.0, s2]):
        u = x ** 2 + (y - off) ** 2 + h2
        w = np.maximum(h2, u - 2 * d * x + d ** 2)
        out.append(SlackState(u, w))
    return out[0] if s2 is None else tuple(out)


def jamming_free_intersection(point, tl: TwoLinkParams, params: SystemParams) -> bool:
    """Is `point` jamming-free for both suspicious pairs?"""
    x, y = float(point[0]), float(point[1])
    lim = params.d ** 2 - params.H ** 2
    return x ** 2 + y ** 2 <= lim and x ** 2 + (tl.s2 - y) ** 2 <= lim


def _true_violation(traj: Trajectory, profile: JammingProfile, params: SystemParams,
                    s2: Optional[float] = None) -> float:
    """Worst relative violation of the original per-slot constraints."""
    v2 = traj.speeds(params.delta) ** 2
    worst = max(0.0, float(v2.max()) / params.v_max ** 2 - 1.0)
    for t in range(1, traj.n_slots + 1):
        p = profile.powers[t - 1]
        g_d, g_u = model.sinr_pair(traj.points[t], p, params)
        worst = max(worst, (g_d - g_u) / g_d)
        if s2 is not None:
            x, y = traj.points[t]
            g_d, g_u = model.sinr_pair((x, y - s2), p, params)
            worst = max(worst, (g_d - g_u) / g_d)
    return worst


# ---------------------------------------------------------------------------
# subproblem A: {P_j, x, y, u} with w frozen (normalized, barrier-solved)
# ---------------------------------------------------------------------------


def _layout(n: int, n_links: int):
    """Variable indices: x_0..x_n, y_0..y_n, rho per link per slot, pi per slot."""
    ix = np.arange(n + 1)
    iy = n + 1 + ix
    base = 2 * (n + 1)
    irho = [base + k * n + np.arange(n) for k in range(n_links)]
    ipi = base + n_links * n + np.arange(n)
    dim = base + (n_links + 1) * n
    return ix, iy, irho, ipi, dim


def _build_program(n, chi0, ups0, chin, upsn, h2n, vbar2, omega_tilde, s_norm,
                   freeze_positions, chi_pin=None, ups_pin=None) -> ConvexProgram:
    """Subproblem over normalized {pi, chi, upsilon, rho} with frozen omega."""
    n_links = len(omega_tilde)
    ix, iy, irho, ipi, dim = _layout(n, n_links)
    cons = []
    for t in range(1, n + 1):
        for k in range(n_links):
            off = s_norm[k]
            xt, yt, rt = ix[t], iy[t], irho[k][t - 1]

            def c_dist(xs, off=off):
                c, u, r = xs
                val = c ** 2 + (u - off) ** 2 + h2n - r
                g = np.array([2 * c, 2 * (u - off), -1.0])
                h = np.diag([2.0, 2.0, 0.0])
                return val, g, h

            cons.append(SmoothFunction(dim, [xt, yt, rt], c_dist, name=f"dist{k}[{t}]"))
            w = omega_tilde[k][t - 1]
            cons.append(convex.linear(dim, [rt, xt], [1.0, -2.0], const=1.0 - w,
                                      name=f"wbound{k}[{t}]"))
            cons.append(convex.linear(dim, [rt, ipi[t - 1]], [w, -1.0], const=-w,
                                      name=f"power{k}[{t}]"))
        cons.append(convex.linear(dim, [ipi[t - 1]], [-1.0], name=f"pi+[{t}]"))

        def c_speed(xs):
            dx, dy = xs[1] - xs[0], xs[3] - xs[2]
            val = dx ** 2 + dy ** 2 - vbar2
            g = np.array([-2 * dx, 2 * dx, -2 * dy, 2 * dy])
            h = np.array([[2.0, -2.0, 0, 0], [-2.0, 2.0, 0, 0],
                          [0, 0, 2.0, -2.0], [0, 0, -2.0, 2.0]])
            return val, g, h

        cons.append(SmoothFunction(dim, [ix[t - 1], ix[t], iy[t - 1], iy[t]], c_speed,
                                   name=f"speed[{t}]"))

    pins = {ix[0]: chi0, iy[0]: ups0, ix[n]: chin, iy[n]: upsn}
    if freeze_positions:
        for t in range(1, n):
            pins[ix[t]] = chi_pin[t]
            pins[iy[t]] = ups_pin[t]
    obj = [convex.linear(dim, ipi, np.ones(n), name="sum-pi")]
    return ConvexProgram(dim, obj, cons, pins)


def prepare_subproblem(state, frozen_w, params: SystemParams, margin: float = 1e-7,
                       freeze_positions: bool = False, s2: Optional[float] = None):
    """Assemble the frozen-w subproblem and its strictly interior start.

    The frozen w is inflated by `margin` (in d^2 units) and the start is
    lifted off every constraint the same way, so the incumbent trajectory is
    always admissible.  Returns (program, x0, layout) with layout =
    (ix, iy, irho-list, ipi).
    """
    traj = state[0]
    d = params.d
    n = traj.n_slots
    h2n = (params.H / d) ** 2
    vbar = params.V_m / d
    if s2 is None:
        w_list = [np.asarray(frozen_w, dtype=float)]
        s_norm = [0.0]
    else:
        w_list = [np.asarray(frozen_w[0], dtype=float), np.asarray(frozen_w[1], dtype=float)]
        s_norm = [0.0, s2 / d]
    n_links = len(w_list)

    chi = traj.points[:, 0] / d
    ups = traj.points[:, 1] / d
    # strict-interior seed built off the incumbent: rho gets +margin over the
    # tight squared distance, omega +margin over the seed's linear bound, and
    # pi +margin over the power bound
    rho0, omt = [], []
    for k in range(n_links):
        a = chi[1:] ** 2 + (ups[1:] - s_norm[k]) ** 2 + h2n
        r = a + margin
        w_inf = np.maximum(w_list[k] / d ** 2, r - 2 * chi[1:] + 1.0) + margin
        rho0.append(r)
        omt.append(w_inf)
    pi0 = np.maximum.reduce([np.maximum(0.0, (rho0[k] - 1.0) * omt[k]) for k in range(n_links)])
    pi0 = pi0 + margin

    ix, iy, irho, ipi, dim = _layout(n, n_links)
    x0 = np.empty(dim)
    x0[ix] = chi
    x0[iy] = ups
    for k in range(n_links):
        x0[irho[k]] = rho0[k]
    x0[ipi] = pi0

    prog = _build_program(n, chi[0], ups[0], chi[n], ups[n], h2n, vbar ** 2, omt, s_norm,
                          freeze_positions, chi_pin=chi, ups_pin=ups)
    return prog, x0, (ix, iy, irho, ipi)


def solve_subproblem_A(state, frozen_w, params: SystemParams,
                       settings: Optional[SolverSettings] = None,
                       margin: float = 1e-7, freeze_positions: bool = False,
                       s2: Optional[float] = None):
    """Convex solve over {P_j, x, y, u} with w frozen (single or two links).

    `state` is a (Trajectory, JammingProfile, SlackState-or-pair) triple;
    `frozen_w` the per-slot w in m^2 (array, or pair of arrays with `s2`).

    Returns (Trajectory, JammingProfile, u (m^2, array or pair), SolveResult).
    """
    prog, x0, (ix, iy, irho, ipi) = prepare_subproblem(state, frozen_w, params, margin,
                                                       freeze_positions, s2)
    res = convex.solve(prog, x0, settings)

    d = params.d
    pts = np.column_stack([res.point[ix] * d, res.point[iy] * d])
    new_traj = Trajectory(pts)
    scale = params.sigma2 * d ** 2 / params.beta0
    profile = JammingProfile(np.maximum(0.0, res.point[ipi]) * scale)
    u_out = [res.point[irho[k]] * d ** 2 for k in range(len(irho))]
    return new_traj, profile, (u_out[0] if s2 is None else tuple(u_out)), res


def update_w(state, params: SystemParams) -> np.ndarray:
    """Minimal feasible w per slot: max(H^2, u - 2 d x + d^2).

    The objective does not depend on w, so any feasible choice is
    block-optimal; the minimal one relaxes the power bound the most for the
    next subproblem.
    """
    traj, _, slack = state
    x = traj.points[1:, 0]
    return np.maximum(params.H ** 2, slack.u - 2 * params.d * x + params.d ** 2)


# ---------------------------------------------------------------------------
# the alternating loop
# ---------------------------------------------------------------------------


def init_feasible(scenario: ScenarioPreset, params: SystemParams):
    """Straight-line start: slacks at equality, jamming from the closed form."""
    model.validate_scenario(scenario, params)
    traj = Trajectory.straight_line(scenario, params.T_w)
    return traj, closed_form_profile(traj, params), tight_slacks(traj, params)


def algorithm1(scenario: ScenarioPreset, params: SystemParams,
               settings: Optional[SolverSettings] = None,
               max_iterations: int = 100, rel_tol: float = 1e-4,
               s2: Optional[float] = None):
    """Alternating optimization of trajectory and jamming powers.

    Iterates the convex {P_j, x, y, u} subproblem against the closed-form w
    update, accepting a candidate trajectory only if it lowers the true
    (closed-form) jamming energy; stops when the relative decrease falls
    below `rel_tol`.  With `s2` given, both suspicious pairs constrain the
    shared jamming power.

    Returns (Trajectory, JammingProfile, SlackState, AOReport) -- with `s2`,
    a TwoLinkSolution.
    """
    traj, _, _ = _single_init(scenario, params, s2)
    best = closed_form_total_J(traj, params, s2)
    trace = [best]
    viol = [_true_violation(traj, closed_form_profile(traj, params, s2), params, s2)]
    # no slack time at all -> positions are forced; optimize powers only
    frozen_positions = scenario.d_min >= params.v_max * params.T * (1 - 1e-9)

    termination = "max-iterations"
    if best == 0.0:
        termination = "zero-optimal"  # nonnegative objective cannot improve
        iters = 0
    else:
        iters = 0
        for k in range(max_iterations):
            m = max(1e-7, 0.05 * 0.5 ** k)
            state = (traj, closed_form_profile(traj, params, s2), tight_slacks(traj, params, s2))
            if s2 is None:
                frozen = update_w(state, params)
            else:
                frozen = tuple(s.w for s in state[2])
            try:
                cand, _, _, _ = solve_subproblem_A(state, frozen, params, settings,
                                                   margin=m,
                                                   freeze_positions=frozen_positions, s2=s2)
            except convex.NumericalBreakdown:
                termination = "numerical-breakdown"
                break
            iters = k + 1
            j_cand = closed_form_total_J(cand, params, s2)
            if j_cand < best:
                traj, best = cand, j_cand
            trace.append(best)
            viol.append(_true_violation(traj, closed_form_profile(traj, params, s2), params, s2))
            if trace[-2] - trace[-1] < rel_tol * max(trace[-2], 1e-12):
                termination = "relative-decrease"
                break

    profile = closed_form_profile(traj, params, s2)
    report = AOReport(np.array(trace), iters, np.array(viol), termination)
    if s2 is None:
        return traj, profile, tight_slacks(traj, params), report
    sl1, sl2 = tight_slacks(traj, params, s2)
    return TwoLinkSolution(traj, profile, sl1, sl2, report)


def _single_init(scenario, params, s2):
    model.validate_scenario(scenario, params)
    traj = Trajectory.straight_line(scenario, params.T_w)
    return traj, closed_form_profile(traj, params, s2), None


def algorithm1_two_links(scenario: ScenarioPreset, params: SystemParams,
                         tl: TwoLinkParams, settings: Optional[SolverSettings] = None,
                         max_iterations: int = 100, rel_tol: float = 1e-4) -> TwoLinkSolution:
    """algorithm1 with the mirrored second pair constraining the same power."""
    return algorithm1(scenario, params, settings, max_iterations, rel_tol, s2=tl.s2)


def feasibility_jf(scenario: ScenarioPreset, params: SystemParams,
                   settings: Optional[SolverSettings] = None) -> Trajectory:
    """A trajectory staying inside the jamming-free area, as a feasibility program.

    Both endpoints must lie inside the area (x^2 + y^2 + H^2 <= d^2).
    """
    model.validate_scenario(scenario, params)
    for name, pt in (("start", scenario.start), ("end", scenario.end)):
        if not model.in_jamming_free(pt, params):
            raise ValueError(f"{name} point lies outside the jamming-free area")
    d = params.d
    n = params.T_w
    h2n = (params.H / d) ** 2
    vbar2 = (params.V_m / d) ** 2
    ix = np.arange(n + 1)
    iy = n + 1 + ix
    dim = 2 * (n + 1)
    cons = []
    for t in range(1, n + 1):
        def c_disk(xs):
            val = xs[0] ** 2 + xs[1] ** 2 + h2n - 1.0
            return val, np.array([2 * xs[0], 2 * xs[1]]), np.diag([2.0, 2.0])

        cons.append(SmoothFunction(dim, [ix[t], iy[t]], c_disk, name=f"disk[{t}]"))

    for t in range(1, n + 1):
        def c_speed(xs):
            dx, dy = xs[1] - xs[0], xs[3] - xs[2]
            val = dx ** 2 + dy ** 2 - vbar2
            g = np.array([-2 * dx, 2 * dx, -2 * dy, 2 * dy])
            h = np.array([[2.0, -2.0, 0, 0], [-2.0, 2.0, 0, 0],
                          [0, 0, 2.0, -2.0], [0, 0, -2.0, 2.0]])
            return val, g, h

        cons.append(SmoothFunction(dim, [ix[t - 1], ix[t], iy[t - 1], iy[t]], c_speed,
                                   name=f"speed[{t}]"))

    start = np.asarray(scenario.start, dtype=float) / d
    end = np.asarray(scenario.end, dtype=float) / d
    pins = {ix[0]: start[0], iy[0]: start[1], ix[n]: end[0], iy[n]: end[1]}
    prog = ConvexProgram(dim, [], cons, pins)
    seed = Trajectory.straight_line(scenario, n).points / d
    x0 = np.empty(dim)
    x0[ix], x0[iy] = seed[:, 0], seed[:, 1]
    ok, x, _ = convex.phase1_feasible(prog, x0, margin=0.0, settings=settings)
    if not ok:
        raise RuntimeError("no jamming-free trajectory found")
    return Trajectory(np.column_stack([x[ix] * d, x[iy] * d]))


def apply_non_outage(profile: JammingProfile, cfg: NonOutageConfig):
    """Zero the floor((1 - p_non) T_w) largest powers (ties: earlier slot first).

    Returns (new profile, kept mask) where the mask is False on zeroed slots.
    """
    p = profile.powers.copy()
    n = p.shape[0]
    k = int(math.floor((1.0 - cfg.p_non) * n))
    kept = np.ones(n, dtype=bool)
    if k > 0:
        order = np.argsort(-p, kind="stable")
        drop = order[:k]
        p[drop] = 0.0
        kept[drop] = False
    return JammingProfile(p), kept


# ---------------------------------------------------------------------------
# NLoS variant
# ---------------------------------------------------------------------------


def algorithm1_nlos(scenario: ScenarioPreset, params: SystemParams,
                    nlos: model.NLoSParams, settings: Optional[SolverSettings] = None,
                    seed: int = 0, xi: Optional[np.ndarray] = None) -> NLoSSolution:
    """Jamming minimization under the NLoS-aware channel.

    The S-D gain carries a per-slot fading realization (drawn once from
    `seed`, or supplied via `xi`); the UAV links use the quadratic
    approximation.  Blocks: the trajectory candidate comes from the
    distance-only geometry (which the fading does not affect), the slacks
    and powers then follow in closed form; a candidate trajectory is kept
    only if it lowers the realized objective.
    """
    if nlos.kappa != 2:
        raise ValueError("NLoS pipeline requires kappa = 2")
    n = params.T_w
    if xi is None:
        h0 = model.rayleigh_sd_gains(n, nlos, params, seed)
    else:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (n,) or np.any(xi < 0):
            raise ValueError("xi must be a nonnegative length-T_w array")
        h0 = xi * params.beta0 * params.d ** (-nlos.kappa)

    def profile_for(traj):
        pows = np.empty(n)
        for t in range(1, n + 1):
            h1 = model.quadratic_approx_gain(traj.points[t], "su", nlos, params)
            h2 = model.quadratic_approx_gain(traj.points[t], "ud", nlos, params)
            pows[t - 1] = max(0.0, params.sigma2 * (h0[t - 1] - h1) / (h1 * h2))
        return JammingProfile(pows)

    def total(traj):
        return float(profile_for(traj).powers.sum() * params.delta)

    def speed_violation(traj):
        v2 = traj.speeds(params.delta) ** 2
        return max(0.0, float(v2.max()) / params.v_max ** 2 - 1.0)

    straight = Trajectory.straight_line(scenario, n)
    best_traj, best = straight, total(straight)
    trace, viol = [best], [speed_violation(straight)]
    base = algorithm1(scenario, params, settings)
    j_cand = total(base[0])
    if j_cand < best:
        best_traj, best = base[0], j_cand
    trace.append(best)
    viol.append(speed_violation(best_traj))

    profile = profile_for(best_traj)
    report = AOReport(np.array(trace), 1, np.array(viol), "relative-decrease")
    return NLoSSolution(best_traj, profile, tight_slacks(best_traj, params), report, h0)
