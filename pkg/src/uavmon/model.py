"""Physical layer of the monitoring system: channel gains, the closed-form
jamming power, rotary-wing propulsion, solar harvesting, and the slot-level
energy ledger.

Geometry convention: the suspicious source S sits at the origin, the
suspicious destination D at (d, 0), both on the ground; the UAV flies at
fixed altitude H, so a planar waypoint (x, y) is at link distances
sqrt(x^2+y^2+H^2) from S and sqrt((d-x)^2+y^2+H^2) from D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemParams:
    """Link geometry, noise, horizon and energy-budget constants."""

    d: float = 200.0                  # S-D ground distance (m)
    H: float = 100.0                  # UAV altitude (m)
    beta0: float = 1e-12              # channel gain at 1 m
    noise_psd_dbm_hz: float = -169.0  # noise power spectral density
    bandwidth_hz: float = 1e7
    T: float = 30.0                   # mission duration (s)
    T_w: int = 300                    # number of slots
    v_max: float = 40.0               # UAV speed limit (m/s)
    P_c: float = 0.0                  # circuit power (W)
    theta_frac: float = 0.8           # usable fraction of initial energy
    E0: float = 7000.0                # initial battery energy (J)
    P_x: float = 1.0                  # suspicious transmit power (informational)
    sigma2_override: Optional[float] = None

    def __post_init__(self):
        if self.d <= 0 or self.H <= 0 or self.H >= self.d:
            raise ValueError("require 0 < H < d")
        if self.T <= 0 or self.T_w < 1:
            raise ValueError("require T > 0 and T_w >= 1")
        if self.v_max <= 0 or self.bandwidth_hz <= 0 or self.beta0 <= 0:
            raise ValueError("v_max, bandwidth and beta0 must be positive")
        if not 0.0 < self.theta_frac <= 1.0:
            raise ValueError("theta_frac must lie in (0, 1]")
        if self.E0 < 0 or self.P_c < 0:
            raise ValueError("E0 and P_c must be nonnegative")
        if self.sigma2_override is not None and self.sigma2_override <= 0:
            raise ValueError("sigma2_override must be positive")

    @property
    def delta(self) -> float:
        """Slot length T / T_w (s)."""
        return self.T / self.T_w

    @property
    def V_m(self) -> float:
        """Per-slot displacement cap v_max * delta (m)."""
        return self.v_max * self.delta

    @property
    def sigma2(self) -> float:
        """Noise power (W): PSD x bandwidth unless explicitly overridden."""
        if self.sigma2_override is not None:
            return self.sigma2_override
        dbm = self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz)
        return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PropulsionParams:
    """Rotary-wing power model constants.

    The default drag ratio is calibrated so the shipped speed-power curve
    bottoms out near 22.3 m/s at ~41.9 W (see README, "Propulsion
    calibration"); set d_f = 0.3 for the literal hardware-table reading.
    """

    P0: float = 3.4        # blade profile power (W)
    P1: float = 118.0      # induced power in hover (W)
    U_tip: float = 60.0    # rotor tip speed (m/s)
    v0: float = 5.4        # mean rotor induced velocity in hover (m/s)
    d_f: float = 0.15      # fuselage drag ratio
    rho: float = 1.225     # air density (kg/m^3)
    s: float = 0.03        # rotor solidity
    A: float = 0.28        # rotor disc area (m^2)

    def __post_init__(self):
        if min(self.P0, self.P1) < 0 or min(self.U_tip, self.v0, self.rho, self.s, self.A) <= 0:
            raise ValueError("invalid propulsion constants")
        if self.d_f < 0:
            raise ValueError("drag ratio must be nonnegative")


@dataclass(frozen=True)
class SolarParams:
    """Solar harvesting model: atmospheric transmittance x cloud attenuation."""

    alpha: float = 0.8978       # maximum atmospheric transmittance
    beta1: float = 0.2804       # extinction coefficient
    beta_c: float = 0.01        # cloud absorption coefficient (1/m)
    F: float = 1367.0           # solar constant (W/m^2)
    Delta: float = 8000.0       # atmosphere scale height (m)
    eta: float = 0.4            # photovoltaic efficiency
    S_panel: float = 0.5        # panel area (m^2)
    L: float = 500.0            # cloud lower boundary (m)
    U: float = 1000.0           # cloud upper boundary (m)

    def __post_init__(self):
        if self.L > self.U:
            raise ValueError("cloud boundaries require L <= U")
        if min(self.F, self.Delta, self.S_panel) <= 0 or not 0 < self.eta <= 1:
            raise ValueError("invalid solar constants")


@dataclass(frozen=True)
class NLoSParams:
    """Probabilistic LoS/NLoS channel constants.

    C and D are environment sigmoid constants and ship without defaults on
    purpose: they must come from the configuration. kappa != 2 is rejected by
    the quadratic gain approximation.
    """

    C: float
    D: float
    kappa: float = 2.0
    zeta: float = 0.2     # attenuation of the NLoS component
    eta1: float = 1e-12   # quadratic-approximation scale term
    eta2: float = 0.0     # quadratic-approximation floor term

    def __post_init__(self):
        if self.C <= 0 or self.D <= 0:
            raise ValueError("sigmoid constants must be positive")
        if not 0 <= self.zeta <= 1:
            raise ValueError("zeta must lie in [0, 1]")
        if self.eta1 <= 0 or self.eta2 < 0:
            raise ValueError("eta1 must be positive, eta2 nonnegative")


@dataclass(frozen=True)
class ScenarioPreset:
    """Mission endpoints; names follow the three canonical placements."""

    name: str
    start: tuple
    end: tuple

    @property
    def d_min(self) -> float:
        sx, sy = self.start
        ex, ey = self.end
        return math.hypot(ex - sx, ey - sy)

    def min_time(self, v_max: float) -> float:
        return self.d_min / v_max


PRESETS = {
    # both endpoints inside the jamming-free area
    "JF": ScenarioPreset("JF", (-50.0, -100.0), (100.0, 140.0)),
    # start inside, end outside
    "IF": ScenarioPreset("IF", (-50.0, 0.0), (100.0, 350.0)),
    # both endpoints outside
    "NF": ScenarioPreset("NF", (300.0, 200.0), (200.0, 400.0)),
}


def validate_scenario(scenario: ScenarioPreset, params: SystemParams, tol=1e-9):
    """Reject missions the speed limit cannot complete in T seconds."""
    if scenario.d_min > params.v_max * params.T * (1.0 + tol):
        raise ValueError(
            f"scenario {scenario.name}: d_min={scenario.d_min:.2f} m exceeds "
            f"v_max*T={params.v_max * params.T:.2f} m"
        )


# ---------------------------------------------------------------------------
# Trajectories and profiles
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Waypoint chain p_0 .. p_Tw; p_0 is the start, p_Tw the end."""

    points: np.ndarray  # shape (T_w + 1, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("trajectory needs shape (T_w+1, 2)")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n_slots(self) -> int:
        return self.points.shape[0] - 1

    def speeds(self, delta: float) -> np.ndarray:
        """Per-slot speeds |p_t - p_{t-1}| / delta, length T_w."""
        steps = np.diff(self.points, axis=0)
        return np.hypot(steps[:, 0], steps[:, 1]) / delta

    def validate(self, scenario: ScenarioPreset, params: SystemParams, tol=1e-6):
        if self.n_slots != params.T_w:
            raise ValueError(f"expected {params.T_w} slots, got {self.n_slots}")
        if not (np.allclose(self.points[0], scenario.start, atol=tol)
                and np.allclose(self.points[-1], scenario.end, atol=tol)):
            raise ValueError("trajectory endpoints do not match the scenario")
        v = self.speeds(params.delta)
        if np.any(v > params.v_max * (1.0 + tol)):
            t = int(np.argmax(v))
            raise ValueError(f"speed limit violated at slot {t + 1}: {v[t]:.3f} m/s")

    @staticmethod
    def straight_line(scenario: ScenarioPreset, T_w: int) -> "Trajectory":
        frac = np.linspace(0.0, 1.0, T_w + 1)[:, None]
        a = np.asarray(scenario.start, dtype=float)
        b = np.asarray(scenario.end, dtype=float)
        return Trajectory(a + frac * (b - a))


@dataclass
class JammingProfile:
    """Per-slot jamming powers P_j^t (W), t = 1 .. T_w."""

    powers: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.powers, dtype=float)
        if p.ndim != 1:
            raise ValueError("jamming profile must be one-dimensional")
        if np.any(p < 0):
            raise ValueError("jamming powers must be nonnegative")
        p.flags.writeable = False
        object.__setattr__(self, "powers", p)

    @property
    def total_energy(self):
        raise AttributeError("use EnergyLedger or multiply by delta explicitly")


@dataclass
class SlackState:
    """Auxiliary per-slot quantities of the reformulated problems."""

    u: np.ndarray                  # >= x^2 + y^2 + H^2
    w: np.ndarray                  # >= max(H^2, u - 2dx + d^2)
    q: Optional[np.ndarray] = None  # induced-power slack (energy pipeline only)


# ---------------------------------------------------------------------------
# Channel model
# ---------------------------------------------------------------------------


def channel_gain_sd(params: SystemParams) -> float:
    """LoS gain of the suspicious S-D ground link, beta0 / d^2."""
    return params.beta0 / params.d ** 2


def channel_gain_su(point, params: SystemParams) -> float:
    """LoS gain of the S-UAV link at planar waypoint (x, y)."""
    x, y = point
    return params.beta0 / (x * x + y * y + params.H ** 2)


def channel_gain_ud(point, params: SystemParams) -> float:
    """LoS gain of the UAV-D link at planar waypoint (x, y)."""
    x, y = point
    return params.beta0 / ((params.d - x) ** 2 + y * y + params.H ** 2)


def sinr_pair(point, p_jam: float, params: SystemParams, p_x: Optional[float] = None):
    """(gamma_D, gamma_U) at a waypoint under jamming power p_jam.

    gamma_D is the SINR of the suspicious link (jammed), gamma_U the SNR of
    the overheard copy at the UAV. The monitoring predicate
    gamma_U >= gamma_D does not depend on p_x.
    """
    if p_jam < 0:
        raise ValueError("jamming power must be nonnegative")
    px = params.P_x if p_x is None else p_x
    s2 = params.sigma2
    g_d = channel_gain_sd(params) * px / (channel_gain_ud(point, params) * p_jam + s2)
    g_u = channel_gain_su(point, params) * px / s2
    return g_d, g_u


def in_jamming_free(point, params: SystemParams) -> bool:
    """True iff the waypoint overhears at least as well as D receives with
    no jamming at all: x^2 + y^2 + H^2 <= d^2."""
    x, y = point
    return x * x + y * y + params.H ** 2 <= params.d ** 2


def jamming_free_radius(params: SystemParams) -> float:
    """Ground-projection radius sqrt(d^2 - H^2) of the jamming-free area."""
    return math.sqrt(params.d ** 2 - params.H ** 2)


def jamming_power_closed_form(point, params: SystemParams) -> float:
    """Minimum jamming power making the monitor succeed at a waypoint.

    Zero inside the jamming-free area; otherwise
    (sigma^2 / (beta0 d^2)) * [(d-x)^2 + y^2 + H^2] * [(x^2+y^2+H^2) - d^2].
    """
    x, y = point
    d2 = params.d ** 2
    u = x * x + y * y + params.H ** 2
    if u <= d2:
        return 0.0
    w = (params.d - x) ** 2 + y * y + params.H ** 2
    return params.sigma2 / (params.beta0 * d2) * w * (u - d2)


# ---------------------------------------------------------------------------
# Propulsion
# ---------------------------------------------------------------------------


def propulsion_power(v: float, pp: PropulsionParams) -> float:
    """Rotary-wing level-flight power at speed v (W).

    Blade profile + induced + parasite terms; P(0) = P0 + P1 exactly.
    """
    if v < 0:
        raise ValueError("speed must be nonnegative")
    v2 = v * v
    blade = pp.P0 * (1.0 + 3.0 * v2 / pp.U_tip ** 2)
    induced = pp.P1 * math.sqrt(
        math.sqrt(1.0 + v2 * v2 / (4.0 * pp.v0 ** 4)) - v2 / (2.0 * pp.v0 ** 2)
    )
    parasite = 0.5 * pp.d_f * pp.rho * pp.s * pp.A * v2 * v
    return blade + induced + parasite


def find_min_power_speed(pp: PropulsionParams, v_max: float = 80.0):
    """(V_e, P(V_e)): the power-minimizing level-flight speed on [0, v_max]."""
    res = minimize_scalar(
        lambda v: propulsion_power(v, pp),
        bounds=(0.0, v_max),
        method="bounded",
        options={"xatol": 1e-3},
    )
    v_e = float(res.x)
    # bounded Brent can sit a hair off the boundary; keep the better endpoint
    for v_end in (0.0, v_max):
        if propulsion_power(v_end, pp) < res.fun:
            v_e = v_end
    return v_e, propulsion_power(v_e, pp)


def slot_speed(p_t, p_prev, delta: float) -> float:
    """Chord speed |p_t - p_prev| / delta of one slot."""
    if delta <= 0:
        raise ValueError("slot length must be positive")
    return math.hypot(p_t[0] - p_prev[0], p_t[1] - p_prev[1]) / delta


# ---------------------------------------------------------------------------
# Solar harvesting
# ---------------------------------------------------------------------------


def solar_power(H: float, sp: SolarParams) -> float:
    """Harvested electrical power at altitude H (W).

    Attenuation crosses the cloud layer [L, U]: none above U, the residual
    thickness U - H inside, the full thickness U - L below.
    """
    if H < 0:
        raise ValueError("altitude must be nonnegative")
    phi = sp.alpha - sp.beta1 * math.exp(-H / sp.Delta)
    if H >= sp.U:
        d_c = 0.0
    elif H >= sp.L:
        d_c = sp.U - H
    else:
        d_c = sp.U - sp.L
    psi = math.exp(-sp.beta_c * d_c)
    return sp.eta * sp.S_panel * sp.F * phi * psi


# ---------------------------------------------------------------------------
# Probabilistic LoS / NLoS channel
# ---------------------------------------------------------------------------


def p_los(theta_deg: float, nlos: NLoSParams) -> float:
    """LoS probability as a sigmoid of the elevation angle (degrees)."""
    return 1.0 / (1.0 + nlos.C * math.exp(-nlos.D * (theta_deg - nlos.C)))


def _link_distance(point, link: str, params: SystemParams) -> float:
    x, y = point
    if link == "su":
        return math.sqrt(x * x + y * y + params.H ** 2)
    if link == "ud":
        return math.sqrt((params.d - x) ** 2 + y * y + params.H ** 2)
    raise ValueError("link must be 'su' or 'ud'")


def nlos_gain(point, link: str, nlos: NLoSParams, params: SystemParams) -> float:
    """Expected gain of a UAV link mixing LoS and attenuated NLoS paths."""
    d_link = _link_distance(point, link, params)
    if d_link < params.H:
        raise ValueError("link distance below altitude; geometry is corrupt")
    theta = math.degrees(math.asin(min(1.0, params.H / d_link)))
    p = p_los(theta, nlos)
    base = params.beta0 * d_link ** (-nlos.kappa)
    return p * base + (1.0 - p) * nlos.zeta * base


def quadratic_approx_gain(point, link: str, nlos: NLoSParams, params: SystemParams) -> float:
    """Two-term approximation eta1 / d_link^2 + eta2 of the mixed gain."""
    if abs(nlos.kappa - 2.0) > 1e-12:
        raise ValueError("quadratic gain approximation requires kappa = 2")
    d_link = _link_distance(point, link, params)
    return nlos.eta1 / d_link ** 2 + nlos.eta2


def rayleigh_sd_gains(n: int, nlos: NLoSParams, params: SystemParams, seed: int) -> np.ndarray:
    """n per-slot S-D gains beta0 * xi_t * d^-kappa with xi_t ~ Exp(1)."""
    if n < 1:
        raise ValueError("need at least one slot")
    xi = np.random.default_rng(seed).exponential(1.0, size=n)
    return params.beta0 * xi * params.d ** (-nlos.kappa)


# ---------------------------------------------------------------------------
# Energy accounting
# ---------------------------------------------------------------------------


@dataclass
class EnergyLedger:
    """Slot-resolved energy bookkeeping of one mission (all entries J)."""

    jam_J: np.ndarray
    prop_J: np.ndarray
    circ_J: np.ndarray
    harvest_J: np.ndarray
    battery_J: np.ndarray  # theta*E0 + cumulative harvest - cumulative spend

    @property
    def total_jam_J(self) -> float:
        return float(self.jam_J.sum())

    @property
    def total_prop_J(self) -> float:
        return float(self.prop_J.sum())

    @property
    def total_circ_J(self) -> float:
        return float(self.circ_J.sum())

    @property
    def total_harvest_J(self) -> float:
        return float(self.harvest_J.sum())

    @property
    def total_spend_J(self) -> float:
        return self.total_jam_J + self.total_prop_J + self.total_circ_J

    def cumulative_spend_J(self) -> np.ndarray:
        return np.cumsum(self.jam_J + self.prop_J + self.circ_J)


def evaluate_ledger(traj: Trajectory, jam: JammingProfile, params: SystemParams,
                    pp: PropulsionParams, sp: SolarParams) -> EnergyLedger:
    """Ledger for a trajectory flown with the given jamming profile."""
    n = traj.n_slots
    if jam.powers.shape[0] != n:
        raise ValueError("jamming profile length must equal the slot count")
    delta = params.delta
    speeds = traj.speeds(delta)
    prop = np.array([propulsion_power(v, pp) for v in speeds]) * delta
    jam_e = jam.powers * delta
    circ = np.full(n, params.P_c * delta)
    harv = np.full(n, solar_power(params.H, sp) * delta)
    battery = params.theta_frac * params.E0 + np.cumsum(harv) - np.cumsum(jam_e + prop + circ)
    return EnergyLedger(jam_e, prop, circ, harv, battery)


def min_initial_energy(scenario: ScenarioPreset, params: SystemParams,
                       pp: PropulsionParams) -> float:
    """Smallest usable budget that completes the straight-line mission.

    Flies start->end at the constant speed d_min / T with closed-form
    jamming; the result is the total outflow (harvesting excluded, so it is
    an upper bound on the required theta * E0).
    """
    validate_scenario(scenario, params)
    traj = Trajectory.straight_line(scenario, params.T_w)
    delta = params.delta
    v_bar = scenario.d_min / params.T
    prop_total = propulsion_power(v_bar, pp) * params.T
    jam_total = sum(
        jamming_power_closed_form(traj.points[t], params) for t in range(1, params.T_w + 1)
    ) * delta
    return prop_total + jam_total + params.P_c * params.T


def min_time_slots(eps_m: float, params: SystemParams) -> int:
    """Slot count making the within-slot displacement error at most eps_m
    times the altitude: ceil(v_max * T / (H * eps_m)), at least 1."""
    if eps_m <= 0:
        raise ValueError("eps_m must be positive")
    return max(1, math.ceil(params.v_max * params.T / (params.H * eps_m)))
