"""Six reference flight schemes and their energy ledgers.

Each scheme is a deterministic trajectory generator: a polyline (straight
line, a dog-leg via a waypoint, or a there-and-back zigzag) together with an
arc-length schedule (constant speed, fly-then-hover, hover-then-fly).  Hover
slots are exact zero displacement.  Evaluation prices the trajectory with the
closed-form per-slot jamming power plus the rotary-wing propulsion curve.
"""

from __future__ import annotations

import dataclasses
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import model
from .jamming_opt import closed_form_profile
from .model import (
    EnergyLedger,
    PropulsionParams,
    ScenarioPreset,
    SolarParams,
    SystemParams,
    Trajectory,
)

DEFAULT_WAYPOINT = (200.0, 200.0)


class BaselineKind(Enum):
    LowSpeed = "low-speed"
    FlyHalf = "fly-half"
    TwoLines = "two-lines"
    FlyFirst = "fly-first"
    HoverFirst = "hover-first"
    RoundTrip = "round-trip"


def _sample_polyline(vertices: np.ndarray, arc_at: Callable[[float], float],
                     params: SystemParams) -> Trajectory:
    """Positions at slot boundaries for a path followed by arc length.

    ``arc_at(t)`` maps mission time to distance along the polyline; it must
    be nondecreasing with arc_at(0) = 0 and arc_at(T) = total length.
    """
    seg = np.diff(vertices, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    pts = np.empty((params.T_w + 1, 2))
    for k in range(params.T_w + 1):
        s = min(max(arc_at(k * params.delta), 0.0), total)
        if total == 0.0:
            pts[k] = vertices[0]
            continue
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg_len) - 1)
        frac = 0.0 if seg_len[i] == 0.0 else (s - cum[i]) / seg_len[i]
        pts[k] = vertices[i] + frac * seg[i]
    return Trajectory(pts)


def generate(kind: BaselineKind, scenario: ScenarioPreset, params: SystemParams,
             pp: Optional[PropulsionParams] = None,
             waypoint: Optional[tuple] = None) -> Trajectory:
    """Reference trajectory of the given scheme (see module docstring)."""
    pp = pp or PropulsionParams()
    start = np.asarray(scenario.start, dtype=float)
    end = np.asarray(scenario.end, dtype=float)
    d_min = scenario.d_min
    T = params.T

    if kind is BaselineKind.LowSpeed:
        vertices = np.array([start, end])
        arc = lambda t: d_min / T * t
    elif kind is BaselineKind.FlyHalf:
        vertices = np.array([start, end])
        arc = lambda t: min(2.0 * d_min / T * t, d_min)
    elif kind is BaselineKind.TwoLines:
        wp = np.asarray(waypoint if waypoint is not None else DEFAULT_WAYPOINT, dtype=float)
        if not np.all(np.isfinite(wp)):
            raise ValueError("waypoint must be finite")
        vertices = np.array([start, wp, end])
        total = np.linalg.norm(wp - start) + np.linalg.norm(end - wp)
        arc = lambda t: total / T * t
    elif kind is BaselineKind.FlyFirst:
        v_e, _ = model.find_min_power_speed(pp)
        vertices = np.array([start, end])
        arc = lambda t: min(v_e * t, d_min)
    elif kind is BaselineKind.HoverFirst:
        v_e, _ = model.find_min_power_speed(pp)
        vertices = np.array([start, end])
        arc = lambda t: max(0.0, d_min - v_e * (T - t))
    elif kind is BaselineKind.RoundTrip:
        vertices = np.array([start, end, start, end])
        arc = lambda t: 3.0 * d_min / T * t
    else:
        raise ValueError(f"unknown baseline kind: {kind!r}")

    traj = _sample_polyline(vertices, arc, params)
    v_peak = float(traj.speeds(params.delta).max())
    if v_peak > params.v_max * (1.0 + 1e-9):
        raise ValueError(
            f"{kind.value} needs {v_peak:.2f} m/s, above the {params.v_max:.2f} m/s limit")
    return traj


def evaluate(kind: BaselineKind, scenario: ScenarioPreset, params: SystemParams,
             pp: PropulsionParams, sp: SolarParams,
             waypoint: Optional[tuple] = None) -> EnergyLedger:
    """Slot-resolved energy bookkeeping of one scheme."""
    traj = generate(kind, scenario, params, pp, waypoint)
    return model.evaluate_ledger(traj, closed_form_profile(traj, params), params, pp, sp)


def calibrate_sigma2(scenario: ScenarioPreset, params: SystemParams,
                     target_J: float = 623.7,
                     kind: BaselineKind = BaselineKind.LowSpeed) -> float:
    """Noise power at which the scheme's jamming energy equals the target.

    The closed-form jamming power is linear in the noise power, so one
    evaluation at unit noise fixes the scale.
    """
    if target_J <= 0:
        raise ValueError("target energy must be positive")
    unit = dataclasses.replace(params, sigma2_override=1.0)
    traj = generate(kind, scenario, unit)
    ref = closed_form_profile(traj, unit).powers.sum() * unit.delta
    if ref <= 0.0:
        raise ValueError("scheme never jams; the noise scale is unconstrained")
    return target_J / ref
