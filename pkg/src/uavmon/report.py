"""Run artifacts: delimited per-slot data, a JSON report, and figures.

CSV files carry a header row with unit-suffixed column names and CRLF line
endings; identical inputs produce byte-identical files.  Figures (PNG) are
rendered next to the CSVs unless the run opts out.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from . import model
from .model import (
    EnergyLedger,
    JammingProfile,
    PropulsionParams,
    SystemParams,
    Trajectory,
)


def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)  # RFC 4180: CRLF line terminator
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])


def write_trajectory_csv(path, traj: Trajectory, profile: JammingProfile) -> None:
    """Waypoints with the jamming power of the slot ending at each of them."""
    pj = np.concatenate([[0.0], profile.powers])
    rows = [(t, traj.points[t, 0], traj.points[t, 1], pj[t]) for t in range(len(traj.points))]
    _write_csv(Path(path), ["t", "x_m", "y_m", "Pj_W"], rows)


def write_power_csv(path, traj: Trajectory, profile: JammingProfile,
                    params: SystemParams, pp: PropulsionParams) -> None:
    """Per-slot speed, jamming power, and propulsion power."""
    v = traj.speeds(params.delta)
    pm = [model.propulsion_power(float(s), pp) for s in v]
    rows = [(t, v[t - 1], profile.powers[t - 1], pm[t - 1])
            for t in range(1, params.T_w + 1)]
    _write_csv(Path(path), ["t", "V_mps", "Pj_W", "Pm_W"], rows)


def write_ledger_csv(path, ledger: EnergyLedger, params: SystemParams) -> None:
    """Per-slot power split and the running battery level."""
    d = params.delta
    rows = [
        (t, ledger.jam_J[t - 1] / d, ledger.prop_J[t - 1] / d, ledger.circ_J[t - 1] / d,
         ledger.harvest_J[t - 1] / d, ledger.battery_J[t - 1])
        for t in range(1, params.T_w + 1)
    ]
    _write_csv(Path(path), ["t", "Pj_W", "Pm_W", "Pc_W", "harvest_W", "battery_J"], rows)


def write_report_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_payload(algorithm: str, scenario_name: str, status: str,
                   report=None, totals: Optional[dict] = None,
                   extra: Optional[dict] = None) -> dict:
    payload = {"algorithm": algorithm, "scenario": scenario_name, "status": status}
    if report is not None:
        payload["objective_trace_J"] = [float(v) for v in report.objective_trace_J]
        payload["iterations"] = int(report.iterations)
        payload["termination"] = report.termination
        payload["max_violation"] = float(np.max(report.max_violation)) if np.size(
            report.max_violation) else 0.0
    if totals:
        payload.update({k: float(v) for k, v in totals.items()})
    if extra:
        payload.update(extra)
    return payload


# ------------------------------------------------------------------ figures


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_trajectory_png(path, traj: Trajectory, params: SystemParams,
                          scenario_name: str = "") -> None:
    """Top view: flight path, S/D ground nodes, and the jamming-free disk."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 6))
    r = math.sqrt(max(params.d ** 2 - params.H ** 2, 0.0))
    disk = plt.Circle((0, 0), r, color="tab:green", alpha=0.15, label="jamming-free area")
    ax.add_patch(disk)
    ax.plot(*traj.points.T, "-o", ms=2.5, lw=1.2, color="tab:blue", label="trajectory")
    ax.plot(*traj.points[0], "^", ms=9, color="tab:blue")
    ax.plot(*traj.points[-1], "s", ms=8, color="tab:blue")
    ax.plot(0, 0, "kx", ms=9)
    ax.annotate("S", (0, 0), textcoords="offset points", xytext=(6, 6))
    ax.plot(params.d, 0, "k+", ms=10)
    ax.annotate("D", (params.d, 0), textcoords="offset points", xytext=(6, 6))
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"trajectory {scenario_name}".strip())
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_power_png(path, traj: Trajectory, profile: JammingProfile,
                     params: SystemParams, pp: PropulsionParams) -> None:
    plt = _plt()
    t = np.arange(1, params.T_w + 1) * params.delta
    v = traj.speeds(params.delta)
    pm = [model.propulsion_power(float(s), pp) for s in v]
    fig, (top, bot) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    top.step(t, profile.powers, where="post", color="tab:red", label="jamming")
    top.step(t, pm, where="post", color="tab:blue", label="propulsion")
    top.set_ylabel("power (W)")
    top.legend(fontsize=8)
    top.grid(alpha=0.3)
    bot.step(t, v, where="post", color="tab:gray")
    bot.set_ylabel("speed (m/s)")
    bot.set_xlabel("time (s)")
    bot.grid(alpha=0.3)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_convergence_png(path, trace) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(trace)), trace, "-o", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective (J)")
    ax.grid(alpha=0.3)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_curve_png(path, xs, ys, xlabel: str, ylabel: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, "-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
