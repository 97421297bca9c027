"""Command-line entry point: run pipelines, price reference schemes, sample
model curves, and run the acceptance suite.

Subcommands
    run <config>              execute the configured pipeline, write artifacts
    baseline <kind> <config>  price one reference scheme under the config
    curves propulsion|solar   sample the speed-power / altitude-harvest curve
    validate                  run the acceptance suite, nonzero exit on failure

The output directory comes from the config (or --out for curves); the
UAVMON_OUTPUT_DIR environment variable overrides it.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance, model, report
from .baselines import BaselineKind, generate
from .config import ConfigError, RunConfig, load_config
from .energy_opt import InfeasibleInitial, algorithm2
from .jamming_opt import (
    algorithm1,
    algorithm1_nlos,
    algorithm1_two_links,
    apply_non_outage,
    closed_form_profile,
)
from .model import JammingProfile, Trajectory

CONVERGED = {"relative-decrease", "zero-optimal"}


def _out_dir(config_dir: str) -> Path:
    out = Path(os.environ.get("UAVMON_OUTPUT_DIR", config_dir))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _status(termination: str) -> str:
    return "Converged" if termination in CONVERGED else termination


def _write_common(out: Path, cfg: RunConfig, traj: Trajectory,
                  profile: JammingProfile, payload: dict) -> None:
    report.write_trajectory_csv(out / "trajectory.csv", traj, profile)
    report.write_power_csv(out / "power.csv", traj, profile, cfg.system, cfg.propulsion)
    report.write_report_json(out / "report.json", payload)
    if cfg.figures:
        report.render_trajectory_png(out / "trajectory.png", traj, cfg.system,
                                     cfg.scenario.name)
        report.render_power_png(out / "power.png", traj, profile, cfg.system,
                                cfg.propulsion)
        if "objective_trace_J" in payload:
            report.render_convergence_png(out / "convergence.png",
                                          payload["objective_trace_J"])


def _run_baseline(kind: BaselineKind, cfg: RunConfig, out: Path) -> int:
    traj = generate(kind, cfg.scenario, cfg.system, cfg.propulsion)
    profile = closed_form_profile(traj, cfg.system)
    ledger = model.evaluate_ledger(traj, profile, cfg.system, cfg.propulsion, cfg.solar)
    payload = report.report_payload(
        f"baseline:{kind.value}", cfg.scenario.name, "OK",
        totals={
            "total_jamming_J": ledger.total_jam_J,
            "total_propulsion_J": ledger.total_prop_J,
            "total_circuit_J": ledger.total_circ_J,
            "total_harvest_J": ledger.total_harvest_J,
            "battery_min_J": float(ledger.battery_J.min()),
        })
    report.write_ledger_csv(out / "ledger.csv", ledger, cfg.system)
    _write_common(out, cfg, traj, profile, payload)
    return 0


def _run_pipeline(cfg: RunConfig, out: Path) -> int:
    alg = cfg.algorithm
    if alg.startswith("baseline:"):
        return _run_baseline(BaselineKind(alg.split(":", 1)[1]), cfg, out)

    if alg == "alg2":
        try:
            sol = algorithm2(cfg.scenario, cfg.system, cfg.propulsion, cfg.solar,
                             settings=cfg.solver)
        except InfeasibleInitial as exc:
            report.write_report_json(out / "report.json", report.report_payload(
                alg, cfg.scenario.name, "InfeasibleInitial",
                extra={"message": str(exc), "slot": exc.slot}))
            print(f"error: {exc}", file=sys.stderr)
            return 2
        payload = report.report_payload(
            alg, cfg.scenario.name, _status(sol.report.termination), sol.report,
            totals={
                "total_jamming_J": sol.ledger.total_jam_J,
                "total_propulsion_J": sol.ledger.total_prop_J,
                "total_circuit_J": sol.ledger.total_circ_J,
                "total_harvest_J": sol.ledger.total_harvest_J,
                "battery_min_J": float(sol.ledger.battery_J.min()),
            },
            extra={"sca_violation_max": float(max(sol.sca_violation_trace)),
                   "causality_margin_min": float(min(sol.causality_margin_trace))})
        report.write_ledger_csv(out / "ledger.csv", sol.ledger, cfg.system)
        _write_common(out, cfg, sol.trajectory, sol.profile, payload)
        return 0 if payload["status"] == "Converged" else 1

    if alg == "alg1":
        traj, profile, _, rep = algorithm1(cfg.scenario, cfg.system, settings=cfg.solver)
    elif alg == "alg1-two-link":
        sol = algorithm1_two_links(cfg.scenario, cfg.system, cfg.two_link,
                                   settings=cfg.solver)
        traj, profile, rep = sol.trajectory, sol.profile, sol.report
    elif alg == "alg1-nlos":
        sol = algorithm1_nlos(cfg.scenario, cfg.system, cfg.nlos,
                              settings=cfg.solver, seed=cfg.seed)
        traj, profile, rep = sol.trajectory, sol.profile, sol.report
    else:  # alg1-non-outage
        traj, profile, _, rep = algorithm1(cfg.scenario, cfg.system, settings=cfg.solver)
        profile, kept = apply_non_outage(profile, cfg.non_outage)

    totals = {"total_jamming_J": float(profile.powers.sum()) * cfg.system.delta}
    extra = {}
    if alg == "alg1-non-outage":
        extra = {"monitored_slots": int(kept.sum()), "p_non": cfg.non_outage.p_non}
    payload = report.report_payload(alg, cfg.scenario.name, _status(rep.termination),
                                    rep, totals=totals, extra=extra)
    _write_common(out, cfg, traj, profile, payload)
    return 0 if payload["status"] == "Converged" else 1


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    return _run_pipeline(cfg, _out_dir(cfg.output_dir))


def _cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    try:
        kind = BaselineKind(args.kind)
    except ValueError:
        choices = ", ".join(k.value for k in BaselineKind)
        print(f"error: unknown baseline {args.kind!r}; choose one of {choices}",
              file=sys.stderr)
        return 2
    return _run_baseline(kind, cfg, _out_dir(cfg.output_dir))


def _cmd_curves(args) -> int:
    out = _out_dir(args.out)
    if args.which == "propulsion":
        lo, hi = args.range if args.range else (0.0, 30.0)
        step = args.step or 0.1
        pp = model.PropulsionParams()
        sample = lambda v: model.propulsion_power(v, pp)
        header, png = ["V_mps", "P_W"], ("speed (m/s)", "propulsion power (W)")
    else:
        lo, hi = args.range if args.range else (0.0, 1500.0)
        step = args.step or 5.0
        sp = model.SolarParams()
        sample = lambda h: model.solar_power(h, sp)
        header, png = ["H_m", "harvest_W"], ("altitude (m)", "harvested power (W)")
    if step <= 0 or hi < lo:
        print("error: empty sampling range", file=sys.stderr)
        return 2
    xs = np.arange(lo, hi + 0.5 * step, step)
    ys = [sample(float(x)) for x in xs]
    path = out / f"{args.which}.csv"
    # the first column of a curve file is the x value itself, not a slot index
    report._write_csv(path, header, [(report._fmt(x), y) for x, y in zip(xs, ys)])
    if not args.no_figures:
        report.render_curve_png(out / f"{args.which}.png", xs, ys, *png)
    return 0


def _cmd_validate(args) -> int:
    results = acceptance.run_all()
    width = max(len(r.title) for r in results)
    failures = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        failures += not r.passed
        print(f"[{mark}] {r.criterion:2d}  {r.title:<{width}}  ({r.seconds:.1f}s)")
        if not r.passed or args.verbose:
            for line in r.details.splitlines():
                print(f"          {line}")
    print(f"{len(results) - failures}/{len(results)} criteria passed")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uavmon",
        description="Aerial-monitor jamming and energy optimization pipelines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the pipeline selected by a config file")
    p_run.add_argument("config", help="path to a TOML run file")

    p_base = sub.add_parser("baseline", help="price one reference flight scheme")
    p_base.add_argument("kind", help="|".join(k.value for k in BaselineKind))
    p_base.add_argument("config", help="path to a TOML run file")

    p_curves = sub.add_parser("curves", help="sample a model curve to CSV (+PNG)")
    p_curves.add_argument("which", choices=("propulsion", "solar"))
    p_curves.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    p_curves.add_argument("--step", type=float)
    p_curves.add_argument("--out", default="out")
    p_curves.add_argument("--no-figures", action="store_true")

    p_val = sub.add_parser("validate", help="run the acceptance suite")
    p_val.add_argument("--verbose", action="store_true",
                       help="print details for passing criteria too")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "baseline":
            return _cmd_baseline(args)
        if args.command == "curves":
            return _cmd_curves(args)
        return _cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
