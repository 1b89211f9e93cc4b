"""Command-line front end: scenario configuration, pipeline orchestration,
and report/trace emission.

Exit codes: 0 success, 1 configuration error, 2 infeasible program or missing
design input, 3 simulation divergence, 4 reproduction check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__, fixtures
from .assessment import CriticalStates, assess, project_to_state, reach_ellipsoid
from .config import ConfigError, ScenarioConfig, load, serialize
from .lti import UnstableSimulationError
from .model import build_closed_loop, build_plant
from .simulate import (detection_metrics, simulate, string_stability_report,
                       trace_to_csv)
from .synthesis import (InfeasibleSynthesisError, error_reach_given_design,
                        gain_constraint_report, synthesize_controller,
                        synthesize_estimator_monitor)

TRACE_FORMAT_HELP = """\
Trace CSV format: one row per (vehicle, step), steps are 1-based.
Columns:
  vehicle, step            vehicle index (1 = lead follower) and time step
  e_r, v, a, dv, a_prev    true state
  u                        filtered control command (state)
  e_r_hat ... a_prev_hat   estimator state
  y1, y2                   radar measurement fed to the controller
  ye1 .. ye4               estimation measurement vector
  r1 .. r4                 residual
  z, alarm                 detector statistic r' Pi r and alarm flag (z > 1)
  delta1, delta2           injected attack on the radar channels
  eps_ctrl                 pre-filter control input
  u_ff                     true feedforward input received this step
  wd1, wd2, wu, we1..we4   sampled noises
  spacing                  reconstructed inter-vehicle distance e_r + s_i + h v
  collision                1 when the reconstructed spacing is negative
"""


def _np_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)!r}")


def _json_dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, default=_np_default)
        fh.write("\n")


def _arr(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def _verification_dict(rep) -> dict:
    return {"block_min_eigs": rep.block_min_eigs,
            "ineq_slacks": rep.ineq_slacks,
            "passed": rep.passed}


def synthesize_pipeline(cfg: ScenarioConfig, threads=None) -> dict:
    """Estimator/monitor program, then the controller program.  Returns the
    design report fragment."""
    plant = build_plant(cfg.vehicle)
    syn = cfg.synthesis
    est = synthesize_estimator_monitor(
        plant, cfg.bounds, weights=(syn.alpha1, syn.alpha2), eps=syn.eps,
        a_grid=syn.a_grid, c_grid=syn.c_grid, a3_grid=syn.a3_grid,
        tau1_grid=syn.tau1_grid, refinement_rounds=syn.refinement_rounds,
        psd_margin=syn.psd_margin, threads=threads)
    ctrl = synthesize_controller(
        plant, cfg.bounds, Pi=est.Pi, P_e=est.P_e, alpha_e=est.alpha_inf_e,
        eps=syn.eps, lambda_max=syn.lambda_max, a_grid=syn.reach_a_grid,
        refinement_rounds=syn.refinement_rounds, psd_margin=syn.psd_margin,
        threads=threads)
    return {
        "L": _arr(est.L), "Pi": _arr(est.Pi), "K": _arr(ctrl.K),
        "P_e": _arr(est.P_e), "P_zeta": _arr(ctrl.P_zeta),
        "K_tilde": _arr(ctrl.K_tilde), "x_tilde": ctrl.x_tilde,
        "alpha_inf_e": est.alpha_inf_e,
        "alpha_bar_inf_e": est.alpha_bar_inf_e,
        "alpha_inf_zeta": ctrl.alpha_inf_zeta,
        "estimator_scalars": est.scalars,
        "controller_scalars": ctrl.scalars,
        "f2": est.f2,
        "objective_estimator": est.objective,
        "objective_controller": ctrl.objective,
        "gain_constraints": gain_constraint_report(
            ctrl.K, cfg.vehicle.tau, syn.lambda_max),
        "verification_estimator": _verification_dict(est.verification),
        "verification_controller": _verification_dict(ctrl.verification),
    }


def assess_pipeline(cfg: ScenarioConfig, design: dict, threads=None) -> dict:
    """Reach certificate for a fixed design, its projection, and the safety
    verdict; synthesizes the error-reach certificate first when the design
    does not carry one."""
    plant = build_plant(cfg.vehicle)
    syn = cfg.synthesis
    L = np.asarray(design["L"], dtype=float)
    Pi = np.asarray(design["Pi"], dtype=float)
    K = np.asarray(design["K"], dtype=float)
    if "P_e" in design and "alpha_inf_e" in design:
        P_e = np.asarray(design["P_e"], dtype=float)
        alpha_e = float(design["alpha_inf_e"])
        err_info = {"source": "design"}
    else:
        P_e, a_err, alpha_e, sol = error_reach_given_design(
            plant, cfg.bounds, L, Pi, a_grid=syn.reach_a_grid,
            refinement_rounds=syn.refinement_rounds,
            psd_margin=syn.psd_margin, threads=threads)
        err_info = {"source": "error_reach", "a": a_err,
                    "verification": _verification_dict(sol.verification)}
    cl = build_closed_loop(plant, K)
    reach = reach_ellipsoid(cl, cfg.bounds, Pi, P_e, alpha_e, eps=syn.eps,
                            a_grid=syn.reach_a_grid,
                            refinement_rounds=syn.refinement_rounds,
                            psd_margin=syn.psd_margin, threads=threads)
    P_x, alpha = project_to_state(reach.P_zeta, reach.alpha_inf)
    verdict = assess(P_x, alpha, CriticalStates.from_params(cfg.vehicle))
    return {
        "verdict": verdict.to_dict(),
        "P_zeta": _arr(reach.P_zeta),
        "alpha_inf_zeta": reach.alpha_inf,
        "a": reach.a,
        "P_e": _arr(P_e),
        "alpha_inf_e": alpha_e,
        "error_certificate": err_info,
        "verification_reach": _verification_dict(reach.verification),
    }


def simulate_pipeline(cfg: ScenarioConfig, design: dict, seed=None):
    plant = build_plant(cfg.vehicle)
    sim_cfg = cfg.sim if seed is None else dataclasses.replace(cfg.sim, seed=seed)
    trace = simulate(plant, np.asarray(design["L"], float),
                     np.asarray(design["Pi"], float),
                     np.asarray(design["K"], float), sim_cfg, cfg.bounds)
    metrics = {
        "detection": detection_metrics(trace),
        "clip_count": trace.clip_count,
        "max_z": float(trace.z.max()),
        "alarms_total": int(trace.alarm.sum()),
        "collisions_total": int(trace.collisions.sum()),
    }
    if trace.m >= 2:
        metrics["string_stability"] = string_stability_report(trace).to_dict()
        metrics["string_stability_advisory"] = cfg.sim.attack.kind != "none"
    return trace, metrics


def reproduce_pipeline(cfg: ScenarioConfig, seed=None, threads=None) -> dict:
    """Synthesized and baseline pipelines side by side, plus the sign checks
    on the safety distances."""
    synth = synthesize_pipeline(cfg, threads=threads)
    synth_assess = assess_pipeline(cfg, synth, threads=threads)
    base = {k: _arr(v) for k, v in fixtures.baseline_design().items()
            if k in ("L", "Pi", "K")}
    base_assess = assess_pipeline(cfg, base, threads=threads)

    sim_cfg = cfg.sim if seed is None else dataclasses.replace(cfg.sim, seed=seed)
    cfg_run = dataclasses.replace(cfg, sim=sim_cfg)
    _, synth_metrics = simulate_pipeline(cfg_run, synth)
    attack_free = dataclasses.replace(
        cfg_run, sim=dataclasses.replace(
            sim_cfg, attack=dataclasses.replace(sim_cfg.attack, kind="none")))
    _, synth_metrics_free = simulate_pipeline(attack_free, synth)

    d_synth = synth_assess["verdict"]["d_inf"]
    d_base = base_assess["verdict"]["d_inf"]
    checks = {
        "synthesized_distance_positive": bool(d_synth > 0),
        "baseline_distance_negative": bool(d_base < 0),
        "baseline_magnitude_over_100": bool(abs(d_base) > 100),
    }
    report = {
        "tool_version": __version__,
        "config_digest": cfg.digest(),
        "config_text": serialize(cfg),
        "seed": sim_cfg.seed,
        "synthesized": {"design": synth, "assessment": synth_assess,
                        "metrics_stealthy": synth_metrics,
                        "metrics_attack_free": synth_metrics_free},
        "baseline": {"design": base, "assessment": base_assess},
        "checks": checks,
        "passed": all(checks.values()),
    }
    return report


def _comparison_table(report: dict) -> str:
    ds = report["synthesized"]["assessment"]["verdict"]
    db = report["baseline"]["assessment"]["verdict"]
    rows = [
        ("", "synthesized", "baseline"),
        ("d_inf (verdict formula)", f"{ds['d_inf']:.6g}", f"{db['d_inf']:.6g}"),
        ("d_inf (geometric oracle)", f"{ds['d_inf_oracle']:.6g}", f"{db['d_inf_oracle']:.6g}"),
        ("resilient verdict", str(ds["resilient"]), str(db["resilient"])),
        ("formula/oracle sign mismatch", str(ds["sign_mismatch"]), str(db["sign_mismatch"])),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(r[i].ljust(widths[i]) for i in range(3)) for r in rows]
    checks = report["checks"]
    lines.append("")
    for name, ok in checks.items():
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}")
    return "\n".join(lines)


def _load_design_file(path: str) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        design = json.load(fh)
    missing = [k for k in ("L", "Pi", "K") if k not in design]
    if missing:
        raise KeyError(f"design file is missing {missing}")
    return design


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:2] == ["--help", "trace-format"] or argv[:1] == ["trace-format"]:
        print(TRACE_FORMAT_HELP, end="")
        return 0
    parser = argparse.ArgumentParser(
        prog="platoon-shield",
        description="Synthesis and assessment of attack-resilient CACC designs. "
                    "Use '--help trace-format' for the trace CSV column list.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, design=False, config_required=True):
        if design:
            p.add_argument("--design", required=True, help="design JSON path")
        p.add_argument("--config", required=config_required,
                       help="scenario config path")
        p.add_argument("--out", help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, help="override simulation seed")
        p.add_argument("--grid-step", type=float,
                       help="override the coarse grid step for a and c")
        p.add_argument("--threads", type=int,
                       help="cap grid-search parallelism "
                            "(default: PLATOON_SHIELD_THREADS or cpu count)")

    common(sub.add_parser("synthesize", help="solve the design programs"))
    common(sub.add_parser("assess", help="reach certificate and safety verdict"),
           design=True)
    common(sub.add_parser("simulate", help="closed-loop simulation"), design=True)
    rep = sub.add_parser("reproduce", help="run the bundled two-vehicle study")
    common(rep, config_required=False)

    args = parser.parse_args(argv)
    try:
        cfg_path = args.config or fixtures.case_study_config_path()
        cfg = load(cfg_path)
        if args.grid_step:
            step = args.grid_step
            if not 0.0 < step < 1.0:
                raise ConfigError("--grid-step must lie in (0, 1)")
            coarse = tuple(round(step * i, 10) for i in range(1, int(1.0 / step) + 1)
                           if step * i < 1.0)
            tail = tuple(v for v in cfg.synthesis.a_grid + cfg.synthesis.c_grid
                         if v > max(coarse, default=0.0))
            syn = dataclasses.replace(cfg.synthesis, a_grid=coarse,
                                      c_grid=tuple(sorted(set(coarse + tail))))
            cfg = dataclasses.replace(cfg, synthesis=syn)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    out = _out_dir(args)
    try:
        if args.command == "synthesize":
            design = synthesize_pipeline(cfg, threads=args.threads)
            design["tool_version"] = __version__
            design["config_digest"] = cfg.digest()
            design["config_text"] = serialize(cfg)
            _json_dump(design, os.path.join(out, "design.json"))
            print(f"design written to {os.path.join(out, 'design.json')}")
            return 0
        if args.command == "assess":
            design = _load_design_file(args.design)
            result = assess_pipeline(cfg, design, threads=args.threads)
            result["tool_version"] = __version__
            result["config_digest"] = cfg.digest()
            result["config_text"] = serialize(cfg)
            _json_dump(result, os.path.join(out, "verdict.json"))
            v = result["verdict"]
            print(f"d_inf = {v['d_inf']:.6g} (oracle {v['d_inf_oracle']:.6g}); "
                  f"resilient = {v['resilient']}; "
                  f"sign mismatch = {v['sign_mismatch']}")
            return 0
        if args.command == "simulate":
            design = _load_design_file(args.design)
            trace, metrics = simulate_pipeline(cfg, design, seed=args.seed)
            trace_to_csv(trace, os.path.join(out, "trace.csv"), cfg.vehicle)
            metrics["tool_version"] = __version__
            metrics["config_digest"] = cfg.digest()
            metrics["config_text"] = serialize(cfg)
            _json_dump(metrics, os.path.join(out, "metrics.json"))
            print(f"trace written to {os.path.join(out, 'trace.csv')}")
            return 0
        if args.command == "reproduce":
            report = reproduce_pipeline(cfg, seed=args.seed, threads=args.threads)
            _json_dump(report, os.path.join(out, "reproduce_report.json"))
            print(_comparison_table(report))
            return 0 if report["passed"] else 4
    except (FileNotFoundError, KeyError) as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 2
    except InfeasibleSynthesisError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except UnstableSimulationError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
