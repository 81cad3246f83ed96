"""Command line interface: ``retrace-sde <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import BaselineConfig, order_trajectories
from .core import make_rng
from .errors import RetraceError
from .estimators import fit
from .harness.config import ExperimentConfig, load_config
from .harness.io import load_ensemble, save_ensemble
from .harness.runner import calibrate, run_experiment, summarize, ResultRow, write_summary
from .metrics import kendall_tau, ordering_accuracy, param_mae, recovered_labels
from .pkpd import effect_report, floor_hit_fraction, simulate_cohort
from .retrace import retrace
from .simulator import (InitSpec, ObservationNoise, PermutationRecord, add_observation_noise,
                        apply_order, corrupt_order, make_irreversible_params, simulate)


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="YAML experiment config (defaults apply when omitted)")
    p.add_argument("--seed", type=int, default=d(None), help="master seed (overrides the config's first seed)")
    p.add_argument("--out", default=d(None), help="output file (data commands) or directory (bench, pkpd)")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads; results do not depend on it")
    p.add_argument("--json", action="store_true", default=d(False), help="print a JSON summary to stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="retrace-sde", description="Recover time order of SDE ensembles.")
    _global_flags(ap, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate an ensemble from random irreversible parameters")
    p.add_argument("--dims", type=int, help="state dimension")
    p.add_argument("--n-traj", type=int, help="number of trajectories")
    p.add_argument("--n-steps", type=int, help="time slices per trajectory")
    p.add_argument("--dt", type=float, help="step size")
    p.add_argument("--sigma-eps", type=float, default=0.0, help="observation noise sd")

    p = sub.add_parser("corrupt", parents=[common], help="permute time slices")
    p.add_argument("--in", dest="inp", required=True, help="input container")
    p.add_argument("--mode", choices=["per_trajectory", "shared"], default="per_trajectory",
                   help="one permutation per trajectory or one shared")

    p = sub.add_parser("retrace", parents=[common], help="recover time order with the drift-score sort")
    p.add_argument("--in", dest="inp", required=True, help="input container")
    p.add_argument("--estimator", choices=["mle", "ols", "em"], default="mle", help="parameter estimator")
    p.add_argument("--sigma-eps", type=float, default=0.0, help="known observation noise sd")
    p.add_argument("--max-iters", type=int, help="maximum outer iterations")
    p.add_argument("--swap-direction", choices=["forward", "reversed"], help="swap rule")
    p.add_argument("--slice-mode", choices=["shared", "matched"], help="which slice Gaussian scores x_s")

    p = sub.add_parser("baseline", parents=[common], help="order with an MST or diffusion-pseudotime baseline")
    p.add_argument("--in", dest="inp", required=True, help="input container")
    p.add_argument("--method", choices=["mst", "dpt"], default="mst", help="baseline")

    p = sub.add_parser("estimate", parents=[common], help="fit drift and diffusion to ordered data")
    p.add_argument("--in", dest="inp", required=True, help="input container")
    p.add_argument("--estimator", choices=["mle", "ols", "em"], default="mle", help="estimator")
    p.add_argument("--sigma-eps", type=float, default=0.0, help="known observation noise sd (em)")

    p = sub.add_parser("pkpd", parents=[common], help="tumor-growth counterfactual study")
    p.add_argument("--n-subjects", type=int, help="cohort size")
    p.add_argument("--n-mc", type=int, help="Monte Carlo paths per arm")
    p.add_argument("--pipelines", nargs="+", choices=["true_order", "retrace", "mst", "dpt"], help="pipelines")

    p = sub.add_parser("bench", parents=[common], help="run the configured experiment and write CSV/SVG artifacts")
    p.add_argument("--calibrate", action="store_true", help="also run the swap-direction/slice-mode calibration")
    p.add_argument("--calibration-seeds", type=int, default=5, help="seeds used by --calibrate")

    p = sub.add_parser("metrics", parents=[common], help="score a recovered container or summarize results.csv")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--in", dest="inp", help="container whose manifest holds the true time labels")
    g.add_argument("--results", help="results.csv to summarize")
    return ap


def _cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seeds = [args.seed]
    return cfg


def _need_out(args) -> str:
    if not args.out:
        raise RetraceError(f"{args.command}: --out is required")
    return args.out


def _emit(args, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def _label_metrics(perm: PermutationRecord | None, n_traj: int) -> dict:
    if perm is None:
        return {}
    labels = perm.expand(n_traj)
    ident = np.arange(labels.shape[1])[None, :]
    return {"accuracy": ordering_accuracy(ident, labels), "kendall_tau": kendall_tau(ident, labels)}


def _truth(manifest: dict):
    p = manifest.get("extra", {}).get("params")
    if not p:
        return None, None
    A, G = np.asarray(p["A"]), np.asarray(p["G"])
    return A, G @ G.T


def cmd_simulate(args) -> dict:
    cfg = _cfg(args)
    dims = args.dims or cfg.dims
    dt = args.dt or cfg.dt
    seed = cfg.seeds[0]
    params = make_irreversible_params(dims, make_rng(seed, 0), cfg.gen, dt)
    e = simulate(params, args.n_traj or cfg.n_traj, args.n_steps or cfg.n_steps,
                 InitSpec(cfg.init.kind, cfg.init.mean, cfg.init.cov), make_rng(seed, 1))
    if args.sigma_eps > 0:
        e = add_observation_noise(e, ObservationNoise(args.sigma_eps), make_rng(seed, 2, 0))
    extra = {"params": {"A": params.A.tolist(), "G": params.G.tolist()}, "sigma_eps": args.sigma_eps}
    save_ensemble(_need_out(args), e, PermutationRecord.identity(e.n_traj, e.n_steps), seed, extra)
    return {"n_traj": e.n_traj, "n_steps": e.n_steps, "dim": e.dim, "dt": e.dt, "kind": e.kind, "seed": seed}


def cmd_corrupt(args) -> dict:
    e, perm, m = load_ensemble(args.inp)
    seed = args.seed if args.seed is not None else (m.get("seed") or 0)
    bad, rec = corrupt_order(e, args.mode, make_rng(seed, 3))
    labels = rec if perm is None else PermutationRecord(
        "per_trajectory", np.take_along_axis(perm.expand(e.n_traj), rec.expand(e.n_traj), axis=1))
    save_ensemble(_need_out(args), bad, labels, m.get("seed"), m.get("extra"))
    return {"mode": args.mode, **_label_metrics(labels, e.n_traj)}


def _compose(perm, order: PermutationRecord, n: int):
    if perm is None:
        return None
    return PermutationRecord("per_trajectory", recovered_labels(PermutationRecord("per_trajectory", perm.expand(n)), order))


def cmd_retrace(args) -> dict:
    cfg = _cfg(args)
    e, perm, m = load_ensemble(args.inp)
    rc = cfg.retrace
    if args.max_iters:
        rc = replace(rc, max_outer_iters=args.max_iters)
    if args.swap_direction:
        rc = replace(rc, swap_direction=args.swap_direction)
    if args.slice_mode:
        rc = replace(rc, slice_mode=args.slice_mode)
    R = ObservationNoise(args.sigma_eps).R(e.dim) if args.sigma_eps > 0 else None
    res = retrace(e, R, rc, args.estimator)
    labels = _compose(perm, res.ordering, e.n_traj)
    if args.out:
        save_ensemble(args.out, res.data, labels, m.get("seed"), m.get("extra"))
    out = {"converged": res.converged, "outer_iters": res.outer_iters_used,
           "swaps_per_iter": res.swaps_per_iter, **_label_metrics(labels, e.n_traj)}
    A, H = _truth(m)
    if A is not None:
        out.update(mae_A=param_mae(A, res.fit.A_hat), mae_H=param_mae(H, res.fit.H_hat))
    return out


def cmd_baseline(args) -> dict:
    cfg = _cfg(args)
    e, perm, m = load_ensemble(args.inp)
    order = order_trajectories(e, replace(cfg.baseline, method=args.method))
    labels = _compose(perm, order, e.n_traj)
    if args.out:
        save_ensemble(args.out, e.with_data(apply_order(e.data, order.perms)), labels, m.get("seed"), m.get("extra"))
    return {"method": args.method, **_label_metrics(labels, e.n_traj)}


def cmd_estimate(args) -> dict:
    e, _, m = load_ensemble(args.inp)
    R = ObservationNoise(args.sigma_eps).R(e.dim) if args.sigma_eps > 0 else None
    res = fit(e, args.estimator, R)
    out = {"estimator": args.estimator, "log_likelihood": res.log_likelihood,
           "A_hat": res.A_hat.tolist(), "H_hat": res.H_hat.tolist()}
    A, H = _truth(m)
    if A is not None:
        out.update(mae_A=param_mae(A, res.A_hat), mae_H=param_mae(H, res.H_hat))
    return out


def cmd_pkpd(args) -> dict:
    cfg = _cfg(args)
    st = cfg.study
    st = replace(st, n_subjects=args.n_subjects or st.n_subjects, n_mc=args.n_mc or st.n_mc,
                 pipelines=tuple(args.pipelines) if args.pipelines else st.pipelines)
    cfg = replace(cfg, experiment="pkpd", study=st)
    if args.out:
        res = run_experiment(cfg, args.out, args.threads)
        rows = res.pkpd_rows
    else:
        seed = cfg.seeds[0]
        cohort = simulate_cohort(st.n_subjects, cfg.pkpd, "policy", make_rng(seed, 4))
        rows = []
        for pi, pipe in enumerate(st.pipelines):
            rep = effect_report(cohort, pipe, None if st.t_star == -1 else st.t_star, make_rng(seed, 5, pi),
                                st.n_mc, retrace_cfg=cfg.retrace, baseline_cfg=cfg.baseline)
            rows.append({"seed": seed, "pipeline": pipe, "ate": rep.ate, "true_ate": rep.true_ate,
                         "teb": rep.teb, "cf_rmse": rep.cf_rmse, "floor_hit_fraction": floor_hit_fraction(cohort)})
    return {"rows": rows}


def cmd_bench(args) -> dict:
    cfg = _cfg(args)
    out_dir = args.out or cfg.output_dir
    res = run_experiment(cfg, out_dir, args.threads)
    payload = {"output_dir": str(res.output_dir), "rows": len(res.rows) or len(res.pkpd_rows),
               "failures": len(res.failures)}
    if res.rows:
        payload["summary"] = summarize(res.rows)
    if args.calibrate:
        payload["calibration"] = calibrate(cfg, args.calibration_seeds, out_dir, args.threads)
    return payload


def cmd_metrics(args) -> dict:
    if args.results:
        rows = []
        with open(args.results) as fh:
            header = fh.readline().strip().split(",")
            for line in fh:
                d = dict(zip(header, line.strip().split(",")))
                rows.append(ResultRow(d["method"], int(d["seed"]), float(d["sigma_eps"]), float(d["accuracy"]),
                                      float(d["mae_A"]), float(d["mae_H"]), float(d["kendall_tau"]),
                                      float(d["iter_runtime_s"]), d["converged"] == "true", int(d["outer_iters"])))
        summary = summarize(rows)
        if args.out:
            write_summary(summary, args.out)
        return {"summary": summary}
    e, perm, _ = load_ensemble(args.inp)
    if perm is None:
        raise RetraceError(f"{args.inp}: manifest holds no time labels")
    return _label_metrics(perm, e.n_traj)


COMMANDS = {"simulate": cmd_simulate, "corrupt": cmd_corrupt, "retrace": cmd_retrace, "baseline": cmd_baseline,
            "estimate": cmd_estimate, "pkpd": cmd_pkpd, "bench": cmd_bench, "metrics": cmd_metrics}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise RetraceError("--threads must be >= 1")
        payload = COMMANDS[args.command](args)
    except (RetraceError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"retrace-sde {args.command}: error: {msg}", file=sys.stderr)
        return 1
    _emit(args, payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
