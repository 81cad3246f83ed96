"""Experiment runner: simulate, corrupt, recover, estimate, evaluate, write artifacts."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..baselines import BaselineConfig, baseline_pipeline
from ..core import make_rng
from ..metrics import kendall_tau, ordering_accuracy, param_mae, recovered_labels
from ..pkpd import effect_report, floor_hit_fraction, simulate_cohort
from ..retrace import RetraceConfig, retrace
from ..simulator import (InitSpec, ObservationNoise, add_observation_noise, corrupt_order,
                         make_irreversible_params, simulate)
from .config import ExperimentConfig
from .svg import noise_sweep_svg

log = logging.getLogger(__name__)

RESULT_FIELDS = ["method", "seed", "sigma_eps", "accuracy", "mae_A", "mae_H", "kendall_tau",
                 "iter_runtime_s", "converged", "outer_iters"]
RUNTIME_FIELDS = {"iter_runtime_s"}
PKPD_FIELDS = ["seed", "pipeline", "ate", "true_ate", "teb", "cf_rmse", "accuracy_treated",
               "accuracy_control", "floor_hit_fraction"]

# stream keys under each seed
_K_PARAMS, _K_SIM, _K_NOISE, _K_CORRUPT, _K_PKPD, _K_MC = range(6)


@dataclass
class ResultRow:
    method: str
    seed: int
    sigma_eps: float
    accuracy: float
    mae_A: float
    mae_H: float
    kendall_tau: float
    iter_runtime_s: float
    converged: bool
    outer_iters: int


@dataclass
class RunOutput:
    rows: list
    failures: list
    output_dir: Optional[Path]
    pkpd_rows: list


def make_dataset(cfg: ExperimentConfig, seed: int, sigma_eps: float, sigma_index: int = 0):
    """Deterministic ``(params, corrupted, corruption_record)`` for one seed and noise level."""
    params = make_irreversible_params(cfg.dims, make_rng(seed, _K_PARAMS), cfg.gen, cfg.dt)
    init = InitSpec(cfg.init.kind, cfg.init.mean, cfg.init.cov)
    e = simulate(params, cfg.n_traj, cfg.n_steps, init, make_rng(seed, _K_SIM))
    e = add_observation_noise(e, ObservationNoise(sigma_eps), make_rng(seed, _K_NOISE, sigma_index))
    bad, rec = corrupt_order(e, cfg.corruption, make_rng(seed, _K_CORRUPT))
    return params, bad, rec


def run_method(method: str, params, bad, rec, sigma_eps: float, retrace_cfg: RetraceConfig,
               baseline_cfg: BaselineConfig) -> tuple[dict, np.ndarray]:
    """Recover order with ``method`` and return metrics plus recovered labels."""
    R = ObservationNoise(sigma_eps).R(bad.dim) if sigma_eps > 0 else None
    if method.startswith("retrace_"):
        res = retrace(bad, R, retrace_cfg, estimator=method.split("_", 1)[1])
        order, fitted = res.ordering, res.fit
        runtime = float(np.mean(res.iter_runtimes))
        converged, iters = res.converged, res.outer_iters_used
    else:
        t0 = time.perf_counter()
        order, fitted = baseline_pipeline(bad, replace(baseline_cfg, method=method.split("_", 1)[0]))
        runtime = time.perf_counter() - t0
        converged, iters = True, 1
    labels = recovered_labels(rec, order)
    ident = np.arange(bad.n_steps)[None, :]
    return {
        "accuracy": ordering_accuracy(ident, labels),
        "mae_A": param_mae(params.A, fitted.A_hat),
        "mae_H": param_mae(params.H, fitted.H_hat),
        "kendall_tau": kendall_tau(ident, labels),
        "iter_runtime_s": runtime,
        "converged": bool(converged),
        "outer_iters": int(iters),
    }, labels


def _row_task(cfg: ExperimentConfig, method: str, seed: int, sigma: float, si: int):
    params, bad, rec = make_dataset(cfg, seed, sigma, si)
    metrics, _ = run_method(method, params, bad, rec, sigma, cfg.retrace, cfg.baseline)
    return ResultRow(method=method, seed=seed, sigma_eps=float(sigma), **metrics)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def write_results(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in RESULT_FIELDS])


def summarize(rows: list) -> list[dict]:
    """Mean and sd per (method, sigma) in first-seen order."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.method, r.sigma_eps), []).append(r)
    out = []
    for (m, s), rs in groups.items():
        row = {"method": m, "sigma_eps": s, "n": len(rs)}
        for k in ("accuracy", "mae_A", "mae_H", "kendall_tau", "iter_runtime_s"):
            v = np.array([getattr(r, k) for r in rs], dtype=float)
            row[f"{k}_mean"] = float(v.mean())
            row[f"{k}_sd"] = float(v.std(ddof=1)) if len(v) > 1 else 0.0
        out.append(row)
    return out


def write_summary(summary: list[dict], path) -> None:
    if not summary:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = list(summary[0])
        w.writerow(keys)
        for row in summary:
            w.writerow([_fmt(row[k]) for k in keys])


def _sweep_svg(summary: list[dict]) -> str:
    acc: dict = {}
    mae: dict = {}
    for r in summary:
        acc.setdefault(r["method"], []).append((r["sigma_eps"], r["accuracy_mean"]))
        mae.setdefault(r["method"], []).append((r["sigma_eps"], r["mae_A_mean"]))
    return noise_sweep_svg(acc, mae)


def _run_pkpd(cfg: ExperimentConfig, threads: int) -> tuple[list[dict], list[str]]:
    st = cfg.study
    t_star = None if st.t_star == -1 else st.t_star

    def one(seed):
        cohort = simulate_cohort(st.n_subjects, cfg.pkpd, "policy", make_rng(seed, _K_PKPD))
        floor = floor_hit_fraction(cohort)
        rows = []
        for pi, pipe in enumerate(st.pipelines):
            rep = effect_report(cohort, pipe, t_star, make_rng(seed, _K_MC, pi), st.n_mc,
                                retrace_cfg=cfg.retrace, baseline_cfg=cfg.baseline)
            rows.append({"seed": seed, "pipeline": pipe, "ate": rep.ate, "true_ate": rep.true_ate,
                         "teb": rep.teb, "cf_rmse": rep.cf_rmse,
                         "accuracy_treated": rep.extras.get("accuracy_treated", 1.0),
                         "accuracy_control": rep.extras.get("accuracy_control", 1.0),
                         "floor_hit_fraction": floor})
        return rows

    out, errs = [], []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futs = [(s, pool.submit(one, s)) for s in cfg.seeds]
        for s, f in futs:
            try:
                out.extend(f.result())
            except Exception as exc:  # noqa: BLE001 - logged and skipped by design
                errs.append(f"pkpd seed={s}: {type(exc).__name__}: {exc}")
    return out, errs


def run_experiment(cfg: ExperimentConfig, output_dir=None, threads: int = 1) -> RunOutput:
    """Run every (noise level, seed, method) row and write the artifact set.

    Rows are computed by a worker pool but collected and written in a fixed
    order, so files do not depend on ``threads``. A failing row is logged to
    ``errors.log`` and left out of ``results.csv``.
    """
    out_dir = Path(output_dir if output_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures: list[str] = []
    rows: list[ResultRow] = []
    pkpd_rows: list[dict] = []
    if cfg.experiment == "pkpd":
        pkpd_rows, failures = _run_pkpd(cfg, threads)
        with open(out_dir / "pkpd.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PKPD_FIELDS)
            for r in pkpd_rows:
                w.writerow([_fmt(r[k]) for k in PKPD_FIELDS])
    else:
        sigmas = cfg.noise_sigmas if cfg.experiment == "noise_sweep" else cfg.noise_sigmas[:1]
        seeds = cfg.seeds[:1] if cfg.experiment == "single_run" else cfg.seeds
        methods = cfg.methods[:1] if cfg.experiment == "single_run" else cfg.methods
        tasks = [(m, s, sig, si) for si, sig in enumerate(sigmas) for s in seeds for m in methods]
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            futs = [pool.submit(_row_task, cfg, *t) for t in tasks]
            for t, f in zip(tasks, futs):
                try:
                    rows.append(f.result())
                except Exception as exc:  # noqa: BLE001 - logged and skipped by design
                    failures.append(f"method={t[0]} seed={t[1]} sigma_eps={t[2]}: {type(exc).__name__}: {exc}")
        write_results(rows, out_dir / "results.csv")
        summary = summarize(rows)
        write_summary(summary, out_dir / "summary.csv")
        if cfg.experiment == "noise_sweep":
            (out_dir / "noise_sweep.svg").write_text(_sweep_svg(summary))
    (out_dir / "errors.log").write_text("".join(f + "\n" for f in failures))
    for f in failures:
        log.error(f)
    return RunOutput(rows, failures, out_dir, pkpd_rows)


def calibrate(cfg: ExperimentConfig, n_seeds: int = 5, output_dir=None, threads: int = 1) -> list[dict]:
    """Compare swap directions and slice modes with ``retrace_mle`` on the first ``n_seeds`` seeds."""
    seeds = list(cfg.seeds[:n_seeds])
    settings = [(d, m) for d in ("forward", "reversed") for m in ("shared", "matched")]

    def one(setting, seed):
        rc = replace(cfg.retrace, swap_direction=setting[0], slice_mode=setting[1])
        params, bad, rec = make_dataset(cfg, seed, cfg.noise_sigmas[0], 0)
        metrics, _ = run_method("retrace_mle", params, bad, rec, cfg.noise_sigmas[0], rc, cfg.baseline)
        return metrics

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futs = {(st, s): pool.submit(one, st, s) for st in settings for s in seeds}
        res = {k: f.result() for k, f in futs.items()}
    table = []
    for st in settings:
        acc = np.array([res[(st, s)]["accuracy"] for s in seeds])
        mae = np.array([res[(st, s)]["mae_A"] for s in seeds])
        table.append({"swap_direction": st[0], "slice_mode": st[1], "n_seeds": len(seeds),
                      "accuracy_mean": float(acc.mean()), "accuracy_min": float(acc.min()),
                      "mae_A_mean": float(mae.mean())})
    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        write_summary(table, Path(output_dir) / "calibration.csv")
    return table
