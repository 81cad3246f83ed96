"""Stochastic tumor-growth benchmark with factual and counterfactual treatment arms.

Latent volumes follow Euler-Maruyama steps of

    dX = (rho log(K/X) - beta_c C - (alpha_r d + beta_r d^2)) X dt + sigma_tumor dW

Treatment is assigned once per subject at baseline. Both arms share the same
Wiener increments, so each subject's true effect is the path difference.
Order recovery and estimation run on log-volume, where the untreated drift is
affine and the treated drift is affine up to a constant shift.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np
from scipy.special import expit

from .baselines import BaselineConfig, order_trajectories
from .core import make_rng
from .errors import NonPositiveVolume, ValidationError
from .estimators import mle_fit
from .retrace import RetraceConfig, retrace
from .simulator import Ensemble, apply_order, corrupt_order

log = logging.getLogger(__name__)

VOLUME_FLOOR = 1e-6
Regime = Literal["policy", "always_treat", "never_treat"]
Pipeline = Literal["true_order", "retrace", "mst", "dpt"]
_BSV_FIELDS = ("rho", "K", "beta_c", "alpha_r", "beta_r")


def volume_from_diameter(diam_mm) -> np.ndarray | float:
    """Sphere volume ``(4/3) pi (diam/2)^3`` in mm^3."""
    diam = np.asarray(diam_mm, dtype=float)
    if np.any(diam <= 0):
        raise ValidationError("diameter must be positive")
    v = 4.0 / 3.0 * np.pi * (diam / 2.0) ** 3
    return float(v) if v.ndim == 0 else v


@dataclass(frozen=True)
class PKPDParams:
    """Tumor model constants; time in days, volume in mm^3.

    Growth and treatment coefficients follow the usual lung-cancer simulator
    values. ``K`` is the volume of a 30 cm sphere.
    """

    rho: float = 7.00e-5
    K: float = float(volume_from_diameter(300.0))
    beta_c: float = 0.028
    alpha_r: float = 0.0398
    beta_r: float = 0.00398
    sigma_tumor: float = 5.0
    sigma_obs: float = 0.01
    gamma: float = 2.0
    bsv: float = 0.05
    T_horizon: float = 15.0
    n_steps: int = 60
    max_chemo: float = 1.0
    diam_range: tuple = (13.0, 15.0)

    def __post_init__(self):
        bad = [n for n in ("rho", "K", "sigma_tumor", "sigma_obs", "T_horizon", "max_chemo")
               if not getattr(self, n) > 0]
        # zero treatment coefficients are allowed for null-effect checks
        bad += [n for n in ("beta_c", "alpha_r", "beta_r", "gamma") if getattr(self, n) < 0]
        if not 0 <= self.bsv < 1:
            bad.append("bsv")
        if int(self.n_steps) < 2:
            bad.append("n_steps")
        lo, hi = self.diam_range
        if not 0 < lo <= hi:
            bad.append("diam_range")
        if bad:
            raise ValidationError("invalid PKPD parameters: " + ", ".join(bad))

    @property
    def dt(self) -> float:
        return self.T_horizon / self.n_steps


def pkpd_drift(x, C, d, p: PKPDParams):
    """``(rho log(K/x) - beta_c C - (alpha_r d + beta_r d^2)) x``; vectorized over ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise NonPositiveVolume("tumor volume must be positive")
    b = (p.rho * np.log(p.K / x) - p.beta_c * C - (p.alpha_r * d + p.beta_r * d * d)) * x
    return float(b) if b.ndim == 0 else b


def treatment_policy(x, mean: float, sd: float, gamma: float, rng=None, max_chemo: float = 1.0):
    """Confounded assignment from standardized volume.

    ``p = sigmoid(gamma (x - mean) / sd)``, ``d ~ Bernoulli(p)``, ``C = max_chemo p``.
    Returns ``(C, d, p)``.
    """
    if not sd > 0:
        raise ValidationError("sd must be positive")
    p = expit(gamma * (np.asarray(x, dtype=float) - mean) / sd)
    d = (make_rng(rng).random(np.shape(p)) < p).astype(int)
    return max_chemo * p, d, p


@dataclass
class PKPDSubject:
    """One subject: realized parameters, baseline volume, arm and paths.

    ``factual_path``/``counterfactual_path`` are the recorded (noisy) volumes;
    the ``latent_*`` paths are noise-free ground truth.
    """

    params: PKPDParams
    x0: float
    treated: bool
    chemo: np.ndarray
    radio: np.ndarray
    factual_path: np.ndarray
    counterfactual_path: np.ndarray
    latent_factual: np.ndarray
    latent_counterfactual: np.ndarray
    floor_hits: int = 0

    def arm_path(self, treated: bool, latent: bool = True) -> np.ndarray:
        if latent:
            return self.latent_factual if treated == self.treated else self.latent_counterfactual
        return self.factual_path if treated == self.treated else self.counterfactual_path


def sample_subject_params(base: PKPDParams, n: int, rng) -> list[PKPDParams]:
    """Mean-preserving log-normal draws with relative sd ``bsv`` for growth and treatment terms."""
    s = np.sqrt(np.log1p(base.bsv**2))
    z = rng.standard_normal((n, len(_BSV_FIELDS)))
    mult = np.exp(s * z - 0.5 * s * s)
    return [replace(base, **{f: getattr(base, f) * m for f, m in zip(_BSV_FIELDS, row)}) for row in mult]


def _arm_doses(treated: np.ndarray, n_steps: int, max_chemo: float):
    C = np.where(treated[:, None], max_chemo, 0.0) * np.ones((1, n_steps))
    d = np.where(treated[:, None], 1, 0) * np.ones((1, n_steps), dtype=int)
    return C, d


def _euler(x0, C, d, pars: dict, sigma, dt, noise):
    """Vectorized Gompertz-type Euler-Maruyama; ``noise`` is ``(n_steps-1, ...)`` standard normals."""
    T = noise.shape[0] + 1
    X = np.empty((T,) + np.shape(x0))
    X[0] = x0
    hits = 0
    for t in range(T - 1):
        x = X[t]
        b = (pars["rho"] * np.log(pars["K"] / x) - pars["beta_c"] * C[..., t]
             - (pars["alpha_r"] * d[..., t] + pars["beta_r"] * d[..., t] ** 2)) * x
        nxt = x + b * dt + sigma * np.sqrt(dt) * noise[t]
        low = nxt < VOLUME_FLOOR
        hits += int(low.sum())
        X[t + 1] = np.where(low, VOLUME_FLOOR, nxt)
    return X, hits


def _stack_params(plist: list[PKPDParams]) -> dict:
    return {f: np.array([getattr(p, f) for p in plist]) for f in _BSV_FIELDS}


def simulate_cohort(n_subjects: int, base: PKPDParams = PKPDParams(), regime: Regime = "policy",
                    rng=None) -> list[PKPDSubject]:
    """Simulate factual and counterfactual paths for ``n_subjects``.

    Under ``policy`` the arm is drawn from :func:`treatment_policy` on the
    baseline volume standardized by cohort statistics; the counterfactual arm
    is the other one. ``always_treat``/``never_treat`` fix the factual arm.
    """
    if n_subjects < 1:
        raise ValidationError("n_subjects must be >= 1")
    if regime not in ("policy", "always_treat", "never_treat"):
        raise ValidationError(f"unknown regime {regime!r}")
    rng = make_rng(rng)
    T, dt = int(base.n_steps), base.dt
    plist = sample_subject_params(base, n_subjects, rng)
    x0 = volume_from_diameter(rng.uniform(*base.diam_range, size=n_subjects))
    if regime == "policy":
        sd = float(x0.std()) if n_subjects > 1 else 1.0
        _, treated, _ = treatment_policy(x0, float(x0.mean()), sd if sd > 0 else 1.0, base.gamma, rng, base.max_chemo)
        treated = treated.astype(bool)
    else:
        treated = np.full(n_subjects, regime == "always_treat")
    noise = rng.standard_normal((T - 1, n_subjects))
    pars = _stack_params(plist)
    paths = {}
    hits = np.zeros(2, int)
    for arm in (False, True):
        C, d = _arm_doses(np.full(n_subjects, arm), T, base.max_chemo)
        paths[arm], hits[int(arm)] = _euler(x0, C, d, pars, base.sigma_tumor, dt, noise)
    obs_noise = rng.standard_normal((2, T, n_subjects)) * base.sigma_obs
    total = T * n_subjects * 2
    if hits.sum():
        log.warning("volume floor hit in %d of %d latent steps", int(hits.sum()), total)
    else:
        log.info("volume floor never hit (%d latent steps)", total)
    out = []
    for i in range(n_subjects):
        a = bool(treated[i])
        C, d = _arm_doses(np.array([a]), T, base.max_chemo)
        fac, cf = paths[a][:, i], paths[not a][:, i]
        out.append(PKPDSubject(
            params=plist[i], x0=float(x0[i]), treated=a, chemo=C[0], radio=d[0],
            factual_path=np.maximum(fac + obs_noise[0, :, i], VOLUME_FLOOR),
            counterfactual_path=np.maximum(cf + obs_noise[1, :, i], VOLUME_FLOOR),
            latent_factual=fac.copy(), latent_counterfactual=cf.copy(),
        ))
    return out


def floor_hit_fraction(cohort: list[PKPDSubject]) -> float:
    paths = np.stack([np.stack([s.latent_factual, s.latent_counterfactual]) for s in cohort])
    return float(np.mean(paths <= VOLUME_FLOOR))


@dataclass
class ArmSurrogate:
    """Log-volume surrogate ``dy = (a1 y + a0) dt + s dW``."""

    a1: float
    a0: float
    s2: float


def fit_arm_surrogate(log_paths: np.ndarray, dt: float) -> ArmSurrogate:
    """Closed-form MLE on the state augmented with a constant coordinate."""
    N, T = log_paths.shape
    aug = np.stack([log_paths, np.ones_like(log_paths)], axis=-1)
    res = mle_fit(Ensemble(aug, dt, "observed"))
    return ArmSurrogate(float(res.A_hat[0, 0]), float(res.A_hat[0, 1]), float(res.H_hat[0, 0]))


def _mc_surrogate(x0: np.ndarray, s: ArmSurrogate, n_steps: int, t_star: int, dt: float,
                  n_paths: int, rng) -> np.ndarray:
    """Monte Carlo mean of ``exp(y_{t*})`` with antithetic pairs, per subject."""
    half = n_paths // 2
    y = np.repeat(np.log(x0)[:, None], 2 * half, axis=1)
    sd = np.sqrt(max(s.s2, 0.0) * dt)
    for _ in range(t_star):
        z = rng.standard_normal((len(x0), half))
        y = y + (s.a1 * y + s.a0) * dt + sd * np.concatenate([z, -z], axis=1)
    return np.exp(y).mean(axis=1)


def _mc_exact(cohort: list[PKPDSubject], treated: bool, t_star: int, n_paths: int, rng) -> np.ndarray:
    base = cohort[0].params
    half = n_paths // 2
    n = len(cohort)
    pars = {k: v[:, None] for k, v in _stack_params([c.params for c in cohort]).items()}
    x0 = np.repeat(np.array([c.x0 for c in cohort])[:, None], 2 * half, axis=1)
    C, d = _arm_doses(np.full(n, treated), t_star + 1, base.max_chemo)
    C, d = C[:, None, :], d[:, None, :]
    z = rng.standard_normal((t_star, n, half))
    X, _ = _euler(x0, C, d, pars, base.sigma_tumor, base.dt, np.concatenate([z, -z], axis=2))
    return X[-1].mean(axis=1)


@dataclass
class EffectReport:
    ite: np.ndarray
    ate: float
    teb: float
    cf_rmse: float
    true_ate: float
    extras: dict = field(default_factory=dict)


def _recover(log_paths: np.ndarray, dt: float, pipeline: str, rng, retrace_cfg: RetraceConfig,
             baseline_cfg: Optional[BaselineConfig]) -> tuple[np.ndarray, float]:
    """Corrupt per-trajectory order, recover it, return reordered paths and accuracy."""
    if pipeline == "true_order":
        return log_paths, 1.0
    e = Ensemble(log_paths[:, :, None], dt, "observed")
    bad, rec = corrupt_order(e, "per_trajectory", rng)
    if pipeline == "retrace":
        order = retrace(bad, None, retrace_cfg).ordering
    elif pipeline in ("mst", "dpt"):
        cfg = replace(baseline_cfg or BaselineConfig(), method=pipeline)
        order = order_trajectories(bad, cfg)
    else:
        raise ValidationError(f"unknown pipeline {pipeline!r}")
    out = apply_order(bad.data, order.perms)[:, :, 0]
    labels = np.take_along_axis(rec.perms, order.perms, axis=1)
    return out, float((labels == np.arange(labels.shape[1])).mean())


def effect_report(cohort: list[PKPDSubject], pipeline: Pipeline = "true_order", t_star: Optional[int] = None,
                  rng=None, n_mc: int = 1024, exact_params: bool = False,
                  retrace_cfg: RetraceConfig = RetraceConfig(),
                  baseline_cfg: Optional[BaselineConfig] = None) -> EffectReport:
    """ITE/ATE, treatment-effect bias and counterfactual RMSE for one pipeline.

    Factual recorded paths are split by arm, order-corrupted (unless
    ``true_order``), recovered, and a log-volume surrogate is fitted per arm.
    Both arms are then simulated from each subject's baseline volume. With
    ``exact_params`` the true subject parameters replace the fitted surrogate.
    Truth is the shared-noise latent path difference at ``t_star``.
    """
    if not cohort:
        raise ValidationError("empty cohort")
    if n_mc < 2:
        raise ValidationError("n_mc must be >= 2")
    rng = make_rng(rng)
    base = cohort[0].params
    T = len(cohort[0].factual_path)
    t_star = T - 1 if t_star is None else int(t_star)
    if not 0 < t_star < T:
        raise ValidationError(f"t_star must be in 1..{T - 1}")
    dt = base.dt
    treated = np.array([c.treated for c in cohort])
    x0 = np.array([c.x0 for c in cohort])
    extras: dict = {}
    pred = {}
    if exact_params:
        for arm in (False, True):
            pred[arm] = _mc_exact(cohort, arm, t_star, n_mc, rng)
    else:
        for arm in (False, True):
            idx = np.flatnonzero(treated == arm)
            if idx.size < 2:
                raise ValidationError(f"arm {'treated' if arm else 'control'} has fewer than two subjects")
            logs = np.log(np.stack([cohort[i].factual_path for i in idx]))
            ordered, acc = _recover(logs, dt, pipeline, rng, retrace_cfg, baseline_cfg)
            sur = fit_arm_surrogate(ordered, dt)
            extras[f"accuracy_{'treated' if arm else 'control'}"] = acc
            extras[f"surrogate_{'treated' if arm else 'control'}"] = sur
            pred[arm] = _mc_surrogate(x0, sur, T, t_star, dt, n_mc, rng)
    true1 = np.array([c.arm_path(True)[t_star] for c in cohort])
    true0 = np.array([c.arm_path(False)[t_star] for c in cohort])
    ite_true = true1 - true0
    ite = pred[True] - pred[False]
    cf_pred = np.where(treated, pred[False], pred[True])
    cf_true = np.where(treated, true0, true1)
    return EffectReport(
        ite=ite,
        ate=float(ite.mean()),
        teb=float(np.mean(ite - ite_true)),
        cf_rmse=float(np.sqrt(np.mean((cf_pred - cf_true) ** 2))),
        true_ate=float(ite_true.mean()),
        extras=extras,
    )
