"""Drift/diffusion estimation for linear SDEs from ordered ensembles."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import EPS_PSD, project_psd, symmetrize
from .errors import NonMonotoneLikelihood, SingularGram, ValidationError
from .simulator import Ensemble

GRAM_MAX_CONDITION = 1e12


@dataclass
class FitResult:
    A_hat: np.ndarray
    H_hat: np.ndarray
    log_likelihood: float
    n_increments: int
    degenerate: bool = False
    history: list[float] = field(default_factory=list)


def increments(e: Ensemble) -> tuple[np.ndarray, np.ndarray]:
    """Pooled ``(X_i, dX_i)`` over every trajectory and step, trajectory-major."""
    X = e.data
    d = X.shape[2]
    return X[:, :-1].reshape(-1, d), np.diff(X, axis=1).reshape(-1, d)


def _solve_drift(x: np.ndarray, dx: np.ndarray, dt: float) -> np.ndarray:
    gram = x.T @ x
    cond = np.linalg.cond(gram) if gram.size else np.inf
    if not np.isfinite(cond) or cond > GRAM_MAX_CONDITION:
        raise SingularGram(f"Gram matrix condition number {cond:.3g}")
    cross = dx.T @ x
    return np.linalg.solve(gram, cross.T).T / dt


def log_likelihood(e: Ensemble, A: np.ndarray, H: np.ndarray) -> float:
    """Euler-Maruyama log-likelihood of all pooled increments.

    ``-(dn/2) log(2 pi dt) - (n/2) log|H| - (1/(2 dt)) sum R_i^T H^{-1} R_i`` with
    ``R_i = dX_i - A X_i dt``. ``H`` is floored to be positive definite.
    """
    x, dx = increments(e)
    return _loglik(x, dx, np.atleast_2d(A), np.atleast_2d(H), e.dt)


def _loglik(x, dx, A, H, dt) -> float:
    n, d = x.shape
    Hf = project_psd(H, EPS_PSD)
    resid = dx - x @ A.T * dt
    _, logdet = np.linalg.slogdet(Hf)
    quad = np.einsum("ni,ni->", resid @ np.linalg.inv(Hf), resid)
    return float(-0.5 * d * n * np.log(2 * np.pi * dt) - 0.5 * n * logdet - quad / (2 * dt))


def _is_degenerate(H: np.ndarray) -> bool:
    w = np.linalg.eigvalsh(H)
    return bool(w[0] <= 1e-12 * max(1.0, float(w[-1])))


def mle_fit(e: Ensemble) -> FitResult:
    """Closed-form maximum likelihood with increments pooled across trajectories."""
    x, dx = increments(e)
    A = _solve_drift(x, dx, e.dt)
    resid = dx - x @ A.T * e.dt
    H = symmetrize(resid.T @ resid / (len(x) * e.dt))
    return FitResult(A, H, _loglik(x, dx, A, H, e.dt), len(x), _is_degenerate(H))


def ols_fit(e: Ensemble) -> FitResult:
    """Least squares drift (same normal equations as the MLE) with a diagonal diffusion."""
    x, dx = increments(e)
    A = _solve_drift(x, dx, e.dt)
    resid = dx - x @ A.T * e.dt
    H = np.diag(np.einsum("ni,ni->i", resid, resid) / (len(x) * e.dt))
    return FitResult(A, H, _loglik(x, dx, A, H, e.dt), len(x), _is_degenerate(H))


def _kalman_smoother(Y, F, Q, R, m0, P0):
    """Filter + RTS smoother for ``x' = F x + w``, ``y = x + v`` over a batch.

    Every trajectory shares the time grid and the parameters, so the
    covariance recursions are computed once and only the means are batched.
    Returns smoothed means ``(N, T, d)``, smoothed covariances ``(T, d, d)``,
    lag-one cross covariances ``Cov(x_{t+1}, x_t)`` ``(T-1, d, d)`` and the
    observed-data log-likelihood.
    """
    N, T, d = Y.shape
    eye = np.eye(d)
    m_pred = np.empty((N, T, d))
    m_filt = np.empty((N, T, d))
    P_pred = np.empty((T, d, d))
    P_filt = np.empty((T, d, d))
    loglik = 0.0
    m = np.broadcast_to(m0, (N, d))
    P = P0
    for t in range(T):
        if t > 0:
            m = m_filt[:, t - 1] @ F.T
            P = symmetrize(F @ P_filt[t - 1] @ F.T + Q)
        m_pred[:, t] = m
        P_pred[t] = P
        S = symmetrize(P + R)
        Sinv = np.linalg.inv(S)
        K = P @ Sinv
        innov = Y[:, t] - m
        _, logdet = np.linalg.slogdet(S)
        loglik += -0.5 * (N * (d * np.log(2 * np.pi) + logdet) + np.einsum("ni,ij,nj->", innov, Sinv, innov))
        m_filt[:, t] = m + innov @ K.T
        IK = eye - K
        P_filt[t] = symmetrize(IK @ P @ IK.T + K @ R @ K.T)
    m_s = m_filt.copy()
    P_s = P_filt.copy()
    lag = np.empty((T - 1, d, d))
    for t in range(T - 2, -1, -1):
        J = P_filt[t] @ F.T @ np.linalg.pinv(P_pred[t + 1], hermitian=True)
        m_s[:, t] = m_filt[:, t] + (m_s[:, t + 1] - m_pred[:, t + 1]) @ J.T
        P_s[t] = symmetrize(P_filt[t] + J @ (P_s[t + 1] - P_pred[t + 1]) @ J.T)
        lag[t] = P_s[t + 1] @ J.T
    return m_s, P_s, lag, float(loglik)


def em_fit(e: Ensemble, R: np.ndarray, iters: int = 20, init: Optional[FitResult] = None,
           check_monotone: bool = True) -> FitResult:
    """State-space EM for noisy observations ``Y = X + eps``, ``eps ~ N(0, R)``.

    Transition ``(I + A dt, H dt)`` and identity observation with known ``R``.
    The M-step is the closed-form MLE with smoothed sufficient statistics.
    ``history`` holds the observed-data log-likelihood after each update and
    must be non-decreasing.
    """
    if iters < 1:
        raise ValidationError("iters must be >= 1")
    Y = e.data
    N, T, d = Y.shape
    R = np.atleast_2d(np.asarray(R, dtype=float))
    dt = e.dt
    start = init or mle_fit(e)
    A = start.A_hat
    H = project_psd(start.H_hat, EPS_PSD)
    m0 = Y[:, 0].mean(axis=0)
    c0 = np.cov(Y[:, 0].T, ddof=1) if N > 1 else np.zeros((d, d))
    P0 = project_psd(np.atleast_2d(c0) - R, EPS_PSD)
    n = N * (T - 1)
    eye = np.eye(d)
    history: list[float] = []
    for _ in range(iters):
        F = eye + A * dt
        m_s, P_s, lag, ll = _kalman_smoother(Y, F, project_psd(H * dt, EPS_PSD * dt), R, m0, P0)
        history.append(ll)
        x0, x1 = m_s[:, :-1].reshape(-1, d), m_s[:, 1:].reshape(-1, d)
        S00 = x0.T @ x0 + P_s[:-1].sum(axis=0) * N
        S11 = x1.T @ x1 + P_s[1:].sum(axis=0) * N
        S10 = x1.T @ x0 + lag.sum(axis=0) * N
        cond = np.linalg.cond(S00)
        if not np.isfinite(cond) or cond > GRAM_MAX_CONDITION:
            raise SingularGram(f"smoothed Gram condition number {cond:.3g}")
        F = np.linalg.solve(S00, S10.T).T
        Qn = symmetrize((S11 - F @ S10.T) / n)
        A = (F - eye) / dt
        H = Qn / dt
    _, _, _, ll = _kalman_smoother(Y, eye + A * dt, project_psd(H * dt, EPS_PSD * dt), R, m0, P0)
    history.append(ll)
    if check_monotone:
        for a, b in zip(history[:-1], history[1:]):
            if b < a - 1e-8 * max(1.0, abs(a)):
                raise NonMonotoneLikelihood(f"log-likelihood fell from {a:.10g} to {b:.10g}")
    H = symmetrize(H)
    return FitResult(A, H, history[-1], n, _is_degenerate(H), history)


ESTIMATORS = {"mle": mle_fit, "ols": ols_fit}


def fit(e: Ensemble, estimator: str = "mle", R: Optional[np.ndarray] = None, em_iters: int = 20) -> FitResult:
    if estimator == "em":
        if R is None:
            R = np.zeros((e.dim, e.dim))
        return em_fit(e, R, em_iters)
    try:
        return ESTIMATORS[estimator](e)
    except KeyError:
        raise ValidationError(f"unknown estimator {estimator!r}") from None
