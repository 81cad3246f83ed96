"""Per-time-index Gaussian fits and their closed-form score."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import EPS_PSD, project_psd
from .errors import InsufficientSamples, SingularCovariance
from .simulator import Ensemble

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class SliceGaussian:
    t_index: int
    mean: np.ndarray
    cov: np.ndarray
    raw_cov: np.ndarray
    n_samples: int

    @property
    def condition(self) -> float:
        w = np.linalg.eigvalsh(self.cov)
        return float(w[-1] / w[0])

    @property
    def precision(self) -> np.ndarray:
        if self.condition > MAX_CONDITION:
            raise SingularCovariance(f"slice {self.t_index}: condition number {self.condition:.3g} exceeds {MAX_CONDITION:g}")
        w, V = np.linalg.eigh(self.cov)
        return (V / w) @ V.T


def fit_slices(e: Ensemble, R: Optional[np.ndarray] = None) -> list[SliceGaussian]:
    """Sample mean and noise-corrected covariance at every time index.

    ``raw_cov`` is the unbiased covariance across trajectories; ``cov`` is
    ``project_psd(raw_cov - R)`` (or ``project_psd(raw_cov)`` when ``R`` is None).
    """
    N = e.n_traj
    if N < 2:
        raise InsufficientSamples(f"need at least 2 trajectories, got {N}")
    X = e.data
    means = X.mean(axis=0)
    centered = X - means
    raw = np.einsum("ntd,nte->tde", centered, centered) / (N - 1)
    R = np.zeros((e.dim, e.dim)) if R is None else np.atleast_2d(np.asarray(R, dtype=float))
    out = []
    for t in range(e.n_steps):
        S = 0.5 * (raw[t] + raw[t].T)
        out.append(SliceGaussian(t, means[t], project_psd(S - R, EPS_PSD), S, N))
    return out


def score(g: SliceGaussian, x: np.ndarray) -> np.ndarray:
    """``-cov^{-1} (x - mean)``; ``x`` may carry leading batch axes."""
    x = np.asarray(x, dtype=float)
    return -(x - g.mean) @ g.precision.T


def log_density(g: SliceGaussian, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = g.mean.shape[0]
    diff = x - g.mean
    _, logdet = np.linalg.slogdet(g.cov)
    maha = np.einsum("...i,ij,...j->...", diff, g.precision, diff)
    return -0.5 * (d * np.log(2 * np.pi) + logdet + maha)


def stack_slices(slices: list[SliceGaussian]) -> tuple[np.ndarray, np.ndarray]:
    """``(T, d)`` means and ``(T, d, d)`` precisions for vectorized scoring."""
    return np.stack([g.mean for g in slices]), np.stack([g.precision for g in slices])
