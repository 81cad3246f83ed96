"""Numerical primitives: Lyapunov solves, PSD projection, Gaussian sampling, RNG plumbing."""
from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import FactorizationFailure, NonHurwitz, SolveFailure

EPS_PSD = 1e-8
HURWITZ_TOL = 1e-10


def make_rng(seed=None, *keys: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` with an optional spawn key path.

    Passing an existing Generator returns it unchanged (keys must then be empty).
    Distinct key tuples give statistically independent streams, which is how
    every consumer in the package splits one experiment seed.
    """
    if isinstance(seed, np.random.Generator):
        if keys:
            raise ValueError("cannot derive keyed streams from a Generator")
        return seed
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    else:
        ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def symmetrize(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


def is_symmetric(S: np.ndarray, rtol: float = 1e-12) -> bool:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    return bool(np.max(np.abs(S - S.T), initial=0.0) <= rtol * scale)


def definiteness(S: np.ndarray, tol: float = 0.0) -> str:
    """Classify a symmetric matrix as ``"PD"``, ``"PSD"`` or ``"indefinite"``."""
    w = np.linalg.eigvalsh(symmetrize(S))
    if w.min() > tol:
        return "PD"
    if w.min() >= -tol:
        return "PSD"
    return "indefinite"


def check_hurwitz(A: np.ndarray, tol: float = HURWITZ_TOL) -> None:
    A = np.asarray(A, dtype=float)
    max_re = float(np.max(np.linalg.eigvals(A).real))
    if max_re >= -tol:
        raise NonHurwitz(f"drift matrix is not Hurwitz (max Re(eig) = {max_re:.3g})")


def solve_lyapunov(A: np.ndarray, H: np.ndarray, method: str = "kron") -> np.ndarray:
    """Stationary covariance ``S`` solving ``A S + S A^T + H = 0``.

    The reference route vectorizes the equation as
    ``(I kron A + A kron I) vec(S) = -vec(H)`` and solves it densely. ``method="bartels-stewart"``
    delegates to SciPy's Schur-based solver, which scales better for large ``d``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    d = A.shape[0]
    if A.shape != (d, d) or H.shape != (d, d):
        raise ValueError(f"shape mismatch: A{A.shape}, H{H.shape}")
    check_hurwitz(A)
    if method == "kron":
        eye = np.eye(d)
        L = np.kron(eye, A) + np.kron(A, eye)
        try:
            lu, piv = scipy.linalg.lu_factor(L, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolveFailure(str(exc)) from exc
        if np.min(np.abs(np.diag(lu))) <= 1e-14 * max(1.0, np.max(np.abs(np.diag(lu)))):
            raise SolveFailure("Kronecker Lyapunov system is numerically singular")
        vec = scipy.linalg.lu_solve((lu, piv), -H.reshape(-1, order="F"))
        S = vec.reshape(d, d, order="F")
    elif method == "bartels-stewart":
        S = scipy.linalg.solve_continuous_lyapunov(A, -H)
    else:
        raise ValueError(f"unknown method {method!r}")
    return symmetrize(S)


def lyapunov_residual(A: np.ndarray, S: np.ndarray, H: np.ndarray) -> float:
    return float(np.linalg.norm(A @ S + S @ A.T + H, "fro"))


def project_psd(S: np.ndarray, floor: float = EPS_PSD) -> np.ndarray:
    """Clip eigenvalues of a symmetric matrix from below at ``floor``.

    Inputs whose spectrum already sits at or above the floor are returned
    unchanged (after symmetrization), so the map is idempotent.
    """
    S = symmetrize(np.atleast_2d(S))
    w, V = np.linalg.eigh(S)
    if w.min() >= floor:
        return S
    w = np.maximum(w, floor)
    return symmetrize((V * w) @ V.T)


def sqrt_factor(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root ``L`` with ``L L^T = cov`` for a PSD matrix."""
    cov = symmetrize(np.atleast_2d(cov))
    w, V = np.linalg.eigh(cov)
    tol = 1e-10 * max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < -tol:
        raise FactorizationFailure(f"covariance is not PSD (min eig {w.min():.3g})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def sample_gaussian(mean: Sequence[float] | np.ndarray, cov: np.ndarray, n: int, rng=None) -> np.ndarray:
    """Draw ``n`` samples of ``N(mean, cov)`` as an ``(n, d)`` array."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    L = sqrt_factor(cov)
    if L.shape[0] != mean.shape[0]:
        raise ValueError("mean and cov dimensions disagree")
    z = make_rng(rng).standard_normal((n, mean.shape[0]))
    return mean + z @ L.T
