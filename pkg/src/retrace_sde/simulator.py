"""Euler-Maruyama ensembles for linear additive-noise SDEs, observation noise and order corruption."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .core import check_hurwitz, make_rng, sample_gaussian, solve_lyapunov
from .errors import GenerationFailure, ShapeMismatch, ValidationError

PermMode = Literal["shared", "per_trajectory"]


@dataclass(frozen=True)
class LinearSDEParams:
    """Drift ``A`` (d x d), diffusion factor ``G`` (d x m) and step size ``dt``.

    ``H = G G^T`` is derived on construction.
    """

    A: np.ndarray
    G: np.ndarray
    dt: float = 0.01
    H: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if A.shape[0] != A.shape[1] or G.shape[0] != A.shape[0]:
            raise ShapeMismatch(f"A{A.shape} and G{G.shape} are incompatible")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "G", G)
        H = G @ G.T
        object.__setattr__(self, "H", 0.5 * (H + H.T))

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class GenSpec:
    """Knobs for random parameter generation.

    The drift is ``A = S + K`` with ``S`` symmetric negative definite whose
    eigenvalue magnitudes are uniform in ``[eig_min, eig_max]`` and ``K`` a
    random skew-symmetric matrix scaled by ``rotation``. Because the symmetric
    part bounds the numerical range, every eigenvalue of ``A`` has real part
    inside ``[-eig_max, -eig_min]``.
    """

    eig_min: float = 0.2
    eig_max: float = 2.0
    rotation: float = 1.0
    basis: Literal["axis", "random"] = "axis"
    g_scale: float = 0.5
    g_jitter: float = 0.3
    require_irreversible: bool = True
    min_irreversibility: float = 1e-6
    max_attempts: int = 100


def irreversibility_score(A: np.ndarray, H: np.ndarray) -> float:
    """Normalized size of the stationary probability current.

    For a Gaussian stationary law ``N(0, S)`` the current is ``J(x) = M S^{-1} x p(x)``
    with ``M = A S + H/2``. The Lyapunov equation forces ``M`` to be skew, and
    ``M`` is exactly the skew part of ``A S``. The score is
    ``||M - M^T||_F / (2 ||A S||_F)``, which lies in ``[0, 1]``, vanishes iff
    detailed balance holds, and is invariant to ``(A, H) -> (cA, cH)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    S = solve_lyapunov(A, H)
    AS = A @ S
    M = AS + 0.5 * H
    denom = 2.0 * np.linalg.norm(AS, "fro")
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(M - M.T, "fro") / denom)


def make_irreversible_params(d: int, rng=None, spec: GenSpec = GenSpec(), dt: float = 0.01) -> LinearSDEParams:
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = make_rng(rng)
    for _ in range(spec.max_attempts):
        lam = rng.uniform(spec.eig_min, spec.eig_max, size=d)
        if spec.basis == "random":
            Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
            S = -(Q * lam) @ Q.T
        else:
            S = -np.diag(lam)
        K = rng.standard_normal((d, d))
        K = 0.5 * (K - K.T) * spec.rotation
        A = 0.5 * (S + S.T) + K
        G = spec.g_scale * (np.eye(d) + spec.g_jitter * rng.standard_normal((d, d)) / np.sqrt(d))
        params = LinearSDEParams(A, G, dt)
        try:
            check_hurwitz(A)
        except Exception:
            continue
        if np.linalg.matrix_rank(params.H) < d:
            continue
        if spec.require_irreversible and irreversibility_score(A, params.H) <= spec.min_irreversibility:
            continue
        return params
    raise GenerationFailure(f"no admissible parameters after {spec.max_attempts} attempts")


@dataclass(frozen=True)
class InitSpec:
    """Initial distribution: ``stationary`` or ``gaussian(mean, cov)``.

    ``mean`` may be a scalar (broadcast to every coordinate) and ``cov`` a
    scalar multiple of the identity.
    """

    kind: Literal["stationary", "gaussian"] = "stationary"
    mean: object = 0.0
    cov: object = 1.0

    @classmethod
    def stationary(cls) -> "InitSpec":
        return cls("stationary")

    @classmethod
    def gaussian(cls, mean=0.0, cov=1.0) -> "InitSpec":
        return cls("gaussian", mean, cov)

    def moments(self, params: LinearSDEParams) -> tuple[np.ndarray, np.ndarray]:
        d = params.dim
        if self.kind == "stationary":
            return np.zeros(d), solve_lyapunov(params.A, params.H)
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (d,)).copy()
        cov = np.asarray(self.cov, dtype=float)
        cov = cov * np.eye(d) if cov.ndim == 0 else cov
        return mean, cov


@dataclass
class Ensemble:
    """``N x T x d`` block of state vectors on a uniform time grid."""

    data: np.ndarray
    dt: float
    kind: Literal["latent", "observed"] = "latent"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ShapeMismatch(f"ensemble data must be 3-D, got shape {data.shape}")
        if data.shape[1] < 2:
            raise ValidationError("an ensemble needs at least two time slices")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not np.all(np.isfinite(data)):
            raise ValidationError("ensemble contains non-finite entries")
        if self.kind not in ("latent", "observed"):
            raise ValidationError(f"unknown ensemble kind {self.kind!r}")
        self.data = data

    @property
    def n_traj(self) -> int:
        return self.data.shape[0]

    @property
    def n_steps(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray, kind: Optional[str] = None) -> "Ensemble":
        return Ensemble(data, self.dt, kind or self.kind)


@dataclass(frozen=True)
class PermutationRecord:
    """Time orderings, one shared or one per trajectory.

    Convention: position ``k`` of a permuted trajectory ``j`` holds the element
    that sat at index ``perms[j, k]`` before permuting.
    """

    mode: PermMode
    perms: np.ndarray

    def __post_init__(self):
        perms = np.atleast_2d(np.asarray(self.perms, dtype=np.int64))
        if self.mode not in ("shared", "per_trajectory"):
            raise ValidationError(f"unknown permutation mode {self.mode!r}")
        if self.mode == "shared" and perms.shape[0] != 1:
            raise ValidationError("shared mode stores exactly one permutation")
        T = perms.shape[1]
        if not np.array_equal(np.sort(perms, axis=1), np.broadcast_to(np.arange(T), perms.shape)):
            raise ValidationError("every permutation must be a bijection on 0..T-1")
        object.__setattr__(self, "perms", perms)

    @property
    def n_steps(self) -> int:
        return self.perms.shape[1]

    def expand(self, n_traj: int) -> np.ndarray:
        """Per-trajectory ``(n_traj, T)`` view."""
        if self.mode == "shared":
            return np.broadcast_to(self.perms, (n_traj, self.n_steps)).copy()
        if self.perms.shape[0] != n_traj:
            raise ShapeMismatch(f"record holds {self.perms.shape[0]} permutations, expected {n_traj}")
        return self.perms.copy()

    def inverse(self) -> "PermutationRecord":
        return PermutationRecord(self.mode, np.argsort(self.perms, axis=1))

    @classmethod
    def identity(cls, n_traj: int, n_steps: int) -> "PermutationRecord":
        return cls("per_trajectory", np.tile(np.arange(n_steps), (n_traj, 1)))


@dataclass(frozen=True)
class ObservationNoise:
    sigma_eps: float = 0.0

    def __post_init__(self):
        if self.sigma_eps < 0:
            raise ValidationError("sigma_eps must be non-negative")

    def R(self, d: int) -> np.ndarray:
        return self.sigma_eps**2 * np.eye(d)


def simulate(params: LinearSDEParams, n_traj: int, n_steps: int, init: InitSpec = InitSpec(), rng=None) -> Ensemble:
    """Euler-Maruyama: ``X_{i+1} = X_i + A X_i dt + G dW_i`` with ``dW_i ~ N(0, dt I)``."""
    if n_steps < 2:
        raise ValidationError("n_steps must be >= 2")
    rng = make_rng(rng)
    A, G, dt = params.A, params.G, params.dt
    d, m = G.shape
    mu0, cov0 = init.moments(params)
    X = np.empty((n_traj, n_steps, d))
    X[:, 0] = sample_gaussian(mu0, cov0, n_traj, rng)
    step = np.eye(d) + A * dt
    noise = rng.standard_normal((n_steps - 1, n_traj, m)) * np.sqrt(dt)
    for i in range(n_steps - 1):
        X[:, i + 1] = X[:, i] @ step.T + noise[i] @ G.T
    return Ensemble(X, dt, "latent")


def add_observation_noise(e: Ensemble, noise: ObservationNoise, rng=None) -> Ensemble:
    """``Y = X + eps`` with iid ``eps ~ N(0, sigma^2 I)`` per slice and trajectory."""
    if e.kind != "latent":
        raise ValidationError("observation noise applies to latent ensembles only")
    if noise.sigma_eps == 0.0:
        return e.with_data(e.data.copy(), "observed")
    eps = make_rng(rng).standard_normal(e.data.shape) * noise.sigma_eps
    return e.with_data(e.data + eps, "observed")


def apply_order(data: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """Gather ``out[j, k] = data[j, perms[j, k]]``."""
    return np.take_along_axis(data, perms[:, :, None], axis=1)


def corrupt_order(e: Ensemble, mode: PermMode = "per_trajectory", rng=None,
                  perms: Optional[np.ndarray] = None) -> tuple[Ensemble, PermutationRecord]:
    """Permute time slices; ``perms`` forces a specific permutation (test hook)."""
    T = e.n_steps
    if perms is None:
        rng = make_rng(rng)
        if mode == "shared":
            perms = rng.permutation(T)[None, :]
        else:
            perms = np.stack([rng.permutation(T) for _ in range(e.n_traj)]) if e.n_traj else np.empty((0, T), int)
    record = PermutationRecord(mode, perms)
    return e.with_data(apply_order(e.data, record.expand(e.n_traj))), record


def restore_order(e: Ensemble, record: PermutationRecord) -> Ensemble:
    inv = record.inverse().expand(e.n_traj)
    return e.with_data(apply_order(e.data, inv))
