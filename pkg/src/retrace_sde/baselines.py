"""Geometry-only ordering baselines: MST traversal and diffusion pseudotime."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import EigDecompositionFailure, ValidationError
from .estimators import FitResult, mle_fit
from .simulator import Ensemble, PermutationRecord, apply_order


@dataclass(frozen=True)
class BaselineConfig:
    method: Literal["mst", "dpt"] = "mst"
    dpt_bandwidth: Union[float, str] = "median_heuristic"
    dpt_n_eigs: int = 10
    root_rule: Literal["max_eccentricity", "index_zero"] = "max_eccentricity"

    def __post_init__(self):
        if self.method not in ("mst", "dpt"):
            raise ValidationError(f"unknown baseline method {self.method!r}")
        if self.root_rule not in ("max_eccentricity", "index_zero"):
            raise ValidationError(f"unknown root_rule {self.root_rule!r}")
        if isinstance(self.dpt_bandwidth, str):
            if self.dpt_bandwidth != "median_heuristic":
                raise ValidationError("dpt_bandwidth must be positive or 'median_heuristic'")
        elif not self.dpt_bandwidth > 0:
            raise ValidationError("dpt_bandwidth must be positive")
        if self.dpt_n_eigs < 1:
            raise ValidationError("dpt_n_eigs must be >= 1")


def _prim(D: np.ndarray) -> list[list[tuple[float, int]]]:
    """Dense Prim's algorithm; ties go to the lowest vertex index."""
    T = D.shape[0]
    in_tree = np.zeros(T, bool)
    best = np.full(T, np.inf)
    parent = np.full(T, -1)
    best[0] = 0.0
    adj: list[list[tuple[float, int]]] = [[] for _ in range(T)]
    for _ in range(T):
        cand = np.where(in_tree, np.inf, best)
        u = int(np.argmin(cand))  # argmin returns the first (lowest index) minimum
        in_tree[u] = True
        if parent[u] >= 0:
            w = float(D[u, parent[u]])
            adj[u].append((w, int(parent[u])))
            adj[parent[u]].append((w, u))
        closer = (~in_tree) & (D[u] < best)
        best[closer] = D[u, closer]
        parent[closer] = u
    return adj


def _tree_distances(adj, root: int) -> np.ndarray:
    dist = np.full(len(adj), np.inf)
    dist[root] = 0.0
    stack = [root]
    while stack:
        u = stack.pop()
        for w, v in adj[u]:
            if dist[v] == np.inf:
                dist[v] = dist[u] + w
                stack.append(v)
    return dist


def _farthest(dist: np.ndarray) -> int:
    return int(np.flatnonzero(dist == dist.max())[0])


def mst_order(points: np.ndarray, root_rule: str = "max_eccentricity") -> np.ndarray:
    """Depth-first traversal of the Euclidean MST over the time slices.

    With ``max_eccentricity`` the root is an endpoint of the tree's longest
    path (the lower-indexed of the two); children are visited nearest first.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    T = P.shape[0]
    if T < 2:
        raise ValidationError("need at least two points")
    D = squareform(pdist(P))
    if not np.all(np.isfinite(D)):
        raise ValidationError("pairwise distances must be finite")
    adj = _prim(D)
    if root_rule == "index_zero":
        root = 0
    else:
        u = _farthest(_tree_distances(adj, 0))
        v = _farthest(_tree_distances(adj, u))
        root = min(u, v)
    order, seen, stack = [], np.zeros(T, bool), [root]
    while stack:
        node = stack.pop()
        if seen[node]:
            continue
        seen[node] = True
        order.append(node)
        children = sorted((w, c) for w, c in adj[node] if not seen[c])
        stack.extend(c for _, c in reversed(children))
    return np.asarray(order, dtype=np.int64)


def dpt_order(points: np.ndarray, cfg: BaselineConfig = BaselineConfig(method="dpt")) -> np.ndarray:
    """Order slices by diffusion pseudotime from a maximum-eccentricity root.

    Gaussian kernel with bandwidth ``sigma`` (median pairwise distance by
    default), row-normalized transition matrix, and the accumulated-diffusion
    distance ``sum_k (lam_k / (1 - lam_k))^2 (psi_k(i) - psi_k(root))^2`` over
    the leading non-trivial eigenpairs.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    T = P.shape[0]
    if T < 3:
        raise ValidationError("dpt_order needs at least three points")
    dists = pdist(P)
    sigma = float(np.median(dists)) if cfg.dpt_bandwidth == "median_heuristic" else float(cfg.dpt_bandwidth)
    if sigma <= 0.0 or not np.any(dists > 0):
        return np.arange(T, dtype=np.int64)
    K = np.exp(-squareform(dists) ** 2 / (2.0 * sigma**2))
    deg = K.sum(axis=1)
    sym = K / np.sqrt(np.outer(deg, deg))
    try:
        lam, V = np.linalg.eigh(0.5 * (sym + sym.T))
    except np.linalg.LinAlgError as exc:
        raise EigDecompositionFailure(str(exc)) from exc
    if not np.all(np.isfinite(lam)):
        raise EigDecompositionFailure("non-finite eigenvalues")
    desc = np.argsort(-lam, kind="stable")
    lam, V = lam[desc], V[:, desc]
    psi = V / np.sqrt(deg)[:, None]
    n = min(cfg.dpt_n_eigs, T - 1)
    lam_k = np.clip(lam[1 : n + 1], -1.0, 1.0 - 1e-12)
    coords = psi[:, 1 : n + 1] * (lam_k / (1.0 - lam_k))
    dist = squareform(pdist(coords))
    if cfg.root_rule == "index_zero":
        root = 0
    else:
        ecc = dist.max(axis=1)
        root = int(np.flatnonzero(ecc >= ecc.max() * (1.0 - 1e-12))[0])
    return np.argsort(dist[root], kind="stable").astype(np.int64)


def order_trajectories(e: Ensemble, cfg: BaselineConfig) -> PermutationRecord:
    if cfg.method == "mst":
        perms = [mst_order(traj, cfg.root_rule) for traj in e.data]
    else:
        perms = [dpt_order(traj, cfg) for traj in e.data]
    return PermutationRecord("per_trajectory", np.stack(perms))


def baseline_pipeline(e: Ensemble, cfg: BaselineConfig) -> tuple[PermutationRecord, FitResult]:
    """Order each trajectory with the configured baseline, then fit by MLE."""
    record = order_trajectories(e, cfg)
    return record, mle_fit(e.with_data(apply_order(e.data, record.perms)))
