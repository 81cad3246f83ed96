"""Ordering accuracy, parameter MAE, rank correlation and timing."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Union

import numpy as np
from scipy.stats import kendalltau

from .errors import ShapeMismatch
from .simulator import PermutationRecord

Orders = Union[PermutationRecord, np.ndarray]


def _as_rows(x: Orders) -> np.ndarray:
    if isinstance(x, PermutationRecord):
        return x.perms
    return np.atleast_2d(np.asarray(x))


def _pair(truth: Orders, hyp: Orders) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_rows(truth), _as_rows(hyp)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"sequence lengths differ: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] != b.shape[0]:
        if a.shape[0] == 1:
            a = np.broadcast_to(a, b.shape)
        elif b.shape[0] == 1:
            b = np.broadcast_to(b, a.shape)
        else:
            raise ShapeMismatch(f"trajectory counts differ: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def recovered_labels(corruption: PermutationRecord, recovered: PermutationRecord) -> np.ndarray:
    """True time index found at each output position after recovery.

    ``corruption.perms[j, k]`` is the true time at corrupted position ``k`` and
    ``recovered.perms[j, p]`` is the corrupted position placed at ``p``.
    """
    n = recovered.perms.shape[0] if recovered.mode == "per_trajectory" else corruption.perms.shape[0]
    c = corruption.expand(n)
    r = recovered.expand(n)
    return np.take_along_axis(c, r, axis=1)


def per_trajectory_accuracy(truth: Orders, hypothesis: Orders) -> np.ndarray:
    a, b = _pair(truth, hypothesis)
    return (a == b).mean(axis=1)


def ordering_accuracy(truth: Orders, hypothesis: Orders) -> float:
    """Fraction of exactly matching positions, averaged per trajectory then overall."""
    return float(per_trajectory_accuracy(truth, hypothesis).mean())


def param_mae(true: np.ndarray, est: np.ndarray) -> float:
    true, est = np.asarray(true, dtype=float), np.asarray(est, dtype=float)
    if true.shape != est.shape:
        raise ShapeMismatch(f"parameter shapes differ: {true.shape} vs {est.shape}")
    return float(np.mean(np.abs(true - est)))


def per_trajectory_kendall_tau(truth: Orders, hypothesis: Orders) -> np.ndarray:
    a, b = _pair(truth, hypothesis)
    out = np.empty(a.shape[0])
    for j in range(a.shape[0]):
        out[j] = kendalltau(a[j], b[j]).statistic if a.shape[1] > 1 else 1.0
    return out


def kendall_tau(truth: Orders, hypothesis: Orders) -> float:
    """Mean Kendall rank correlation between the two sequences of each trajectory."""
    return float(per_trajectory_kendall_tau(truth, hypothesis).mean())


def timed(f: Callable[..., Any], *args, **kwargs) -> tuple[Any, float]:
    t0 = time.perf_counter()
    out = f(*args, **kwargs)
    return out, time.perf_counter() - t0


@dataclass
class EvalReport:
    ordering_accuracy: float
    mae_A: float
    mae_H: float
    kendall_tau: float
    mean_iter_runtime_s: float
    per_trajectory_accuracy: list[float] = field(default_factory=list)


def evaluate(truth_labels: Orders, hypothesis_labels: Orders, A_true, A_hat, H_true, H_hat,
             iter_runtimes: list[float]) -> EvalReport:
    per = per_trajectory_accuracy(truth_labels, hypothesis_labels)
    return EvalReport(
        ordering_accuracy=float(per.mean()),
        mae_A=param_mae(A_true, A_hat),
        mae_H=param_mae(H_true, H_hat),
        kendall_tau=kendall_tau(truth_labels, hypothesis_labels),
        mean_iter_runtime_s=float(np.mean(iter_runtimes)) if len(iter_runtimes) else 0.0,
        per_trajectory_accuracy=per.tolist(),
    )
