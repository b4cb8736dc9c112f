"""Inductive GP transfer: bias a target surrogate with a persisted source GP.

Blending happens on the original objective scale::

    mean_TL(x) = mean_target(x) + lambda1 * mean_source(x)
    var_TL(x)  = var_target(x)  + lambda2 * var_source(x)

Transfer only ever touches candidate scoring during design-space
exploration, never reported predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ArgumentError, ConfigurationError, UndefinedCorrelationError
from .gp import GPModel, load_gp, posterior


@dataclass(frozen=True)
class TransferConfig:
    source_model_path: Path | str
    lambda1_initial: float = 0.5
    lambda2_initial: float = 0.0
    decay: str = "linear_to_zero"
    objective: str | None = None  # None: the run's first objective

    def __post_init__(self):
        for name in ("lambda1_initial", "lambda2_initial"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v!r}")
        if self.decay != "linear_to_zero":
            raise ConfigurationError(f"unknown decay schedule {self.decay!r}")

    def load_source(self) -> GPModel:
        return load_gp(self.source_model_path)


def combine_posterior(target: GPModel, source: GPModel, lambda1: float, lambda2: float, Xq) -> tuple[np.ndarray, np.ndarray]:
    if source.dim != target.dim:
        raise ConfigurationError(
            f"source model dimension {source.dim} does not match target dimension {target.dim}"
        )
    if lambda1 < 0 or lambda2 < 0:
        raise ConfigurationError("transfer weights must be nonnegative")
    mean_t, var_t = posterior(target, Xq)
    if lambda1 == 0 and lambda2 == 0:
        return mean_t, var_t
    mean_s, var_s = posterior(source, Xq)
    return mean_t + lambda1 * mean_s, var_t + lambda2 * var_s


def lambda_schedule(iteration: int, total_iterations: int, lambda_initial: float) -> float:
    """Linear decay from ``lambda_initial`` at iteration 0 to 0 at ``total_iterations``."""
    if total_iterations < 1:
        raise ArgumentError("total_iterations must be at least 1")
    if not 0 <= iteration <= total_iterations:
        raise ArgumentError(f"iteration {iteration} outside [0, {total_iterations}]")
    return lambda_initial * (1.0 - iteration / total_iterations)


def task_correlation(a, b) -> tuple[float, float]:
    """Pearson correlation and its two-sided p-value (Student t, n-2 dof)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ArgumentError(f"length mismatch: {a.size} vs {b.size}")
    n = a.size
    if n < 3:
        raise ArgumentError("correlation needs at least three paired observations")
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(da @ da))
    sb = math.sqrt(float(db @ db))
    if sa == 0 or sb == 0:
        raise UndefinedCorrelationError("correlation is undefined for a zero-variance series")
    rho = float(da @ db) / (sa * sb)
    rho = min(1.0, max(-1.0, rho))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(t), n - 2))
