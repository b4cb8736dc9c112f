"""Gaussian regression bootstrapping: mint simulated datasets from a fitted GP.

Each simulated value is ``mean(x) + eps(x)``, where ``eps`` is one joint
draw from the zero-mean GP with the posterior covariance over the whole
query set, so simulated points keep the surrogate's spatial correlation.
``MeanOnly`` mode drops ``eps``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigurationError
from .gp import GPModel, cholesky_with_jitter, posterior, posterior_joint
from .space import DesignSpace


class NoiseMode(str, enum.Enum):
    MEAN_ONLY = "mean"
    JOINT_POSTERIOR = "joint"


class QuerySource(str, enum.Enum):
    UNIFORM = "uniform"
    PROVIDED = "provided"


@dataclass(frozen=True)
class BootstrapConfig:
    n_points: int = 2000
    noise_mode: NoiseMode = NoiseMode.JOINT_POSTERIOR
    seed: int = 0
    query_source: QuerySource = QuerySource.UNIFORM
    queries: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))
        object.__setattr__(self, "query_source", QuerySource(self.query_source))
        if self.query_source is QuerySource.PROVIDED:
            if self.queries is None:
                raise ConfigurationError("provided query source needs a query list")
            q = np.atleast_2d(np.asarray(self.queries, dtype=float))
            object.__setattr__(self, "queries", q)
            object.__setattr__(self, "n_points", len(q))
        if self.n_points < 1:
            raise ConfigurationError("n_points must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


def sample_posterior(gp: GPModel, Xq, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """``n_draws`` joint posterior samples at ``Xq``; shape (n_draws, len(Xq))."""
    mean, cov = posterior_joint(gp, Xq)
    if not np.any(np.diag(cov) > 0):
        return np.tile(mean, (n_draws, 1))
    L, _ = cholesky_with_jitter(cov)
    z = rng.standard_normal((len(mean), n_draws))
    return (mean[:, None] + L @ z).T


def _uniform_queries(space: DesignSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    if n <= space.cardinality:
        return space.sample(rng, n)
    # more points than the space holds: sample levels with replacement
    cols = [np.asarray(p.levels)[rng.integers(0, len(p.levels), size=n)] for p in space.parameters]
    return np.column_stack(cols)


def bootstrap_sample(gp: GPModel, space: DesignSpace, cfg: BootstrapConfig) -> tuple[np.ndarray, np.ndarray]:
    """Simulated dataset ``(X, y)`` with ``cfg.n_points`` rows.

    Uniform queries are distinct when the space is large enough, otherwise
    drawn with replacement.
    """
    if space.dim != gp.dim:
        raise ArgumentError(f"design space has {space.dim} parameters, model has {gp.dim}")
    rng = np.random.default_rng(cfg.seed)
    if cfg.query_source is QuerySource.PROVIDED:
        X = cfg.queries
        if X.shape[1] != gp.dim:
            raise ArgumentError(f"provided queries have dimension {X.shape[1]}, model has {gp.dim}")
    else:
        X = _uniform_queries(space, cfg.n_points, rng)
    if cfg.noise_mode is NoiseMode.MEAN_ONLY:
        y, _ = posterior(gp, X)
    else:
        y = sample_posterior(gp, X, 1, rng)[0]
    return X, y
