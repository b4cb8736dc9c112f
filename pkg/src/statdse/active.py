"""Multi-model Bayesian active learning over a discrete design space.

One GP per objective. Each iteration refits every GP on all successful
observations, scores a random pool of unvisited points with each model,
and queries the union of every model's top-k picks.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ConfigurationError, EvaluationError, RunAbortedError
from .evaluators import Evaluator
from .gp import DEFAULT_NOISE_VARIANCE, GPModel, KernelSpec, fit_gp, posterior, posterior_mean
from .space import DesignSpace, Direction, format_number
from .transfer import TransferConfig, combine_posterior, lambda_schedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    direction: Direction = Direction.MAXIMIZE
    kernel: KernelSpec = field(default_factory=KernelSpec)
    noise_variance: float = DEFAULT_NOISE_VARIANCE

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction.parse(self.direction))


@dataclass(frozen=True)
class RunConfig:
    objectives: tuple[ObjectiveSpec, ...]
    n_init: int = 5
    candidates_per_model: int = 5
    pool_size: int = 1000
    max_iterations: int = 50
    patience: int = 10
    exploration_beta: float = 0.0
    seed: int = 0
    transfer: TransferConfig | None = None
    max_queries: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        if not self.objectives:
            raise ConfigurationError("at least one objective is required")
        names = [o.name for o in self.objectives]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"objective names must be unique: {names}")
        for attr in ("n_init", "candidates_per_model", "pool_size", "max_iterations", "patience"):
            if getattr(self, attr) < 1:
                raise ConfigurationError(f"{attr} must be a positive integer")
        if self.candidates_per_model * len(self.objectives) > self.pool_size:
            raise ConfigurationError("candidates_per_model * objectives exceeds pool_size")
        if self.exploration_beta < 0:
            raise ConfigurationError("exploration_beta must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.max_queries is not None and self.max_queries < 1:
            raise ConfigurationError("max_queries must be positive")
        if self.transfer is not None and self.transfer.objective is not None:
            if self.transfer.objective not in names:
                raise ConfigurationError(f"transfer objective {self.transfer.objective!r} is not in the run")

    @property
    def objective_names(self) -> list[str]:
        return [o.name for o in self.objectives]


@dataclass
class IterationRecord:
    iteration: int
    queried: list[tuple[np.ndarray, np.ndarray]]
    failed: list[np.ndarray]
    best: dict[str, tuple[np.ndarray, float]]
    total_queries: int
    improved: bool


@dataclass
class RunHistory:
    objectives: list[str]
    directions: list[Direction]
    parameter_names: list[str]
    iterations: list[IterationRecord] = field(default_factory=list)
    exhausted: bool = False
    stop_reason: str = ""

    @property
    def total_queries(self) -> int:
        return self.iterations[-1].total_queries if self.iterations else 0

    @property
    def n_iterations(self) -> int:
        """Active-learning iterations, not counting the initial random batch."""
        return max(len(self.iterations) - 1, 0)

    def best(self, name: str) -> tuple[np.ndarray, float]:
        return self.iterations[-1].best[name]

    def evaluated(self) -> tuple[np.ndarray, np.ndarray]:
        """All successful queries in order: (points, objective matrix)."""
        X = [x for rec in self.iterations for x, _ in rec.queried]
        Y = [y for rec in self.iterations for _, y in rec.queried]
        p, m = len(self.parameter_names), len(self.objectives)
        return np.array(X, dtype=float).reshape(-1, p), np.array(Y, dtype=float).reshape(-1, m)

    def queries_to_reach(self, name: str, target: float) -> int | None:
        """Evaluator calls up to and including the first one attaining ``target``.

        "Attaining" means at least as good as ``target`` under the objective's
        direction. Failed calls of earlier batches count toward the total.
        """
        j = self.objectives.index(name)
        direction = self.directions[j]
        for rec in self.iterations:
            count = rec.total_queries - len(rec.queried) - len(rec.failed)
            for x, y in rec.queried:
                count += 1
                if not direction.better(target, y[j]):
                    return count
        return None

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as handle:
            w = csv.writer(handle, lineterminator="\n")
            w.writerow(["iteration", "total_queries", "objective", "best_value", *self.parameter_names])
            for rec in self.iterations:
                for name in self.objectives:
                    x, v = rec.best[name]
                    w.writerow(
                        [rec.iteration, rec.total_queries, name, format_number(v)]
                        + [format_number(t) for t in x]
                    )

    def summary(self) -> dict:
        objectives = []
        for name, direction in zip(self.objectives, self.directions):
            x, v = self.best(name)
            objectives.append(
                {
                    "name": name,
                    "direction": direction.value,
                    "best_value": float(v),
                    "best_point": {p: float(t) for p, t in zip(self.parameter_names, x)},
                }
            )
        return {
            "objectives": objectives,
            "total_queries": self.total_queries,
            "iterations": self.n_iterations,
            "failed_queries": sum(len(r.failed) for r in self.iterations),
            "stop_reason": self.stop_reason,
        }

    def write_summary(self, path, extra: dict | None = None) -> None:
        doc = self.summary()
        if extra:
            doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


class _Universe:
    """Points the loop may propose: the whole space, or a table's rows."""

    def __init__(self, space: DesignSpace, points: np.ndarray | None = None):
        self.space = space
        self.points = points
        if points is not None:
            self.keys = [tuple(float(v) for v in row) for row in points]

    @property
    def size(self) -> int:
        return self.space.cardinality if self.points is None else len(self.points)

    def sample(self, rng: np.random.Generator, n: int, exclude: set) -> np.ndarray:
        if self.points is None:
            return self.space.sample(rng, n, exclude)
        idx = np.array([i for i, k in enumerate(self.keys) if k not in exclude], dtype=int)
        if len(idx) == 0:
            return np.empty((0, self.space.dim))
        if len(idx) <= n:
            return self.points[idx[rng.permutation(len(idx))]]
        return self.points[rng.choice(idx, size=n, replace=False)]


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def initialize(space: DesignSpace, n: int, seed=0, candidates: np.ndarray | None = None) -> np.ndarray:
    """``n`` distinct points drawn uniformly; clamps to the space size with a warning."""
    if n < 1:
        raise ArgumentError("n must be at least 1")
    universe = _Universe(space, candidates)
    if n > universe.size:
        warnings.warn(f"requested {n} initial points but the space has only {universe.size}", stacklevel=2)
        n = universe.size
    return universe.sample(_rng(seed), n, set())


def _score(model, X, beta, source=None, lambda1=0.0, lambda2=0.0) -> np.ndarray:
    if source is not None:
        mean, var = combine_posterior(model, source, lambda1, lambda2, X)
    elif beta > 0:
        mean, var = posterior(model, X)
    else:
        mean, var = posterior_mean(model, X), None
    score = model.direction.sign * mean
    if beta > 0:
        score = score + beta * np.sqrt(var)
    return score


def rank_pool(model: GPModel, pool: np.ndarray, beta: float = 0.0, source=None, lambda1=0.0, lambda2=0.0) -> np.ndarray:
    """Pool indices ordered best-first; ties fall back to the normalized point order."""
    score = _score(model, pool, beta, source, lambda1, lambda2)
    Xn = model.normalize(pool)
    keys = [Xn[:, d] for d in range(Xn.shape[1] - 1, -1, -1)] + [-score]
    return np.lexsort(keys)


def propose_candidates(
    models: Sequence[GPModel],
    space: DesignSpace,
    k: int,
    pool_size: int,
    beta: float = 0.0,
    visited: set | None = None,
    seed=0,
    candidates: np.ndarray | None = None,
    transfer: dict | None = None,
) -> np.ndarray:
    """Union of each model's top-``k`` points from a random unvisited pool.

    ``transfer`` maps a model index to ``(source_gp, lambda1, lambda2)``.
    Returns an empty array once the space is exhausted.
    """
    if k < 1:
        raise ArgumentError("k must be at least 1")
    visited = visited if visited is not None else set()
    pool = _Universe(space, candidates).sample(_rng(seed), pool_size, visited)
    if len(pool) == 0:
        return pool
    transfer = transfer or {}
    chosen: dict[tuple, np.ndarray] = {}
    for i, model in enumerate(models):
        source, l1, l2 = transfer.get(i, (None, 0.0, 0.0))
        order = rank_pool(model, pool, beta, source, l1, l2)
        for idx in order[:k]:
            key = tuple(pool[idx].tolist())
            chosen.setdefault(key, pool[idx])
    return np.array(list(chosen.values()), dtype=float).reshape(-1, space.dim)


def stopping_check(history: RunHistory, config: RunConfig) -> bool:
    if not history.iterations:
        raise ArgumentError("stopping_check needs a non-empty history")
    if history.exhausted:
        return True
    if config.max_queries is not None and history.total_queries >= config.max_queries:
        return True
    if history.n_iterations >= config.max_iterations:
        return True
    recent = history.iterations[1:][-config.patience:]
    return len(recent) == config.patience and not any(r.improved for r in recent)


def _stop_reason(history: RunHistory, config: RunConfig) -> str:
    if history.exhausted:
        return "space exhausted"
    if config.max_queries is not None and history.total_queries >= config.max_queries:
        return "query budget reached"
    if history.n_iterations >= config.max_iterations:
        return "max iterations reached"
    return f"no improvement for {config.patience} iterations"


def _fit_models(config: RunConfig, space: DesignSpace, X, Y) -> list[GPModel]:
    return [
        fit_gp(X, Y[:, j], o.kernel, o.noise_variance, o.direction, space.bounds, name=o.name)
        for j, o in enumerate(config.objectives)
    ]


def run_active_learning(
    config: RunConfig,
    evaluator: Evaluator,
    workers: int = 1,
) -> tuple[list[GPModel], RunHistory]:
    """Run the loop until the stop rule fires; return final GPs and history.

    When the evaluator can list the points it covers (table mode) the search
    is restricted to them. Points whose evaluation fails are recorded and
    never retried.
    """
    space = evaluator.space
    names = config.objective_names
    try:
        columns = [evaluator.objective_names.index(n) for n in names]
    except ValueError:
        raise ConfigurationError(
            f"objectives {names} not all provided by the evaluator ({evaluator.objective_names})"
        ) from None
    directions = [o.direction for o in config.objectives]
    candidates = evaluator.covered_points()
    universe = _Universe(space, candidates)
    rng = np.random.default_rng(config.seed)

    source_index, source = None, None
    if config.transfer is not None:
        source = config.transfer.load_source()
        if source.dim != space.dim:
            raise ConfigurationError(
                f"source model dimension {source.dim} does not match design space dimension {space.dim}"
            )
        target = config.transfer.objective or names[0]
        source_index = names.index(target)

    history = RunHistory(names, directions, space.names)
    visited: set[tuple[float, ...]] = set()
    X_ok: list[np.ndarray] = []
    Y_ok: list[np.ndarray] = []
    best: dict[str, tuple[np.ndarray, float]] = {}

    def evaluate(batch: np.ndarray, iteration: int) -> IterationRecord:
        for x in batch:
            visited.add(space.key(x))

        def one(x):
            try:
                return evaluator.query(x)
            except EvaluationError as exc:
                logger.warning("evaluation failed at %s: %s", tuple(x), exc)
                return None

        if workers > 1 and len(batch) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, batch))
        else:
            results = [one(x) for x in batch]
        queried, failed = [], []
        improved = False
        for x, y in zip(batch, results):
            if y is None:
                failed.append(x.copy())
                continue
            y = y[columns]
            queried.append((x.copy(), y.copy()))
            X_ok.append(x)
            Y_ok.append(y)
            for j, name in enumerate(names):
                if name not in best or directions[j].better(y[j], best[name][1]):
                    best[name] = (x.copy(), float(y[j]))
                    improved = True
        if not queried and (iteration > 0 or not X_ok):
            raise RunAbortedError(
                f"every evaluation in iteration {iteration} failed ({len(failed)} points); aborting run"
            )
        total = history.total_queries + len(batch)
        return IterationRecord(iteration, queried, failed, dict(best), total, improved and iteration > 0)

    n_init = config.n_init
    if config.max_queries is not None:
        n_init = min(n_init, config.max_queries)
    init = initialize(space, n_init, rng, candidates)
    history.iterations.append(evaluate(init, 0))
    if len(visited) >= universe.size:
        history.exhausted = True

    total_iters = config.max_iterations
    t = 0
    while not stopping_check(history, config):
        t += 1
        X = np.array(X_ok)
        Y = np.array(Y_ok)
        models = _fit_models(config, space, X, Y)
        transfer = {}
        if source is not None:
            step = min(t - 1, max(total_iters - 1, 1))
            l1 = lambda_schedule(step, max(total_iters - 1, 1), config.transfer.lambda1_initial)
            l2 = lambda_schedule(step, max(total_iters - 1, 1), config.transfer.lambda2_initial)
            transfer[source_index] = (source, l1, l2)
        batch = propose_candidates(
            models, space, config.candidates_per_model, config.pool_size,
            config.exploration_beta, visited, rng, candidates, transfer,
        )
        if config.max_queries is not None:
            batch = batch[: config.max_queries - history.total_queries]
        if len(batch) == 0:
            history.exhausted = True
            break
        history.iterations.append(evaluate(batch, t))
        if len(visited) >= universe.size:
            history.exhausted = True
    history.stop_reason = _stop_reason(history, config)
    models = _fit_models(config, space, np.array(X_ok), np.array(Y_ok))
    logger.info("run finished after %d queries: %s", history.total_queries, history.stop_reason)
    return models, history


def random_search(
    evaluator: Evaluator,
    objective: str,
    batch_size: int,
    max_queries: int,
    seed=0,
) -> RunHistory:
    """Uniform random search without replacement, batched like the active loop."""
    space = evaluator.space
    j_eval = evaluator.objective_names.index(objective)
    direction = evaluator.objectives[j_eval].direction
    universe = _Universe(space, evaluator.covered_points())
    rng = _rng(seed)
    history = RunHistory([objective], [direction], space.names)
    visited: set = set()
    best = None
    it = 0
    while history.total_queries < max_queries:
        batch = universe.sample(rng, min(batch_size, max_queries - history.total_queries), visited)
        if len(batch) == 0:
            history.exhausted = True
            break
        queried = []
        improved = False
        for x in batch:
            visited.add(space.key(x))
            y = evaluator.query(x)[[j_eval]]
            queried.append((x.copy(), y))
            if best is None or direction.better(y[0], best[1]):
                best = (x.copy(), float(y[0]))
                improved = True
        history.iterations.append(
            IterationRecord(it, queried, [], {objective: best}, history.total_queries + len(batch), improved)
        )
        it += 1
    return history
