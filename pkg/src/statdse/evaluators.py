"""Evaluators standing in for synthesis tools, plus dataset CSV ingestion.

Two kinds exist. A table evaluator replays a results CSV and refuses any
point the table does not contain. A synthetic evaluator computes a closed
form over the design space; every generator has a known global optimum.

Both cache answers keyed by the raw level tuple, so repeated queries cost
nothing and return bit-identical vectors.
"""

from __future__ import annotations

import csv
import math
import threading
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, IngestionError, NotCoveredError, OutOfDomainError
from .space import DesignSpace, Direction, Manifest, Objective, format_number, load_manifest


class Evaluator:
    """Base class: canonicalize, consult the cache, delegate to ``_evaluate``."""

    kind = "abstract"

    def __init__(self, space: DesignSpace, objectives: Sequence[Objective], use_cache: bool = True):
        if not objectives:
            raise ArgumentError("an evaluator needs at least one objective")
        self.space = space
        self.objectives = tuple(objectives)
        self.use_cache = use_cache
        self.cache_hits = 0
        self.evaluations = 0
        self._cache: dict[tuple[float, ...], np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def objective_names(self) -> list[str]:
        return [o.name for o in self.objectives]

    @property
    def directions(self) -> list[Direction]:
        return [o.direction for o in self.objectives]

    def query(self, x) -> np.ndarray:
        """Objective vector at ``x``; raises OutOfDomainError or NotCoveredError."""
        key = self.space.key(x)
        if self.use_cache:
            with self._lock:
                hit = self._cache.get(key)
                if hit is not None:
                    self.cache_hits += 1
                    return hit.copy()
        values = np.asarray(self._evaluate(key), dtype=float).reshape(len(self.objectives))
        values.setflags(write=False)
        with self._lock:
            self.evaluations += 1
            if self.use_cache:
                values = self._cache.setdefault(key, values)
        return values.copy()

    def query_batch(self, X) -> np.ndarray:
        return np.array([self.query(x) for x in np.atleast_2d(X)]).reshape(-1, len(self.objectives))

    def covered_points(self) -> np.ndarray | None:
        """Explicit list of answerable points, or None when the whole space is covered."""
        return None

    def _evaluate(self, key: tuple[float, ...]) -> np.ndarray:
        raise NotImplementedError


class TableEvaluator(Evaluator):
    kind = "table"

    def __init__(self, space, objectives, table: dict, use_cache: bool = True):
        super().__init__(space, objectives, use_cache)
        self._table = table

    def __len__(self) -> int:
        return len(self._table)

    def _evaluate(self, key):
        try:
            return self._table[key]
        except KeyError:
            raise NotCoveredError(f"point {key} is not in the table") from None

    def covered_points(self) -> np.ndarray:
        return np.array(list(self._table), dtype=float).reshape(-1, self.space.dim)

    def optimum(self, name: str) -> tuple[np.ndarray, float]:
        """Brute-force best point and value for one objective."""
        j = self.objective_names.index(name)
        sign = self.objectives[j].direction.sign
        best_key = max(self._table, key=lambda k: sign * self._table[k][j])
        return np.array(best_key), float(self._table[best_key][j])


# ---------------------------------------------------------------------------
# CSV datasets
# ---------------------------------------------------------------------------


def read_csv_table(path) -> tuple[list[str], np.ndarray]:
    """Header plus a float matrix. Errors carry 1-based file line numbers."""
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise IngestionError(f"cannot read dataset {path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise IngestionError(f"{path}:1: duplicate column names in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                )
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in values):
                raise IngestionError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def write_dataset(path, columns: Sequence[str], X, Y) -> None:
    """Write parameter columns followed by objective columns, round-trip safe."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for x, y in zip(X, Y):
            writer.writerow([format_number(v) for v in x] + [format_number(v) for v in y])


def _split_header(header, manifest: Manifest, path) -> list[Objective]:
    names = manifest.space.names
    p = len(names)
    if header[:p] != names:
        raise IngestionError(
            f"{path}:1: header must start with the manifest parameters {names}, got {header[:p]}"
        )
    rest = header[p:]
    if not rest:
        raise IngestionError(f"{path}:1: no objective columns after the parameters")
    if not manifest.objectives:
        return [Objective(n) for n in rest]
    declared = {o.name: o for o in manifest.objectives}
    unknown = [n for n in rest if n not in declared]
    if unknown:
        raise IngestionError(f"{path}:1: columns {unknown} are not manifest objectives")
    return [declared[n] for n in rest]


def load_table_evaluator(csv_path, manifest, use_cache: bool = True) -> TableEvaluator:
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    header, data = read_csv_table(csv_path)
    objectives = _split_header(header, manifest, csv_path)
    space = manifest.space
    p = space.dim
    table: dict[tuple[float, ...], np.ndarray] = {}
    for i, row in enumerate(data):
        lineno = i + 2
        try:
            key = space.key(row[:p])
        except OutOfDomainError as exc:
            raise IngestionError(f"{csv_path}:{lineno}: {exc}") from None
        values = row[p:].copy()
        if key in table:
            if not np.array_equal(table[key], values):
                raise IngestionError(
                    f"{csv_path}:{lineno}: duplicate design point with conflicting objectives"
                )
            continue
        values.setflags(write=False)
        table[key] = values
    if not table:
        raise IngestionError(f"{csv_path}: no data rows")
    return TableEvaluator(space, objectives, table, use_cache)


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


class SyntheticEvaluator(Evaluator):
    kind = "synthetic"

    def __init__(
        self,
        name: str,
        space: DesignSpace,
        objectives: Sequence[Objective],
        func: Callable[[np.ndarray], np.ndarray],
        seed: int,
        info: dict,
        use_cache: bool = True,
    ):
        super().__init__(space, objectives, use_cache)
        self.name = name
        self.seed = seed
        self.info = info
        self._func = func

    def _evaluate(self, key):
        u = self.space.normalize(np.array(key))[0]
        return self._func(u, np.array(key))

    def evaluate_all(self, X) -> np.ndarray:
        """Vectorized closed form over many points, bypassing the cache."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = self.space.normalize(X)
        return np.array([self._func(u, x) for u, x in zip(U, X)]).reshape(len(X), -1)

    def optimum(self, name: str | None = None) -> tuple[np.ndarray, float]:
        """Global optimum of one objective: closed form when known, else exhaustive scan."""
        name = name or self.objectives[0].name
        j = self.objective_names.index(name)
        known = self.info.get("optimum", {}).get(name)
        if known is not None:
            return np.array(known[0], dtype=float), float(known[1])
        X = self.space.enumerate()
        Y = self.evaluate_all(X)[:, j]
        sign = self.objectives[j].direction.sign
        i = int(np.argmax(sign * Y))
        return X[i], float(Y[i])


def _random_grid_point(space: DesignSpace, rng) -> np.ndarray:
    return np.array([rng.choice(p.levels) for p in space.parameters], dtype=float)


def _bowl(space, rng):
    center = _random_grid_point(space, rng)
    c = space.normalize(center)[0]

    def f(u, x):
        return np.array([np.sum((u - c) ** 2)])

    info = {"center": center.tolist(), "optimum": {"cost": (center.tolist(), 0.0)}}
    return [Objective("cost", Direction.MINIMIZE)], f, info


def _bump_landscape(space, rng, n_bumps: int = 6, width: float = 0.22):
    """Max of Gaussian bumps at seeded grid points; the first bump has height 1."""
    centers = []
    keys = set()
    while len(centers) < min(n_bumps, space.cardinality):
        pt = _random_grid_point(space, rng)
        if tuple(pt) not in keys:
            keys.add(tuple(pt))
            centers.append(pt)
    C = space.normalize(np.array(centers))
    heights = np.concatenate([[1.0], rng.uniform(0.5, 0.85, size=len(C) - 1)])
    scale = width * math.sqrt(space.dim / 3.0)

    def bumps(u):
        d2 = np.sum((C - u) ** 2, axis=1)
        return float(np.max(heights * np.exp(-d2 / (2.0 * scale**2))))

    info = {"centers": [c.tolist() for c in centers], "heights": heights.tolist(), "width": scale}
    return bumps, info


def _multimodal(space, rng):
    bumps, info = _bump_landscape(space, rng)

    def f(u, x):
        return np.array([bumps(u)])

    info["optimum"] = {"perf": (info["centers"][0], 1.0)}
    return [Objective("perf", Direction.MAXIMIZE)], f, info


def _ripple(space, rng):
    freq = rng.uniform(1.0, 2.0, size=space.dim)
    phase = rng.uniform(0, 2 * np.pi, size=space.dim)
    return lambda u: float(np.mean(np.sin(2 * np.pi * freq * u + phase)))


def _correlated_pair(space, rng, ripple: float = 0.05):
    bumps, info = _bump_landscape(space, rng)
    r_source = _ripple(space, rng)
    r_target = _ripple(space, rng)

    def f(u, x):
        base = 1.0 + bumps(u)
        return np.array([base + ripple * r_source(u), base + ripple * r_target(u)])

    info["ripple"] = ripple
    objectives = [Objective("source", Direction.MAXIMIZE), Objective("target", Direction.MAXIMIZE)]
    return objectives, f, info


def _interaction(space, rng):
    if space.dim < 2:
        raise ArgumentError("the interaction generator needs at least two parameters")
    lo, hi = space.lower[:2], space.upper[:2]
    corners = [(a, b) for a in (lo[0], hi[0]) for b in (lo[1], hi[1])]
    a, b = max(corners, key=lambda ab: ab[0] * ab[1])
    best = space.upper.copy()
    best[0], best[1] = a, b

    def f(u, x):
        return np.array([x[0] * x[1]])

    # only the first two coordinates of the optimum matter
    return [Objective("y", Direction.MAXIMIZE)], f, {"optimum": {"y": (best.tolist(), float(a * b))}}


GENERATORS = {
    "bowl": _bowl,
    "multimodal": _multimodal,
    "correlated_pair": _correlated_pair,
    "interaction": _interaction,
}


def make_synthetic_evaluator(name: str, space: DesignSpace, seed: int = 0, use_cache: bool = True) -> SyntheticEvaluator:
    """Seeded closed-form evaluator.

    Generators
    ----------
    bowl
        ``cost = sum_j (u_j - c_j)^2`` on normalized levels ``u``; ``c`` is a
        seeded grid point, so the minimum is exactly 0 at ``c``.
    multimodal
        ``perf = max_m h_m exp(-|u - c_m|^2 / (2 w^2))`` with six seeded grid
        centres; ``h_0 = 1`` and the rest lie in [0.5, 0.85], so the maximum
        is exactly 1 at ``c_0``.
    correlated_pair
        Two maximized objectives ``source`` and ``target``: ``1 + bumps(u)``
        (the multimodal landscape above) plus independent sinusoidal ripples
        of amplitude 0.05 each. Optima are found by exhaustive scan.
    interaction
        ``y = x_1 * x_2`` on raw levels of the first two parameters.
    """
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ArgumentError(
            f"unknown synthetic generator {name!r}; choose from {sorted(GENERATORS)}"
        ) from None
    rng = np.random.default_rng(seed)
    objectives, func, info = gen(space, rng)
    return SyntheticEvaluator(name, space, objectives, func, seed, info, use_cache)
