"""Performance-prediction models: OLS, LASSO path, random forest.

Everything is scored with the normalized RMSE ``sqrt(MSE) / mean(pred)``.
Features enter raw; only the LASSO standardizes internally, and it reports
coefficients back on the raw scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ArgumentError, ConvergenceError, DataError, NumericalError, SingularFitError


@dataclass(frozen=True)
class RegressionDataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ArgumentError(f"{X.shape[0]} feature rows but {y.size} targets")
        if X.shape[1] < 1:
            raise DataError("a regression dataset needs at least one feature")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("regression data contain non-finite values")
        names = tuple(self.feature_names) or tuple(f"x{i + 1}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ArgumentError(f"{len(names)} feature names for {X.shape[1]} features")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "RegressionDataset":
        return RegressionDataset(self.features[idx], self.targets[idx], self.feature_names)

    def split(self, test_fraction: float = 0.2, seed: int = 0) -> tuple["RegressionDataset", "RegressionDataset"]:
        """Seeded random train/test split."""
        if not 0 < test_fraction < 1:
            raise ArgumentError("test_fraction must lie strictly between 0 and 1")
        perm = np.random.default_rng(seed).permutation(self.n)
        n_test = max(1, int(round(test_fraction * self.n)))
        return self.subset(np.sort(perm[n_test:])), self.subset(np.sort(perm[:n_test]))


def normalized_rmse(predictions, actuals) -> float:
    """``sqrt(mean((actual - pred)^2)) / mean(pred)``."""
    pred = np.asarray(predictions, dtype=float).ravel()
    act = np.asarray(actuals, dtype=float).ravel()
    if pred.size != act.size or pred.size == 0:
        raise ArgumentError("predictions and actuals must have equal, nonzero length")
    mu = float(np.mean(pred))
    if mu == 0:
        raise NumericalError("normalized RMSE is undefined when the mean prediction is zero")
    return math.sqrt(float(np.mean((act - pred) ** 2))) / mu


# ---------------------------------------------------------------------------
# Ordinary least squares
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    coef: np.ndarray
    feature_names: tuple[str, ...]

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.atleast_2d(np.asarray(X, dtype=float)) @ self.coef


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    return (X - mean) / safe, mean, std


def fit_linear(data: RegressionDataset) -> LinearModel:
    """Least squares via pivoted QR on standardized, centered features."""
    if data.n < data.p:
        raise DataError(f"linear fit needs n >= p (have n={data.n}, p={data.p})")
    Z, mean, std = _standardize(data.features)
    constant = [data.feature_names[j] for j in np.flatnonzero(std == 0)]
    if constant:
        raise SingularFitError(f"constant feature column(s) {constant} make the design singular")
    y_mean = float(data.targets.mean())
    yc = data.targets - y_mean
    Q, R, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(Z.shape) * np.finfo(float).eps * diag[0]
    rank = int(np.sum(diag > tol))
    if rank < data.p:
        names = [data.feature_names[j] for j in piv[rank:]]
        raise SingularFitError(f"collinear feature column(s) {names}")
    b_perm = scipy.linalg.solve_triangular(R, Q.T @ yc)
    b = np.empty(data.p)
    b[piv] = b_perm
    coef = b / std
    return LinearModel(y_mean - float(coef @ mean), coef, data.feature_names)


# ---------------------------------------------------------------------------
# LASSO
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LassoPath:
    """Coefficient path over an ascending lambda grid.

    ``coefficients`` and ``intercepts`` are on the raw feature scale;
    ``standardized`` holds the same path for unit-variance features.
    ``collapse_order`` lists feature indices from the first coefficient to
    reach zero as lambda grows to the last one.
    """

    lambdas: np.ndarray
    coefficients: np.ndarray
    standardized: np.ndarray
    intercepts: np.ndarray
    collapse_order: tuple[int, ...]
    feature_names: tuple[str, ...]
    sweeps: np.ndarray = field(repr=False, default=None)

    @property
    def lambda_max(self) -> float:
        return float(self.lambdas[-1])

    def support_sizes(self) -> np.ndarray:
        return np.count_nonzero(self.standardized, axis=1)

    def collapse_names(self) -> list[str]:
        return [self.feature_names[j] for j in self.collapse_order]


def _soft(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def _coordinate_descent(G, c, lam, b, tol, max_sweeps) -> int:
    """Minimize (1/2n)|y - Zb|^2 + lam |b|_1 in covariance form; ``b`` updated in place."""
    p = len(c)
    Gb = G @ b
    for sweep in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj == 0:
                continue
            old = b[j]
            rho = c[j] - Gb[j] + gjj * old
            new = _soft(rho, lam) / gjj
            if new != old:
                delta = new - old
                b[j] = new
                Gb += G[:, j] * delta
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            return sweep
    raise ConvergenceError(f"coordinate descent did not converge at lambda={lam:.6g} after {max_sweeps} sweeps")


def fit_lasso_path(
    data: RegressionDataset,
    n_lambdas: int = 100,
    min_ratio: float = 1e-4,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
) -> LassoPath:
    """Warm-started coordinate-descent LASSO from ``lambda_max`` down to ``lambda_max*min_ratio``.

    ``lambda_max = max|Z^T y_c| / n`` is the smallest penalty that zeroes
    every coefficient of the standardized problem.
    """
    if n_lambdas < 2:
        raise ArgumentError("n_lambdas must be at least 2")
    Z, mean, std = _standardize(data.features)
    y_mean = float(data.targets.mean())
    yc = data.targets - y_mean
    n = data.n
    G = Z.T @ Z / n
    c = Z.T @ yc / n
    lam_max = float(np.max(np.abs(c)))
    if lam_max == 0:
        grid = np.zeros(n_lambdas)
    else:
        grid = np.logspace(math.log10(lam_max), math.log10(lam_max * min_ratio), n_lambdas)
        grid[0] = lam_max
    b = np.zeros(data.p)
    path = np.zeros((n_lambdas, data.p))
    sweeps = np.zeros(n_lambdas, dtype=int)
    for i, lam in enumerate(grid):
        sweeps[i] = _coordinate_descent(G, c, lam, b, tol, max_sweeps)
        path[i] = b
    # store ascending in lambda
    grid = grid[::-1].copy()
    path = path[::-1].copy()
    sweeps = sweeps[::-1].copy()
    safe = np.where(std > 0, std, 1.0)
    raw = path / safe
    intercepts = y_mean - raw @ mean

    last_nonzero = np.zeros(data.p)
    for j in range(data.p):
        nz = np.flatnonzero(path[:, j] != 0)
        last_nonzero[j] = grid[nz[-1]] if nz.size else -np.inf
    order = tuple(int(j) for j in np.lexsort((np.arange(data.p), last_nonzero)))
    return LassoPath(grid, raw, path, intercepts, order, data.feature_names, sweeps)


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = 16
    min_leaf: int = 2
    features_per_split: int | None = None  # None: ceil(p / 3)
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ArgumentError("n_trees must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ArgumentError("max_depth must be nonnegative or None")
        if self.min_leaf < 1:
            raise ArgumentError("min_leaf must be at least 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ArgumentError("features_per_split must be at least 1")


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return self.value[node]
            idx = rows[active]
            na = node[active]
            go_left = X[idx, f[active]] <= self.threshold[na]
            node[active] = np.where(go_left, self.left[na], self.right[na])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


def _best_split(X, y, feats, min_leaf):
    """Best variance-reduction split among ``feats``: (gain, feature, threshold)."""
    n = len(y)
    yc = y - y.mean()
    i = np.arange(1, n)
    weight = n / (i * (n - i))
    ok_size = (i >= min_leaf) & (n - i >= min_leaf)
    best = (0.0, -1, 0.0)
    for f in feats:
        order = np.argsort(X[:, f], kind="mergesort")
        xs = X[order, f]
        valid = ok_size & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        cs = np.cumsum(yc[order])[:-1]
        gain = np.where(valid, cs * cs * weight, -1.0)
        k = int(np.argmax(gain))
        if gain[k] > best[0]:
            best = (float(gain[k]), int(f), 0.5 * (xs[k] + xs[k + 1]))
    return best


def _grow_py(X, y, max_depth, min_leaf, n_feats, keys):
    n, p = X.shape
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(np.arange(n), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = node
        yn = y[idx]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(yn.mean()))
        if len(idx) < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        if np.all(yn == yn[0]):
            continue
        feats = np.arange(p) if n_feats >= p else np.sort(np.argsort(keys[node], kind="mergesort")[:n_feats])
        gain, f, thr = _best_split(X[idx], yn, feats, min_leaf)
        if f < 0 or gain <= 1e-12 * float(np.sum((yn - yn.mean()) ** 2)):
            continue
        feature[node] = f
        threshold[node] = thr
        mask = X[idx, f] <= thr
        stack.append((idx[~mask], depth + 1, node, True))
        stack.append((idx[mask], depth + 1, node, False))
    return (
        np.array(feature, dtype=np.intp), np.array(threshold), np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp), np.array(value),
    )


try:
    from numba import njit
except ImportError:  # pragma: no cover - pure numpy fallback
    _grow = _grow_py
else:

    @njit(cache=True)
    def _grow(X, y, max_depth, min_leaf, n_feats, keys):  # pragma: no cover - compiled
        n, p = X.shape
        cap = 2 * n + 1
        feature = np.full(cap, -1, dtype=np.intp)
        threshold = np.zeros(cap)
        left = np.full(cap, -1, dtype=np.intp)
        right = np.full(cap, -1, dtype=np.intp)
        value = np.zeros(cap)
        idx = np.arange(n)
        tmp = np.empty(n, dtype=np.intp)
        st_start = np.empty(cap, dtype=np.intp)
        st_end = np.empty(cap, dtype=np.intp)
        st_depth = np.empty(cap, dtype=np.intp)
        st_parent = np.empty(cap, dtype=np.intp)
        st_right = np.empty(cap, dtype=np.bool_)
        sp = 0
        st_start[0], st_end[0], st_depth[0], st_parent[0], st_right[0] = 0, n, 0, -1, False
        sp = 1
        count = 0
        while sp > 0:
            sp -= 1
            start, end, depth = st_start[sp], st_end[sp], st_depth[sp]
            parent, is_right = st_parent[sp], st_right[sp]
            node = count
            count += 1
            if parent >= 0:
                if is_right:
                    right[parent] = node
                else:
                    left[parent] = node
            m = end - start
            yn = np.empty(m)
            for t in range(m):
                yn[t] = y[idx[start + t]]
            mean = yn.mean()
            value[node] = mean
            if m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
                continue
            constant = True
            for t in range(1, m):
                if yn[t] != yn[0]:
                    constant = False
                    break
            if constant:
                continue
            if n_feats >= p:
                feats = np.arange(p)
            else:
                feats = np.sort(np.argsort(keys[node], kind="mergesort")[:n_feats])
            yc = yn - mean
            sse = 0.0
            for t in range(m):
                sse += yc[t] * yc[t]
            best_gain, best_f, best_thr = 0.0, -1, 0.0
            xs = np.empty(m)
            for f in feats:
                for t in range(m):
                    xs[t] = X[idx[start + t], f]
                order = np.argsort(xs, kind="mergesort")
                cs = 0.0
                for t in range(m - 1):
                    cs += yc[order[t]]
                    i = t + 1
                    if i < min_leaf or m - i < min_leaf:
                        continue
                    a, b = xs[order[t]], xs[order[t + 1]]
                    if not b > a:
                        continue
                    gain = cs * cs * (m / (i * (m - i)))
                    if gain > best_gain:
                        best_gain, best_f, best_thr = gain, f, 0.5 * (a + b)
            if best_f < 0 or best_gain <= 1e-12 * sse:
                continue
            feature[node] = best_f
            threshold[node] = best_thr
            nl = 0
            nr = 0
            for t in range(m):
                r = idx[start + t]
                if X[r, best_f] <= best_thr:
                    idx[start + nl] = r
                    nl += 1
                else:
                    tmp[nr] = r
                    nr += 1
            for t in range(nr):
                idx[start + nl + t] = tmp[t]
            st_start[sp], st_end[sp], st_depth[sp], st_parent[sp], st_right[sp] = start + nl, end, depth + 1, node, True
            sp += 1
            st_start[sp], st_end[sp], st_depth[sp], st_parent[sp], st_right[sp] = start, start + nl, depth + 1, node, False
            sp += 1
        return feature[:count], threshold[:count], left[:count], right[:count], value[:count]


def build_tree(X, y, max_depth, min_leaf, n_feats, rng, compiled: bool = True) -> RegressionTree:
    """Grow one CART tree depth-first.

    Each node's candidate features are the ``n_feats`` smallest entries of a
    row of uniform keys drawn up front, so the compiled and pure-numpy
    growers consume randomness identically.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    keys = rng.random((2 * n + 1, p)) if n_feats < p else np.zeros((1, p))
    depth = -1 if max_depth is None else int(max_depth)
    grow = _grow if compiled else _grow_py
    return RegressionTree(*grow(X, y, depth, int(min_leaf), int(n_feats), keys))


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    config: ForestConfig
    feature_names: tuple[str, ...]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def fit_random_forest(data: RegressionDataset, cfg: ForestConfig | None = None) -> ForestModel:
    """Bagged CART regression trees with random feature subsets at each split.

    Tree ``i`` draws from its own stream spawned off ``cfg.seed``, so the
    forest is identical whatever order the trees are built in.
    """
    cfg = cfg or ForestConfig()
    if data.n < 2:
        raise DataError("a random forest needs at least two samples")
    n_feats = cfg.features_per_split or math.ceil(data.p / 3)
    n_feats = min(n_feats, data.p)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    trees = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        if cfg.bootstrap:
            rows = rng.integers(0, data.n, size=data.n)
            X, y = data.features[rows], data.targets[rows]
        else:
            X, y = data.features, data.targets
        trees.append(build_tree(X, y, cfg.max_depth, cfg.min_leaf, n_feats, rng))
    return ForestModel(tuple(trees), cfg, data.feature_names)


def noise_feature_dataset(n: int = 200, n_noise: int = 3, seed: int = 0, slope: float = 0.5, noise: float = 0.1) -> RegressionDataset:
    """One informative feature plus ``n_noise`` pure-noise features.

    ``y = 1 + slope * x1 + noise * N(0, 1)``; every feature is uniform on
    [0, 10] and independent of the others.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 10.0, size=(n, 1 + n_noise))
    y = 1.0 + slope * X[:, 0] + noise * rng.standard_normal(n)
    names = ("informative",) + tuple(f"noise{i + 1}" for i in range(n_noise))
    return RegressionDataset(X, y, names)
