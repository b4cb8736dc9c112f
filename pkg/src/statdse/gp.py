"""Gaussian-process surrogates over normalized design points.

Inputs are min-max normalized to the unit hypercube and outputs are
z-scored before fitting; the kernel has unit signal variance, so the
objective's scale lives entirely in ``y_std``. Means and variances returned
by :func:`posterior` are on the original objective scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from .errors import ArgumentError, ConfigurationError, DataError, FormatError, NumericalError
from .space import Direction, normalize

DEFAULT_NOISE_VARIANCE = 1e-6
JITTER_START = 1e-8
JITTER_MAX = 1e-2

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)

_KERNEL_ALIASES = {
    "se": ("se", None),
    "squared_exponential": ("se", None),
    "matern32": ("matern", 1.5),
    "matern52": ("matern", 2.5),
}


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel with unit signal variance.

    ``family`` is ``"se"`` or ``"matern"``; ``nu`` is required for Matern and
    must be 1.5 or 2.5.
    """

    family: str = "se"
    length_scale: float = 1.0
    nu: float | None = None

    def __post_init__(self):
        if self.family not in ("se", "matern"):
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        if not (self.length_scale > 0 and math.isfinite(self.length_scale)):
            raise ConfigurationError(f"length scale must be positive, got {self.length_scale!r}")
        if self.family == "matern":
            if self.nu not in (1.5, 2.5):
                raise ConfigurationError(f"Matern smoothness must be 3/2 or 5/2, got {self.nu!r}")
        elif self.nu is not None:
            raise ConfigurationError("nu only applies to the Matern family")

    @classmethod
    def from_name(cls, name: str, length_scale: float = 1.0) -> "KernelSpec":
        """``se``, ``matern32`` or ``matern52``."""
        try:
            family, nu = _KERNEL_ALIASES[name.lower()]
        except KeyError:
            raise ConfigurationError(
                f"unknown kernel {name!r}; choose from se, matern32, matern52"
            ) from None
        return cls(family, float(length_scale), nu)

    @property
    def name(self) -> str:
        if self.family == "se":
            return "se"
        return "matern32" if self.nu == 1.5 else "matern52"

    def from_sqdist(self, d2: np.ndarray) -> np.ndarray:
        d2 = np.asarray(d2, dtype=float)
        if self.family == "se":
            return np.exp(-0.5 * d2 / self.length_scale**2)
        r = np.sqrt(d2) / self.length_scale
        if self.nu == 1.5:
            s = SQRT3 * r
            return (1.0 + s) * np.exp(-s)
        s = SQRT5 * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)


def _as_points(A, name: str = "points") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise ArgumentError(f"{name} must be a vector or a 2-D array")
    return A


def kernel_eval(kernel: KernelSpec, x, x2) -> float:
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise ArgumentError(f"dimension mismatch: {x.size} vs {x2.size}")
    d2 = float(np.sum((x - x2) ** 2))
    return float(kernel.from_sqdist(d2))


def build_covariance(kernel: KernelSpec, A, B=None) -> np.ndarray:
    """Matrix of ``kernel_eval(kernel, A[i], B[j])``; ``B`` defaults to ``A``."""
    A = _as_points(A, "A")
    B = A if B is None else _as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ArgumentError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return kernel.from_sqdist(cdist(A, B, "sqeuclidean"))


def cholesky_with_jitter(M: np.ndarray, base: float | None = None) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``M + jitter*I`` with escalating jitter.

    ``M`` itself is tried first. If that fails, jitter starts at
    ``1e-8 * trace(M)/n`` and grows tenfold up to ``1e-2 * trace(M)/n``.
    Returns the factor and the jitter used.
    """
    n = M.shape[0]
    try:
        L = np.linalg.cholesky(M)
        if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
            return L, 0.0
    except np.linalg.LinAlgError:
        pass
    scale = np.trace(M) / n if base is None else base
    if not scale > 0:
        scale = 1e-300
    factor = JITTER_START
    while factor <= JITTER_MAX * (1 + 1e-9):
        jitter = factor * scale
        try:
            L = np.linalg.cholesky(M + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            factor *= 10.0
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
        factor *= 10.0
    raise NumericalError(f"matrix of size {n} is not positive definite even with jitter {JITTER_MAX:g}*trace/n")


@dataclass(frozen=True, eq=False)
class GPModel:
    """A fitted, immutable GP.

    ``X_train`` is normalized to the unit box defined by ``lower``/``upper``,
    ``y_train`` is standardized; the raw copies are kept for persistence and
    for callers that need the original data.
    """

    X_train: np.ndarray
    y_train: np.ndarray
    kernel: KernelSpec
    noise_variance: float
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float
    direction: Direction
    lower: np.ndarray
    upper: np.ndarray
    jitter: float
    X_raw: np.ndarray
    y_raw: np.ndarray
    name: str = "objective"

    @property
    def dim(self) -> int:
        return self.X_train.shape[1]

    @property
    def n_train(self) -> int:
        return self.X_train.shape[0]

    def normalize(self, X) -> np.ndarray:
        return normalize(X, self.lower, self.upper)


def _dedupe(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    groups: dict[tuple, list[int]] = {}
    for i, row in enumerate(X.tolist()):
        groups.setdefault(tuple(row), []).append(i)
    if len(groups) == len(X):
        return X, y
    conflicting = 0
    Xs, ys = [], []
    for rows in groups.values():
        vals = y[rows]
        if np.any(vals != vals[0]):
            conflicting += 1
        Xs.append(X[rows[0]])
        ys.append(vals.mean())
    if conflicting:
        warnings.warn(
            f"{conflicting} duplicated design point(s) had conflicting observations; averaged",
            stacklevel=3,
        )
    return np.array(Xs), np.array(ys)


def _assemble(X_raw, y_raw, kernel, noise_variance, direction, lower, upper, y_mean, y_std, name, jitter=None):
    Xn = normalize(X_raw, lower, upper)
    z = (y_raw - y_mean) / y_std
    K = build_covariance(kernel, Xn)
    n = len(z)
    M = K + noise_variance * np.eye(n)
    if jitter is None:
        L, jitter = cholesky_with_jitter(M, base=np.trace(K) / n)
    else:
        try:
            L = np.linalg.cholesky(M + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            raise NumericalError("stored jitter no longer yields a positive definite matrix") from None
    alpha = cho_solve((L, True), z)
    for arr in (Xn, z, L, alpha, X_raw, y_raw, lower, upper):
        arr.setflags(write=False)
    return GPModel(
        X_train=Xn, y_train=z, kernel=kernel, noise_variance=float(noise_variance),
        chol=L, alpha=alpha, y_mean=float(y_mean), y_std=float(y_std),
        direction=direction, lower=lower, upper=upper, jitter=float(jitter),
        X_raw=X_raw, y_raw=y_raw, name=name,
    )


def fit_gp(
    X,
    y,
    kernel: KernelSpec | None = None,
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
    direction: Direction | str = Direction.MAXIMIZE,
    bounds: tuple | None = None,
    name: str = "objective",
) -> GPModel:
    """Fit a GP with fixed kernel hyperparameters.

    Parameters
    ----------
    X : (n, p) array of raw design points.
    y : (n,) observations.
    bounds : (lower, upper) used for min-max normalization, normally the
        design-space extremes. Defaults to the data range.

    Duplicate rows are merged; conflicting observations are averaged with a
    warning.
    """
    kernel = kernel or KernelSpec()
    direction = Direction.parse(direction)
    X = _as_points(X, "X").copy()
    y = np.asarray(y, dtype=float).ravel().copy()
    if len(X) != len(y):
        raise ArgumentError(f"X has {len(X)} rows but y has {len(y)} values")
    if len(y) == 0:
        raise ArgumentError("cannot fit a GP on zero points")
    if not np.all(np.isfinite(y)):
        raise DataError("observations contain non-finite values")
    if not np.all(np.isfinite(X)):
        raise DataError("design points contain non-finite values")
    if not (noise_variance >= 0 and math.isfinite(noise_variance)):
        raise ConfigurationError(f"noise variance must be nonnegative, got {noise_variance!r}")
    X, y = _dedupe(X, y)
    if bounds is None:
        lower, upper = X.min(axis=0), X.max(axis=0)
    else:
        lower = np.asarray(bounds[0], dtype=float).ravel().copy()
        upper = np.asarray(bounds[1], dtype=float).ravel().copy()
        if lower.size != X.shape[1] or upper.size != X.shape[1]:
            raise ArgumentError("normalization bounds do not match the point dimension")
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if not y_std > 0:
        y_std = 1.0
    return _assemble(X, y, kernel, noise_variance, direction, lower, upper, y_mean, y_std, name)


def _cross(gp: GPModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    Xq = _as_points(Xq, "queries")
    if Xq.shape[1] != gp.dim:
        raise ArgumentError(f"query dimension {Xq.shape[1]} does not match model dimension {gp.dim}")
    Xn = gp.normalize(Xq)
    return Xn, build_covariance(gp.kernel, gp.X_train, Xn)


def posterior_mean(gp: GPModel, Xq) -> np.ndarray:
    """Posterior mean only; skips the triangular solve needed for variances."""
    _, Ks = _cross(gp, Xq)
    return gp.y_mean + gp.y_std * (Ks.T @ gp.alpha)


def posterior(gp: GPModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent-function variance at each query."""
    _, Ks = _cross(gp, Xq)
    mean = gp.y_mean + gp.y_std * (Ks.T @ gp.alpha)
    V = solve_triangular(gp.chol, Ks, lower=True, check_finite=False)
    var = 1.0 - np.einsum("ij,ij->j", V, V)
    return mean, gp.y_std**2 * np.maximum(var, 0.0)


def posterior_joint(gp: GPModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and full symmetric covariance over the query set.

    The diagonal is clamped at zero exactly as in :func:`posterior`. Callers
    that factorize the result should go through :func:`cholesky_with_jitter`.
    """
    Xn, Ks = _cross(gp, Xq)
    mean = gp.y_mean + gp.y_std * (Ks.T @ gp.alpha)
    V = solve_triangular(gp.chol, Ks, lower=True, check_finite=False)
    C = build_covariance(gp.kernel, Xn) - V.T @ V
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, np.maximum(np.diag(C), 0.0))
    return mean, gp.y_std**2 * C


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

MODEL_MAGIC = "statdse-gp"
MODEL_VERSION = 1


def _fmt(v: float) -> str:
    return repr(float(v))


def save_gp(gp: GPModel, path) -> None:
    """Write the model as a line-oriented text file (see README for layout)."""
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"name {gp.name}",
        f"direction {gp.direction.value}",
        f"kernel {gp.kernel.family}",
        f"length_scale {_fmt(gp.kernel.length_scale)}",
        f"nu {'-' if gp.kernel.nu is None else _fmt(gp.kernel.nu)}",
        f"noise_variance {_fmt(gp.noise_variance)}",
        f"jitter {_fmt(gp.jitter)}",
        f"dimension {gp.dim}",
        "lower " + " ".join(_fmt(v) for v in gp.lower),
        "upper " + " ".join(_fmt(v) for v in gp.upper),
        f"y_mean {_fmt(gp.y_mean)}",
        f"y_std {_fmt(gp.y_std)}",
        f"n_train {gp.n_train}",
        "data",
    ]
    for x, y in zip(gp.X_raw, gp.y_raw):
        lines.append(" ".join(_fmt(v) for v in x) + " " + _fmt(y))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, path, text: str):
        self.path = path
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what: str) -> tuple[int, str]:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line and not line.startswith("#"):
                return self.pos, line
        raise FormatError(f"{self.path}: unexpected end of file while reading {what}")

    def field(self, name: str) -> tuple[int, str]:
        lineno, line = self.next(f"field '{name}'")
        head, _, rest = line.partition(" ")
        if head != name:
            raise FormatError(f"{self.path}:{lineno}: expected field '{name}', found '{head}'")
        return lineno, rest.strip()

    def floats(self, name: str, count: int | None = None) -> np.ndarray:
        lineno, rest = self.field(name)
        try:
            vals = np.array([float(t) for t in rest.split()], dtype=float)
        except ValueError:
            raise FormatError(f"{self.path}:{lineno}: field '{name}' must be numeric") from None
        if count is not None and vals.size != count:
            raise FormatError(
                f"{self.path}:{lineno}: field '{name}' has {vals.size} values, dimension header says {count}"
            )
        if not np.all(np.isfinite(vals)):
            raise FormatError(f"{self.path}:{lineno}: field '{name}' has non-finite values")
        return vals


def load_gp(path) -> GPModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read model file {path}: {exc.strerror}") from None
    r = _LineReader(path, text)
    lineno, first = r.next("header")
    parts = first.split()
    if len(parts) != 2 or parts[0] != MODEL_MAGIC:
        raise FormatError(f"{path}:{lineno}: not a {MODEL_MAGIC} model file")
    if parts[1] != str(MODEL_VERSION):
        raise FormatError(f"{path}:{lineno}: unsupported model version {parts[1]}")
    _, name = r.field("name")
    lineno, direction = r.field("direction")
    try:
        direction = Direction.parse(direction)
    except ArgumentError:
        raise FormatError(f"{path}:{lineno}: unknown direction {direction!r}") from None
    _, family = r.field("kernel")
    (length_scale,) = r.floats("length_scale", 1)
    lineno, nu_text = r.field("nu")
    try:
        nu = None if nu_text == "-" else float(nu_text)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: field 'nu' must be numeric or '-'") from None
    try:
        kernel = KernelSpec(family, float(length_scale), nu)
    except ConfigurationError as exc:
        raise FormatError(f"{path}: kernel block: {exc}") from None
    (noise,) = r.floats("noise_variance", 1)
    (jitter,) = r.floats("jitter", 1)
    lineno, dim_text = r.field("dimension")
    if not dim_text.isdigit() or int(dim_text) < 1:
        raise FormatError(f"{path}:{lineno}: dimension must be a positive integer")
    dim = int(dim_text)
    lower = r.floats("lower", dim)
    upper = r.floats("upper", dim)
    (y_mean,) = r.floats("y_mean", 1)
    (y_std,) = r.floats("y_std", 1)
    lineno, n_text = r.field("n_train")
    if not n_text.isdigit() or int(n_text) < 1:
        raise FormatError(f"{path}:{lineno}: n_train must be a positive integer")
    n = int(n_text)
    r.field("data")
    rows = np.empty((n, dim + 1))
    for i in range(n):
        lineno, line = r.next(f"data row {i + 1}")
        toks = line.split()
        if len(toks) != dim + 1:
            raise FormatError(
                f"{path}:{lineno}: data row has {len(toks)} values, expected {dim + 1} (dimension {dim} + y)"
            )
        try:
            rows[i] = [float(t) for t in toks]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric data value") from None
    lineno, line = r.next("end marker")
    if line != "end":
        raise FormatError(f"{path}:{lineno}: expected 'end' after {n} data rows")
    if not np.all(np.isfinite(rows)):
        raise FormatError(f"{path}: data rows contain non-finite values")
    if not (y_std > 0 and noise >= 0 and jitter >= 0):
        raise FormatError(f"{path}: y_std must be positive; noise_variance and jitter nonnegative")
    return _assemble(
        rows[:, :dim].copy(), rows[:, dim].copy(), kernel, float(noise), direction,
        lower, upper, float(y_mean), float(y_std), name, jitter=float(jitter),
    )
