"""Discrete design spaces, objective declarations and the manifest format.

A manifest is a small JSON document::

    {
      "format": "statdse-manifest",
      "version": 1,
      "parameters": [{"name": "FO4 depth", "levels": [12, 15, 18, 21, 24]}, ...],
      "objectives": [{"name": "bips", "direction": "maximize"}, ...]
    }

``name`` and ``description`` are accepted as optional top-level fields.
Levels must be numeric and strictly ascending.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, ManifestError, OutOfDomainError

MANIFEST_FORMAT = "statdse-manifest"
MANIFEST_VERSION = 1

# spaces up to this size are enumerated instead of rejection-sampled
ENUMERATION_LIMIT = 200_000


class Direction(str, enum.Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"

    @classmethod
    def parse(cls, value: "str | Direction") -> "Direction":
        if isinstance(value, Direction):
            return value
        text = str(value).strip().lower()
        aliases = {"max": "maximize", "min": "minimize"}
        text = aliases.get(text, text)
        try:
            return cls(text)
        except ValueError:
            raise ArgumentError(f"unknown optimization direction {value!r}") from None

    @property
    def sign(self) -> float:
        """+1 for maximize, -1 for minimize; ``sign * value`` is larger-is-better."""
        return 1.0 if self is Direction.MAXIMIZE else -1.0

    def better(self, a: float, b: float) -> bool:
        """True if ``a`` is strictly better than ``b``."""
        return a > b if self is Direction.MAXIMIZE else a < b


@dataclass(frozen=True)
class Parameter:
    name: str
    levels: tuple[float, ...]


@dataclass(frozen=True)
class Objective:
    name: str
    direction: Direction = Direction.MAXIMIZE


class DesignSpace:
    """Ordered collection of parameters, each with a finite sorted domain.

    Points are plain float vectors holding raw level values in parameter
    order. ``key(x)`` turns a point into the canonical hashable tuple used by
    caches and visited sets.
    """

    def __init__(self, parameters: Iterable[Parameter | tuple[str, Sequence[float]]]):
        params = []
        for p in parameters:
            if not isinstance(p, Parameter):
                name, levels = p
                p = Parameter(str(name), tuple(float(v) for v in levels))
            params.append(p)
        if not params:
            raise ManifestError("design space has no parameters")
        seen = set()
        for i, p in enumerate(params):
            if p.name in seen:
                raise ManifestError(f"parameters[{i}]: duplicate parameter name {p.name!r}")
            seen.add(p.name)
            if not p.levels:
                raise ManifestError(f"parameters[{i}] ({p.name}): empty domain")
            if any(not math.isfinite(v) for v in p.levels):
                raise ManifestError(f"parameters[{i}] ({p.name}): non-finite level")
            if any(b <= a for a, b in zip(p.levels, p.levels[1:])):
                raise ManifestError(
                    f"parameters[{i}] ({p.name}): levels must be strictly ascending"
                )
        self.parameters: tuple[Parameter, ...] = tuple(params)
        self.lower = np.array([p.levels[0] for p in params])
        self.upper = np.array([p.levels[-1] for p in params])
        self._level_index = [{v: j for j, v in enumerate(p.levels)} for p in params]

    def __repr__(self) -> str:
        return f"DesignSpace(p={self.dim}, cardinality={self.cardinality})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DesignSpace) and self.parameters == other.parameters

    def __hash__(self) -> int:
        return hash(self.parameters)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def dim(self) -> int:
        return len(self.parameters)

    @property
    def cardinality(self) -> int:
        return math.prod(len(p.levels) for p in self.parameters)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower.copy(), self.upper.copy()

    def normalize(self, X) -> np.ndarray:
        """Min-max map raw points into the unit hypercube."""
        return normalize(X, self.lower, self.upper)

    def key(self, x) -> tuple[float, ...]:
        """Canonical key of an in-domain point; raises OutOfDomainError otherwise."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise ArgumentError(f"point has {x.size} values, design space has {self.dim} parameters")
        key = tuple(float(v) for v in x)
        for i, v in enumerate(key):
            if v not in self._level_index[i]:
                raise OutOfDomainError(
                    f"value {v!r} is not a level of parameter {self.parameters[i].name!r}"
                )
        return key

    def contains(self, x) -> bool:
        try:
            self.key(x)
        except (OutOfDomainError, ArgumentError):
            return False
        return True

    def level_indices(self, x) -> tuple[int, ...]:
        key = self.key(x)
        return tuple(self._level_index[i][v] for i, v in enumerate(key))

    def point(self, indices: Sequence[int]) -> np.ndarray:
        return np.array([p.levels[j] for p, j in zip(self.parameters, indices)], dtype=float)

    def enumerate(self) -> np.ndarray:
        """All points, in lexicographic level order. Only for small spaces."""
        if self.cardinality > 50 * ENUMERATION_LIMIT:
            raise ArgumentError(f"design space too large to enumerate ({self.cardinality} points)")
        grids = [p.levels for p in self.parameters]
        return np.array(list(itertools.product(*grids)), dtype=float).reshape(-1, self.dim)

    def sample(
        self,
        rng: np.random.Generator,
        n: int,
        exclude: "set[tuple[float, ...]] | None" = None,
    ) -> np.ndarray:
        """Draw up to ``n`` distinct points uniformly, skipping keys in ``exclude``.

        Returns fewer than ``n`` rows only when the space runs out of
        unexcluded points.
        """
        exclude = exclude or set()
        remaining = self.cardinality - len(exclude)
        if n <= 0 or remaining <= 0:
            return np.empty((0, self.dim))
        if self.cardinality <= ENUMERATION_LIMIT or remaining <= 4 * n:
            allpts = self.enumerate()
            if exclude:
                mask = np.array([tuple(row) not in exclude for row in allpts.tolist()], dtype=bool)
                allpts = allpts[mask]
            if len(allpts) <= n:
                return allpts[rng.permutation(len(allpts))]
            idx = rng.choice(len(allpts), size=n, replace=False)
            return allpts[idx]
        sizes = np.array([len(p.levels) for p in self.parameters])
        levels = [np.asarray(p.levels) for p in self.parameters]
        chosen: dict[tuple[float, ...], None] = {}
        while len(chosen) < n:
            draw = rng.integers(0, sizes, size=(2 * (n - len(chosen)) + 8, self.dim))
            for row in draw:
                key = tuple(float(levels[i][j]) for i, j in enumerate(row))
                if key in exclude or key in chosen:
                    continue
                chosen[key] = None
                if len(chosen) == n:
                    break
        return np.array(list(chosen), dtype=float)


def normalize(X, lower, upper) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if X.shape[1] != lower.size:
        raise ArgumentError(f"points have dimension {X.shape[1]}, expected {lower.size}")
    span = upper - lower
    span = np.where(span > 0, span, 1.0)
    return (X - lower) / span


@dataclass(frozen=True)
class Manifest:
    space: DesignSpace
    objectives: tuple[Objective, ...]
    name: str = ""
    description: str = ""

    @property
    def objective_names(self) -> list[str]:
        return [o.name for o in self.objectives]

    def objective(self, name: str) -> Objective:
        for o in self.objectives:
            if o.name == name:
                return o
        raise ArgumentError(f"manifest has no objective named {name!r}")

    def to_dict(self) -> dict:
        out = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION}
        if self.name:
            out["name"] = self.name
        if self.description:
            out["description"] = self.description
        out["parameters"] = [
            {"name": p.name, "levels": [format_number(v, as_json=True) for v in p.levels]}
            for p in self.space.parameters
        ]
        out["objectives"] = [{"name": o.name, "direction": o.direction.value} for o in self.objectives]
        return out


_TOP_FIELDS = {"format", "version", "name", "description", "parameters", "objectives"}


def parse_manifest(doc: dict, source: str = "<manifest>") -> Manifest:
    if not isinstance(doc, dict):
        raise ManifestError(f"{source}: top level must be an object")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ManifestError(f"{source}: unknown field(s) {sorted(unknown)}")
    if doc.get("format", MANIFEST_FORMAT) != MANIFEST_FORMAT:
        raise ManifestError(f"{source}: format must be {MANIFEST_FORMAT!r}")
    if doc.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
        raise ManifestError(f"{source}: unsupported manifest version {doc.get('version')!r}")
    raw_params = doc.get("parameters")
    if not isinstance(raw_params, list) or not raw_params:
        raise ManifestError(f"{source}: 'parameters' must be a non-empty list")
    params = []
    for i, block in enumerate(raw_params):
        where = f"{source}: parameters[{i}]"
        if not isinstance(block, dict):
            raise ManifestError(f"{where}: must be an object")
        extra = set(block) - {"name", "levels"}
        if extra:
            raise ManifestError(f"{where}: unknown field(s) {sorted(extra)}")
        name = block.get("name")
        if not isinstance(name, str) or not name:
            raise ManifestError(f"{where}: 'name' must be a non-empty string")
        levels = block.get("levels")
        if not isinstance(levels, list):
            raise ManifestError(f"{where} ({name}): 'levels' must be a list")
        if not levels:
            raise ManifestError(f"{where} ({name}): empty domain")
        for j, v in enumerate(levels):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ManifestError(f"{where}.levels[{j}]: level must be a number, got {v!r}")
        params.append(Parameter(name, tuple(float(v) for v in levels)))
    try:
        space = DesignSpace(params)
    except ManifestError as exc:
        raise ManifestError(f"{source}: {exc}") from None

    objectives = []
    names = set()
    for i, block in enumerate(doc.get("objectives", [])):
        where = f"{source}: objectives[{i}]"
        if not isinstance(block, dict):
            raise ManifestError(f"{where}: must be an object")
        extra = set(block) - {"name", "direction"}
        if extra:
            raise ManifestError(f"{where}: unknown field(s) {sorted(extra)}")
        name = block.get("name")
        if not isinstance(name, str) or not name:
            raise ManifestError(f"{where}: 'name' must be a non-empty string")
        if name in names or name in space.names:
            raise ManifestError(f"{where}: duplicate name {name!r}")
        names.add(name)
        try:
            direction = Direction.parse(block.get("direction", "maximize"))
        except ArgumentError as exc:
            raise ManifestError(f"{where}: {exc}") from None
        objectives.append(Objective(name, direction))
    return Manifest(space, tuple(objectives), doc.get("name", ""), doc.get("description", ""))


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    return parse_manifest(doc, str(path))


def load_design_space(path) -> DesignSpace:
    return load_manifest(path).space


def save_manifest(manifest: Manifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")


def format_number(v: float, as_json: bool = False):
    """Shortest round-trip decimal text; integral values print without '.0'."""
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return int(v) if as_json else str(int(v))
    return v if as_json else repr(v)
