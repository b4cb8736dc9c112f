"""Dominance and exact Pareto-frontier extraction."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DataError
from .space import Direction, format_number


class Provenance(str, enum.Enum):
    EVALUATED = "evaluated"
    SURROGATE = "surrogate_predicted"


@dataclass(frozen=True)
class ObjectivePoint:
    params: tuple[float, ...]
    values: tuple[float, ...]
    provenance: Provenance = Provenance.EVALUATED

    def __post_init__(self):
        values = tuple(float(v) for v in np.asarray(self.values, dtype=float).ravel())
        if not all(np.isfinite(values)):
            raise DataError(f"objective values must be finite, got {values}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "params", tuple(float(v) for v in np.asarray(self.params, dtype=float).ravel()))
        object.__setattr__(self, "provenance", Provenance(self.provenance))


def _signs(directions: Sequence, m: int) -> np.ndarray:
    if len(directions) != m:
        raise ArgumentError(f"{len(directions)} directions for {m} objectives")
    return np.array([Direction.parse(d).sign for d in directions])


def dominates(a: ObjectivePoint, b: ObjectivePoint, directions: Sequence) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    if len(a.values) != len(b.values):
        raise ArgumentError(f"objective count mismatch: {len(a.values)} vs {len(b.values)}")
    s = _signs(directions, len(a.values))
    va = s * np.array(a.values)
    vb = s * np.array(b.values)
    return bool(np.all(va >= vb) and np.any(va > vb))


def nondominated_mask(values, directions: Sequence) -> np.ndarray:
    """Boolean mask of rows not dominated by any other row. O(n^2) comparisons."""
    V = np.atleast_2d(np.asarray(values, dtype=float))
    V = V * _signs(directions, V.shape[1])
    keep = np.ones(len(V), dtype=bool)
    for i in range(len(V)):
        ge = np.all(V >= V[i], axis=1)
        gt = np.any(V > V[i], axis=1)
        if np.any(ge & gt):
            keep[i] = False
    return keep


def pareto_frontier(points: Sequence[ObjectivePoint], directions: Sequence) -> list[ObjectivePoint]:
    """Non-dominated subset sorted by the first objective (ascending).

    Points sharing an objective vector collapse to the first one in input
    order. Mixing evaluated and surrogate-predicted points is refused.
    """
    if not points:
        raise ArgumentError("pareto_frontier needs at least one point")
    provenances = {p.provenance for p in points}
    if len(provenances) > 1:
        raise ArgumentError("refusing a mixed-provenance frontier (evaluated and surrogate-predicted points)")
    m = len(points[0].values)
    if any(len(p.values) != m for p in points):
        raise ArgumentError("all points must have the same number of objectives")
    unique: dict[tuple[float, ...], ObjectivePoint] = {}
    for p in points:
        unique.setdefault(p.values, p)
    reps = list(unique.values())
    mask = nondominated_mask([p.values for p in reps], directions)
    front = [p for p, keep in zip(reps, mask) if keep]
    return sorted(front, key=lambda p: p.values)


def write_frontier_csv(path, front: Sequence[ObjectivePoint], objective_names, parameter_names) -> None:
    with Path(path).open("w", newline="") as handle:
        w = csv.writer(handle, lineterminator="\n")
        w.writerow([*objective_names, *parameter_names, "provenance"])
        for p in front:
            w.writerow(
                [format_number(v) for v in p.values]
                + [format_number(v) for v in p.params]
                + [p.provenance.value]
            )
