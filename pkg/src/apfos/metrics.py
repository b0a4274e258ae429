"""Relative error norms on the evaluation grid and 1D slice extraction."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

__all__ = ["ErrorTriple", "errors", "abs_norm", "SliceWarning", "Slice", "slice_grid", "nearest_node"]


@dataclass(frozen=True)
class ErrorTriple:
    E1: float
    E2: float
    Einf: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.E1, self.E2, self.Einf)


_ORDS = {1: 1, 2: 2, "inf": np.inf}


def abs_norm(a, ord=2) -> float:
    """Plain vector norm of a flattened array (ord 1, 2 or "inf")."""
    a = np.ravel(np.asarray(a, dtype=np.float64))
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return scale
    # scaled so tiny or huge entries neither underflow nor overflow when squared
    return scale * float(np.linalg.norm(a / scale, _ORDS[ord]))


def errors(pred, exact) -> ErrorTriple:
    """Relative l1, l2 and max-norm errors of ``pred`` against ``exact``."""
    pred = np.ravel(np.asarray(pred, dtype=np.float64))
    exact = np.ravel(np.asarray(exact, dtype=np.float64))
    if pred.shape != exact.shape:
        raise ValueError(f"grid size mismatch: {pred.size} predicted vs {exact.size} exact values")
    diff = pred - exact
    out = []
    for ord in (1, 2, "inf"):
        den = abs_norm(exact, ord)
        if den == 0.0:
            raise ValueError(f"exact solution has zero {ord}-norm; relative error undefined")
        out.append(abs_norm(diff, ord) / den)
    return ErrorTriple(*out)


class SliceWarning(UserWarning):
    """A slice constraint did not fall on a grid node."""


def nearest_node(value: float, n: int) -> tuple[int, bool]:
    """Index of the node ``i/(n-1)`` closest to ``value``; ties go to the lower index.

    Returns ``(index, exact)`` where ``exact`` tells whether ``value`` is a node
    up to rounding.
    """
    if n < 2:
        raise ValueError("grid needs at least 2 nodes per axis")
    pos = float(value) * (n - 1)
    i = math.ceil(pos - 0.5)  # round half down
    i = min(max(i, 0), n - 1)
    return i, abs(pos - round(pos)) < 1e-9


@dataclass(frozen=True)
class Slice:
    axis: int
    coord: np.ndarray
    pred: np.ndarray
    exact: np.ndarray
    fixed: dict  # axis -> (requested, used)

    def rows(self):
        return list(zip(self.coord.tolist(), self.pred.tolist(), self.exact.tolist()))


def slice_grid(pred, exact, shape: Sequence[int], constraints: Mapping[int, float]) -> Slice:
    """1D profile of two grid fields along the single unconstrained axis.

    ``pred``/``exact`` are flat arrays in the row-major order of
    :func:`apfos.problem.eval_grid` with the given ``shape``.  ``constraints``
    maps axis index to coordinate; every axis but one must be fixed.
    Off-node coordinates snap to the nearest node and emit a
    :class:`SliceWarning`.
    """
    shape = tuple(int(s) for s in shape)
    free = [a for a in range(len(shape)) if a not in constraints]
    if len(free) != 1:
        raise ValueError(f"constraints must leave exactly one free axis, got free axes {free}")
    if any(a < 0 or a >= len(shape) for a in constraints):
        raise ValueError(f"constraint axis out of range for a {len(shape)}-d grid")
    P = np.asarray(pred, dtype=np.float64).reshape(shape)
    E = np.asarray(exact, dtype=np.float64).reshape(shape)
    index: list = [slice(None)] * len(shape)
    fixed = {}
    for a, v in sorted(constraints.items()):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"slice coordinate {v} outside [0, 1]")
        i, on_node = nearest_node(v, shape[a])
        used = i / (shape[a] - 1)
        if not on_node:
            warnings.warn(
                f"axis {a}: {v} is not a grid node, using nearest node {used:.6g} (index {i})",
                SliceWarning,
                stacklevel=2,
            )
        index[a] = i
        fixed[a] = (float(v), used)
    ax = free[0]
    coord = np.linspace(0.0, 1.0, shape[ax])
    return Slice(ax, coord, P[tuple(index)].copy(), E[tuple(index)].copy(), fixed)
