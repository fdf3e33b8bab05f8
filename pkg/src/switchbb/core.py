"""Shared domain types for the certified regression solvers.

Datasets, axis-aligned search boxes, switching-model parameter vectors,
solver reports and loss descriptors.  Everything here is an immutable value
after construction, so instances can be shared freely across worker threads.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "BoxRegion",
    "SwitchingModel",
    "SolveReport",
    "LossKind",
    "TERMINATION_KINDS",
    "canonicalize",
    "residual",
    "split_longest",
    "load_dataset_csv",
    "save_dataset_csv",
]

TERMINATION_KINDS = ("gap_tolerance", "absolute_gap", "node_limit", "time_limit")


@dataclass(frozen=True, eq=False)
class Dataset:
    """N regression rows (x_i, y_i) with optional ground truth attached.

    ``X`` has shape (N, d), ``y`` shape (N,).  ``true_labels`` holds 1-based
    mode indices, ``true_params`` is (n_modes, d), and ``outlier_mask`` flags
    corrupted rows.  ``noise_std`` records the generator's noise level so
    error-tube rules such as eps = 1.5 sigma stay reproducible.
    """

    X: np.ndarray
    y: np.ndarray
    true_labels: np.ndarray | None = None
    true_params: np.ndarray | None = None
    outlier_mask: np.ndarray | None = None
    noise_std: float | None = None

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} regressors but {y.shape[0]} targets")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("need N >= 1 points of dimension d >= 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.true_labels is not None:
            q = np.asarray(self.true_labels, dtype=int).ravel()
            if q.shape[0] != X.shape[0]:
                raise ValueError("one label per data point required")
            if q.size and q.min() < 1:
                raise ValueError("mode labels are 1-based")
            object.__setattr__(self, "true_labels", q)
        if self.true_params is not None:
            theta = np.atleast_2d(np.asarray(self.true_params, dtype=float))
            if theta.shape[1] != X.shape[1]:
                raise ValueError("true parameter dimension mismatch")
            if self.true_labels is not None and self.true_labels.max() > theta.shape[0]:
                raise ValueError("label exceeds the number of true modes")
            object.__setattr__(self, "true_params", theta)
        if self.outlier_mask is not None:
            mask = np.asarray(self.outlier_mask, dtype=bool).ravel()
            if mask.shape[0] != X.shape[0]:
                raise ValueError("one outlier flag per data point required")
            object.__setattr__(self, "outlier_mask", mask)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @cached_property
    def x_neg(self) -> np.ndarray:
        """Entrywise negative part of X, cached for bracket evaluation."""
        return np.minimum(self.X, 0.0)

    @cached_property
    def x_pos(self) -> np.ndarray:
        """Entrywise positive part of X, cached for bracket evaluation."""
        return np.maximum(self.X, 0.0)

    def subset(self, idx) -> "Dataset":
        """Row subset as a new dataset (ground truth carried along)."""
        idx = np.asarray(idx)
        return Dataset(
            self.X[idx],
            self.y[idx],
            None if self.true_labels is None else self.true_labels[idx],
            self.true_params,
            None if self.outlier_mask is None else self.outlier_mask[idx],
            self.noise_std,
        )


@dataclass(frozen=True, eq=False)
class BoxRegion:
    """Axis-aligned hyperrectangle [lower, upper], the search unit."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("box corner dimensions differ")
        if lo.size < 1:
            raise ValueError("box must have dimension >= 1")
        if not np.all(lo <= hi):
            raise ValueError("box requires lower <= upper entrywise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, point, atol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float).ravel()
        return bool(np.all(p >= self.lower - atol) and np.all(p <= self.upper + atol))

    def mode_bounds(self, j: int, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Corner views of the j-th length-d subvector block (0-based j)."""
        sl = slice(j * d, (j + 1) * d)
        return self.lower[sl], self.upper[sl]

    def split_at(self, k: int) -> tuple["BoxRegion", "BoxRegion"]:
        """Bisect coordinate k, returning the lower and upper halves."""
        mid = 0.5 * (self.lower[k] + self.upper[k])
        hi1 = self.upper.copy()
        hi1[k] = mid
        lo2 = self.lower.copy()
        lo2[k] = mid
        return BoxRegion(self.lower, hi1), BoxRegion(lo2, self.upper)


def split_longest(box: BoxRegion) -> tuple[BoxRegion, BoxRegion]:
    """Bisect the longest side (first such side on ties)."""
    widths = box.width()
    k = int(np.argmax(widths))
    if widths[k] <= 0.0:
        raise ValueError("cannot split a zero-volume box")
    return box.split_at(k)


@dataclass(frozen=True, eq=False)
class SwitchingModel:
    """n linear submodels stored as one concatenated parameter vector."""

    n: int
    w: np.ndarray

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one mode")
        w = np.asarray(self.w, dtype=float).ravel()
        if w.size % self.n != 0 or w.size == 0:
            raise ValueError(f"parameter vector of size {w.size} does not split into {self.n} modes")
        object.__setattr__(self, "w", w)

    @property
    def d(self) -> int:
        return self.w.size // self.n

    @property
    def modes(self) -> np.ndarray:
        """(n, d) view of the per-mode parameter vectors."""
        return self.w.reshape(self.n, self.d)

    @classmethod
    def from_modes(cls, modes) -> "SwitchingModel":
        modes = np.atleast_2d(np.asarray(modes, dtype=float))
        return cls(modes.shape[0], modes.ravel())


def canonicalize(model: SwitchingModel) -> SwitchingModel:
    """Reorder submodels so their first coordinates are nondecreasing.

    The switching cost is invariant under mode permutations, so this picks a
    canonical representative.  The sort is stable: equal first coordinates
    keep their relative order.
    """
    first = model.modes[:, 0]
    order = np.argsort(first, kind="stable")
    if np.array_equal(order, np.arange(model.n)):
        return model
    return SwitchingModel(model.n, model.modes[order].ravel())


def residual(point_index: int, params: np.ndarray, data: Dataset) -> float:
    """Signed error y_i - params . x_i of one submodel at one point."""
    params = np.asarray(params, dtype=float).ravel()
    if params.size != data.d:
        raise ValueError(f"parameter dimension {params.size} != data dimension {data.d}")
    return float(data.y[point_index] - data.X[point_index] @ params)


@dataclass(eq=False)
class SolveReport:
    """Optimality certificate: incumbent plus global bounds and search counters."""

    best_point: np.ndarray
    upper: float
    lower: float
    relative_gap: float
    iterations: int
    boxes_explored: int
    boxes_pruned: int
    wall_time: float
    terminated_by: str

    def to_dict(self) -> dict:
        def _num(v: float):
            return v if math.isfinite(v) else None

        return {
            "best_point": [float(v) for v in np.asarray(self.best_point).ravel()],
            "upper": _num(float(self.upper)),
            "lower": _num(float(self.lower)),
            "relative_gap": _num(float(self.relative_gap)),
            "iterations": int(self.iterations),
            "boxes_explored": int(self.boxes_explored),
            "boxes_pruned": int(self.boxes_pruned),
            "wall_time": float(self.wall_time),
            "terminated_by": self.terminated_by,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


@dataclass(frozen=True)
class LossKind:
    """Loss selector: plain squared switching loss or a saturated variant."""

    kind: str
    eps: float | None = None

    _KINDS = ("squared_switching", "saturated_squared", "saturated_zero_one")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "squared_switching":
            if self.eps is not None:
                raise ValueError("switching loss takes no saturation level")
        elif self.eps is None or not self.eps > 0:
            raise ValueError("saturated losses need eps > 0")

    @property
    def p(self) -> int | None:
        """Saturated-loss exponent (2 or 0); None for the switching loss."""
        if self.kind == "saturated_squared":
            return 2
        if self.kind == "saturated_zero_one":
            return 0
        return None

    @classmethod
    def squared_switching(cls) -> "LossKind":
        return cls("squared_switching")

    @classmethod
    def saturated_squared(cls, eps: float) -> "LossKind":
        return cls("saturated_squared", float(eps))

    @classmethod
    def saturated_zero_one(cls, eps: float) -> "LossKind":
        return cls("saturated_zero_one", float(eps))


def save_dataset_csv(path, data: Dataset, include_labels: bool = True) -> None:
    """Write a dataset as CSV with columns x_1..x_d, y and optional q."""
    with_labels = include_labels and data.true_labels is not None
    header = [f"x_{k + 1}" for k in range(data.d)] + ["y"] + (["q"] if with_labels else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.N):
            row = [repr(float(v)) for v in data.X[i]] + [repr(float(data.y[i]))]
            if with_labels:
                row.append(str(int(data.true_labels[i])))
            writer.writerow(row)


def load_dataset_csv(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset_csv` (header required)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        has_q = header and header[-1] == "q"
        x_cols = header[:-2] if has_q else header[:-1]
        if not x_cols or any(not h.startswith("x_") for h in x_cols):
            raise ValueError(f"{path}: expected header x_1..x_d, y[, q]")
        rows = [r for r in reader if r]
    X = np.array([[float(v) for v in r[: len(x_cols)]] for r in rows])
    y = np.array([float(r[len(x_cols)]) for r in rows])
    labels = np.array([int(r[-1]) for r in rows]) if has_q else None
    return Dataset(X, y, true_labels=labels)
