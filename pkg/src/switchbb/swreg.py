"""Switching linear regression: cost, classification, symmetry-aware
splitting, staged lower bounds and the alternating heuristic.

The estimation problem: given N points and a mode count n, find the n
parameter vectors minimizing the sum over points of the smallest squared
residual among the modes.  The global search runs over a box in R^(n*d)
with the permutation symmetry broken by requiring nondecreasing first
coordinates across modes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import bnb
from .bounds import ResidualBracket, bracket_modes
from .core import BoxRegion, Dataset, SolveReport, SwitchingModel, canonicalize
from .lstsq import box_ls, ols

__all__ = [
    "classify",
    "cost_sw",
    "cost_sw_assigned",
    "split_symmetric",
    "ModeIndexSets",
    "constant_classification_sets",
    "lower_pointwise",
    "lower_classification",
    "klinreg",
    "SwitchingProblem",
    "solve_switching",
]


def _mode_sq_errors(modes: np.ndarray, data: Dataset) -> np.ndarray:
    """(n, N) squared residuals of every mode at every point."""
    res = data.y[None, :] - modes @ data.X.T
    return res * res


def classify(model: SwitchingModel, data: Dataset) -> np.ndarray:
    """Best mode per point (1-based), smallest index on ties."""
    return np.argmin(_mode_sq_errors(model.modes, data), axis=0) + 1


def cost_sw(model: SwitchingModel, data: Dataset) -> float:
    """Switching cost: sum over points of the best mode's squared residual."""
    return float(_mode_sq_errors(model.modes, data).min(axis=0).sum())


def cost_sw_assigned(model: SwitchingModel, labels, data: Dataset) -> float:
    """Squared-error sum under a fixed 1-based mode assignment."""
    labels = np.asarray(labels, dtype=int).ravel()
    if labels.min() < 1 or labels.max() > model.n:
        raise ValueError("labels must lie in 1..n")
    res = data.y - np.einsum("ij,ij->i", data.X, model.modes[labels - 1])
    return float(res @ res)


def split_symmetric(box: BoxRegion, n: int, d: int) -> tuple[BoxRegion, ...]:
    """Bisect the longest side, then shrink the children so they keep every
    parameter vector with nondecreasing first coordinates.

    When the split coordinate is a first coordinate (k* = 1), the lower
    child's later first-coordinate uppers and the upper child's earlier
    first-coordinate lowers are corrected recursively.  A child whose
    corrected bounds cross contains no ordered point and is dropped, so the
    result has one or two boxes.
    """
    if box.dim != n * d:
        raise ValueError("box dimension does not match n*d")
    widths = box.width()
    k_flat = int(np.argmax(widths))
    if widths[k_flat] <= 0.0:
        raise ValueError("cannot split a zero-volume box")
    lo1, hi1 = box.lower.copy(), box.upper.copy()
    lo2, hi2 = box.lower.copy(), box.upper.copy()
    mid = 0.5 * (box.lower[k_flat] + box.upper[k_flat])
    hi1[k_flat] = mid
    lo2[k_flat] = mid
    j_star, k_star = divmod(k_flat, d)
    if k_star == 0 and n > 1:
        for j in range(j_star - 1, -1, -1):
            hi1[j * d] = min(hi1[j * d], hi1[(j + 1) * d])
        for j in range(j_star + 1, n):
            lo2[j * d] = max(lo2[j * d], lo2[(j - 1) * d])
    children = []
    if np.all(lo1 <= hi1):
        children.append(BoxRegion(lo1, hi1))
    if np.all(lo2 <= hi2):
        children.append(BoxRegion(lo2, hi2))
    return tuple(children)


@dataclass(frozen=True, eq=False)
class ModeIndexSets:
    """Partition of point indexes by classification behaviour over a box.

    ``per_mode[j]`` holds the points classified as mode j for every
    parameter vector in the box; ``undecided`` the rest.
    """

    undecided: np.ndarray
    per_mode: tuple[np.ndarray, ...]


def constant_classification_sets(bracket: ResidualBracket) -> ModeIndexSets:
    """Detect points whose best mode cannot change anywhere in the box.

    A point surely belongs to mode j when its worst squared residual under
    mode j beats the best possible one of every other mode: strictly for
    earlier modes, weakly for later ones (matching the smallest-index tie
    rule of the classifier).
    """
    min_sq, max_sq = bracket.min_sq, bracket.max_sq
    n, N = min_sq.shape
    before = np.empty_like(min_sq)
    after = np.empty_like(min_sq)
    before[0] = np.inf
    for j in range(1, n):
        before[j] = np.minimum(before[j - 1], min_sq[j - 1])
    after[n - 1] = np.inf
    for j in range(n - 2, -1, -1):
        after[j] = np.minimum(after[j + 1], min_sq[j + 1])
    sure = (max_sq < before) & (max_sq <= after)
    per_mode = tuple(np.flatnonzero(sure[j]) for j in range(n))
    undecided = np.flatnonzero(~sure.any(axis=0))
    return ModeIndexSets(undecided, per_mode)


def lower_pointwise(bracket: ResidualBracket) -> float:
    """Sum of independently minimized pointwise squared errors."""
    return float(bracket.min_sq.min(axis=0).sum())


def lower_classification(
    box: BoxRegion,
    sets: ModeIndexSets,
    staged: set[int] | frozenset[int],
    data: Dataset,
    bracket: ResidualBracket,
) -> float:
    """Classification-based lower bound on the switching cost over the box.

    Undecided points contribute their best pointwise minimum; points pinned
    to mode j contribute either a joint box-constrained least-squares value
    (j in ``staged``, 0-based) or their pointwise minima.  The joint term is
    clamped from below by the pointwise sum so growing ``staged`` can never
    weaken the bound, even when the constrained solve falls back to its
    unconstrained value.
    """
    min_sq = bracket.min_sq
    n = bracket.n_modes
    d = data.d
    total = float(min_sq[:, sets.undecided].min(axis=0).sum()) if sets.undecided.size else 0.0
    for j in range(n):
        idx = sets.per_mode[j]
        if idx.size == 0:
            continue
        pointwise = float(min_sq[j, idx].sum())
        if j in staged:
            u_j, v_j = box.mode_bounds(j, d)
            fit = box_ls(data.X[idx], data.y[idx], u_j, v_j)
            total += max(fit.value, pointwise)
        else:
            total += pointwise
    return total


def klinreg(
    data: Dataset,
    n: int,
    init: SwitchingModel,
    max_iter: int = 100,
    trace: list | None = None,
) -> tuple[SwitchingModel, float]:
    """Alternate point classification and per-mode least squares.

    Stops when the labels stabilize or after ``max_iter`` rounds.  A mode
    that loses all its points keeps its previous parameters, which preserves
    the descent property.  ``trace``, when given, collects the cost after
    every update.
    """
    if init.n != n or init.d != data.d:
        raise ValueError("initial model shape does not match data")
    modes = init.modes.copy()
    labels = np.argmin(_mode_sq_errors(modes, data), axis=0)
    for _ in range(max_iter):
        for j in range(n):
            idx = np.flatnonzero(labels == j)
            if idx.size:
                modes[j], _ = ols(data.X[idx], data.y[idx])
        sq = _mode_sq_errors(modes, data)
        if trace is not None:
            trace.append(float(sq.min(axis=0).sum()))
        new_labels = np.argmin(sq, axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    model = SwitchingModel.from_modes(modes)
    return model, cost_sw(model, data)


class SwitchingProblem:
    """Search-problem adapter for the engine.

    Assumes the initial box has identical bounds for every mode block (the
    canonicalized heuristic points must stay inside it).  Lower bounds are
    staged: cheap pointwise minima first, then constrained least squares on
    the constant-classification sets, largest set first, stopping as soon as
    the running bound clears the pruning cutoff.
    """

    def __init__(
        self,
        data: Dataset,
        n: int,
        box_init: BoxRegion,
        heuristic_max_iter: int = 100,
    ):
        if box_init.dim != n * data.d:
            raise ValueError("initial box dimension must be n*d")
        self.data = data
        self.n = n
        self.d = data.d
        self.box_init = box_init
        self.heuristic_max_iter = heuristic_max_iter
        # Mode labelling is permutation-invariant in cost, so any staged
        # box_ls value below d+1 points is ~0 and not worth the solve.
        self._stage_min_points = data.d + 1

    # engine contract ------------------------------------------------------
    def split(self, box: BoxRegion):
        return split_symmetric(box, self.n, self.d)

    def evaluate(self, point) -> float:
        return cost_sw(SwitchingModel(self.n, point), self.data)

    def upper(self, box: BoxRegion, refresh: bool):
        base = canonicalize(SwitchingModel(self.n, box.lower)).w
        val = self.evaluate(base)
        point = base
        if refresh:
            center = canonicalize(SwitchingModel(self.n, box.center()))
            model, _ = klinreg(self.data, self.n, center, self.heuristic_max_iter)
            cand = self._feasible_point(model)
            cand_val = self.evaluate(cand)
            if cand_val < val:
                val, point = cand_val, cand
        return val, point

    def lower(self, box: BoxRegion, cutoff: float) -> float:
        mode_lo = box.lower.reshape(self.n, self.d)
        mode_hi = box.upper.reshape(self.n, self.d)
        bracket = bracket_modes(mode_lo, mode_hi, self.data)
        min_sq = bracket.min_sq
        bound = float(min_sq.min(axis=0).sum())
        if bound > cutoff:
            return bound
        sets = constant_classification_sets(bracket)
        pointwise = [float(min_sq[j, idx].sum()) if idx.size else 0.0 for j, idx in enumerate(sets.per_mode)]
        bound = sum(pointwise)
        if sets.undecided.size:
            bound += float(min_sq[:, sets.undecided].min(axis=0).sum())
        if bound > cutoff:
            return bound
        order = sorted(range(self.n), key=lambda j: -sets.per_mode[j].size)
        for j in order:
            idx = sets.per_mode[j]
            if idx.size < self._stage_min_points:
                continue
            fit = box_ls(self.data.X[idx], self.data.y[idx], *box.mode_bounds(j, self.d))
            if fit.value > pointwise[j]:
                bound += fit.value - pointwise[j]
                if bound > cutoff:
                    return bound
        return bound

    # helpers --------------------------------------------------------------
    def _feasible_point(self, model: SwitchingModel) -> np.ndarray:
        """Canonicalize then clip into the initial box (identical per-mode
        bounds keep both the ordering and membership valid)."""
        w = canonicalize(model).w
        return np.clip(w, self.box_init.lower, self.box_init.upper)

    def warm_start(self, rng: np.random.Generator, restarts: int) -> np.ndarray:
        """Best of ``restarts`` heuristic runs from uniform draws in the box."""
        best_val = np.inf
        best = canonicalize(SwitchingModel(self.n, self.box_init.center())).w
        for _ in range(restarts):
            w0 = rng.uniform(self.box_init.lower, self.box_init.upper)
            model, _ = klinreg(self.data, self.n, SwitchingModel(self.n, w0), self.heuristic_max_iter)
            cand = self._feasible_point(model)
            val = self.evaluate(cand)
            if val < best_val:
                best_val, best = val, cand
        return best


def solve_switching(
    data: Dataset,
    n: int,
    tol: float = 1e-3,
    halfwidth: float = 10.0,
    seed: int | None = 0,
    restarts: int = 100,
    options: bnb.SolveOptions | None = None,
) -> SolveReport:
    """Globally minimize the switching cost over [-halfwidth, halfwidth]^(n*d).

    Warm-starts from the best of ``restarts`` alternating-heuristic runs and
    then certifies the optimum to relative gap ``tol``.
    """
    D = n * data.d
    box = BoxRegion(np.full(D, -float(halfwidth)), np.full(D, float(halfwidth)))
    problem = SwitchingProblem(data, n, box)
    opts = replace(options) if options is not None else bnb.SolveOptions()
    if opts.initial_guess is None and restarts > 0:
        opts.initial_guess = problem.warm_start(np.random.default_rng(seed), restarts)
    return bnb.solve(problem, box, tol, opts)
