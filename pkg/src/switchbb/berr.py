"""Bounded-error estimation with saturated losses.

A single linear model is fit so that as many points as possible have a
residual magnitude within a tube of half-width eps.  Two losses are solved
globally: the saturated squared loss (p=2), summing min(e^2, eps^2), and the
saturated 0/1 loss (p=0), counting points strictly outside the tube.  The
greedy decomposition repeats the solve on the uncovered remainder to
estimate a switched model together with its number of modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import bnb
from .bounds import ResidualBracket, bracket_modes
from .core import BoxRegion, Dataset, SolveReport, split_longest
from .lstsq import box_ls, ols

__all__ = [
    "cost_be2",
    "cost_be0",
    "descent_heuristic",
    "SaturationSets",
    "saturation_sets",
    "lower_be2_pointwise",
    "lower_be2_sets",
    "lower_be0",
    "BoundedErrorProblem",
    "solve_be",
    "Submodel",
    "Decomposition",
    "decompose",
]


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    return eps


def _residuals(w, data: Dataset, active) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if w.size != data.d:
        raise ValueError("parameter dimension mismatch")
    if active is None:
        return data.y - data.X @ w
    active = np.asarray(active)
    return data.y[active] - data.X[active] @ w


def cost_be2(w, data: Dataset, eps: float, active=None) -> float:
    """Saturated squared loss: sum of min(residual^2, eps^2)."""
    eps = _check_eps(eps)
    e = _residuals(w, data, active)
    return float(np.minimum(e * e, eps * eps).sum())


def cost_be0(w, data: Dataset, eps: float, active=None) -> int:
    """Number of active points with |residual| strictly above eps."""
    eps = _check_eps(eps)
    e = _residuals(w, data, active)
    return int(np.count_nonzero(np.abs(e) > eps))


def descent_heuristic(
    data: Dataset,
    eps: float,
    init,
    active=None,
    max_iter: int = 100,
    trace: list | None = None,
) -> tuple[np.ndarray, float]:
    """Alternate tube classification and least squares on the inliers.

    Each round keeps the points whose squared residual is within eps^2 and
    refits on them; the saturated squared cost never increases, which is
    asserted at runtime.  If no point ever enters the tube the initial
    vector is returned unchanged.
    """
    eps = _check_eps(eps)
    w = np.asarray(init, dtype=float).ravel().copy()
    idx = np.arange(data.N) if active is None else np.asarray(active)
    X, y = data.X[idx], data.y[idx]
    cost = float(np.minimum((y - X @ w) ** 2, eps * eps).sum())
    if trace is not None:
        trace.append(cost)
    inliers_prev: np.ndarray | None = None
    for _ in range(max_iter):
        sq = (y - X @ w) ** 2
        inliers = np.flatnonzero(sq <= eps * eps)
        if inliers.size == 0:
            break
        if inliers_prev is not None and np.array_equal(inliers, inliers_prev):
            break
        w_new, _ = ols(X[inliers], y[inliers])
        cost_new = float(np.minimum((y - X @ w_new) ** 2, eps * eps).sum())
        if cost_new > cost * (1.0 + 1e-9) + 1e-12:
            raise AssertionError(f"descent property violated: {cost} -> {cost_new}")
        w, cost = w_new, cost_new
        inliers_prev = inliers
        if trace is not None:
            trace.append(cost)
    return w, cost


@dataclass(frozen=True, eq=False)
class SaturationSets:
    """Partition of the active points by tube status over a whole box.

    ``sure_inside``: within the tube for every parameter vector in the box;
    ``sure_saturated``: strictly outside for every vector; ``undecided``:
    the rest.  Indexes refer to positions in the active set.
    """

    undecided: np.ndarray
    sure_inside: np.ndarray
    sure_saturated: np.ndarray


def saturation_sets(bracket: ResidualBracket, eps: float) -> SaturationSets:
    """Classify points via their squared-residual ranges over the box."""
    eps = _check_eps(eps)
    min_sq = bracket.min_sq[0]
    max_sq = bracket.max_sq[0]
    inside = max_sq <= eps * eps
    saturated = min_sq > eps * eps
    undecided = ~(inside | saturated)
    return SaturationSets(
        np.flatnonzero(undecided),
        np.flatnonzero(inside),
        np.flatnonzero(saturated),
    )


def lower_be2_pointwise(bracket: ResidualBracket, eps: float) -> float:
    """Pointwise lower bound on the saturated squared cost over the box."""
    eps = _check_eps(eps)
    return float(np.minimum(bracket.min_sq[0], eps * eps).sum())


def lower_be2_sets(
    box: BoxRegion,
    sets: SaturationSets,
    data_active: Dataset,
    eps: float,
    bracket: ResidualBracket,
) -> float:
    """Saturation-set lower bound on the saturated squared cost.

    Undecided points keep their saturated pointwise minima, sure-inside
    points contribute a joint box-constrained least-squares value (clamped
    below by their pointwise sum, so this never falls under the pointwise
    bound) and sure-saturated points contribute eps^2 each.
    """
    eps = _check_eps(eps)
    min_sq = bracket.min_sq[0]
    total = float(np.minimum(min_sq[sets.undecided], eps * eps).sum()) if sets.undecided.size else 0.0
    if sets.sure_inside.size:
        pointwise = float(min_sq[sets.sure_inside].sum())
        fit = box_ls(data_active.X[sets.sure_inside], data_active.y[sets.sure_inside], box.lower, box.upper)
        total += max(fit.value, pointwise)
    total += sets.sure_saturated.size * eps * eps
    return total


def lower_be0(sets: SaturationSets) -> int:
    """Count of surely saturated points: lower bound on the 0/1 cost."""
    return int(sets.sure_saturated.size)


class BoundedErrorProblem:
    """Engine adapter for one saturated-loss solve over a box in R^d."""

    def __init__(self, data: Dataset, eps: float, p: int, box_init: BoxRegion, heuristic_max_iter: int = 100):
        if p not in (0, 2):
            raise ValueError("p must be 0 or 2")
        if box_init.dim != data.d:
            raise ValueError("box dimension must match the data dimension")
        self.data = data
        self.eps = _check_eps(eps)
        self.p = p
        self.box_init = box_init
        self.heuristic_max_iter = heuristic_max_iter
        self._stage_min_points = data.d + 1
        # Hot-loop caches for the per-node bracket evaluation.
        self._X = data.X
        self._y = data.y
        self._x_neg = data.x_neg
        self._x_pos = data.x_pos
        self._eps_sq = self.eps * self.eps

    def split(self, box: BoxRegion):
        return split_longest(box)

    def evaluate(self, point) -> float:
        if self.p == 2:
            return cost_be2(point, self.data, self.eps)
        return float(cost_be0(point, self.data, self.eps))

    def upper(self, box: BoxRegion, refresh: bool):
        val = self.evaluate(box.lower)
        point = box.lower
        if refresh:
            # The descent heuristic optimizes the p=2 objective; for p=0 its
            # output is still a feasible point worth scoring under the count.
            w, _ = descent_heuristic(self.data, self.eps, box.center(), max_iter=self.heuristic_max_iter)
            w = np.clip(w, self.box_init.lower, self.box_init.upper)
            cand_val = self.evaluate(w)
            if cand_val < val:
                val, point = cand_val, w
        return val, point

    def lower(self, box: BoxRegion, cutoff: float) -> float:
        # Inline residual bracket (same arithmetic as bounds.bracket_modes,
        # flattened for the per-node hot loop).
        width = box.upper - box.lower
        base = self._y - self._X @ box.lower
        res_min = base - self._x_pos @ width
        res_max = base - self._x_neg @ width
        min_sq = np.maximum(res_min, 0.0) ** 2 + np.minimum(res_max, 0.0) ** 2
        eps_sq = self._eps_sq
        if self.p == 0:
            return float(np.count_nonzero(min_sq > eps_sq))
        bound = float(np.minimum(min_sq, eps_sq).sum())
        if bound > cutoff:
            return bound
        inside = np.maximum(res_min * res_min, res_max * res_max) <= eps_sq
        if int(inside.sum()) >= self._stage_min_points:
            pointwise = float(min_sq[inside].sum())
            fit = box_ls(self._X[inside], self._y[inside], box.lower, box.upper)
            if fit.value > pointwise:
                bound += fit.value - pointwise
        return bound

    def warm_start(self, rng: np.random.Generator, restarts: int) -> np.ndarray:
        best = self.box_init.center()
        best_val = np.inf
        for _ in range(restarts):
            w0 = rng.uniform(self.box_init.lower, self.box_init.upper)
            w, _ = descent_heuristic(self.data, self.eps, w0, max_iter=self.heuristic_max_iter)
            w = np.clip(w, self.box_init.lower, self.box_init.upper)
            val = self.evaluate(w)
            if val < best_val:
                best_val, best = val, w
        return best


def solve_be(
    data: Dataset,
    eps: float,
    p: int,
    tol: float = 1e-3,
    active=None,
    halfwidth: float = 10.0,
    seed: int | None = 0,
    restarts: int = 100,
    options: bnb.SolveOptions | None = None,
) -> SolveReport:
    """Globally minimize the saturated loss over [-halfwidth, halfwidth]^d.

    ``active`` restricts the cost to a subset of points.  For p=0 the
    integer-gap rule applies: once upper - lower < 1 the incumbent count is
    provably optimal.
    """
    sub = data if active is None else data.subset(active)
    box = BoxRegion(np.full(sub.d, -float(halfwidth)), np.full(sub.d, float(halfwidth)))
    problem = BoundedErrorProblem(sub, eps, p, box)
    opts = replace(options) if options is not None else bnb.SolveOptions()
    if p == 0:
        opts.integer_gap = True
    if opts.initial_guess is None and restarts > 0:
        opts.initial_guess = problem.warm_start(np.random.default_rng(seed), restarts)
    return bnb.solve(problem, box, tol, opts)


@dataclass(frozen=True, eq=False)
class Submodel:
    """One greedy round: a parameter vector and the points it covers."""

    params: np.ndarray
    covered: np.ndarray


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Greedy bounded-error decomposition of a dataset.

    ``leftover`` is empty on success; it reports the points never covered
    when a round fails to cover anything new (which would otherwise loop
    forever).
    """

    submodels: tuple[Submodel, ...]
    n_estimated: int
    leftover: np.ndarray
    reports: tuple[SolveReport, ...] = field(default=())


def decompose(
    data: Dataset,
    eps: float,
    p: int,
    tol: float = 1e-3,
    halfwidth: float = 10.0,
    seed: int | None = 0,
    restarts: int = 100,
    options: bnb.SolveOptions | None = None,
) -> Decomposition:
    """Estimate one mode at a time until every point is covered.

    Each round solves the saturated-loss problem on the still-uncovered
    points, assigns those within the tube of the new model, and repeats.
    """
    eps = _check_eps(eps)
    active = np.arange(data.N)
    submodels: list[Submodel] = []
    reports: list[SolveReport] = []
    while active.size:
        opts = None if options is None else replace(options)
        report = solve_be(
            data,
            eps,
            p,
            tol,
            active=active,
            halfwidth=halfwidth,
            seed=None if seed is None else seed + len(submodels),
            restarts=restarts,
            options=opts,
        )
        reports.append(report)
        w = report.best_point
        res = np.abs(data.y[active] - data.X[active] @ w)
        covered = active[res <= eps]
        if covered.size == 0:
            break
        submodels.append(Submodel(w, covered))
        active = active[res > eps]
    return Decomposition(tuple(submodels), len(submodels), active, tuple(reports))
