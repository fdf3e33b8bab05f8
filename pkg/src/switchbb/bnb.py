"""Best-first branch-and-bound engine with a certified optimality gap.

The engine is problem-agnostic.  A problem object supplies box splitting,
upper bounds (cost at a feasible point) and lower bounds; the engine owns
the active-node queue, the incumbent, pruning and termination.  The search
loop follows the classic scheme: pop the box with the smallest lower bound,
split it, bound the children, keep the ones that may still contain a better
solution, and stop once the global bounds certify the requested gap.
"""

from __future__ import annotations

import heapq
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .core import BoxRegion, SolveReport

__all__ = ["SearchProblem", "SolveOptions", "solve", "prune_cutoff"]

# A box survives only if its lower bound stays below the incumbent plus this
# margin; it absorbs floating-point ties without affecting TOL-scale gaps.
PRUNE_REL = 1e-12
PRUNE_ABS = 1e-15


class SearchProblem(Protocol):
    """Contract the engine optimizes against."""

    def split(self, box: BoxRegion) -> Sequence[BoxRegion]:
        """Partition the feasible part of ``box`` into 1-2 child boxes."""
        ...

    def upper(self, box: BoxRegion, refresh: bool) -> tuple[float, np.ndarray]:
        """Cost at a feasible point of the initial box (base corner, plus a
        heuristic pass when ``refresh``)."""
        ...

    def lower(self, box: BoxRegion, cutoff: float) -> float:
        """Lower bound on the cost over ``box``; may stop early once the
        running bound exceeds ``cutoff``."""
        ...

    def evaluate(self, point: np.ndarray) -> float:
        """Exact cost at a feasible point (used for warm starts)."""
        ...


@dataclass
class SolveOptions:
    """Engine knobs.

    ``absolute_gap`` switches the stopping rule from relative to absolute
    (automatic when the incumbent reaches cost 0, where the relative gap is
    undefined).  ``integer_gap`` additionally stops once upper - lower < 1,
    which certifies optimality for integer-valued costs.  ``workers`` > 1
    bounds that many boxes per round in a thread pool; single-worker mode is
    the deterministic default.
    """

    absolute_gap: bool = False
    integer_gap: bool = False
    node_limit: int | None = None
    time_limit: float | None = None
    initial_guess: np.ndarray | None = None
    refresh_period: int = 100
    workers: int = 1
    progress: Callable[[int, float, float, int], None] | None = None
    progress_period: int = 500


def prune_cutoff(upper: float) -> float:
    """Keep a box only if its lower bound is at most this value."""
    if not math.isfinite(upper):
        return upper
    return upper + max(abs(upper) * PRUNE_REL, PRUNE_ABS)


def _gap_met(hi: float, lo: float, tol: float, opts: SolveOptions) -> str | None:
    if not math.isfinite(hi):
        return None
    if opts.integer_gap and hi - lo < 1.0:
        return "absolute_gap"
    if opts.absolute_gap or hi <= 0.0:
        return "absolute_gap" if hi - lo <= tol else None
    return "gap_tolerance" if (hi - lo) / hi <= tol else None


def _relative_gap(hi: float, lo: float) -> float:
    if hi == lo:
        return 0.0
    if not math.isfinite(hi) or hi <= 0.0:
        return math.inf
    return (hi - lo) / hi


def solve(problem: SearchProblem, box_init: BoxRegion, tol: float, options: SolveOptions | None = None) -> SolveReport:
    """Run the branch-and-bound search over ``box_init`` down to gap ``tol``.

    On gap termination the report satisfies (upper - lower)/upper <= tol
    (or upper - lower <= tol in absolute mode); on node/time limits the
    bounds are still valid, only looser.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    opts = options or SolveOptions()
    t0 = time.perf_counter()

    if opts.initial_guess is not None:
        best = np.asarray(opts.initial_guess, dtype=float).ravel().copy()
    else:
        # Always hold some incumbent so limit terminations report valid bounds.
        best = box_init.lower.copy()
    hi = float(problem.evaluate(best))

    heap: list[tuple[float, int, BoxRegion]] = [(0.0, 0, box_init)]
    push_count = 1
    lo = 0.0
    iterations = explored = pruned = 0
    pool = ThreadPoolExecutor(max_workers=opts.workers) if opts.workers > 1 else None

    def bound_child(child: BoxRegion, refresh: bool, cutoff: float):
        val, pt = problem.upper(child, refresh)
        lb = problem.lower(child, cutoff)
        return val, pt, lb

    try:
        while True:
            if not heap:
                lo = hi if math.isfinite(hi) else lo
                terminated = "absolute_gap" if (opts.absolute_gap or opts.integer_gap or hi <= 0.0) else "gap_tolerance"
                break
            lo = heap[0][0]
            terminated = _gap_met(hi, lo, tol, opts)
            if terminated:
                break
            if opts.node_limit is not None and iterations >= opts.node_limit:
                terminated = "node_limit"
                break
            if opts.time_limit is not None and time.perf_counter() - t0 >= opts.time_limit:
                terminated = "time_limit"
                break

            batch: list[tuple[float, BoxRegion]] = []
            take = opts.workers if pool is not None else 1
            cutoff = prune_cutoff(hi)
            while heap and len(batch) < take:
                lb, _, box = heapq.heappop(heap)
                if lb > cutoff:
                    pruned += 1
                    continue
                if float(np.max(box.width())) <= 0.0:
                    # Point box: its cost is both bounds; treat as a leaf.
                    val, pt = problem.upper(box, False)
                    if val < hi:
                        hi, best = val, pt
                        cutoff = prune_cutoff(hi)
                    explored += 1
                    continue
                batch.append((lb, box))
            if not batch:
                continue

            jobs: list[tuple[float, BoxRegion, bool]] = []
            for parent_lb, box in batch:
                iterations += 1
                refresh = opts.refresh_period > 0 and iterations % opts.refresh_period == 0
                for child in problem.split(box):
                    jobs.append((parent_lb, child, refresh))
                    refresh = False

            cutoff = prune_cutoff(hi)
            if pool is not None:
                results = list(pool.map(lambda j: bound_child(j[1], j[2], cutoff), jobs))
            else:
                results = [bound_child(child, refresh, cutoff) for _, child, refresh in jobs]

            for (parent_lb, child, _), (val, pt, lb) in zip(jobs, results):
                explored += 1
                if val < hi:
                    hi, best = val, pt
                # A child bound below the parent's can only be noise:
                # inherit the parent bound to keep the queue minimum monotone.
                lb = max(lb, parent_lb)
                if lb <= prune_cutoff(hi):
                    heapq.heappush(heap, (lb, push_count, child))
                    push_count += 1
                else:
                    pruned += 1

            if opts.progress is not None and iterations % opts.progress_period == 0:
                opts.progress(iterations, hi, lo, len(heap))
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    lo = min(lo, hi)
    return SolveReport(
        best_point=best,
        upper=hi,
        lower=lo,
        relative_gap=_relative_gap(hi, lo),
        iterations=iterations,
        boxes_explored=explored,
        boxes_pruned=pruned,
        wall_time=time.perf_counter() - t0,
        terminated_by=terminated,
    )
