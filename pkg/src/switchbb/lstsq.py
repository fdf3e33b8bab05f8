"""Least-squares kernels: ordinary and box-constrained fits.

The box-constrained solve is the inner convex subproblem of the
classification-based lower bounds.  Its contract is asymmetric on purpose:
the returned value must NEVER exceed the true constrained minimum, because
the branch-and-bound engine prunes with it.  Either the active-set method
terminates with a KKT-verified optimum (``certified=True``) or the
unconstrained optimum value is returned as a sound fallback
(``certified=False``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ols", "box_ls", "BoxLsResult"]


def ols(X, y) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares fit and its sum of squared errors."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise ValueError("least squares on an empty point set")
    w, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ w
    return w, float(r @ r)


@dataclass(frozen=True)
class BoxLsResult:
    """Outcome of a box-constrained least-squares solve.

    ``value`` is always a valid lower bound on the constrained minimum.
    When ``certified`` the point ``w`` is feasible and ``value`` is its
    (optimal) objective; otherwise ``w`` is the unconstrained fit and may
    violate the box.
    """

    w: np.ndarray
    value: float
    certified: bool


def _solve_normal(G, b, free):
    """Minimum-norm solution of the free block of the normal equations."""
    w, *_ = np.linalg.lstsq(G[np.ix_(free, free)], b[free], rcond=None)
    return w


def box_ls(X, y, lower, upper, max_iter: int | None = None, kkt_tol: float = 1e-8) -> BoxLsResult:
    """Minimize sum of squared errors subject to lower <= w <= upper.

    Bounded-variable least squares on the normal equations (d is small by
    design): variables are partitioned into free / at-lower / at-upper sets,
    the free subproblem is solved exactly, and gradient sign conditions
    decide which bound to release.  The iteration cap defaults to 10*d;
    past it the unconstrained optimum value is returned uncertified (still
    a valid lower bound).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    m, d = X.shape
    if m == 0:
        raise ValueError("box-constrained least squares on an empty point set")
    if lower.shape != (d,) or upper.shape != (d,):
        raise ValueError("bound dimensions do not match X")
    if np.any(lower > upper):
        raise ValueError("box requires lower <= upper")
    if max_iter is None:
        max_iter = 10 * d

    G = X.T @ X
    b = X.T @ y

    def sse_at(w):
        r = y - X @ w
        return float(r @ r)

    all_free = np.ones(d, dtype=bool)
    w_free = _solve_normal(G, b, all_free)
    if np.all(w_free >= lower) and np.all(w_free <= upper):
        return BoxLsResult(w_free, sse_at(w_free), True)

    pinned = upper - lower <= 0.0
    # KKT slack scale: |g| <= 2(|b| + |G| |w|) over the box.
    wspan = max(float(np.abs(lower).max()), float(np.abs(upper).max()), 1.0)
    atol = kkt_tol * (1.0 + 2.0 * (float(np.abs(b).max()) + float(np.abs(G).sum(axis=1).max()) * wspan))

    w = np.clip(w_free, lower, upper)
    on_bound = np.zeros(d, dtype=int)
    on_bound[w_free <= lower] = -1
    on_bound[w_free >= upper] = 1
    on_bound[pinned] = 1
    w[pinned] = lower[pinned]

    def refit_free():
        free = on_bound == 0
        rhs = b - G[:, ~free] @ w[~free]
        return free, _solve_normal(G, rhs, free)

    # Feasibility phase: fit the free variables, park violators at a bound.
    for _ in range(d + 1):
        free = on_bound == 0
        if not free.any():
            break
        free, z = refit_free()
        idx = np.flatnonzero(free)
        low_v = z < lower[idx]
        up_v = z > upper[idx]
        w[idx] = np.clip(z, lower[idx], upper[idx])
        on_bound[idx[low_v]] = -1
        on_bound[idx[up_v]] = 1
        if not (low_v.any() or up_v.any()):
            break

    def kkt_violation(g):
        v = np.where(on_bound == 0, np.abs(g), g * on_bound)
        v[pinned] = -np.inf
        return v

    certified = False
    for _ in range(max_iter):
        g = 2.0 * (G @ w - b)
        viol = kkt_violation(g)
        worst = int(np.argmax(viol))
        if viol[worst] <= atol:
            certified = True
            break
        on_bound[worst] = 0
        # Inner loop: re-solve the free subproblem, clipping the step at the
        # first bound crossed, until the free fit is interior.
        for _ in range(d + 2):
            free, z = refit_free()
            idx = np.flatnonzero(free)
            w_f = w[idx]
            lo_f, up_f = lower[idx], upper[idx]
            low_v = np.flatnonzero(z < lo_f)
            up_v = np.flatnonzero(z > up_f)
            if low_v.size == 0 and up_v.size == 0:
                w[idx] = z
                break
            hit = np.concatenate([low_v, up_v])
            targets = np.concatenate([lo_f[low_v], up_f[up_v]])
            steps = (targets - w_f[hit]) / (z[hit] - w_f[hit])
            steps = np.where(np.isfinite(steps), steps, 0.0)
            first = int(np.argmin(steps))
            alpha = max(0.0, min(1.0, float(steps[first])))
            w[idx] = np.clip(w_f + alpha * (z - w_f), lo_f, up_f)
            j = idx[hit[first]]
            on_bound[j] = -1 if first < low_v.size else 1
            w[j] = lower[j] if on_bound[j] == -1 else upper[j]
        else:
            break
    if certified:
        g = 2.0 * (G @ w - b)
        feasible = np.all(w >= lower - 1e-12) and np.all(w <= upper + 1e-12)
        if feasible and float(np.max(kkt_violation(g))) <= atol:
            w = np.clip(w, lower, upper)
            return BoxLsResult(w, sse_at(w), True)
    return BoxLsResult(w_free, sse_at(w_free), False)
