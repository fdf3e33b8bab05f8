"""Closed-form interval primitives over boxes.

For a box ``[u, v]`` and a data row ``x``, the dot product ``w . x`` with
``w`` ranging over the box spans ``[u.x + span_neg, u.x + span_pos]`` where
``span_neg = (v-u) . min(x, 0) <= 0`` and ``span_pos = (v-u) . max(x, 0) >= 0``.
Shifting the base residual by that span gives the attainable residual
interval of every point, whose squared extremes feed all solver lower
bounds.  Everything is plain 64-bit arithmetic; the engine applies a pruning
margin instead of controlled rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset

__all__ = [
    "dot_range",
    "residual_bracket",
    "min_sq_residual",
    "max_sq_residual",
    "ResidualBracket",
    "bracket_modes",
]


def dot_range(lower, upper, x):
    """Range of w . x over the box [lower, upper].

    Returns ``(span_neg, span_pos, dot_min, dot_max)`` with
    ``span_neg <= 0 <= span_pos`` and ``dot_min = lower.x + span_neg``,
    ``dot_max = lower.x + span_pos``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.asarray(x, dtype=float)
    if lower.shape != x.shape or upper.shape != x.shape:
        raise ValueError("box corners and x must share one dimension d")
    width = upper - lower
    span_neg = float(width @ np.minimum(x, 0.0))
    span_pos = float(width @ np.maximum(x, 0.0))
    base = float(lower @ x)
    return span_neg, span_pos, base + span_neg, base + span_pos


def residual_bracket(e_at_base, span_neg, span_pos):
    """Attainable residual interval from the base-corner residual.

    The residual is affine in w with the dot product entering negatively, so
    its minimum over the box is ``e_at_base - span_pos`` and its maximum
    ``e_at_base - span_neg``.  Returns ``(res_min, res_max)``.
    """
    return e_at_base - span_pos, e_at_base - span_neg


def min_sq_residual(res_min, res_max):
    """Smallest squared residual attainable on the interval [res_min, res_max].

    Zero exactly when the interval straddles zero.
    """
    return np.maximum(res_min, 0.0) ** 2 + np.minimum(res_max, 0.0) ** 2


def max_sq_residual(res_min, res_max):
    """Largest squared residual attainable on the interval [res_min, res_max]."""
    res_min = np.asarray(res_min, dtype=float)
    res_max = np.asarray(res_max, dtype=float)
    return np.maximum(res_min**2, res_max**2)


@dataclass(frozen=True, eq=False)
class ResidualBracket:
    """Per-point residual ranges over one box per mode.

    All arrays have shape (n_modes, N).  ``span_neg``/``span_pos`` are the
    dot-product deviations from the base corner, ``res_min``/``res_max`` the
    attainable residual interval, and ``min_sq``/``max_sq`` its squared
    extremes (cached because every bound consumes them).
    """

    span_neg: np.ndarray
    span_pos: np.ndarray
    res_min: np.ndarray
    res_max: np.ndarray
    min_sq: np.ndarray
    max_sq: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.res_min.shape[0]


def bracket_modes(mode_lower, mode_upper, data: Dataset) -> ResidualBracket:
    """Residual brackets of every data point for a stack of per-mode boxes.

    ``mode_lower``/``mode_upper`` are (n_modes, d) corner stacks; a single
    box may be passed as shape (1, d).
    """
    mode_lower = np.atleast_2d(np.asarray(mode_lower, dtype=float))
    mode_upper = np.atleast_2d(np.asarray(mode_upper, dtype=float))
    width = mode_upper - mode_lower
    span_neg = width @ data.x_neg.T
    span_pos = width @ data.x_pos.T
    base = data.y[None, :] - mode_lower @ data.X.T
    res_min = base - span_pos
    res_max = base - span_neg
    return ResidualBracket(
        span_neg,
        span_pos,
        res_min,
        res_max,
        min_sq_residual(res_min, res_max),
        max_sq_residual(res_min, res_max),
    )
