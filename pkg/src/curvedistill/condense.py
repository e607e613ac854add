"""Condensing weighted points into a few synthetic points.

A weighted point set P can be replaced by at most two synthetic points P' such
that, for every line L, SE(L, P) = SE(L, P') + SE(best_fit_line(P), P). Doing
this separately between each adjacent pair of knots yields a condensed set on
which any piecewise-linear curve with knots drawn from those knots has the same
squared error as on P, up to a constant.
"""

import dataclasses
from typing import Callable, Optional, Sequence

import numpy as np

from curvedistill.errors import InvalidKnotsError

# Partitions whose centered x-range is below this fraction of their x-magnitude
# are treated as single-x partitions.
DEGENERATE_RANGE = 1e-12


@dataclasses.dataclass(frozen=True)
class PointSet:
    """Weighted (x, y, weight) samples stored column-wise."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if not (x.ndim == y.ndim == w.ndim == 1):
            raise ValueError('x, y and w must be one-dimensional')
        if not (len(x) == len(y) == len(w)):
            raise ValueError('x, y and w must have equal length')
        if not (np.isfinite(x).all() and np.isfinite(y).all() and np.isfinite(w).all()):
            raise ValueError('points must be finite')
        if len(w) and w.min() <= 0:
            raise ValueError('weights must be positive')
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'w', w)

    @classmethod
    def from_arrays(cls, x: Sequence[float], y: Sequence[float],
                    w: Optional[Sequence[float]] = None) -> 'PointSet':
        x = np.asarray(x, dtype=float)
        w = np.ones_like(x) if w is None else w
        return cls(x, y, w)

    @classmethod
    def from_triples(cls, triples) -> 'PointSet':
        arr = np.asarray(list(triples), dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    @classmethod
    def empty(cls) -> 'PointSet':
        return cls(np.empty(0), np.empty(0), np.empty(0))

    def __len__(self) -> int:
        return len(self.x)

    def take(self, index) -> 'PointSet':
        return PointSet(self.x[index], self.y[index], self.w[index])

    def sorted_by_x(self) -> 'PointSet':
        if len(self.x) < 2 or np.all(self.x[1:] >= self.x[:-1]):
            return self
        return self.take(np.argsort(self.x, kind='stable'))

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())


@dataclasses.dataclass(frozen=True)
class Line:
    """The line y = m * x + b."""

    m: float = 0.0
    b: float = 0.0

    def __call__(self, x):
        return self.m * np.asarray(x, dtype=float) + self.b


@dataclasses.dataclass(frozen=True)
class CondensedSet:
    """Synthetic points plus the curve-independent error offset."""

    points: PointSet
    constant: float


def squared_error(f: Callable, pts: PointSet) -> float:
    """Sum of weight * (f(x) - y)^2; zero for an empty set."""
    if len(pts) == 0:
        return 0.0
    resid = np.asarray(f(pts.x), dtype=float) - pts.y
    return float(np.sum(pts.w * resid * resid))


def best_fit_line(pts: PointSet) -> Line:
    """Weighted least-squares line.

    Ties are broken toward zero slope, then toward zero intercept: an empty set
    gives y = 0 and a set with a single distinct x gives the horizontal line
    through the weighted mean of y.
    """
    if len(pts) == 0:
        return Line(0.0, 0.0)
    wsum = pts.w.sum()
    mx = np.dot(pts.w, pts.x) / wsum
    my = np.dot(pts.w, pts.y) / wsum
    dx = pts.x - mx
    if _is_degenerate(dx.min(), dx.max(), np.abs(pts.x).max()):
        return Line(0.0, float(my))
    slope = np.dot(pts.w * dx, pts.y - my) / np.dot(pts.w * dx, dx)
    return Line(float(slope), float(my - slope * mx))


def _is_degenerate(lo, hi, scale):
    return (hi - lo <= DEGENERATE_RANGE * scale) | (lo >= 0) | (hi <= 0)


def _condense_groups(x, y, w, starts):
    """Condenses contiguous groups of points; x must be sorted within groups.

    Args:
      x, y, w: point columns, grouped contiguously.
      starts: start index of each non-empty group, increasing.

    Returns:
      (cx, cy, cw, constant) for the synthetic points of all groups in order.
    """
    counts = np.diff(np.append(starts, len(x)))
    wsum = np.add.reduceat(w, starts)
    mx = np.add.reduceat(w * x, starts) / wsum
    my = np.add.reduceat(w * y, starts) / wsum
    dx = x - np.repeat(mx, counts)
    dy = y - np.repeat(my, counts)
    wdx = w * dx
    sxx = np.add.reduceat(wdx * dx, starts)
    sxy = np.add.reduceat(wdx * dy, starts)
    lo = np.minimum.reduceat(dx, starts)
    hi = np.maximum.reduceat(dx, starts)
    xmin = np.minimum.reduceat(x, starts)
    xmax = np.maximum.reduceat(x, starts)
    degenerate = _is_degenerate(lo, hi, np.maximum(np.abs(xmin), np.abs(xmax))) | (sxx <= 0)

    with np.errstate(divide='ignore', invalid='ignore'):
        slope = np.where(degenerate, 0.0, sxy / sxx)
        resid = dy - np.repeat(slope, counts) * dx
        constant = float(np.sum(w * resid * resid))

        # Skewed, centered frame: both synthetic points sit on y = 0.
        std = np.sqrt(sxx / wsum)
        x1 = -std * np.sqrt(-lo / hi)
        x2 = std * np.sqrt(hi / -lo)
        w1 = wsum * hi / (hi - lo)
        w2 = wsum * -lo / (hi - lo)

    ngroups = len(starts)
    cx = np.empty((ngroups, 2))
    cw = np.empty((ngroups, 2))
    cx[:, 0] = np.where(degenerate, 0.0, x1)
    cx[:, 1] = np.where(degenerate, 0.0, x2)
    cw[:, 0] = np.where(degenerate, wsum, w1)
    cw[:, 1] = np.where(degenerate, 0.0, w2)
    cy = my[:, None] + slope[:, None] * cx
    cx = np.clip(cx + mx[:, None], xmin[:, None], xmax[:, None])

    keep = cw > 0
    return cx[keep], cy[keep], cw[keep], constant


def linear_condense(pts: PointSet) -> CondensedSet:
    """Replaces pts with at most two points preserving every line's error.

    For any line L, SE(L, pts) equals SE(L, result.points) + result.constant,
    where the constant is the error of the best-fit line. Synthetic x-values
    stay within [min x, max x] of pts.
    """
    if len(pts) == 0:
        return CondensedSet(PointSet.empty(), 0.0)
    pts = pts.sorted_by_x()
    cx, cy, cw, constant = _condense_groups(pts.x, pts.y, pts.w, np.array([0]))
    return CondensedSet(PointSet(cx, cy, cw), constant)


def validate_knots(knots: Sequence[float]) -> np.ndarray:
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or len(knots) < 2:
        raise InvalidKnotsError('need at least two knots')
    if not np.isfinite(knots).all() or np.any(np.diff(knots) <= 0):
        raise InvalidKnotsError('knots must be finite and strictly increasing')
    return knots


def condense_around_knots(pts: PointSet, knots: Sequence[float]) -> CondensedSet:
    """Condenses pts separately within each interval between adjacent knots.

    Points are first clamped to [knots[0], knots[-1]]. Interval i holds
    knots[i] <= x < knots[i + 1], except the last, which is closed on the
    right. Empty intervals contribute no points, so the result has at most
    2 * (len(knots) - 1) points.

    For any PWLCurve C (identity transform) whose knots are a subset of knots,
    SE(C, pts) == SE(C, result.points) + result.constant.

    Raises:
      InvalidKnotsError: fewer than two knots, or knots not increasing.
    """
    knots = validate_knots(knots)
    if len(pts) == 0:
        return CondensedSet(PointSet.empty(), 0.0)
    x = np.clip(pts.x, knots[0], knots[-1])
    y, w = pts.y, pts.w
    if np.any(x[1:] < x[:-1]):
        order = np.argsort(x, kind='stable')
        x, y, w = x[order], y[order], w[order]
    # Start of each interval in the sorted points; the last knot closes the
    # final interval.
    bounds = np.searchsorted(x, knots[:-1], side='left')
    sizes = np.diff(np.append(bounds, len(x)))
    starts = bounds[sizes > 0]
    cx, cy, cw, constant = _condense_groups(x, y, w, starts)
    return CondensedSet(PointSet(cx, cy, cw), constant)
