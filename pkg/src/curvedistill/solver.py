"""Least-squares kernels for piecewise-linear fitting.

All solves work in transformed x-space: given x-knots, each point's weight is
split linearly between its two bracketing knots (the hat basis), and the
optimal y-knots follow from a small tridiagonal normal-equation system.
"""

import dataclasses
import enum
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from curvedistill.condense import PointSet, validate_knots
from curvedistill.curves import Transform, apply_transform
from curvedistill.errors import InvalidBoundsError

RIDGE = 1e-9
# Cholesky pivots below this fraction of the largest diagonal entry mark the
# system as rank deficient.
PIVOT_TOLERANCE = 1e-12
KKT_TOLERANCE = 1e-10
ZERO_VARIANCE = 1e-12


class Direction(str, enum.Enum):
    INCREASING = 'increasing'
    DECREASING = 'decreasing'


@dataclasses.dataclass(frozen=True)
class SlopeBounds:
    """Closed interval of allowed slopes, in transformed x-space."""

    min_slope: float = -math.inf
    max_slope: float = math.inf

    def __post_init__(self):
        lo = -math.inf if self.min_slope is None else float(self.min_slope)
        hi = math.inf if self.max_slope is None else float(self.max_slope)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise InvalidBoundsError(f'infeasible slope bounds [{lo}, {hi}]')
        object.__setattr__(self, 'min_slope', lo)
        object.__setattr__(self, 'max_slope', hi)

    @property
    def active(self) -> bool:
        return self.min_slope > -math.inf or self.max_slope < math.inf


UNBOUNDED = SlopeBounds()


def hat_basis(tx: np.ndarray, tknots: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (left knot index, right-hand fraction) for each point.

    Points are clamped to the knot range; the value at a point is
    (1 - t) * y[j] + t * y[j + 1].
    """
    tx = np.clip(tx, tknots[0], tknots[-1])
    j = np.searchsorted(tknots, tx, side='right') - 1
    j = np.clip(j, 0, len(tknots) - 2)
    t = (tx - tknots[j]) / (tknots[j + 1] - tknots[j])
    return j, t


def normal_equations(tx, y, w, tknots) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Builds the hat-basis normal equations H z = g.

    Returns:
      (H, g, j, t), where j and t describe the basis for reuse.
    """
    k = len(tknots)
    j, t = hat_basis(tx, tknots)
    a = 1.0 - t
    wa, wt = w * a, w * t
    diag = np.bincount(j, wa * a, minlength=k) + np.bincount(j + 1, wt * t, minlength=k)
    off = np.bincount(j, wa * t, minlength=k - 1)[:k - 1]
    hess = np.diag(diag)
    idx = np.arange(k - 1)
    hess[idx, idx + 1] = off
    hess[idx + 1, idx] = off
    g = np.bincount(j, wa * y, minlength=k) + np.bincount(j + 1, wt * y, minlength=k)
    return hess, g, j, t


def regularize(hess: np.ndarray) -> np.ndarray:
    """Adds a small ridge term when hess is (numerically) singular."""
    scale = np.trace(hess) / len(hess)
    if scale <= 0:
        return hess + np.eye(len(hess))
    try:
        chol = np.linalg.cholesky(hess)
        if np.min(np.diag(chol)) ** 2 > PIVOT_TOLERANCE * np.max(np.diag(hess)):
            return hess
    except np.linalg.LinAlgError:
        pass
    return hess + RIDGE * scale * np.eye(len(hess))


def _weighted_se(j, t, z, y, w) -> float:
    resid = z[j] + t * (z[j + 1] - z[j]) - y
    return float(np.dot(w, resid * resid))


def _transformed(pts: PointSet, x_knots, fx) -> Tuple[np.ndarray, np.ndarray]:
    x_knots = validate_knots(x_knots)
    fx = Transform(fx)
    tknots = apply_transform(fx, x_knots)
    validate_knots(tknots)
    # Clamping in original space keeps out-of-domain points usable.
    tx = apply_transform(fx, np.clip(pts.x, x_knots[0], x_knots[-1]))
    return tx, tknots


def solve_y_knots(pts: PointSet, x_knots: Sequence[float],
                  fx: Transform = Transform.IDENTITY) -> np.ndarray:
    """Optimal y-knots for fixed x-knots under weighted squared error."""
    if len(pts) == 0:
        raise ValueError('need at least one point')
    tx, tknots = _transformed(pts, x_knots, fx)
    return _solve_unbounded(tx, pts.y, pts.w, tknots)[0]


def _solve_unbounded(tx, y, w, tknots):
    hess, g, j, t = normal_equations(tx, y, w, tknots)
    z = np.linalg.solve(regularize(hess), g)
    return z, _weighted_se(j, t, z, y, w)


def solve_y_knots_bounded(pts: PointSet, x_knots: Sequence[float],
                          fx: Transform = Transform.IDENTITY,
                          bounds: SlopeBounds = UNBOUNDED) -> np.ndarray:
    """Optimal y-knots subject to slope bounds between adjacent knots.

    Solves for the first y-knot plus the deltas between adjacent y-knots, each
    delta boxed by the slope bounds times the transformed knot spacing.
    """
    if len(pts) == 0:
        raise ValueError('need at least one point')
    tx, tknots = _transformed(pts, x_knots, fx)
    return solve_transformed(tx, pts.y, pts.w, tknots, bounds)[0]


def solve_transformed(tx, y, w, tknots, bounds: SlopeBounds = UNBOUNDED):
    """Bounded hat-basis solve on already-transformed data; returns (y_knots, SE)."""
    hess, g, j, t = normal_equations(tx, y, w, tknots)
    hess = regularize(hess)
    if not bounds.active:
        z = np.linalg.solve(hess, g)
        return z, _weighted_se(j, t, z, y, w)
    k = len(tknots)
    # y = T d with T lower-triangular ones; d = (y_1, delta_1, ...).
    tri = np.tril(np.ones((k, k)))
    dhess = tri.T @ hess @ tri
    dg = tri.T @ g
    gaps = np.diff(tknots)
    with np.errstate(invalid='ignore'):
        lower = np.concatenate(([-np.inf], bounds.min_slope * gaps))
        upper = np.concatenate(([np.inf], bounds.max_slope * gaps))
    d = box_qp(dhess, dg, lower, upper)
    z = np.cumsum(d)
    return z, _weighted_se(j, t, z, y, w)


def box_qp(hess: np.ndarray, g: np.ndarray, lower: np.ndarray, upper: np.ndarray,
           max_iter: Optional[int] = None) -> np.ndarray:
    """Minimizes 0.5 z'Hz - g'z subject to lower <= z <= upper.

    Primal active-set method; hess must be positive definite. Starts from the
    projection of the unconstrained minimizer and converges in finitely many
    steps; stops at max_iter (default 10 * n) with a feasible iterate.
    """
    n = len(g)
    if np.any(lower > upper):
        raise InvalidBoundsError('lower bound exceeds upper bound')
    max_iter = 10 * n if max_iter is None else max_iter
    scale = max(np.abs(g).max(), np.abs(hess).max(), 1e-300)

    z = np.clip(np.linalg.solve(hess, g), lower, upper)
    at_lower = z <= lower
    at_upper = (z >= upper) & ~at_lower
    for _ in range(max_iter):
        fixed = at_lower | at_upper
        free = ~fixed
        target = z.copy()
        if free.any():
            rhs = g[free] - hess[np.ix_(free, fixed)] @ z[fixed]
            target[free] = np.linalg.solve(hess[np.ix_(free, free)], rhs)
        step = target - z
        with np.errstate(divide='ignore', invalid='ignore'):
            alpha_lo = np.where(step < 0, (lower - z) / step, np.inf)
            alpha_hi = np.where(step > 0, (upper - z) / step, np.inf)
        alphas = np.where(free, np.minimum(alpha_lo, alpha_hi), np.inf)
        blocking = int(np.argmin(alphas))
        if alphas[blocking] < 1.0:
            z = z + max(alphas[blocking], 0.0) * step
            if alpha_lo[blocking] <= alpha_hi[blocking]:
                z[blocking] = lower[blocking]
                at_lower[blocking] = True
            else:
                z[blocking] = upper[blocking]
                at_upper[blocking] = True
            continue
        z = target
        grad = hess @ z - g
        # Multipliers must be non-negative at optimality.
        mult = np.where(at_lower, grad, np.where(at_upper, -grad, np.inf))
        mult[lower == upper] = np.inf
        worst = int(np.argmin(mult))
        if mult[worst] >= -KKT_TOLERANCE * scale:
            break
        at_lower[worst] = at_upper[worst] = False
    return z


def isotonic_regression(y: Sequence[float], w: Optional[Sequence[float]] = None,
                        increasing: bool = True) -> np.ndarray:
    """Weighted pool-adjacent-violators fit of a monotone sequence."""
    y = np.asarray(y, dtype=float)
    if not increasing:
        return -isotonic_regression(-y, w, True)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    sums, weights, counts = [], [], []
    for yi, wi in zip(y.tolist(), w.tolist()):
        sums.append(yi * wi)
        weights.append(wi)
        counts.append(1)
        while len(sums) > 1 and sums[-2] * weights[-1] > sums[-1] * weights[-2]:
            s, wt, c = sums.pop(), weights.pop(), counts.pop()
            sums[-1] += s
            weights[-1] += wt
            counts[-1] += c
    means = np.array(sums) / np.array(weights) if sums else np.empty(0)
    return np.repeat(means, counts)


def _fuse_equal_x(pts: PointSet):
    """Pools points sharing an x-value; returns (y means, weights, within SE)."""
    ux, inverse = np.unique(pts.x, return_inverse=True)
    wsum = np.bincount(inverse, pts.w, minlength=len(ux))
    ymean = np.bincount(inverse, pts.w * pts.y, minlength=len(ux)) / wsum
    resid = pts.y - ymean[inverse]
    return ymean, wsum, float(np.dot(pts.w, resid * resid))


def isotonic_fit(pts: PointSet, direction: Direction = Direction.INCREASING) -> float:
    """Minimal squared error of a monotone step function of x over pts."""
    if len(pts) == 0:
        raise ValueError('need at least one point')
    ymean, wsum, within = _fuse_equal_x(pts)
    fitted = isotonic_regression(ymean, wsum, Direction(direction) is Direction.INCREASING)
    resid = fitted - ymean
    return within + float(np.dot(wsum, resid * resid))


def infer_mono_direction(pts: PointSet) -> Direction:
    """The monotone direction with lower isotonic error; ties go increasing."""
    up = isotonic_fit(pts, Direction.INCREASING)
    down = isotonic_fit(pts, Direction.DECREASING)
    return Direction.INCREASING if up <= down else Direction.DECREASING


def weighted_pearson(xs: Sequence[float], ys: Sequence[float],
                     ws: Optional[Sequence[float]] = None) -> float:
    """Weighted Pearson correlation; 0 when either side is (nearly) constant."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    w = np.ones_like(x) if ws is None else np.asarray(ws, dtype=float)
    wsum = w.sum()
    dx = x - np.dot(w, x) / wsum
    dy = y - np.dot(w, y) / wsum
    vx = np.dot(w, dx * dx) / wsum
    vy = np.dot(w, dy * dy) / wsum
    if (vx <= (ZERO_VARIANCE * np.abs(x).max()) ** 2
            or vy <= (ZERO_VARIANCE * np.abs(y).max()) ** 2):
        return 0.0
    r = np.dot(w, dx * dy) / wsum / math.sqrt(vx * vy)
    return float(np.clip(r, -1.0, 1.0))
