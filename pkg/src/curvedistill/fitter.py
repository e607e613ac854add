"""Fitting piecewise-linear curves to weighted points.

Pipeline: downsample, pick candidate x-knots spaced by cumulative weight,
choose an x-transform, condense the data around the candidates, then greedily
search for the best subset of candidates to use as knots.
"""

import dataclasses
import enum
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from curvedistill.condense import PointSet, condense_around_knots
from curvedistill.curves import PWLCurve, Transform, apply_transform
from curvedistill.errors import InsufficientDataError, InvalidConfigError
from curvedistill.solver import (Direction, SlopeBounds, infer_mono_direction,
                                 solve_transformed, weighted_pearson)

logger = logging.getLogger(__name__)

MAX_RESAMPLE_DOUBLINGS = 6


class Mono(str, enum.Enum):
    AUTO = 'auto'
    NONE = 'none'
    INCREASING = 'increasing'
    DECREASING = 'decreasing'


@dataclasses.dataclass(frozen=True)
class FitConfig:
    """Settings for fit_pwl.

    Attributes:
      num_segments: maximum number of linear segments.
      mono: monotonicity policy; AUTO infers the direction from the data.
      num_samples: number of candidate x-knots.
      downsample_to: point count above which the data is randomly subsampled.
      max_refine_iterations: cap on knot-swapping cycles.
      fx: 'auto' to choose a transform from the data, or a fixed Transform.
      min_slope, max_slope: slope bounds in transformed x-space.
      seed: seed for downsampling.
      transform_threshold: minimum gain in |correlation| for a non-identity
        transform to be chosen.
    """

    num_segments: int = 5
    mono: Mono = Mono.AUTO
    num_samples: int = 100
    downsample_to: int = 1_000_000
    max_refine_iterations: int = 10
    fx: Union[str, Transform] = 'auto'
    min_slope: Optional[float] = None
    max_slope: Optional[float] = None
    seed: int = 0
    transform_threshold: float = 0.05

    def __post_init__(self):
        try:
            object.__setattr__(self, 'mono', Mono(self.mono))
        except ValueError:
            raise InvalidConfigError(f'unknown mono policy {self.mono!r}') from None
        if self.fx != 'auto':
            try:
                object.__setattr__(self, 'fx', Transform(self.fx))
            except ValueError:
                raise InvalidConfigError(f'unknown transform {self.fx!r}') from None
        if self.num_segments < 1:
            raise InvalidConfigError('num_segments must be positive')
        if self.num_samples < self.num_segments + 1:
            raise InvalidConfigError('num_samples must be at least num_segments + 1')
        if self.downsample_to < self.num_samples:
            raise InvalidConfigError('downsample_to must be at least num_samples')
        if self.max_refine_iterations < 0:
            raise InvalidConfigError('max_refine_iterations must be non-negative')
        try:
            SlopeBounds(self.min_slope, self.max_slope)
        except ValueError as e:
            raise InvalidConfigError(str(e)) from None

    def slope_bounds(self) -> SlopeBounds:
        """Slope bounds with any explicit monotone direction folded in."""
        lo = -math.inf if self.min_slope is None else self.min_slope
        hi = math.inf if self.max_slope is None else self.max_slope
        if self.mono is Mono.INCREASING:
            lo = max(lo, 0.0)
        elif self.mono is Mono.DECREASING:
            hi = min(hi, 0.0)
        try:
            return SlopeBounds(lo, hi)
        except ValueError as e:
            raise InvalidConfigError(str(e)) from None


@dataclasses.dataclass(frozen=True)
class CandidateKnots:
    xs: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim != 1 or len(xs) < 2 or np.any(np.diff(xs) <= 0):
            raise InsufficientDataError('candidate knots must be >= 2 strictly increasing values')
        object.__setattr__(self, 'xs', xs)

    def __len__(self):
        return len(self.xs)


@dataclasses.dataclass(frozen=True)
class GreedyResult:
    x_knots: np.ndarray
    y_knots: np.ndarray
    se: float
    cycles: int
    se_history: Tuple[float, ...]
    converged: bool


@dataclasses.dataclass(frozen=True)
class FitResult:
    """A fitted curve plus diagnostics from the search."""

    curve: PWLCurve
    se: float
    fx: Transform
    direction: Optional[Direction]
    candidates: np.ndarray
    greedy: GreedyResult


def downsample(pts: PointSet, max_n: int, seed: int = 0) -> PointSet:
    """Uniform random subset of exactly max_n points (weights ignored).

    Original point order is kept. Returns pts unchanged if it is small enough.
    """
    if max_n < 1:
        raise InvalidConfigError('max_n must be positive')
    if len(pts) <= max_n:
        return pts
    rng = np.random.default_rng(seed)
    index = np.sort(rng.choice(len(pts), size=int(max_n), replace=False))
    return pts.take(index)


def _quantile_xs(sorted_x, cumw, count):
    targets = np.linspace(0.0, 1.0, count) * cumw[-1]
    index = np.minimum(np.searchsorted(cumw, targets, side='left'), len(sorted_x) - 1)
    return np.unique(sorted_x[index])


def sample_candidate_knots(pts: PointSet, num_samples: int) -> CandidateKnots:
    """Candidate x-knots at evenly spaced cumulative-weight fractions.

    With repeated x-values some fractions collide; the sampling rate is then
    doubled (up to MAX_RESAMPLE_DOUBLINGS times) until num_samples distinct
    values are found. Never returns more than num_samples values.

    Raises:
      InsufficientDataError: fewer than two distinct x-values.
    """
    pts = pts.sorted_by_x()
    x = pts.x
    distinct = np.unique(x)
    if len(distinct) < 2:
        raise InsufficientDataError('need at least two distinct x-values')
    if num_samples < 2:
        raise InvalidConfigError('num_samples must be at least 2')
    if len(distinct) <= num_samples:
        return CandidateKnots(distinct)

    cumw = np.cumsum(pts.w)
    count = num_samples
    found = _quantile_xs(x, cumw, count)
    for _ in range(MAX_RESAMPLE_DOUBLINGS):
        if len(found) >= num_samples:
            break
        count = 2 * (count - 1) + 1
        finer = _quantile_xs(x, cumw, count)
        if len(finer) > num_samples:
            # Keep everything found at the coarser rate, then spread the
            # remaining budget evenly over the newly found values.
            extra = np.setdiff1d(finer, found, assume_unique=True)
            need = num_samples - len(found)
            pick = np.round(np.linspace(0, len(extra) - 1, need)).astype(int)
            finer = np.union1d(found, extra[pick])
        found = finer
    return CandidateKnots(found)


def select_transform(pts: PointSet, threshold: float = 0.05) -> Transform:
    """Chooses an x-transform suited to the range of x.

    The candidate is log for positive x, log1p for non-negative x and
    symlog1p otherwise. It is kept only if it raises |Pearson(fx(x), y)| by
    more than threshold over the identity.
    """
    xmin = float(np.min(pts.x))
    if xmin > 0:
        candidate = Transform.LOG
    elif xmin >= 0:
        candidate = Transform.LOG1P
    else:
        candidate = Transform.SYMLOG1P
    base = abs(weighted_pearson(pts.x, pts.y, pts.w))
    transformed = abs(weighted_pearson(apply_transform(candidate, pts.x), pts.y, pts.w))
    return candidate if transformed - base > threshold else Transform.IDENTITY


class _KnotSearch:
    """Caches y-knot solves keyed by the chosen candidate indices."""

    def __init__(self, pts: PointSet, tcandidates: np.ndarray, bounds: SlopeBounds):
        self.tx, self.y, self.w = pts.x, pts.y, pts.w
        self.tcandidates = tcandidates
        self.bounds = bounds
        self.cache: Dict[Tuple[int, ...], Tuple[np.ndarray, float]] = {}

    def solve(self, knots: Tuple[int, ...]) -> Tuple[np.ndarray, float]:
        hit = self.cache.get(knots)
        if hit is None:
            hit = solve_transformed(self.tx, self.y, self.w,
                                    self.tcandidates[list(knots)], self.bounds)
            self.cache[knots] = hit
        return hit

    def best_addition(self, knots: List[int], incumbent: Optional[int] = None,
                      incumbent_se: float = math.inf) -> Tuple[Optional[int], float]:
        """Best candidate to add to knots. Only strict improvements displace
        the incumbent; among equal errors the lowest candidate wins."""
        taken = set(knots)
        best, best_se = incumbent, incumbent_se
        for c in range(len(self.tcandidates)):
            if c in taken or c == incumbent:
                continue
            se = self.solve(tuple(sorted(knots + [c])))[1]
            if se < best_se:
                best, best_se = c, se
        return best, best_se


def greedy_fit(pts: PointSet, candidates: CandidateKnots, config: FitConfig,
               bounds: Optional[SlopeBounds] = None) -> GreedyResult:
    """Greedy search for x-knots among candidates.

    pts and candidates must be in the space where interpolation is linear
    (already transformed). Stage 1 grows the knot set from the lowest
    candidate, one best knot at a time, to num_segments + 1 knots. Stage 2
    cycles through the knots, replacing each by the best available candidate,
    until a cycle changes nothing or max_refine_iterations cycles have run.
    """
    if len(pts) == 0:
        raise InsufficientDataError('no points to fit')
    if bounds is None:
        bounds = config.slope_bounds()
    tcand = candidates.xs
    target = config.num_segments + 1
    if len(tcand) < target:
        logger.warning('only %d distinct candidate knots; fitting %d segments instead of %d',
                       len(tcand), len(tcand) - 1, config.num_segments)
        target = len(tcand)
    search = _KnotSearch(pts, tcand, bounds)

    if len(tcand) == target:
        knots = list(range(target))
        y_knots, se = search.solve(tuple(knots))
        return GreedyResult(tcand.copy(), y_knots, se, 0, (se,), True)

    knots = [0]
    se = math.inf
    while len(knots) < target:
        best, se = search.best_addition(knots)
        knots = sorted(knots + [best])
    history = [se]

    cycles = 0
    converged = False
    while cycles < config.max_refine_iterations:
        cycles += 1
        changed = False
        for knot in list(knots):
            rest = [k for k in knots if k != knot]
            best, best_se = search.best_addition(rest, knot, se)
            if best != knot:
                knots = sorted(rest + [best])
                se = best_se
                history.append(se)
                changed = True
        if not changed:
            converged = True
            break
    y_knots, se = search.solve(tuple(knots))
    return GreedyResult(tcand[knots], y_knots, se, cycles, tuple(history), converged)


def _as_pointset(pts, y=None, w=None) -> PointSet:
    if isinstance(pts, PointSet):
        return pts
    return PointSet.from_arrays(pts, y, w)


def fit_pwl_detailed(pts: PointSet, config: FitConfig = FitConfig(),
                     name: str = '') -> FitResult:
    """Fits a PWLCurve and returns it with search diagnostics."""
    pts = _as_pointset(pts)
    if len(pts) == 0 or len(np.unique(pts.x)) < 2:
        raise InsufficientDataError('need at least two distinct x-values')
    pts = downsample(pts, config.downsample_to, config.seed).sorted_by_x()
    candidates = sample_candidate_knots(pts, config.num_samples).xs

    if config.fx == 'auto':
        fx = select_transform(pts, config.transform_threshold)
    else:
        fx = config.fx
    tx = apply_transform(fx, pts.x)
    tcand = apply_transform(fx, candidates)
    # Guard against distinct candidates that collide after transforming.
    tcand, first = np.unique(tcand, return_index=True)
    candidates = candidates[first]
    if len(tcand) < 2:
        raise InsufficientDataError('candidates collapse under the x-transform')

    if np.ptp(pts.y) == 0:
        mean = float(pts.y[0])
        curve = PWLCurve.from_knots(candidates[[0, -1]], [mean, mean], fx, name)
        greedy = GreedyResult(tcand[[0, -1]], np.array([mean, mean]), 0.0, 0, (0.0,), True)
        return FitResult(curve, 0.0, fx, None, candidates, greedy)

    condensed = condense_around_knots(PointSet(tx, pts.y, pts.w), tcand)

    direction = None
    if config.mono is Mono.AUTO:
        direction = infer_mono_direction(condensed.points)
        config = dataclasses.replace(config, mono=Mono(direction.value))
    elif config.mono is not Mono.NONE:
        direction = Direction(config.mono.value)

    greedy = greedy_fit(condensed.points, CandidateKnots(tcand), config)
    x_knots = candidates[np.searchsorted(tcand, greedy.x_knots)]
    curve = PWLCurve.from_knots(x_knots, greedy.y_knots, fx, name)
    return FitResult(curve, greedy.se + condensed.constant, fx, direction, candidates, greedy)


def fit_pwl(pts: PointSet, config: FitConfig = FitConfig(), name: str = '') -> PWLCurve:
    """Fits a piecewise-linear curve to weighted points, minimizing squared error.

    Args:
      pts: the data.
      config: fitting options; see FitConfig.
      name: feature name stored on the curve.

    Raises:
      InsufficientDataError: fewer than two distinct x-values.
      TransformDomainError: a fixed transform is undefined on some x.
    """
    return fit_pwl_detailed(pts, config, name).curve


def fit_xy(x: Sequence[float], y: Sequence[float], w: Optional[Sequence[float]] = None,
           config: FitConfig = FitConfig(), name: str = '') -> PWLCurve:
    """Convenience wrapper for fit_pwl taking separate columns."""
    return fit_pwl(PointSet.from_arrays(x, y, w), config, name)
