import itertools

import numpy as np
import pytest

from curvedistill.condense import PointSet, condense_around_knots, squared_error
from curvedistill.curves import PWLCurve, Transform, apply_transform
from curvedistill.errors import InsufficientDataError, InvalidConfigError
from curvedistill.fitter import (CandidateKnots, FitConfig, Mono, downsample,
                                 fit_pwl, fit_pwl_detailed, greedy_fit,
                                 sample_candidate_knots, select_transform)
from curvedistill.solver import Direction


def lstsq_se(x, y, w, knots):
    """Best SE for fixed knots, from a dense design matrix and lstsq."""
    xc = np.clip(x, knots[0], knots[-1])
    j = np.clip(np.searchsorted(knots, xc, side='right') - 1, 0, len(knots) - 2)
    t = (xc - knots[j]) / (knots[j + 1] - knots[j])
    a = np.zeros((len(x), len(knots)))
    a[np.arange(len(x)), j] = 1 - t
    a[np.arange(len(x)), j + 1] = t
    sw = np.sqrt(w)
    coef = np.linalg.lstsq(a * sw[:, None], y * sw, rcond=None)[0]
    return float(np.sum(w * (a @ coef - y) ** 2)), coef


def exhaustive_best(pts, cands, k):
    return min(lstsq_se(pts.x, pts.y, pts.w, cands[list(c)])[0]
               for c in itertools.combinations(range(len(cands)), k))


def random_wiggle(rng, n):
    x = rng.uniform(0, 10, n)
    y = np.sin(x * rng.uniform(0.3, 2)) * 2 + rng.normal(0, 0.3, n)
    return PointSet(x, y, rng.uniform(0.5, 2, n))


def linear_config(**kw):
    kw.setdefault('fx', Transform.IDENTITY)
    kw.setdefault('mono', Mono.NONE)
    return FitConfig(**kw)


class TestConfig:

    @pytest.mark.parametrize('kw', [dict(num_segments=0), dict(num_segments=5, num_samples=5),
                                    dict(num_samples=100, downsample_to=50),
                                    dict(mono='sideways'), dict(fx='sqrt'),
                                    dict(min_slope=1, max_slope=0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidConfigError):
            FitConfig(**kw)

    def test_mono_folds_into_bounds(self):
        bounds = FitConfig(mono='increasing', max_slope=3).slope_bounds()
        assert (bounds.min_slope, bounds.max_slope) == (0.0, 3.0)


class TestDownsample:

    def test_small_unchanged(self):
        pts = PointSet.from_arrays(np.arange(500.0), np.zeros(500))
        assert downsample(pts, 1_000_000) is pts

    def test_exact_size_subset(self):
        n = 2_000_000
        pts = PointSet.from_arrays(np.arange(n, dtype=float), np.zeros(n))
        out = downsample(pts, 1_000_000, seed=3)
        assert len(out) == 1_000_000
        assert len(np.unique(out.x)) == 1_000_000
        assert np.all(np.isin(out.x, pts.x))

    def test_deterministic(self):
        pts = PointSet.from_arrays(np.arange(1000.0), np.arange(1000.0))
        a, b = downsample(pts, 100, seed=7), downsample(pts, 100, seed=7)
        np.testing.assert_array_equal(a.x, b.x)
        assert not np.array_equal(a.x, downsample(pts, 100, seed=8).x)

    def test_invalid(self):
        with pytest.raises(InvalidConfigError):
            downsample(PointSet.from_arrays([0.0], [0.0]), 0)


class TestCandidates:

    def test_integer_grid(self):
        pts = PointSet.from_arrays(np.arange(11.0), np.zeros(11))
        np.testing.assert_array_equal(sample_candidate_knots(pts, 3).xs, [0, 5, 10])

    def test_exhausts_distinct(self):
        pts = PointSet.from_arrays(np.repeat([1.0, 2.0, 5.0, 9.0], 50), np.zeros(200))
        np.testing.assert_array_equal(sample_candidate_knots(pts, 100).xs, [1, 2, 5, 9])

    def test_heavy_duplicates_found_once(self):
        rng = np.random.default_rng(0)
        n = 10_000
        x = np.where(rng.random(n) < 0.55, rng.integers(0, 2, n), rng.integers(2, 400, n))
        pts = PointSet.from_arrays(x.astype(float), np.zeros(n))
        xs = sample_candidate_knots(pts, 100).xs
        assert list(xs).count(0.0) == 1 and list(xs).count(1.0) == 1
        assert len(xs) == 100
        assert np.all(np.diff(xs) > 0)

    def test_resampling_fills_budget(self):
        # 90% of the weight on one value leaves only ~11 distinct quantiles.
        x = np.concatenate([np.zeros(900), np.arange(1.0, 101.0)])
        pts = PointSet.from_arrays(x, np.zeros(len(x)))
        single = np.unique(x[np.minimum(np.searchsorted(np.arange(1, 1001),
                                                        np.linspace(0, 1, 20) * 1000), 999)])
        assert len(single) < 20
        assert len(sample_candidate_knots(pts, 20).xs) == 20

    def test_weighted_spacing(self):
        x = np.arange(11.0)
        w = np.where(x < 5, 10.0, 1.0)
        xs = sample_candidate_knots(PointSet.from_arrays(x, np.zeros(11), w), 3).xs
        # Half of the total weight 55 is reached at x=2.
        np.testing.assert_array_equal(xs, [0, 2, 10])

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            sample_candidate_knots(PointSet.from_arrays([3.0, 3.0], [1.0, 2.0]), 10)

    def test_candidate_type(self):
        with pytest.raises(InsufficientDataError):
            CandidateKnots([1.0])
        with pytest.raises(InsufficientDataError):
            CandidateKnots([1.0, 1.0])


def pearson(a, b):
    return float(np.corrcoef(a, b)[0, 1])


class TestSelectTransform:

    def test_log_data(self):
        x = np.exp(np.linspace(0, np.log(1e4), 1000))
        y = np.log(x)
        assert abs(pearson(np.log(x), y)) == pytest.approx(1.0)
        assert abs(pearson(x, y)) < 0.95
        assert select_transform(PointSet.from_arrays(x, y)) is Transform.LOG

    def test_log_data_uniform_x(self):
        x = np.linspace(1, 1e4, 1000)
        y = np.log(x)
        gain = abs(pearson(np.log(x), y)) - abs(pearson(x, y))
        expected = Transform.LOG if gain > 0.05 else Transform.IDENTITY
        assert select_transform(PointSet.from_arrays(x, y)) is expected

    def test_line_stays_identity(self):
        x = np.linspace(0, 50, 200)
        assert select_transform(PointSet.from_arrays(x, 3 * x + 1)) is Transform.IDENTITY

    def test_symlog_candidate(self):
        rng = np.random.default_rng(1)
        x = rng.standard_cauchy(2000)
        y = np.sign(x) * np.log1p(np.abs(x))
        assert select_transform(PointSet.from_arrays(x, y)) is Transform.SYMLOG1P

    def test_log1p_candidate(self):
        x = np.concatenate([[0.0], np.exp(np.linspace(0, 8, 500)) - 1])
        assert select_transform(PointSet.from_arrays(x, np.log1p(x))) is Transform.LOG1P

    def test_fixed_policy_bypasses(self):
        x = np.exp(np.linspace(0, 8, 300))
        res = fit_pwl_detailed(PointSet.from_arrays(x, np.log(x)), linear_config(num_samples=20))
        assert res.fx is Transform.IDENTITY


class TestGreedy:

    def test_exact_two_segments(self):
        x = np.linspace(0, 10, 101)
        y = np.where(x < 4, x, 4 - 2 * (x - 4))
        pts = PointSet.from_arrays(x, y)
        cands = CandidateKnots(np.linspace(0, 10, 11))
        res = greedy_fit(pts, cands, linear_config(num_segments=2, num_samples=11))
        assert res.se <= 1e-10 * np.sum(y ** 2)
        np.testing.assert_allclose(res.x_knots, [0, 4, 10])
        assert exhaustive_best(pts, cands.xs, 3) <= 1e-10 * np.sum(y ** 2)

    def test_one_segment_line(self):
        x = np.linspace(-3, 7, 50)
        pts = PointSet.from_arrays(x, 2 * x - 1)
        res = greedy_fit(pts, CandidateKnots(np.linspace(-3, 7, 6)),
                         linear_config(num_segments=1, num_samples=6))
        np.testing.assert_allclose(res.x_knots, [-3, 7])
        np.testing.assert_allclose(res.y_knots, [-7, 13], atol=1e-10)

    def test_exhausted_candidates(self, caplog):
        pts = PointSet.from_arrays([0.0, 1, 2], [0.0, 1, 0])
        res = greedy_fit(pts, CandidateKnots([0.0, 1, 2]), linear_config(num_segments=5))
        assert len(res.x_knots) == 3
        assert 'instead of 5' in caplog.text

    def test_small_instances_against_exhaustive(self):
        rng = np.random.default_rng(4)
        config = linear_config(num_samples=8, num_segments=2)
        for _ in range(30):
            pts = random_wiggle(rng, 200)
            cands = sample_candidate_knots(pts, 8)
            condensed = condense_around_knots(pts, cands.xs)
            res = greedy_fit(condensed.points, cands, config)
            full_se = lstsq_se(pts.x, pts.y, pts.w, res.x_knots)[0]
            assert res.se + condensed.constant == pytest.approx(full_se, rel=1e-8)
            assert full_se >= exhaustive_best(pts, cands.xs, 3) * (1 - 1e-9)

    def test_one_swap_local_optimality(self):
        rng = np.random.default_rng(5)
        config = linear_config(num_samples=10, num_segments=3)
        checked = 0
        for _ in range(20):
            pts = random_wiggle(rng, 150)
            cands = sample_candidate_knots(pts, 10)
            res = greedy_fit(pts, cands, config)
            if not res.converged:
                continue
            checked += 1
            chosen = set(res.x_knots.tolist())
            for out in chosen:
                for new in set(cands.xs.tolist()) - chosen:
                    knots = np.array(sorted(chosen - {out} | {new}))
                    assert lstsq_se(pts.x, pts.y, pts.w, knots)[0] >= res.se * (1 - 1e-9) - 1e-12
        assert checked >= 15

    def test_history_non_increasing_and_cycle_cap(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            pts = random_wiggle(rng, 300)
            cands = sample_candidate_knots(pts, 30)
            res = greedy_fit(pts, cands, linear_config(num_samples=30, num_segments=4))
            assert np.all(np.diff(res.se_history) <= 0)
            assert res.cycles <= 10

    def test_zero_refine_iterations(self):
        rng = np.random.default_rng(7)
        pts = random_wiggle(rng, 100)
        res = greedy_fit(pts, sample_candidate_knots(pts, 10),
                         linear_config(num_samples=10, num_segments=3, max_refine_iterations=0))
        assert res.cycles == 0 and len(res.x_knots) == 4


class TestFitPWL:

    def test_monotone_auto(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(0, 10, 10_000)
        truth = -np.sqrt(x) + 0.3 * np.sin(3 * x)  # mostly decreasing, with ripples
        y = truth + rng.normal(0, 0.2, len(x))
        res = fit_pwl_detailed(PointSet.from_arrays(x, y), FitConfig(mono='auto'))
        assert res.direction is Direction.DECREASING
        assert np.all(np.diff(res.curve.ys) <= 0)

    def test_increasing_policy(self):
        rng = np.random.default_rng(9)
        pts = random_wiggle(rng, 1000)
        curve = fit_pwl(pts, linear_config(mono='increasing', num_samples=30))
        assert np.all(np.diff(curve.ys) >= 0)

    def test_constant_y(self):
        x = np.linspace(0, 10, 100)
        curve = fit_pwl(PointSet.from_arrays(x, np.full(100, 2.5)), linear_config())
        assert len(curve.points) == 2
        assert curve.ys.tolist() == [2.5, 2.5]

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            fit_pwl(PointSet.from_arrays([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))
        with pytest.raises(InsufficientDataError):
            fit_pwl(PointSet.empty())

    def test_refit_idempotent(self):
        rng = np.random.default_rng(10)
        knots = np.sort(rng.choice(np.arange(0, 101, 5.0), 6, replace=False))
        original = PWLCurve.from_knots(knots, rng.normal(0, 3, 6))
        x = np.repeat(np.arange(knots[0], knots[-1] + 0.5, 0.5), 20)
        pts = PointSet.from_arrays(x, original(x))
        # Offer every distinct x, so the original knots are candidates.
        config = linear_config(num_segments=5, num_samples=len(np.unique(x)))
        refit = fit_pwl(pts, config)
        scale = np.sum(pts.y ** 2)
        assert squared_error(refit, pts) <= 1e-8 * scale

    def test_determinism(self):
        rng = np.random.default_rng(11)
        pts = random_wiggle(rng, 5000)
        config = FitConfig(downsample_to=1000, seed=42)
        a, b = fit_pwl(pts, config), fit_pwl(pts, config)
        assert a == b
        assert a.points == b.points

    def test_condensed_fidelity(self):
        rng = np.random.default_rng(12)
        for fx in (Transform.IDENTITY, Transform.LOG1P):
            pts = random_wiggle(rng, 3000)
            res = fit_pwl_detailed(pts, linear_config(fx=fx, num_samples=40))
            full = squared_error(res.curve, pts)
            assert res.se == pytest.approx(full, rel=1e-8)

    def test_segment_budget(self):
        rng = np.random.default_rng(13)
        for segments in (1, 2, 5, 8):
            pts = random_wiggle(rng, 2000)
            curve = fit_pwl(pts, linear_config(num_segments=segments, num_samples=50))
            assert curve.num_segments == segments
        few = PointSet.from_arrays(np.repeat([0.0, 1.0, 2.0], 10), rng.normal(size=30))
        assert fit_pwl(few, linear_config(num_segments=5)).num_segments == 2

    def test_transformed_fit_in_original_space(self):
        x = np.exp(np.linspace(0, 9, 2000))
        y = np.log(x)
        res = fit_pwl_detailed(PointSet.from_arrays(x, y), FitConfig(mono='none', num_samples=30))
        assert res.fx is Transform.LOG
        assert res.curve.xs[0] == pytest.approx(1.0)
        assert squared_error(res.curve, PointSet.from_arrays(x, y)) < 1e-12

    def test_fixed_transform_domain_error(self):
        from curvedistill.errors import TransformDomainError
        with pytest.raises(TransformDomainError):
            fit_pwl(PointSet.from_arrays([-1.0, 2.0, 3.0], [0.0, 1.0, 2.0]),
                    FitConfig(fx='log', num_segments=1, num_samples=3))

    def test_beats_constant(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(0, 1, 3000)
        y = np.floor(x * 4) + rng.normal(0, 0.3, 3000)
        pts = PointSet.from_arrays(x, y)
        curve = fit_pwl(pts, linear_config())
        mean = np.average(y)
        assert squared_error(curve, pts) <= np.sum((y - mean) ** 2)

    def test_log_knots_mapped_back(self):
        x = np.exp(np.linspace(0, 5, 500))
        pts = PointSet.from_arrays(x, np.log(x) ** 2)
        res = fit_pwl_detailed(pts, FitConfig(fx='log', mono='none', num_samples=20))
        assert set(res.curve.xs.tolist()) <= set(res.candidates.tolist())
        np.testing.assert_allclose(apply_transform(Transform.LOG, res.curve.xs),
                                   res.greedy.x_knots)
