from __future__ import annotations

import math
from dataclasses import astuple

import numpy as np
import pytest
from scipy.integrate import trapezoid

from detlattice.domain import CellRecord
from detlattice.stats import (
    boxplot_stats,
    bw_silverman,
    feature_summaries,
    features_from_cells,
    kde_1d,
    kde_2d,
    summary,
)


def percentile(sorted_values: list[float], q: float) -> float:
    rank = q / 100.0 * (len(sorted_values) - 1)
    lo = math.floor(rank)
    hi = min(lo + 1, len(sorted_values) - 1)
    return sorted_values[lo] + (rank - lo) * (sorted_values[hi] - sorted_values[lo])


def direct_kde(grid, samples, h) -> np.ndarray:
    out = []
    for g in grid:
        total = 0.0
        for s in samples:
            z = (g - s) / h
            total += math.exp(-0.5 * z * z) / (h * math.sqrt(2.0 * math.pi))
        out.append(total / len(samples))
    return np.array(out)


def test_constant_sample():
    s = summary([4.0, 4.0, 4.0])
    assert s.mu == 4.0
    assert s.median == 4.0
    assert s.sigma == 0.0
    assert s.cv == 0.0


def test_one_to_five():
    s = summary([1, 2, 3, 4, 5])
    assert s.mu == 3.0
    assert s.median == 3.0
    assert s.sigma == pytest.approx(math.sqrt(2.5))
    assert s.p5 == pytest.approx(1.2)
    assert s.p95 == pytest.approx(4.8)
    assert s.n == 5


def test_summary_matches_direct_formulas():
    rng = np.random.default_rng(51)
    x = rng.lognormal(mean=-5.0, sigma=0.2, size=25).tolist()
    s = summary(x)
    ordered = sorted(x)
    mu = sum(x) / len(x)
    sigma = math.sqrt(sum((v - mu) ** 2 for v in x) / (len(x) - 1))

    assert s.mu == pytest.approx(mu, rel=1e-12)
    assert s.sigma == pytest.approx(sigma, rel=1e-12)
    assert s.median == pytest.approx(ordered[12], rel=1e-12)
    assert s.p5 == pytest.approx(percentile(ordered, 5), rel=1e-12)
    assert s.p95 == pytest.approx(percentile(ordered, 95), rel=1e-12)
    assert s.cv == pytest.approx(sigma / mu, rel=1e-12)


def test_summary_affine_equivariance():
    rng = np.random.default_rng(52)
    x = rng.normal(size=30)
    a, b = 2.5, -1.0
    s, t = summary(x), summary(a * x + b)
    assert t.mu == pytest.approx(a * s.mu + b, rel=1e-12)
    assert t.sigma == pytest.approx(a * s.sigma, rel=1e-12)
    assert t.median == pytest.approx(a * s.median + b, rel=1e-12)


def test_summary_rejects_empty_sample():
    with pytest.raises(ValueError, match="empty sample"):
        summary([])


def test_boxplot_examples():
    assert astuple(boxplot_stats(range(101))) == pytest.approx((50.0, 50.0, 5.0, 95.0))
    assert astuple(boxplot_stats([7.0])) == (7.0, 7.0, 7.0, 7.0)


def test_boxplot_matches_sorted_oracle():
    rng = np.random.default_rng(53)
    x = rng.uniform(size=25).tolist()
    ordered = sorted(x)
    b = boxplot_stats(x)
    assert b.whisker_lo == pytest.approx(percentile(ordered, 5), rel=1e-12)
    assert b.whisker_hi == pytest.approx(percentile(ordered, 95), rel=1e-12)
    assert b.median == pytest.approx(percentile(ordered, 50), rel=1e-12)
    assert b.mean == pytest.approx(sum(x) / 25, rel=1e-12)


def test_silverman_fallbacks():
    assert bw_silverman(np.array([2.0])) == pytest.approx(0.02)
    assert bw_silverman(np.array([0.0])) == 0.01
    assert bw_silverman(np.array([1.0, 1.0, 1.0, 5.0])) > 0


def test_single_sample_curve_peaks_at_sample():
    curve = kde_1d([3.0], grid_size=257)
    assert curve.density.max() == 1.0
    peak = int(np.argmax(curve.density))
    assert abs(curve.grid[peak] - 3.0) <= (curve.grid[1] - curve.grid[0]) / 2
    np.testing.assert_allclose(curve.density, curve.density[::-1], atol=1e-12)


def test_symmetric_samples_give_symmetric_curve():
    curve = kde_1d([-2.0, -0.5, 0.5, 2.0])
    np.testing.assert_allclose(curve.density, curve.density[::-1], atol=1e-12)


def test_kde_1d_matches_direct_sum():
    rng = np.random.default_rng(54)
    x = rng.lognormal(mean=0.0, sigma=0.3, size=25)
    curve = kde_1d(x, grid_size=64)
    expected = direct_kde(curve.grid, x, curve.bandwidth)
    np.testing.assert_allclose(curve.density * curve.scale, expected, rtol=1e-10)
    assert curve.density.max() == 1.0


def test_kde_1d_mass_is_one():
    rng = np.random.default_rng(55)
    curve = kde_1d(rng.normal(size=25), grid_size=256)
    mass = trapezoid(curve.density * curve.scale, curve.grid)
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_fixed_bandwidth_is_used():
    curve = kde_1d([1.0, 2.0], bandwidth=0.25)
    assert curve.bandwidth == 0.25
    with pytest.raises(ValueError):
        kde_1d([1.0, 2.0], bandwidth=-1.0)


def test_single_point_2d_bump():
    grid = kde_2d([1.0], [2.0], grid_size=65)
    assert grid.density.max() == 1.0
    ix, iy = np.unravel_index(int(np.argmax(grid.density)), grid.density.shape)
    assert abs(grid.x_grid[ix] - 1.0) <= (grid.x_grid[1] - grid.x_grid[0]) / 2
    assert abs(grid.y_grid[iy] - 2.0) <= (grid.y_grid[1] - grid.y_grid[0]) / 2


def test_swapped_axes_transpose_grid():
    rng = np.random.default_rng(56)
    x, y = rng.normal(size=20), rng.uniform(size=20)
    a = kde_2d(x, y, grid_size=32)
    b = kde_2d(y, x, grid_size=32)
    np.testing.assert_array_equal(a.density, b.density.T)


def test_kde_2d_matches_direct_double_sum():
    rng = np.random.default_rng(57)
    x, y = rng.lognormal(size=25), rng.normal(1.5, 0.2, size=25)
    grid = kde_2d(x, y, grid_size=16, log_x=True)
    hx, hy = grid.bandwidths
    lx = np.log10(x)
    expected = np.zeros((16, 16))
    for a, b in zip(lx, y):
        for i, gx in enumerate(grid.x_grid):
            for j, gy in enumerate(grid.y_grid):
                zx, zy = (gx - a) / hx, (gy - b) / hy
                expected[i, j] += math.exp(-0.5 * (zx * zx + zy * zy)) / (2.0 * math.pi * hx * hy)
    expected /= 25
    np.testing.assert_allclose(grid.density * grid.scale, expected, rtol=1e-10)


def test_log_x_needs_positive_samples():
    with pytest.raises(ValueError):
        kde_2d([0.0, 1.0], [1.0, 2.0], log_x=True)


def test_features_from_cells():
    records = [
        CellRecord(1, 2.0, 1.0, 1.0, 2.0, 2.0, 2.0, 1.0),
        CellRecord(2, 4.0, 2.0, 1.0, 8.0, 2.0, 4.0, 2.0),
    ]
    features = features_from_cells(records)
    assert features["Lx"] == [2.0, 4.0]
    assert features["AR2"] == [2.0, 4.0]
    summaries = feature_summaries(features)
    assert summaries["V"].mu == 5.0


def test_empty_feature_is_skipped_with_warning(caplog):
    with caplog.at_level("WARNING", logger="detlattice.stats"):
        assert feature_summaries({"V": []}) == {}
    assert "no samples" in caplog.text
