from __future__ import annotations

import logging
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from detlattice.domain import (
    BoxplotStats,
    CellRecord,
    DensityCurve1D,
    DensityGrid2D,
    SummaryStats,
)

logger = logging.getLogger(__name__)

FEATURES = ("Lx", "Ly", "Lz", "V", "AR1", "AR2", "AR3")
SQRT_2PI = math.sqrt(2.0 * math.pi)


def _samples(values: Iterable[float]) -> np.ndarray:
    if not isinstance(values, (np.ndarray, list, tuple)):
        values = list(values)
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    return x


def summary(values: Iterable[float]) -> SummaryStats:
    x = _samples(values)
    mu = float(x.mean())
    sigma = float(x.std(ddof=1)) if x.size > 1 else 0.0
    p5, median, p95 = np.percentile(x, [5, 50, 95], method="linear")
    return SummaryStats(
        mu=mu,
        sigma=sigma,
        median=float(median),
        cv=sigma / mu if mu != 0 else None,
        p5=float(p5),
        p95=float(p95),
        n=int(x.size),
    )


def boxplot_stats(values: Iterable[float]) -> BoxplotStats:
    s = summary(values)
    return BoxplotStats(median=s.median, mean=s.mu, whisker_lo=s.p5, whisker_hi=s.p95)


def bw_silverman(x: np.ndarray, exponent: float = 0.2) -> float:
    """Silverman's rule with the IQR guard; falls back when the spread vanishes."""
    n = x.size
    std = float(x.std(ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25], method="linear")
    iqr = float(q75 - q25)
    if std > 0 and iqr > 0:
        return 0.9 * min(std, iqr / 1.34) * n ** (-exponent)
    if std > 0:
        return 1.06 * std * n ** (-exponent)
    span = float(np.ptp(x))
    if span > 0:
        return span / 100.0
    scale = abs(float(x[0]))
    return scale / 100.0 if scale > 0 else 0.01


def _resolve_bandwidth(x: np.ndarray, bandwidth: float | str | None, exponent: float) -> float:
    if bandwidth is None or bandwidth == "auto" or bandwidth == "silverman":
        return bw_silverman(x, exponent)
    h = float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be > 0")
    return h


def _kernel_rows(grid: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    """Gaussian kernel of every sample on the grid, one row per sample."""
    z = (grid[None, :] - x[:, None]) / h
    return np.exp(-0.5 * z * z) / (h * SQRT_2PI)


def kde_1d(
    values: Iterable[float], grid_size: int = 256, bandwidth: float | str | None = "auto"
) -> DensityCurve1D:
    x = _samples(values)
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    h = _resolve_bandwidth(x, bandwidth, 0.2)
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
    rows = _kernel_rows(grid, x, h)
    density = np.zeros(grid_size)
    for row in rows:
        density += row
    density /= x.size
    scale = float(density.max())
    return DensityCurve1D(grid=grid, density=density / scale, bandwidth=h, scale=scale)


def kde_2d(
    xs: Iterable[float],
    ys: Iterable[float],
    grid_size: int = 128,
    bandwidths: tuple[float, float] | str | None = "auto",
    *,
    log_x: bool = False,
) -> DensityGrid2D:
    x = _samples(xs)
    y = _samples(ys)
    if x.size != y.size:
        raise ValueError("paired samples differ in length")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    if log_x:
        if np.any(x <= 0):
            raise ValueError("log_x requires positive samples")
        x = np.log10(x)
    if bandwidths is None or isinstance(bandwidths, str):
        hx = _resolve_bandwidth(x, bandwidths, 1.0 / 6.0)
        hy = _resolve_bandwidth(y, bandwidths, 1.0 / 6.0)
    else:
        hx = _resolve_bandwidth(x, bandwidths[0], 1.0 / 6.0)
        hy = _resolve_bandwidth(y, bandwidths[1], 1.0 / 6.0)
    x_grid = np.linspace(x.min() - 3 * hx, x.max() + 3 * hx, grid_size)
    y_grid = np.linspace(y.min() - 3 * hy, y.max() + 3 * hy, grid_size)
    kx = _kernel_rows(x_grid, x, hx)
    ky = _kernel_rows(y_grid, y, hy)
    density = np.zeros((grid_size, grid_size))
    for row_x, row_y in zip(kx, ky):
        density += np.outer(row_x, row_y)
    density /= x.size
    scale = float(density.max())
    return DensityGrid2D(
        x_grid=x_grid,
        y_grid=y_grid,
        density=density / scale,
        bandwidths=(hx, hy),
        scale=scale,
        log_x=log_x,
    )


def features_from_cells(records: Sequence[CellRecord]) -> dict[str, list[float]]:
    return {
        "Lx": [r.lx for r in records],
        "Ly": [r.ly for r in records],
        "Lz": [r.lz for r in records],
        "V": [r.volume for r in records],
        "AR1": [r.ar1 for r in records],
        "AR2": [r.ar2 for r in records],
        "AR3": [r.ar3 for r in records],
    }


def feature_summaries(features: Mapping[str, Sequence[float]]) -> dict[str, SummaryStats]:
    result: dict[str, SummaryStats] = {}
    for name, values in features.items():
        if len(values) == 0:
            logger.warning("feature %s has no samples", name)
            continue
        result[name] = summary(values)
    return result
