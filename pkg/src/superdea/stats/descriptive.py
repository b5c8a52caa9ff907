"""Summary tables, correlation matrices and kernel densities."""

from __future__ import annotations

import math

import numpy as np
import pandas as pd

DESCRIBE_COLUMNS = ["Variables", "Obs.", "mean", "std", "min", "P25", "P50", "P75", "max"]


def describe(data, variables) -> pd.DataFrame:
    """Obs/mean/std/quantiles per variable; quantiles interpolate linearly between order statistics.

    ``data`` is a :class:`~superdea.data.Panel` or a DataFrame.  A variable with
    no non-missing values yields a row with ``Obs.`` 0 and NaN statistics.
    """
    frame = getattr(data, "frame", data)
    rows = []
    for var in variables:
        if var not in frame.columns:
            raise KeyError(f"unknown variable {var!r}")
        v = frame[var].to_numpy(dtype=float)
        v = v[~np.isnan(v)]
        if v.size == 0:
            rows.append([var, 0] + [math.nan] * 7)
            continue
        q = np.percentile(v, [25, 50, 75])
        std = float(v.std(ddof=1)) if v.size > 1 else math.nan
        rows.append([var, int(v.size), float(v.mean()), std, float(v.min()), *map(float, q), float(v.max())])
    return pd.DataFrame(rows, columns=DESCRIBE_COLUMNS)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    if x.size < 2:
        return math.nan
    dx, dy = x - x.mean(), y - y.mean()
    den = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if den == 0:
        return math.nan
    return max(-1.0, min(1.0, float(dx @ dy) / den))


def correlogram(series) -> pd.DataFrame:
    """Pearson correlation matrix with pairwise-complete observations.

    ``series`` is a DataFrame or a mapping of name to equal-length sequences.
    """
    frame = series if isinstance(series, pd.DataFrame) else pd.DataFrame(dict(series))
    names = list(frame.columns)
    cols = [frame[c].to_numpy(dtype=float) for c in names]
    k = len(names)
    out = np.eye(k)
    for i in range(k):
        if np.count_nonzero(~np.isnan(cols[i])) < 2:
            out[i, i] = math.nan
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = _pearson(cols[i], cols[j])
    return pd.DataFrame(out, index=names, columns=names)


def top_correlations(matrix: pd.DataFrame, target: str, k: int = 4, among=None) -> list[tuple[str, float]]:
    """The ``k`` variables with the largest absolute correlation with ``target``."""
    candidates = [c for c in (among or matrix.columns) if c != target]
    vals = matrix.loc[target, candidates].dropna()
    order = sorted(vals.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    return [(name, float(v)) for name, v in order[:k]]


def silverman_bandwidth(values) -> float:
    v = np.asarray(values, dtype=float)
    sd = v.std(ddof=1)
    iqr = np.subtract(*np.percentile(v, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * v.size ** (-0.2)


def gaussian_density(values, grid=None, n_points: int = 512, span: float = 3.0):
    """Gaussian KDE with Silverman's bandwidth.

    Without an explicit grid, ``n_points`` points cover the data range
    widened by ``span`` bandwidths on each side.  Returns ``(grid, density, bandwidth)``.
    """
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if np.unique(v).size < 2:
        raise ValueError("density needs at least two distinct values")
    h = silverman_bandwidth(v)
    if grid is None:
        grid = np.linspace(v.min() - span * h, v.max() + span * h, n_points)
    grid = np.asarray(grid, dtype=float)
    z = (grid[:, None] - v[None, :]) / h
    dens = np.exp(-0.5 * z**2).sum(axis=1) / (v.size * h * math.sqrt(2 * math.pi))
    return grid, dens, h
