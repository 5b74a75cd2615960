"""Error metrics on ocean-point vectors.

Forecast arrays are ``(n_windows, tau, N)``: window, lead week, ocean point.
Reconstruction arrays are ``(T, N)``. Land points never appear because the
inputs are already flattened over the ocean mask.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError

EASTERN_PACIFIC = {"lat_range": (-10.0, 10.0), "lon_range": (200.0, 250.0)}
HIST_BINS = 50


def _aligned(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DomainError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    return pred, truth


def rmse_per_week(pred, truth, week, points=None, pooled=True):
    """RMSE at lead ``week`` (1-based) over all windows and the given points.

    ``pooled=True`` takes one root over every (window, point) pair;
    ``pooled=False`` averages the per-window RMSEs instead.
    """
    pred, truth = _aligned(pred, truth)
    if not 1 <= week <= pred.shape[1]:
        raise DomainError(f"week {week} outside 1..{pred.shape[1]}")
    err = pred[:, week - 1] - truth[:, week - 1]
    if points is not None:
        points = np.asarray(points)
        if points.size == 0:
            raise DomainError("empty set of evaluation points")
        err = err[:, points]
    if pooled:
        return float(np.sqrt(np.mean(err**2)))
    return float(np.mean(np.sqrt(np.mean(err**2, axis=1))))


def region_rmse(pred, truth, week, mask, lat_range=EASTERN_PACIFIC["lat_range"], lon_range=EASTERN_PACIFIC["lon_range"], pooled=True):
    points = mask.region(lat_range, lon_range)
    if points.size == 0:
        raise DomainError(f"no ocean points in lat {lat_range}, lon {lon_range}")
    return rmse_per_week(pred, truth, week, points, pooled)


def relative_l2(pred, truth):
    """``||pred - truth|| / ||truth||`` per snapshot, averaged over snapshots."""
    pred, truth = _aligned(pred, truth)
    if pred.ndim == 1:
        pred, truth = pred[None], truth[None]
    num = np.linalg.norm(pred - truth, axis=-1)
    den = np.linalg.norm(truth, axis=-1)
    if np.any(den == 0):
        raise DomainError("truth snapshot with zero norm")
    return float(np.mean(num / den))


def pointwise_rmse(pred, truth, axis=0):
    """RMSE at every point, reducing over the time/window axis."""
    pred, truth = _aligned(pred, truth)
    return np.sqrt(np.mean((pred - truth) ** 2, axis=axis))


def histogram_edges(*values, bins=HIST_BINS):
    """``bins`` uniform bins over ``[0, max observed]`` shared by all inputs."""
    hi = max(float(np.max(v)) for v in values)
    return np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)


def rmse_histogram(values, edges=None, bins=HIST_BINS):
    values = np.asarray(values, dtype=np.float64).ravel()
    if edges is None:
        edges = histogram_edges(values, bins=bins)
    counts, _ = np.histogram(values, bins=edges)
    return counts, edges


def histogram_diff(ensemble_counts, member_counts):
    """Ensemble minus member counts per bin (positive at low RMSE favours the ensemble)."""
    a = np.asarray(ensemble_counts)
    b = np.asarray(member_counts)
    if a.shape != b.shape:
        raise DomainError("histograms must share bins")
    return a.astype(np.int64) - b.astype(np.int64)


def pearson(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / den) if den > 0 else float("nan")
