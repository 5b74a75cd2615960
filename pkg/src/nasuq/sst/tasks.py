"""Forecast windows, train/test splits and sparse sensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

N_WEEKLY_SNAPSHOTS = 1914
FORECAST_SPLIT = 427  # Oct 1981 - Dec 1989 for training, the remaining 1487 for testing
RECONSTRUCT_SPLIT = 1040  # 1981 - 2001 for training, the remaining 874 for testing
WINDOW = 8
SENSOR_BAND = (-50.0, 50.0)
DEFAULT_SENSORS = 50


def split(n_total, n_train):
    """Chronological train/test index ranges."""
    if not 0 < n_train < n_total:
        raise DomainError(f"cannot split {n_total} snapshots at {n_train}")
    return np.arange(n_train), np.arange(n_train, n_total)


@dataclass(frozen=True)
class WindowedDataset:
    inputs: np.ndarray  # (n, tau + 1, M): a(t - tau) .. a(t)
    targets: np.ndarray  # (n, tau, M): a(t + 1) .. a(t + tau)
    starts: np.ndarray  # index of a(t - tau) in the source series

    def __len__(self):
        return len(self.inputs)

    @property
    def tau(self):
        return self.targets.shape[1]


def build_forecast_windows(series, tau=WINDOW):
    """Slide a (tau + 1)-in / tau-out window over a ``(T, M)`` series.

    Every admissible start is used once, giving ``T - 2*tau`` samples.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    t = len(series)
    if tau < 1:
        raise DomainError("tau must be positive")
    if t < 2 * tau + 1:
        raise DomainError(f"series of length {t} is too short for tau={tau} (need {2 * tau + 1})")
    n = t - 2 * tau
    idx_in = np.arange(n)[:, None] + np.arange(tau + 1)[None, :]
    idx_out = np.arange(n)[:, None] + tau + 1 + np.arange(tau)[None, :]
    return WindowedDataset(series[idx_in], series[idx_out], np.arange(n))


def window_count(t, tau=WINDOW):
    if t < 2 * tau + 1:
        raise DomainError(f"series of length {t} is too short for tau={tau}")
    return t - 2 * tau


@dataclass(frozen=True)
class SensorSet:
    """Sensor positions: indices into the ocean vector plus grid coordinates."""

    index: np.ndarray
    rows: np.ndarray
    cols: np.ndarray

    def __len__(self):
        return self.index.size

    def to_dict(self):
        return {"index": self.index.tolist(), "rows": self.rows.tolist(), "cols": self.cols.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["index"], dtype=np.int64), np.asarray(d["rows"], dtype=np.int64), np.asarray(d["cols"], dtype=np.int64))


def sample_sensors(mask, n=DEFAULT_SENSORS, band=SENSOR_BAND, seed=0):
    """Draw ``n`` distinct ocean points uniformly from a latitude band."""
    lat, _ = mask.point_coords()
    eligible = np.flatnonzero((lat >= band[0]) & (lat <= band[1]))
    if n < 1:
        raise DomainError("need at least one sensor")
    if eligible.size < n:
        raise DomainError(f"only {eligible.size} ocean points in band {band}, asked for {n}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(eligible, size=n, replace=False))
    rows, cols = np.unravel_index(mask.flat_index[idx], mask.shape)
    return SensorSet(idx, rows.astype(np.int64), cols.astype(np.int64))


def observe(sensors, field, mask=None):
    """Apply the observation operator to ocean vectors ``(..., N)`` or grids ``(..., H, W)``."""
    field = np.asarray(field)
    if mask is not None and field.shape[-2:] == mask.shape:
        return field[..., sensors.rows, sensors.cols]
    return field[..., sensors.index]
