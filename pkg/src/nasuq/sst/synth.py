"""Deterministic synthetic datasets for tests and smoke runs."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .grid import LandMask


def heteroscedastic(size, seed=0, x_range=(-1.0, 1.0), noise=0.3):
    """``y = x^3 + eps`` with ``sd(eps) = noise * |x|``; returns ``(x, y)`` as ``(n, 1)`` arrays."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(*x_range, size=(size, 1))
    y = x**3 + noise * np.abs(x) * rng.standard_normal((size, 1))
    return x, y


def wave_field(n_points, n_times, rank, seed=0):
    """Low-rank ``(N, T)`` field made of traveling waves.

    Each traveling wave ``cos(k x - w t + p)`` contributes two separable
    terms; an odd ``rank`` gets one extra standing wave.
    """
    if rank < 0 or rank > min(n_points, n_times):
        raise DomainError(f"rank {rank} impossible for a {n_points}x{n_times} field")
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)[:, None]
    t = np.linspace(0.0, 2.0 * np.pi, n_times, endpoint=False)[None, :]
    field = np.zeros((n_points, n_times))
    for i in range(rank // 2):
        k = i + 1
        w = rng.uniform(0.5, 3.0)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.5, 2.0) / k
        field += amp * np.cos(k * x - w * t + phase)
    if rank % 2:
        k = rank // 2 + 1
        field += rng.uniform(0.5, 2.0) / k * np.sin(k * x + rng.uniform(0, 2 * np.pi)) * np.cos(rng.uniform(0.5, 3.0) * t)
    return field


def toy_mask(shape=(18, 36), seed=0, land_fraction=0.3):
    """Blobby land mask with the poles kept as ocean."""
    rng = np.random.default_rng(seed)
    h, w = shape
    lat = np.linspace(-1, 1, h)[:, None]
    lon = np.linspace(0, 2 * np.pi, w, endpoint=False)[None, :]
    f = np.zeros(shape)
    for _ in range(6):
        f += rng.uniform(0.5, 1.0) * np.cos(rng.integers(1, 4) * lon + rng.uniform(0, 6.3)) * np.cos(rng.uniform(1, 4) * lat + rng.uniform(0, 6.3))
    cut = np.quantile(f, 1.0 - land_fraction)
    return LandMask(f < cut)


def synthetic_sst(n_times, shape=(18, 36), seed=0, noise=0.05, mask=None):
    """SST-like grids ``(T, H, W)``: latitude profile, seasonal cycle and drifting anomalies.

    Land points are NaN. Returns ``(grids, mask)``.
    """
    rng = np.random.default_rng(seed)
    mask = mask or toy_mask(shape, seed)
    h, w = mask.shape
    lat = np.deg2rad(mask.latitudes())[:, None]
    lon = np.deg2rad(mask.longitudes())[None, :]
    weeks = np.arange(n_times)
    base = 28.0 * np.cos(lat) ** 2 - 1.5
    grids = np.empty((n_times, h, w))
    season = 2 * np.pi * weeks / 52.18
    for i, tt in enumerate(weeks):
        field = base + 3.0 * np.sin(lat) * np.cos(season[i]) * np.ones_like(lon)
        field = field + 0.8 * np.cos(2 * lon - 0.05 * tt) * np.cos(lat) ** 2
        field = field + 0.5 * np.sin(3 * lon + 0.03 * tt) * np.sin(2 * lat) * np.cos(season[i] / 3.7)
        grids[i] = field
    grids += noise * rng.standard_normal(grids.shape)
    grids[:, ~mask.ocean] = np.nan
    return grids, mask


def synth_generate(kind, size, seed=0, **kwargs):
    """Dispatch by name: ``"heteroscedastic"`` (size = n samples) or ``"wave"`` (size = (N, T))."""
    if kind == "heteroscedastic":
        return heteroscedastic(size, seed, **kwargs)
    if kind == "wave":
        n, t = size
        return wave_field(n, t, kwargs.pop("rank", 4), seed)
    raise DomainError(f"unknown synthetic dataset {kind!r}")
