"""One-degree global grids, land masks, and the binary snapshot/mask formats.

Grids are stored row-major as ``(rows, cols) = (latitude, longitude)``. Row
``i`` is centred at latitude ``89.5 - i`` (north to south) and column ``j``
at longitude ``0.5 + j`` degrees east, matching the NOAA OI layout. Smaller
grids used in tests scale the same convention to their own shape.

Snapshot file: ``b"SST1"``, then ``T, H, W`` as ``<u4``, then ``T*H*W``
``<f4`` values. Mask file: ``b"MSK1"``, ``H, W`` as ``<u4``, then ``H*W``
bytes with 1 marking ocean.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import DomainError, FormatError

GRID_SHAPE = (180, 360)
LAND = np.nan
SST_MAGIC = b"SST1"
MASK_MAGIC = b"MSK1"
_SST_HEADER = struct.Struct("<4sIII")
_MASK_HEADER = struct.Struct("<4sII")


class LandMask:
    """Boolean ocean indicator (True = ocean) on a lat/lon grid."""

    def __init__(self, ocean):
        ocean = np.asarray(ocean, dtype=bool)
        if ocean.ndim != 2:
            raise DomainError("mask must be two-dimensional")
        self.ocean = ocean.copy()
        self.ocean.setflags(write=False)
        self._flat = np.flatnonzero(self.ocean.ravel())

    @property
    def shape(self):
        return self.ocean.shape

    @property
    def n_ocean(self):
        return self._flat.size

    @property
    def flat_index(self):
        """Positions of ocean points in the raveled grid."""
        return self._flat

    def latitudes(self):
        h = self.shape[0]
        step = 180.0 / h
        return 90.0 - step * (np.arange(h) + 0.5)

    def longitudes(self):
        w = self.shape[1]
        step = 360.0 / w
        return step * (np.arange(w) + 0.5)

    def point_coords(self):
        """(lat, lon) of every ocean point, in flattened order."""
        rows, cols = np.unravel_index(self._flat, self.shape)
        return self.latitudes()[rows], self.longitudes()[cols]

    def region(self, lat_range, lon_range):
        """Indices (into the ocean vector) of points inside a lat/lon box."""
        lat, lon = self.point_coords()
        sel = (lat >= lat_range[0]) & (lat <= lat_range[1]) & (lon >= lon_range[0]) & (lon <= lon_range[1])
        return np.flatnonzero(sel)

    def __eq__(self, other):
        return isinstance(other, LandMask) and np.array_equal(self.ocean, other.ocean)

    __hash__ = None


def flatten_ocean(field, mask):
    """Ocean values of a grid ``(..., H, W)`` as ``(..., N_ocean)``."""
    field = np.asarray(field)
    if field.shape[-2:] != mask.shape:
        raise DomainError(f"grid shape {field.shape[-2:]} does not match mask {mask.shape}")
    lead = field.shape[:-2]
    return field.reshape(lead + (-1,))[..., mask.flat_index]


def unflatten_ocean(vec, mask, fill=LAND):
    """Inverse of :func:`flatten_ocean`; land points receive ``fill``."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != mask.n_ocean:
        raise DomainError(f"vector length {vec.shape[-1]} != ocean point count {mask.n_ocean}")
    lead = vec.shape[:-1]
    out = np.full(lead + (mask.ocean.size,), fill, dtype=np.float64)
    out[..., mask.flat_index] = vec
    return out.reshape(lead + mask.shape)


def write_snapshots(path, grids):
    grids = np.asarray(grids, dtype="<f4")
    if grids.ndim != 3:
        raise DomainError("snapshots must have shape (T, H, W)")
    t, h, w = grids.shape
    with open(path, "wb") as fh:
        fh.write(_SST_HEADER.pack(SST_MAGIC, t, h, w))
        fh.write(grids.tobytes())


def read_snapshots(path):
    with open(path, "rb") as fh:
        head = fh.read(_SST_HEADER.size)
        if len(head) != _SST_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, t, h, w = _SST_HEADER.unpack(head)
        if magic != SST_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        body = fh.read()
    if len(body) != 4 * t * h * w:
        raise FormatError(f"{path}: header promises {t}x{h}x{w} floats, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(t, h, w)


def write_mask(path, mask):
    ocean = mask.ocean if isinstance(mask, LandMask) else np.asarray(mask, dtype=bool)
    h, w = ocean.shape
    with open(path, "wb") as fh:
        fh.write(_MASK_HEADER.pack(MASK_MAGIC, h, w))
        fh.write(ocean.astype(np.uint8).tobytes())


def read_mask(path):
    with open(path, "rb") as fh:
        head = fh.read(_MASK_HEADER.size)
        if len(head) != _MASK_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, h, w = _MASK_HEADER.unpack(head)
        if magic != MASK_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        body = fh.read()
    if len(body) != h * w:
        raise FormatError(f"{path}: expected {h * w} mask bytes, found {len(body)}")
    return LandMask(np.frombuffer(body, dtype=np.uint8).reshape(h, w) == 1)


def load_snapshots(path, mask_path):
    """Read a snapshot file and its mask; returns ``(grids, mask)``.

    ``grids`` is a read-only float32 array ``(T, H, W)``. Non-finite values at
    ocean points are rejected.
    """
    grids = read_snapshots(path)
    mask = read_mask(mask_path)
    if grids.shape[1:] != mask.shape:
        raise FormatError(f"snapshot grid {grids.shape[1:]} does not match mask grid {mask.shape}")
    ocean = flatten_ocean(grids, mask)
    bad = ~np.isfinite(ocean)
    if bad.any():
        t, p = np.argwhere(bad)[0]
        raise FormatError(f"non-finite value at ocean point {p} of snapshot {t}")
    return grids, mask
