"""Proper orthogonal decomposition of snapshot matrices.

Snapshots are the columns of an ``N x T`` array. The basis is made of the
leading left singular vectors of the mean-subtracted snapshot matrix ``S``,
which are the eigenvectors of ``S S^T``; the eigenvalues are the squared
singular values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError

MAGIC = b"POD1"
_HEADER = struct.Struct("<4sQQQd")
DEFAULT_ENERGY = 0.90
DEFAULT_MAX_MODES = 50


@dataclass(frozen=True)
class PODBasis:
    mean: np.ndarray  # (N,)
    modes: np.ndarray  # (N, M), orthonormal columns
    eigenvalues: np.ndarray  # (M,), descending
    total_energy: float  # sum of all eigenvalues of S S^T
    n_snapshots: int

    @property
    def n_modes(self):
        return self.modes.shape[1]

    @property
    def n_state(self):
        return self.modes.shape[0]

    @property
    def energy_fraction(self):
        if self.total_energy == 0:
            return 1.0
        return float(self.eigenvalues.sum() / self.total_energy)

    def truncate(self, m):
        if not 0 <= m <= self.n_modes:
            raise DomainError(f"cannot truncate {self.n_modes} modes to {m}")
        return PODBasis(self.mean, self.modes[:, :m], self.eigenvalues[:m], self.total_energy, self.n_snapshots)


def snapshot_matrix(snapshots):
    """Mean-subtracted snapshot matrix ``S`` and the mean."""
    d = np.asarray(snapshots, dtype=np.float64)
    if d.ndim != 2 or d.shape[1] == 0:
        raise DomainError("snapshots must be a nonempty N x T array")
    mean = d.mean(axis=1)
    return d - mean[:, None], mean


def _fix_signs(v, tol=1e-12):
    for j in range(v.shape[1]):
        nz = np.flatnonzero(np.abs(v[:, j]) > tol)
        if nz.size and v[nz[0], j] < 0:
            v[:, j] = -v[:, j]
    return v


def modes_for_energy(eigenvalues, energy=DEFAULT_ENERGY, max_modes=DEFAULT_MAX_MODES):
    """Smallest M whose leading eigenvalues retain ``energy`` of the total, capped."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    total = lam.sum()
    if total <= 0:
        return min(1, max_modes, lam.size)
    m = int(np.searchsorted(np.cumsum(lam) / total, energy - 1e-12) + 1)
    return min(m, max_modes, lam.size)


def fit_pod(snapshots, n_modes=None, energy=DEFAULT_ENERGY, max_modes=DEFAULT_MAX_MODES):
    """Fit a POD basis to the training snapshots (columns of an N x T array).

    With ``n_modes=None`` the smallest basis retaining ``energy`` of the
    snapshot energy is kept, capped at ``max_modes``. Each mode is signed so
    that its first nonzero component is positive.
    """
    s, mean = snapshot_matrix(snapshots)
    n, t = s.shape
    if n_modes is not None and not 0 <= n_modes <= min(n, t):
        raise DomainError(f"n_modes={n_modes} exceeds min(N, T) = {min(n, t)}")
    u, sv, _ = np.linalg.svd(s, full_matrices=False)
    lam = sv**2
    m = modes_for_energy(lam, energy, max_modes) if n_modes is None else n_modes
    modes = _fix_signs(np.ascontiguousarray(u[:, :m]))
    return PODBasis(mean, modes, lam[:m].copy(), float(lam.sum()), t)


def project(basis, snapshot):
    """Coefficients of one snapshot (N,) or many (N, T) in the basis."""
    e = np.asarray(snapshot, dtype=np.float64)
    if e.shape[0] != basis.n_state:
        raise DomainError(f"snapshot length {e.shape[0]} != basis state size {basis.n_state}")
    y = e - (basis.mean if e.ndim == 1 else basis.mean[:, None])
    return basis.modes.T @ y


def reconstruct(basis, coeffs):
    """``mean + sum_j a_j v_j`` for coefficients (M,) or (M, T)."""
    a = np.asarray(coeffs, dtype=np.float64)
    if a.shape[0] != basis.n_modes:
        raise DomainError(f"got {a.shape[0]} coefficients for {basis.n_modes} modes")
    out = basis.modes @ a
    return out + (basis.mean if a.ndim == 1 else basis.mean[:, None])


@dataclass(frozen=True)
class Residual:
    residual: float
    energy_fraction: float


def residual(basis, snapshots):
    """Squared projection residual summed over snapshots, with retained energy.

    Snapshots are mean-subtracted with the basis mean.
    """
    d = np.asarray(snapshots, dtype=np.float64)
    y = d - basis.mean[:, None]
    a = basis.modes.T @ y
    r = y - basis.modes @ a
    return Residual(float(np.sum(r * r)), basis.energy_fraction)


def save_basis(path, basis):
    """Write ``POD1`` header (N, T, M as ``<u8``, energy fraction ``<f8``),
    then mean, eigenvalues and modes (column by column) as ``<f8``."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, basis.n_state, basis.n_snapshots, basis.n_modes, basis.energy_fraction))
        fh.write(basis.mean.astype("<f8").tobytes())
        fh.write(basis.eigenvalues.astype("<f8").tobytes())
        fh.write(np.asfortranarray(basis.modes).astype("<f8").tobytes(order="F"))


def load_basis(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, n, t, m, fraction = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        body = fh.read()
    want = 8 * (n + m + n * m)
    if len(body) != want:
        raise FormatError(f"{path}: expected {want} payload bytes, found {len(body)}")
    arr = np.frombuffer(body, dtype="<f8").astype(np.float64)
    mean, lam, v = arr[:n], arr[n : n + m], arr[n + m :].reshape((n, m), order="F")
    total = float(lam.sum() / fraction) if fraction > 0 else 0.0
    return PODBasis(mean, np.ascontiguousarray(v), lam, total, int(t))
