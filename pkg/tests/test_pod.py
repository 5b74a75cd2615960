"""Proper orthogonal decomposition: basis, projection, residual and file format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nasuq.errors import DomainError, FormatError
from nasuq.pod import (
    fit_pod,
    load_basis,
    modes_for_energy,
    project,
    reconstruct,
    residual,
    save_basis,
    snapshot_matrix,
)
from nasuq.sst.synth import wave_field

from oracles import eig_pod


class TestAnalytic:
    def test_two_by_two(self):
        basis = fit_pod(np.array([[1.0, -1.0], [0.0, 0.0]]), n_modes=1)
        np.testing.assert_array_equal(basis.mean, [0.0, 0.0])
        np.testing.assert_allclose(basis.modes[:, 0], [1.0, 0.0])
        assert basis.eigenvalues[0] == pytest.approx(2.0)
        np.testing.assert_allclose(project(basis, np.array([[1.0, -1.0], [0.0, 0.0]])), [[1.0, -1.0]])

    def test_snapshot_matrix_centered(self):
        s, _ = snapshot_matrix(np.random.default_rng(0).normal(size=(15, 9)) + 5)
        assert np.abs(s.mean(axis=1)).max() < 1e-8

    def test_project_mean_and_mode(self):
        basis = fit_pod(np.random.default_rng(1).normal(size=(12, 8)), n_modes=4)
        np.testing.assert_allclose(project(basis, basis.mean), 0.0, atol=1e-13)
        np.testing.assert_allclose(project(basis, basis.mean + 3 * basis.modes[:, 0]), [3, 0, 0, 0], atol=1e-12)
        np.testing.assert_array_equal(reconstruct(basis, np.zeros(4)), basis.mean)

    def test_bad_mode_count(self):
        with pytest.raises(DomainError):
            fit_pod(np.ones((4, 3)), n_modes=4)
        with pytest.raises(DomainError):
            fit_pod(np.ones((4, 0)))


class TestOracle:
    def test_matches_dense_eigensolver(self):
        d = np.random.default_rng(2).normal(size=(20, 10))
        basis = fit_pod(d, n_modes=9)
        mean, lam, vec = eig_pod(d)
        np.testing.assert_allclose(basis.mean, mean, rtol=1e-12)
        np.testing.assert_allclose(basis.eigenvalues, lam[:9], rtol=1e-8)
        np.testing.assert_allclose(basis.modes, vec[:, :9], atol=1e-8)

    def test_duplicated_snapshots(self):
        d = np.random.default_rng(3).normal(size=(10, 6))
        a = fit_pod(d, n_modes=4)
        b = fit_pod(np.hstack([d, d]), n_modes=4)
        np.testing.assert_allclose(b.eigenvalues, 2 * a.eigenvalues, rtol=1e-10)
        np.testing.assert_allclose(b.modes, a.modes, atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 30), st.integers(2, 30), st.integers(0, 2**32 - 1))
    def test_orthonormal_ordered_signed(self, n, t, seed):
        d = np.random.default_rng(seed).normal(size=(n, t))
        basis = fit_pod(d, n_modes=min(n, t) - 1)
        m = basis.n_modes
        assert np.abs(basis.modes.T @ basis.modes - np.eye(m)).max() < 1e-10
        assert np.all(np.diff(basis.eigenvalues) <= 1e-12) and np.all(basis.eigenvalues >= 0)
        for j in range(m):
            v = basis.modes[:, j]
            assert v[np.flatnonzero(np.abs(v) > 1e-12)[0]] > 0

    def test_energy_identity(self):
        d = np.random.default_rng(4).normal(size=(25, 11))
        s, _ = snapshot_matrix(d)
        basis = fit_pod(d, n_modes=11)
        assert basis.total_energy == pytest.approx(np.sum(s * s), rel=1e-6)
        assert basis.eigenvalues.sum() == pytest.approx(np.sum(s * s), rel=1e-6)


class TestResidual:
    @pytest.mark.parametrize("rank", [2, 3, 6])
    def test_full_rank_round_trip(self, rank):
        d = wave_field(64, 40, rank, seed=rank) + 1.0
        basis = fit_pod(d, n_modes=rank)
        back = reconstruct(basis, project(basis, d))
        assert np.abs(back - d).max() < 1e-8
        assert residual(basis, d).residual < 1e-8

    def test_zero_modes(self):
        d = np.random.default_rng(5).normal(size=(9, 7))
        full = fit_pod(d, n_modes=7)
        r = residual(full.truncate(0), d)
        assert r.residual == pytest.approx(full.eigenvalues.sum(), rel=1e-10)
        assert r.energy_fraction == 0.0

    @pytest.mark.parametrize("m", [1, 3, 5])
    def test_tail_identity(self, m):
        d = np.random.default_rng(6).normal(size=(30, 12))
        full = fit_pod(d, n_modes=12)
        basis = full.truncate(m)
        r = residual(basis, d)
        assert r.residual == pytest.approx(full.eigenvalues[m:].sum(), rel=1e-6)
        err = reconstruct(basis, project(basis, d)) - d
        assert np.sqrt(np.sum(err**2)) == pytest.approx(np.sqrt(full.eigenvalues[m:].sum()), rel=1e-6)
        assert r.energy_fraction == pytest.approx(full.eigenvalues[:m].sum() / full.eigenvalues.sum())

    def test_project_reconstruct_identity_on_coefficients(self):
        basis = fit_pod(np.random.default_rng(7).normal(size=(14, 9)), n_modes=5)
        a = np.random.default_rng(8).normal(size=(5, 3))
        np.testing.assert_allclose(project(basis, reconstruct(basis, a)), a, atol=1e-12)


class TestEnergyRule:
    def test_smallest_m_for_energy(self):
        lam = np.array([50.0, 30.0, 15.0, 5.0])
        assert modes_for_energy(lam, 0.9) == 3
        assert modes_for_energy(lam, 0.8) == 2
        assert modes_for_energy(lam, 0.9, max_modes=2) == 2

    def test_default_fit_uses_rule(self):
        d = wave_field(80, 60, 8, seed=1)
        basis = fit_pod(d)
        assert basis.energy_fraction >= 0.9
        assert fit_pod(d, n_modes=basis.n_modes - 1).energy_fraction < 0.9


class TestFile:
    def test_round_trip(self, tmp_path):
        d = np.random.default_rng(9).normal(size=(17, 8))
        basis = fit_pod(d, n_modes=3)
        save_basis(tmp_path / "b.pod", basis)
        back = load_basis(tmp_path / "b.pod")
        np.testing.assert_array_equal(back.mean, basis.mean)
        np.testing.assert_array_equal(back.modes, basis.modes)
        np.testing.assert_array_equal(back.eigenvalues, basis.eigenvalues)
        assert back.n_snapshots == 8
        assert back.energy_fraction == pytest.approx(basis.energy_fraction, rel=1e-14)
        raw = (tmp_path / "b.pod").read_bytes()
        assert raw[:4] == b"POD1"
        assert np.frombuffer(raw[4:28], "<u8").tolist() == [17, 8, 3]
        assert len(raw) == 36 + 8 * (17 + 3 + 17 * 3)
        # V is stored column by column
        np.testing.assert_array_equal(np.frombuffer(raw[36 + 8 * 20 : 36 + 8 * 37], "<f8"), basis.modes[:, 0])

    def test_corrupt(self, tmp_path):
        basis = fit_pod(np.random.default_rng(0).normal(size=(5, 4)), n_modes=2)
        save_basis(tmp_path / "b.pod", basis)
        raw = (tmp_path / "b.pod").read_bytes()
        (tmp_path / "short.pod").write_bytes(raw[:-1])
        (tmp_path / "magic.pod").write_bytes(b"XXXX" + raw[4:])
        for name in ("short.pod", "magic.pod"):
            with pytest.raises(FormatError):
                load_basis(tmp_path / name)
