"""Pilot matrix, structure transform, observation and preprocessing."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fddlab import pilots


def _scratch_2d_dft(n_v, n_h):
    def dft(t):
        k = np.arange(t)
        return np.exp(-2j * np.pi * np.outer(k, k) / t) / np.sqrt(t)
    return np.kron(dft(n_v), dft(n_h))


class TestGeometry:
    def test_total_antennas(self):
        assert pilots.UraGeometry(4, 16).n == 64

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            pilots.UraGeometry(0, 4)


class TestPilotMatrix:
    def test_paper_configuration_rows_orthonormal(self):
        geom = pilots.UraGeometry(4, 16)
        p = pilots.build_pilot_matrix(geom, 8, rho=1.0)
        assert p.entries.shape == (8, 64)
        norms = np.sum(np.abs(p.entries) ** 2, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12
        gram = p.entries @ p.entries.conj().T
        assert np.max(np.abs(gram - np.eye(8))) < 1e-12

    def test_full_pilot_count_gives_identity_gram(self):
        geom = pilots.UraGeometry(2, 4)
        p = pilots.build_pilot_matrix(geom, geom.n, rho=1.0)
        gram = p.entries @ p.entries.conj().T
        assert np.max(np.abs(gram - np.eye(geom.n))) < 1e-12

    def test_row_selection_and_entries_match_scratch_dft(self):
        geom = pilots.UraGeometry(2, 4)
        p = pilots.build_pilot_matrix(geom, 4, rho=1.0)
        assert list(p.row_indices) == [0, 2, 4, 6]
        full = _scratch_2d_dft(2, 4)
        assert np.allclose(p.entries, full[[0, 2, 4, 6]], atol=1e-14)

    def test_rho_scales_row_power(self):
        geom = pilots.UraGeometry(2, 2)
        p = pilots.build_pilot_matrix(geom, 3, rho=2.5)
        norms = np.sum(np.abs(p.entries) ** 2, axis=1)
        assert np.max(np.abs(norms - 2.5)) < 1e-12

    def test_too_many_pilots_rejected(self):
        geom = pilots.UraGeometry(2, 2)
        with pytest.raises(ValueError, match="more pilots than antennas"):
            pilots.build_pilot_matrix(geom, 5, rho=1.0)


class TestQTransform:
    def test_paper_geometry_shape_and_isometry(self):
        q = pilots.build_q_transform(pilots.UraGeometry(4, 16))
        assert q.entries.shape == (256, 64)
        gram = q.entries.conj().T @ q.entries
        assert np.max(np.abs(gram - np.eye(64))) < 1e-12

    def test_smallest_geometry(self):
        q = pilots.build_q_transform(pilots.UraGeometry(1, 1))
        assert q.entries.shape == (4, 1)
        half = pilots.dft_matrix(2)[:, :1]
        assert np.allclose(q.entries, np.kron(half, half), atol=1e-14)
        assert abs(np.sum(np.abs(q.entries) ** 2) - 1.0) < 1e-12

    def test_2x2_matches_scratch_kronecker(self):
        q = pilots.build_q_transform(pilots.UraGeometry(2, 2))
        def half(t):
            k = np.arange(2 * t)
            full = np.exp(-2j * np.pi * np.outer(k, k) / (2 * t)) \
                / np.sqrt(2 * t)
            return full[:, :t]
        assert np.allclose(q.entries, np.kron(half(2), half(2)), atol=1e-14)

    @pytest.mark.parametrize("n_v,n_h", [(1, 2), (2, 8), (3, 5)])
    def test_isometry_across_geometries(self, n_v, n_h):
        q = pilots.build_q_transform(pilots.UraGeometry(n_v, n_h))
        n = n_v * n_h
        gram = q.entries.conj().T @ q.entries
        assert np.max(np.abs(gram - np.eye(n))) < 1e-12


class TestObserve:
    def test_vanishing_noise_gives_exact_pilot_product(self):
        geom = pilots.UraGeometry(2, 4)
        p = pilots.build_pilot_matrix(geom, 4, rho=1.0)
        rng = np.random.default_rng(0)
        h = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        obs = pilots.observe(h, p, 1e-30, np.random.default_rng(1))
        assert np.allclose(obs.y, p.entries @ h, atol=1e-13)

    def test_noise_variance_monte_carlo(self):
        geom = pilots.UraGeometry(2, 2)
        p = pilots.build_pilot_matrix(geom, 2, rho=1.0)
        rng = np.random.default_rng(42)
        draws = pilots.observe_batch(np.zeros((100000, 4), complex), p,
                                     0.5, rng)
        var = np.mean(np.abs(draws) ** 2)
        assert abs(var - 0.5) < 0.025

    def test_same_seed_is_bit_reproducible(self):
        geom = pilots.UraGeometry(2, 2)
        p = pilots.build_pilot_matrix(geom, 3, rho=1.0)
        h = np.ones(4, dtype=complex)
        a = pilots.observe(h, p, 0.1, np.random.default_rng(9))
        b = pilots.observe(h, p, 0.1, np.random.default_rng(9))
        assert np.array_equal(a.y, b.y)

    def test_nonpositive_noise_var_rejected(self):
        geom = pilots.UraGeometry(2, 2)
        p = pilots.build_pilot_matrix(geom, 2, rho=1.0)
        with pytest.raises(ValueError):
            pilots.observe(np.ones(4, complex), p, 0.0,
                           np.random.default_rng(0))


class TestPreprocess:
    def test_zero_observation_maps_to_zero(self):
        geom = pilots.UraGeometry(2, 2)
        p = pilots.build_pilot_matrix(geom, 2, rho=1.0)
        q = pilots.build_q_transform(geom)
        out = pilots.preprocess(np.zeros(2, complex), p, q)
        assert np.array_equal(out, np.zeros(16, complex))

    def test_full_unit_pilots_reduce_to_q_times_h(self):
        geom = pilots.UraGeometry(2, 4)
        p = pilots.build_pilot_matrix(geom, geom.n, rho=1.0)
        q = pilots.build_q_transform(geom)
        rng = np.random.default_rng(3)
        h = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        out = pilots.preprocess(p.entries @ h, p, q)
        assert np.allclose(out, q.entries @ h, atol=1e-12)

    def test_matches_two_step_scratch_evaluation(self):
        geom = pilots.UraGeometry(2, 4)
        p = pilots.build_pilot_matrix(geom, 4, rho=1.0)
        q = pilots.build_q_transform(geom)
        rng = np.random.default_rng(11)
        y = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        expected = q.entries @ (p.entries.conj().T @ y)
        assert np.allclose(pilots.preprocess(y, p, q), expected, atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1),
           st.floats(min_value=-3, max_value=3, allow_nan=False),
           st.floats(min_value=-3, max_value=3, allow_nan=False))
    def test_linearity_in_y(self, seed, a, b):
        geom = pilots.UraGeometry(2, 2)
        p = pilots.build_pilot_matrix(geom, 3, rho=1.0)
        q = pilots.build_q_transform(geom)
        rng = np.random.default_rng(seed)
        y1 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        y2 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        lhs = pilots.preprocess(a * y1 + b * y2, p, q)
        rhs = a * pilots.preprocess(y1, p, q) + \
            b * pilots.preprocess(y2, p, q)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_accepts_observation_objects(self):
        geom = pilots.UraGeometry(2, 2)
        p = pilots.build_pilot_matrix(geom, 2, rho=1.0)
        q = pilots.build_q_transform(geom)
        obs = pilots.Observation(y=np.ones(2, complex), noise_var=0.1)
        assert np.allclose(pilots.preprocess(obs, p, q),
                           pilots.preprocess(obs.y, p, q))


class TestRealStack:
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        stacked = pilots.real_stack(z)
        assert stacked.shape == (12,)
        assert np.array_equal(stacked[:6], z.real)
        assert np.array_equal(stacked[6:], z.imag)
        assert np.array_equal(pilots.complex_unstack(stacked), z)


class TestSnrConversion:
    def test_zero_db_is_unit_noise(self):
        assert pilots.snr_to_noise_var(0.0) == 1.0

    def test_paper_operating_point(self):
        assert abs(pilots.snr_to_noise_var(15.0) - 10 ** (-1.5)) < 1e-15
        assert abs(pilots.snr_to_noise_var(15.0) - 0.0316227766) < 1e-9

    def test_twenty_db(self):
        assert abs(pilots.snr_to_noise_var(20.0) - 0.01) < 1e-15

    def test_rho_scaling_and_arrays(self):
        out = pilots.snr_to_noise_var(np.array([0.0, 10.0]), rho=2.0)
        assert np.allclose(out, [2.0, 0.2])
