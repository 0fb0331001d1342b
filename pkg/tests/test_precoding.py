"""Sum-rate evaluation and the WMMSE / stochastic-WMMSE precoders."""

import numpy as np
import pytest

from fddlab import _precoder_numpy, precoding
from fddlab.precoding import (PrecoderConfig, PrecoderSet, get_backend,
                              sample_channels, sum_rate, swmmse, wmmse)
from fddlab.vqvae import ChannelStatistics

BACKENDS = ["python"]
if precoding.backend_name() == "compiled":
    BACKENDS.append("compiled")


def _random_channels(rng, j_users, n):
    return (rng.standard_normal((j_users, n))
            + 1j * rng.standard_normal((j_users, n)))


def _matched_filter_rate(channels, noise_var, rho=1.0):
    j_users = channels.shape[0]
    norms = np.linalg.norm(channels, axis=1, keepdims=True)
    vecs = np.conj(channels) / norms * np.sqrt(rho / j_users)
    return sum_rate(channels, vecs, noise_var)


class TestSumRate:
    def test_single_user_scalar(self):
        assert sum_rate(np.array([[1.0 + 0j]]), np.array([[1.0 + 0j]]),
                        1.0) == pytest.approx(1.0)

    def test_orthogonal_users_have_no_interference(self):
        channels = np.array([[1, 0], [0, 1]], dtype=complex)
        assert sum_rate(channels, channels, 1.0) == pytest.approx(2.0)

    def test_matches_scratch_formula(self):
        rng = np.random.default_rng(20)
        channels = _random_channels(rng, 2, 2)
        vecs = _random_channels(rng, 2, 2)
        noise_var = 0.37
        expected = 0.0
        for j in range(2):
            signal = abs(channels[j] @ vecs[j]) ** 2
            interference = sum(abs(channels[j] @ vecs[i]) ** 2
                               for i in range(2) if i != j)
            expected += np.log2(1.0 + signal / (interference + noise_var))
        assert sum_rate(channels, vecs, noise_var) == \
            pytest.approx(expected, abs=1e-12)

    def test_transpose_pairing_rewards_conjugate_beams(self):
        # with the h^T v pairing the matched filter is conj(h), not h
        rng = np.random.default_rng(21)
        h = _random_channels(rng, 1, 6)
        rate_conj = sum_rate(h, np.conj(h), 1.0)
        rate_plain = sum_rate(h, h, 1.0)
        assert rate_conj > rate_plain

    def test_invariant_to_per_user_phase(self):
        rng = np.random.default_rng(22)
        channels = _random_channels(rng, 3, 4)
        vecs = _random_channels(rng, 3, 4)
        base = sum_rate(channels, vecs, 0.5)
        rotated = vecs * np.exp(1j * np.array([0.3, -1.2, 2.5]))[:, None]
        assert sum_rate(channels, rotated, 0.5) == pytest.approx(base)

    def test_invariant_to_user_relabeling(self):
        rng = np.random.default_rng(23)
        channels = _random_channels(rng, 4, 5)
        vecs = _random_channels(rng, 4, 5)
        base = sum_rate(channels, vecs, 0.2)
        perm = np.array([2, 0, 3, 1])
        assert sum_rate(channels[perm], vecs[perm], 0.2) == \
            pytest.approx(base)

    def test_accepts_precoder_set(self):
        rng = np.random.default_rng(24)
        channels = _random_channels(rng, 2, 3)
        vecs = _random_channels(rng, 2, 3)
        wrapped = PrecoderSet(vectors=vecs, rho=1.0)
        assert sum_rate(channels, wrapped, 1.0) == \
            sum_rate(channels, vecs, 1.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            sum_rate(np.ones((2, 3), complex), np.ones((2, 4), complex), 1.0)

    def test_nonpositive_noise_rejected(self):
        with pytest.raises(ValueError, match="noise_var"):
            sum_rate(np.ones((1, 2), complex), np.ones((1, 2), complex), 0.0)


class TestWmmse:
    def test_single_user_converges_to_matched_filter(self):
        rng = np.random.default_rng(30)
        h = _random_channels(rng, 1, 8)
        noise_var = 0.1
        vecs, _ = wmmse(h, noise_var)
        gain = np.linalg.norm(h) ** 2
        optimum = np.log2(1.0 + gain / noise_var)
        assert sum_rate(h, vecs, noise_var) == \
            pytest.approx(optimum, abs=1e-6)
        # up to a global phase the beam is sqrt(rho) conj(h)/||h||
        overlap = abs(np.vdot(vecs.vectors[0], np.conj(h[0])))
        assert overlap == pytest.approx(np.linalg.norm(h), abs=1e-6)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_power_constraint(self, backend):
        rng = np.random.default_rng(31)
        channels = _random_channels(rng, 4, 8)
        vecs, _ = wmmse(channels, 0.1, backend=backend)
        assert abs(vecs.total_power - 1.0) <= 1e-6

    def test_custom_power_budget(self):
        rng = np.random.default_rng(32)
        channels = _random_channels(rng, 3, 6)
        cfg = PrecoderConfig(rho=2.5)
        vecs, _ = wmmse(channels, 0.1, cfg=cfg)
        assert abs(vecs.total_power - 2.5) <= 1e-6 * 2.5

    def test_trace_nondecreasing_and_beats_matched_filter(self):
        rng = np.random.default_rng(21)
        channels = _random_channels(rng, 4, 8)
        noise_var = 0.1
        vecs, trace = wmmse(channels, noise_var)
        assert np.all(np.diff(trace) >= -1e-8)
        assert trace[-1] >= _matched_filter_rate(channels, noise_var)
        assert trace[-1] == pytest.approx(
            sum_rate(channels, vecs, noise_var), abs=1e-12)

    def test_early_stop_respects_window_tolerance(self):
        rng = np.random.default_rng(33)
        channels = _random_channels(rng, 2, 4)
        cfg = PrecoderConfig(max_iters=300, tol=1e-3, tol_window=5)
        _, trace = wmmse(channels, 0.1, cfg=cfg)
        assert len(trace) < 300
        assert abs(trace[-1] - trace[-6]) < 1e-3

    def test_all_zero_channels_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            wmmse(np.zeros((3, 4), complex), 1.0)

    def test_nonpositive_noise_rejected(self):
        with pytest.raises(ValueError, match="noise_var"):
            wmmse(np.ones((1, 2), complex), -1.0)

    @pytest.mark.skipif(len(BACKENDS) < 2,
                        reason="compiled backend unavailable")
    def test_backend_parity(self):
        rng = np.random.default_rng(34)
        channels = _random_channels(rng, 4, 8)
        v_py, t_py = wmmse(channels, 0.1, backend="python")
        v_cc, t_cc = wmmse(channels, 0.1, backend="compiled")
        assert np.allclose(v_py.vectors, v_cc.vectors, atol=1e-12)
        assert len(t_py) == len(t_cc)
        assert np.allclose(t_py, t_cc, atol=1e-12)


class TestSampleChannels:
    def test_zero_covariance_returns_the_mean(self):
        rng = np.random.default_rng(40)
        mu = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        stats = ChannelStatistics(mu=mu, c=None, cov=np.zeros((6, 6)))
        draws = sample_channels(stats, 7, np.random.default_rng(0))
        assert np.array_equal(draws, np.tile(mu, (7, 1)))

    def test_identity_covariance_monte_carlo(self):
        n = 8
        stats = ChannelStatistics(mu=np.zeros(n, complex), c=None,
                                  cov=np.eye(n))
        draws = sample_channels(stats, 100_000, np.random.default_rng(41))
        emp = draws.conj().T @ draws / draws.shape[0]
        assert np.linalg.norm(emp - np.eye(n)) / np.sqrt(n) < 0.05
        assert np.linalg.norm(draws.mean(axis=0)) < 0.05

    def test_diagonal_covariance_scales_each_dimension(self):
        variances = np.array([2.0, 0.5, 1.0, 4.0])
        stats = ChannelStatistics(mu=np.zeros(4, complex), c=None,
                                  cov=np.diag(variances))
        draws = sample_channels(stats, 200_000, np.random.default_rng(42))
        emp = np.mean(np.abs(draws) ** 2, axis=0)
        assert np.allclose(emp, variances, rtol=0.05)

    def test_deterministic_under_seed(self):
        stats = ChannelStatistics(mu=np.ones(3, complex), c=None,
                                  cov=0.3 * np.eye(3))
        a = sample_channels(stats, 10, np.random.default_rng(43))
        b = sample_channels(stats, 10, np.random.default_rng(43))
        assert np.array_equal(a, b)

    def test_indefinite_covariance_rejected(self):
        stats = ChannelStatistics(mu=np.zeros(2, complex), c=None,
                                  cov=np.diag([1.0, -1.0]))
        with pytest.raises(ValueError, match="positive semidefinite"):
            sample_channels(stats, 1, np.random.default_rng(0))


def _gaussian_stats(rng, j_users, n, ratio_range=(0.6, 3.0)):
    """Random means with low-rank covariances of non-negligible trace."""
    stats = []
    for _ in range(j_users):
        mu = (rng.standard_normal(n)
              + 1j * rng.standard_normal(n)) / np.sqrt(2)
        rank = int(rng.integers(2, 5))
        g = rng.standard_normal((n, rank)) \
            + 1j * rng.standard_normal((n, rank))
        cov = g @ g.conj().T
        ratio = rng.uniform(*ratio_range)
        cov *= ratio * np.sum(np.abs(mu) ** 2) / np.trace(cov).real
        stats.append(ChannelStatistics(mu=mu, c=None, cov=cov))
    return stats


class TestSwmmse:
    def test_degenerate_sampler_matches_wmmse(self):
        rng = np.random.default_rng(50)
        channels = _random_channels(rng, 4, 8)
        stats = [ChannelStatistics(mu=h, c=None, cov=1e-12 * np.eye(8))
                 for h in channels]
        noise_var = 0.1
        vecs = swmmse(stats, noise_var, rng=np.random.default_rng(51))
        reference, _ = wmmse(channels, noise_var)
        rate = sum_rate(channels, vecs, noise_var)
        rate_ref = sum_rate(channels, reference, noise_var)
        assert rate >= 0.95 * rate_ref

    def test_power_constraint_met_every_iteration(self):
        rng = np.random.default_rng(52)
        stats = _gaussian_stats(rng, 3, 6)
        mu = np.stack([s.mu for s in stats])
        factors = np.stack([np.linalg.cholesky(
            s.cov + 1e-12 * np.eye(6)) for s in stats])
        noise = (rng.standard_normal((40, 3, 6))
                 + 1j * rng.standard_normal((40, 3, 6))) / np.sqrt(2)
        _, powers = _precoder_numpy.swmmse_core(mu, factors, noise, 0.1,
                                                1.0, 40, 64)
        assert np.all(np.abs(powers - 1.0) <= 1e-6)

    def test_first_iteration_is_one_wmmse_update(self):
        # alpha_1 = 1 with a zero noise draw reduces to a single wmmse
        # update from the shared matched-filter start
        rng = np.random.default_rng(53)
        mu = _random_channels(rng, 4, 8)
        factors = np.stack([np.eye(8, dtype=complex)] * 4)
        noise = np.zeros((1, 4, 8), complex)
        stochastic, _ = _precoder_numpy.swmmse_core(mu, factors, noise,
                                                    0.1, 1.0, 1, 64)
        deterministic, _ = _precoder_numpy.wmmse_core(mu, 0.1, 1.0, 1,
                                                      1e-6, 5, 64)
        assert np.allclose(stochastic, deterministic, atol=1e-10)

    def test_beats_wmmse_under_genuine_uncertainty(self):
        # expected-rate comparison under the true statistics: hedging with
        # samples from CN(mu, cov) should win once covariances carry a
        # non-negligible share of the power
        rng = np.random.default_rng(33)
        noise_var = 0.1
        wins = 0
        for inst in range(50):
            stats = _gaussian_stats(rng, 4, 8)
            assert all(np.trace(s.cov).real / np.sum(np.abs(s.mu) ** 2)
                       > 0.5 for s in stats)
            robust = swmmse(stats, noise_var,
                            rng=np.random.default_rng([33, inst, 7]))
            nominal, _ = wmmse(np.stack([s.mu for s in stats]), noise_var)
            erng = np.random.default_rng([33, inst, 11])
            draws = np.stack([sample_channels(s, 200, erng)
                              for s in stats], axis=1)
            rate_robust = np.mean([sum_rate(hh, robust, noise_var)
                                   for hh in draws])
            rate_nominal = np.mean([sum_rate(hh, nominal, noise_var)
                                    for hh in draws])
            wins += rate_robust >= rate_nominal
        assert wins >= 30

    def test_requires_explicit_rng(self):
        stats = _gaussian_stats(np.random.default_rng(54), 2, 4)
        with pytest.raises(ValueError, match="rng"):
            swmmse(stats, 0.1)

    def test_all_zero_means_rejected(self):
        stats = [ChannelStatistics(mu=np.zeros(4, complex), c=None,
                                   cov=np.eye(4)) for _ in range(2)]
        with pytest.raises(ValueError, match="zero"):
            swmmse(stats, 0.1, rng=np.random.default_rng(0))

    def test_deterministic_under_seed(self):
        stats = _gaussian_stats(np.random.default_rng(55), 3, 6)
        cfg = PrecoderConfig(max_iters=50)
        a = swmmse(stats, 0.1, cfg=cfg, rng=np.random.default_rng(56))
        b = swmmse(stats, 0.1, cfg=cfg, rng=np.random.default_rng(56))
        assert np.array_equal(a.vectors, b.vectors)

    @pytest.mark.skipif(len(BACKENDS) < 2,
                        reason="compiled backend unavailable")
    def test_backend_parity(self):
        stats = _gaussian_stats(np.random.default_rng(57), 4, 8)
        cfg = PrecoderConfig(max_iters=60)
        v_py = swmmse(stats, 0.1, cfg=cfg,
                      rng=np.random.default_rng(58), backend="python")
        v_cc = swmmse(stats, 0.1, cfg=cfg,
                      rng=np.random.default_rng(58), backend="compiled")
        assert np.allclose(v_py.vectors, v_cc.vectors, atol=1e-12)


class TestPrecoderConfig:
    def test_defaults(self):
        cfg = PrecoderConfig()
        assert cfg.max_iters == 300
        assert cfg.rho == 1.0
        assert cfg.tol == 1e-6
        assert cfg.tol_window == 5
        assert cfg.bisect_steps == 64
        assert cfg.samples_per_iter == 1

    def test_invalid_iteration_cap(self):
        with pytest.raises(ValueError, match="max_iters"):
            PrecoderConfig(max_iters=0)

    def test_invalid_power(self):
        with pytest.raises(ValueError, match="rho"):
            PrecoderConfig(rho=0.0)

    def test_multi_sample_schedule_unsupported(self):
        with pytest.raises(ValueError, match="one sample per user"):
            PrecoderConfig(samples_per_iter=2)


class TestBackendSelection:
    def test_backend_name_is_known(self):
        assert precoding.backend_name() in ("compiled", "python")

    def test_default_backend_resolution(self):
        assert get_backend(None) is get_backend(precoding.backend_name())

    def test_python_backend_is_the_numpy_module(self):
        assert get_backend("python") is _precoder_numpy

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError, match="backend"):
            get_backend("fortran")

    def test_environment_override_validated(self, monkeypatch):
        monkeypatch.setenv("FDDLAB_BACKEND", "bogus")
        with pytest.raises(ValueError, match="FDDLAB_BACKEND"):
            precoding._select_backend()

    def test_environment_override_python(self, monkeypatch):
        monkeypatch.setenv("FDDLAB_BACKEND", "python")
        assert precoding._select_backend() is _precoder_numpy
