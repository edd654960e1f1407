import numpy as np
import pytest

from hybridbf.amm import AmmConfig, AngleRange, build_codebook, sample_angle_range
from hybridbf.array_channel import SystemConfig, generate_channels, steering_vector
from hybridbf.beamformers import AnalogBeamformer, DigitalBeamformer
from hybridbf.exceptions import ParameterError
from hybridbf.metrics import approx_sinr, beam_pattern, nulling_depth, per_user_rates, sum_rate
from hybridbf.pwmmse import run_pwmmse

from conftest import crandn, random_constant_modulus


class TestSumRate:
    def test_single_user(self):
        cfg = SystemConfig(n_bs=1, n_rf=1, total_power=2.0, noise_var=0.5)
        g = np.array([[0.3 - 1.2j]])
        report = sum_rate(g, None, np.ones((1, 1)), cfg)
        assert report.sum_rate == pytest.approx(np.log2(1 + 2.0 * abs(g[0, 0]) ** 2 / 0.5))

    def test_zero_beamformer(self, caplog):
        cfg = SystemConfig(n_bs=4, n_rf=2)
        report = sum_rate(np.ones((4, 2)), None, np.zeros((4, 2)), cfg)
        np.testing.assert_array_equal(report.per_user_rates, 0)
        assert report.sum_rate == 0
        assert "differs from K" in caplog.text

    def test_diagonal_matches_two_single_users(self):
        cfg = SystemConfig(n_bs=2, n_rf=2, total_power=2.0, noise_var=0.3)
        h = np.diag([1.5, 0.4j])
        rates = sum_rate(h, None, None, cfg).per_user_rates
        single = SystemConfig(n_bs=1, n_rf=1, total_power=1.0, noise_var=0.3)
        for k, g in enumerate([1.5, 0.4j]):
            ref = sum_rate(np.array([[g]]), None, None, single).sum_rate
            assert rates[k] == pytest.approx(ref)

    def test_matches_direct_formula(self, rng):
        cfg = SystemConfig(n_bs=12, n_rf=3, total_power=3.0, noise_var=0.8)
        h = crandn(rng, 12, 3)
        f = crandn(rng, 12, 3)
        f *= np.sqrt(3) / np.linalg.norm(f)
        report = sum_rate(h, None, f, cfg)
        for k in range(3):
            s = [abs(np.vdot(h[:, k], f[:, i])) ** 2 for i in range(3)]
            sinr = s[k] / (sum(s) - s[k] + 0.8)
            assert report.per_user_rates[k] == pytest.approx(np.log2(1 + sinr))
        assert report.sum_rate == pytest.approx(report.per_user_rates.sum(), abs=1e-12)
        assert np.all(report.per_user_rates >= 0)

    def test_column_phase_invariance(self, rng):
        cfg = SystemConfig.from_snr_db(32, 4, 5.0)
        chans = generate_channels(3, cfg)
        analog, digital, _ = run_pwmmse(chans, cfg)
        rot = digital.matrix * np.exp(2j * np.pi * rng.random(4))
        a = sum_rate(chans, analog, digital, cfg).per_user_rates
        b = sum_rate(chans, analog, DigitalBeamformer(rot), cfg).per_user_rates
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_identity_digital_equals_analog_only(self, rng):
        cfg = SystemConfig.from_snr_db(32, 4, 0.0)
        chans = generate_channels(4, cfg)
        analog = AnalogBeamformer(np.exp(2j * np.pi * rng.random((4, 8))) / np.sqrt(8))
        a = sum_rate(chans, analog, None, cfg).sum_rate
        b = sum_rate(chans, analog, np.eye(4), cfg).sum_rate
        c = sum_rate(chans, None, analog.matrix, cfg).sum_rate
        assert a == b == pytest.approx(c, rel=1e-14)

    def test_per_user_rates_gain_layout(self):
        cfg = SystemConfig(n_bs=2, n_rf=2, total_power=2.0, noise_var=1.0)
        gains = np.array([[1.0, 0.0], [1.0, 0.0]])
        rates = per_user_rates(gains, cfg)
        assert rates[0] == pytest.approx(1.0)
        assert rates[1] == pytest.approx(0.0)


class TestApproxSinr:
    def test_single_user(self):
        cfg = SystemConfig(n_bs=8, n_rf=1, total_power=1.0, noise_var=0.1)
        r = AngleRange(0.1, 0.3)
        f = steering_vector(0.2, 8)
        amm_cfg = AmmConfig(samples_per_range=5)
        desired = np.mean([abs(np.vdot(steering_vector(p, 8), f)) ** 2
                           for p in sample_angle_range(r, 5)])
        assert approx_sinr(0, AnalogBeamformer(f[None]), [r], cfg, amm_cfg) == pytest.approx(
            desired / 0.1)

    def test_orthogonal_desired(self):
        cfg = SystemConfig(n_bs=4, n_rf=1)
        f = np.array([[1, -1, 1, -1]]) / 2
        value = approx_sinr(0, AnalogBeamformer(f), [AngleRange(-0.1, 0.1)], cfg,
                            AmmConfig(samples_per_range=1))
        assert value == pytest.approx(0.0, abs=1e-30)

    def test_matches_direct(self, rng):
        cfg = SystemConfig(n_bs=24, n_rf=3, total_power=3.0, noise_var=0.2)
        vecs = np.stack([random_constant_modulus(rng, 8) for _ in range(3)])
        analog = AnalogBeamformer(vecs)
        ranges = [AngleRange(-0.5, -0.4), AngleRange(0.1, 0.15), AngleRange(0.6, 0.7)]
        amm_cfg = AmmConfig(samples_per_range=6)
        q = 1
        phis = sample_angle_range(ranges[q], 6)
        powers = []
        for k in range(3):
            powers.append(np.mean([abs(np.vdot(steering_vector(p, 24)[cfg.subarray(k)], vecs[k])) ** 2
                                   for p in phis]))
        ref = powers[q] / (powers[0] + powers[2] + cfg.noise_var)
        assert approx_sinr(q, analog, ranges, cfg, amm_cfg) == pytest.approx(ref, rel=1e-12)

    def test_requires_analog(self):
        cfg = SystemConfig(n_bs=4, n_rf=1)
        with pytest.raises(ParameterError):
            approx_sinr(0, np.ones((4, 1)), [AngleRange(0, 0.1)], cfg, AmmConfig())


class TestBeamPattern:
    def test_peak_at_matched_angle(self):
        n = 16
        pattern = beam_pattern(steering_vector(0.3, n), 2000)
        assert pattern.gains_db.max() == 0.0
        assert pattern.angles[np.argmax(pattern.gains_db)] == pytest.approx(0.3, abs=1e-3)

    def test_uniform_first_null(self):
        n = 16
        pattern = beam_pattern(np.ones(n) / np.sqrt(n), 4000)
        right = pattern.angles > 0
        angles, gains = pattern.angles[right], pattern.gains_db[right]
        first_min = np.argmax(np.diff(gains) > 0)
        assert angles[first_min] == pytest.approx(2 / n, abs=1e-3)
        assert gains[first_min] < -60

    def test_symmetric_about_steering(self):
        n, s0 = 16, 0.25
        f = steering_vector(s0, n)
        grid = 4000
        pattern = beam_pattern(f, grid)
        step = 2 / grid
        i0 = int(np.argmin(np.abs(pattern.angles - s0)))
        for d in range(1, 200):
            assert pattern.gains_db[i0 + d] == pytest.approx(pattern.gains_db[i0 - d], abs=1e-8)
        assert step == pytest.approx(5e-4)

    def test_grid_layout(self):
        pattern = beam_pattern(np.ones(4) / 2, 4)
        np.testing.assert_allclose(pattern.angles, [-0.5, 0.0, 0.5, 1.0])

    def test_invalid(self):
        with pytest.raises(ParameterError):
            beam_pattern(np.ones(4), 1)
        with pytest.raises(ParameterError):
            beam_pattern(np.zeros(4), 10)
        with pytest.raises(ParameterError):
            beam_pattern(np.ones(4), 10, SystemConfig(n_bs=16, n_rf=2))

    def test_nulling_depth(self):
        pattern = beam_pattern(np.ones(8) / np.sqrt(8), 1000)
        assert nulling_depth(pattern, AngleRange(-0.05, 0.05)) == 0.0
        assert nulling_depth(pattern, AngleRange(0.3, 0.4)) < -10
        with pytest.raises(ParameterError):
            nulling_depth(pattern, AngleRange(0.0001, 0.0002))

    def test_codeword_pattern_peaks_in_its_range(self):
        cfg = SystemConfig(n_bs=64, n_rf=4)
        cb = build_codebook(cfg)
        for i in (0, 17, 40, 63):
            pattern = beam_pattern(cb.codewords[i], 8000, cfg)
            peak = pattern.angles[np.argmax(pattern.gains_db)]
            assert cb.range_of(i).contains(peak)
