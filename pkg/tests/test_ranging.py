import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from randsense.acf import periodic_acf, shape_signal, shape_symbols
from randsense.constellation import make_rng, make_standard, sample
from randsense.errors import ValidationError
from randsense.modulation import make_basis, optimal_basis
from randsense.pulse import SPEED_OF_LIGHT, rrc_taps
from randsense.ranging import (
    RangeProfile,
    Scene,
    cfar_detect,
    cfar_scale,
    circular_channel,
    estimate_ranges,
    integrate_profiles,
    matched_filter_profile,
    ofdm_comm_rx,
    qpsk_ser,
    synthesize_echo,
)

QPSK = make_standard("psk", 4)
QAM16 = make_standard("qam", 16)
TS = 1 / (100e6 * 10)


def three_target_signal(seed=0):
    p, b = rrc_taps(0.35, 10, 128), make_basis("ofdm", 128)
    return shape_signal(sample(QAM16, 128, seed=seed), b, p)


class TestEcho:
    def test_single_zero_delay(self):
        x = three_target_signal()
        y = synthesize_echo(x, Scene([(0.0, 1.0)], 0.0, TS))
        np.testing.assert_allclose(y, x.samples)

    def test_equal_delays_add(self):
        x = three_target_signal()
        d = 40 * TS
        a = synthesize_echo(x, Scene([(d, 0.5), (d, 0.25j)], 0.0, TS))
        b = synthesize_echo(x, Scene([(d, 0.5 + 0.25j)], 0.0, TS))
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_delay_outside_window(self):
        with pytest.raises(ValidationError):
            synthesize_echo(np.ones(16), Scene([(20.0, 1.0)], 0.0, 1.0))

    def test_negative_delay(self):
        with pytest.raises(ValidationError):
            Scene([(-1.0, 1.0)], 0.0, 1.0)


class TestThreeTargetScene:
    def test_three_peaks(self):
        x = three_target_signal(1)
        amps = [1.0, 0.7, 0.5]
        # 0 dB per-sample SNR for the strongest echo
        sigma = np.sqrt(np.mean(np.abs(x.samples) ** 2))
        scene = Scene.from_ranges([10.0, 20.0, 25.0], amps, sigma, TS)
        y = synthesize_echo(x, scene, seed=3)
        prof = matched_filter_profile(y, x, TS)
        truth = np.round(2 * np.array([10.0, 20.0, 25.0]) / SPEED_OF_LIGHT / TS).astype(int)
        np.testing.assert_array_equal(scene.lags(), truth)
        # the oversampled mainlobe is flat near its top, so noise may move the peak by one cell
        est = estimate_ranges(prof, 3)
        assert np.all(np.abs(np.sort(est.lags) - truth) <= 1)
        det = cfar_detect(prof, 1e-4, guard=10, train=16)
        for t in truth:
            assert np.min(np.abs(det.lags - t)) <= 1


class TestMatchedFilter:
    def test_zero_delay_is_acf(self):
        x = three_target_signal()
        np.testing.assert_allclose(matched_filter_profile(x.samples, x).values, periodic_acf(x), atol=1e-9)

    def test_shifted_acf(self):
        x = three_target_signal()
        y = synthesize_echo(x, Scene([(57 * TS, 1.0)], 0.0, TS))
        np.testing.assert_allclose(matched_filter_profile(y, x).values, np.roll(periodic_acf(x), 57), atol=1e-9)

    def test_noise_statistics(self):
        x = three_target_signal()
        rng = make_rng(8)
        sigma = 0.3
        vals = np.array([matched_filter_profile(synthesize_echo(x, Scene([], sigma, TS), rng=rng), x).values for _ in range(2000)])
        energy = np.vdot(x.samples, x.samples).real
        var = np.mean(np.abs(vals) ** 2, axis=0)
        assert abs(vals.mean()) < 5 * sigma * np.sqrt(energy / vals.size)
        assert np.mean(var) == pytest.approx(sigma**2 * energy, rel=0.02)

    @given(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False), st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
    def test_linearity(self, a, b):
        rng = np.random.default_rng(0)
        x = rng.normal(size=64) + 1j * rng.normal(size=64)
        y1 = rng.normal(size=64) + 1j * rng.normal(size=64)
        y2 = rng.normal(size=64) + 1j * rng.normal(size=64)
        lhs = matched_filter_profile(a * y1 + b * y2, x).values
        rhs = a * matched_filter_profile(y1, x).values + b * matched_filter_profile(y2, x).values
        np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)) * 64)


class TestIntegrate:
    def test_single(self):
        p = RangeProfile(np.arange(4.0) + 0j, 1.0)
        np.testing.assert_array_equal(integrate_profiles([p]).values, p.values)

    def test_noiseless_linearity(self):
        p, b = rrc_taps(0.35, 4, 16), make_basis("ofdm", 16)
        rng = make_rng(2)
        scene = Scene([(3.0, 1.0), (9.0, 0.5j)], 0.0, 1.0)
        sigs = [shape_signal(sample(QAM16, 16, rng=rng), b, p) for _ in range(5)]
        prof = integrate_profiles([matched_filter_profile(synthesize_echo(x, scene), x) for x in sigs])
        r_bar = np.mean([periodic_acf(x) for x in sigs], axis=0)
        np.testing.assert_allclose(prof.values, np.roll(r_bar, 3) + 0.5j * np.roll(r_bar, 9), atol=1e-9)

    def test_grid_mismatch(self):
        with pytest.raises(ValidationError):
            integrate_profiles([RangeProfile(np.zeros(4), 1.0), RangeProfile(np.zeros(4), 2.0)])

    def test_noise_floor_drops_30db(self):
        p, b = rrc_taps(0.35, 10, 128), make_basis("ofdm", 128)
        rng = make_rng(4)
        scene = Scene.from_ranges([20.0], [1.0], 0.1, TS)
        floors = []
        for m in (1, 1000):
            s = sample(QAM16, (m, 128), rng=rng)
            x = shape_symbols(s, b, p)
            prof = matched_filter_profile(synthesize_echo(x, scene, rng=rng), x).mean(axis=0)
            power = np.abs(prof) ** 2
            # floor away from the target mainlobe
            floors.append(10 * np.log10(np.mean(power[400:1200])))
        assert floors[0] - floors[1] == pytest.approx(30.0, abs=1.5)


class TestCfar:
    def test_scale_formula(self):
        assert cfar_scale(1e-2, 8) == pytest.approx(16 * (1e-2 ** (-1 / 16) - 1))

    def test_false_alarm_rate(self):
        rng = np.random.default_rng(10)
        pfa, hits, cells = 1e-2, 0, 0
        for _ in range(100):
            noise = rng.normal(size=1000) + 1j * rng.normal(size=1000)
            res = cfar_detect(RangeProfile(noise, 1.0), pfa, guard=2, train=8)
            hits += int(res.crossings.sum())
            cells += noise.size
        assert 0.8 <= hits / cells / pfa <= 1.25

    def test_single_peak(self):
        rng = np.random.default_rng(1)
        x = np.exp(2j * np.pi * rng.integers(0, 4, 256) / 4)
        y = np.roll(x, 40) * 3.0
        res = cfar_detect(matched_filter_profile(y, x), 1e-6, guard=2, train=8)
        np.testing.assert_array_equal(res.lags, [40])

    def test_window_too_large(self):
        with pytest.raises(ValidationError):
            cfar_detect(RangeProfile(np.ones(10), 1.0), 0.1, guard=3, train=3)

    @given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
    def test_scale_invariance(self, c):
        rng = np.random.default_rng(6)
        x = rng.normal(size=128) + 1j * rng.normal(size=128)
        y = np.roll(x, 17) + 0.3 * np.roll(x, 60) + 0.05 * (rng.normal(size=128) + 1j * rng.normal(size=128))
        a = cfar_detect(matched_filter_profile(y, x), 1e-3, 2, 8).lags
        b = cfar_detect(matched_filter_profile(c * y, x), 1e-3, 2, 8).lags
        np.testing.assert_array_equal(a, b)


class TestEstimateRanges:
    def test_noiseless_on_grid(self):
        x = three_target_signal()
        lag = 133
        r = lag * TS * SPEED_OF_LIGHT / 2
        y = synthesize_echo(x, Scene([(lag * TS, 1.0)], 0.0, TS))
        est = estimate_ranges(matched_filter_profile(y, x, TS), 1, truth_ranges=[r])
        assert est.rmse == pytest.approx(0.0, abs=1e-9)

    def test_partial_flag(self):
        prof = RangeProfile(np.r_[0.0, 1.0, 0.0, 0.0, 0.0], 1.0)
        est = estimate_ranges(prof, 3)
        assert est.partial and est.lags.tolist() == [1]

    def test_missing_target_penalty(self):
        prof = RangeProfile(np.r_[0.0, 1.0, 0.0, 0.0, 0.0], 2 / SPEED_OF_LIGHT)
        est = estimate_ranges(prof, 1, truth_ranges=[1.0, 3.0], region_width=4.0)
        np.testing.assert_allclose(sorted(est.errors), [0.0, 2.0])


def q_ser(es_n0):
    qv = norm.sf(np.sqrt(es_n0))
    return 2 * qv - qv**2


class TestOfdmComm:
    def test_identity_channel(self):
        b = make_basis("ofdm", 64)
        s = sample(QAM16, 64, seed=0)
        res = ofdm_comm_rx(circular_channel([1.0], b.matrix @ s), [1.0], s, b, QAM16)
        assert res.ser == 0.0

    def test_three_tap_channel(self):
        b = make_basis("ofdm", 64)
        s = sample(QAM16, 64, seed=1)
        h = np.array([1.0, 0.5 - 0.2j, 0.1j])
        res = ofdm_comm_rx(circular_channel(h, b.matrix @ s), h, s, b, QAM16)
        assert res.ser == 0.0

    def test_awgn_qpsk_ser(self):
        b = make_basis("ofdm", 256)
        rng = make_rng(5)
        es_n0 = 10.0
        errs = []
        for _ in range(200):
            s = sample(QPSK, 256, rng=rng)
            z = (rng.standard_normal(256) + 1j * rng.standard_normal(256)) / np.sqrt(2 * es_n0)
            errs.append(ofdm_comm_rx(b.matrix @ s + z, [1.0], s, b, QPSK).ser)
        ser = np.mean(errs)
        p = q_ser(es_n0)
        ci = 2.576 * np.sqrt(p * (1 - p) / (200 * 256))
        assert abs(ser - p) <= ci
        assert qpsk_ser(es_n0) == pytest.approx(p, rel=1e-12)

    def test_phase_invariance(self):
        rng = make_rng(6)
        es_n0 = 4.0
        h = np.array([1.0, 0.3j])
        p = None
        rates = []
        for theta_seed in range(3):
            theta = np.random.default_rng(theta_seed).uniform(0, 2 * np.pi, 128)
            b = optimal_basis("sub_gaussian", 128, phases=theta)
            errs = []
            for _ in range(100):
                s = sample(QPSK, 128, rng=rng)
                z = (rng.standard_normal(128) + 1j * rng.standard_normal(128)) / np.sqrt(2 * es_n0)
                errs.append(ofdm_comm_rx(circular_channel(h, b.matrix @ s) + z, h, s, b, QPSK).ser)
            rates.append(np.mean(errs))
        # identical in distribution; allow 4 binomial standard errors at the pooled rate
        pooled = np.mean(rates)
        se = np.sqrt(pooled * (1 - pooled) / (100 * 128))
        assert max(rates) - min(rates) <= 4 * np.sqrt(2) * se

    def test_zero_gain_erasure(self):
        b = make_basis("ofdm", 4)
        h = np.array([1.0, 1.0])  # gain 0 at the Nyquist subcarrier
        s = sample(QPSK, 4, seed=2)
        res = ofdm_comm_rx(circular_channel(h, b.matrix @ s), h, s, b, QPSK)
        assert res.erasures.size >= 1 and res.ser == 0.0

    def test_requires_ofdm(self):
        with pytest.raises(ValidationError):
            ofdm_comm_rx(np.zeros(4), [1.0], np.zeros(4), make_basis("sc", 4), QPSK)
