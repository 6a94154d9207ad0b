from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, strategies as st

from randsense.acf import (
    coherent_integrated_acf,
    expected_squared_acf,
    expected_squared_acf_lags,
    mainlobe_level,
    mc_expected_squared_acf,
    periodic_acf,
    pulse_iceberg,
    shape_signal,
)
from randsense.constellation import Constellation, GaussianSymbols, make_rng, make_standard, sample, two_ring_apsk
from randsense.errors import InvalidDimensionError, NormalizationError, ValidationError
from randsense.modulation import custom_basis, haar_unitary, make_basis
from randsense.numerics import unitary_dft
from randsense.pulse import Pulse, gaussian_pulse, rrc_taps

QPSK = make_standard("psk", 4)
QAM16 = make_standard("qam", 16)


def circulant_oracle(symbols, basis, pulse):
    """Explicit matrices: x = U s, zero-stuff, multiply by the circulant built from the taps."""
    x = basis.matrix @ symbols
    up = np.zeros(pulse.l * pulse.n, dtype=complex)
    up[:: pulse.l] = x
    ln = up.size
    p = np.array([[pulse.taps[(i - j) % ln] for j in range(ln)] for i in range(ln)])
    return p @ up


class TestShapeSignal:
    def test_single_symbol(self):
        p = rrc_taps(0.35, 4, 1)
        np.testing.assert_allclose(shape_signal([1.0], make_basis("sc", 1), p).samples, p.taps, atol=1e-12)

    def test_ofdm_delta_is_constant(self):
        n = 8
        s = np.zeros(n, dtype=complex)
        s[0] = np.sqrt(n)
        x = make_basis("ofdm", n).matrix @ s
        np.testing.assert_allclose(x, np.ones(n), atol=1e-12)

    def test_matches_circulant(self, rng):
        p = rrc_taps(0.35, 4, 8)
        s = sample(QPSK, 8, rng=rng)
        for kind in ("sc", "ofdm", "cdma"):
            b = make_basis(kind, 8)
            np.testing.assert_allclose(shape_signal(s, b, p).samples, circulant_oracle(s, b, p), atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            shape_signal(np.ones(4), make_basis("sc", 8), rrc_taps(0.35, 4, 8))


class TestPeriodicAcf:
    def test_impulse(self):
        e = np.zeros(8)
        e[0] = 1
        np.testing.assert_allclose(periodic_acf(e), np.eye(8)[0], atol=1e-15)

    def test_constant(self):
        np.testing.assert_allclose(periodic_acf(np.full(8, 2.0 + 1j)), np.full(8, 8 * 5.0), atol=1e-12)

    def test_fft_vs_shift(self, rng):
        x = rng.normal(size=32) + 1j * rng.normal(size=32)
        np.testing.assert_allclose(periodic_acf(x), periodic_acf(x, method="shift"), atol=1e-9)

    @given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=2, max_size=40))
    def test_hermitian_symmetry(self, values):
        x = np.array(values)
        r = periodic_acf(x)
        np.testing.assert_allclose(r[1:], np.conj(r[1:][::-1]), atol=1e-9)
        assert r[0].imag == 0 and r[0].real == pytest.approx(np.vdot(x, x).real, abs=1e-9)


class TestCoherentIntegration:
    def test_single(self, rng):
        x = rng.normal(size=16) + 0j
        np.testing.assert_allclose(coherent_integrated_acf([x]), periodic_acf(x))

    def test_identical_copies(self, rng):
        x = rng.normal(size=16) + 1j * rng.normal(size=16)
        np.testing.assert_allclose(coherent_integrated_acf([x] * 5), periodic_acf(x), atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValidationError):
            coherent_integrated_acf([])

    def test_variance_shrinks(self):
        # QPSK-OFDM has a deterministic ACF (constant modulus per subcarrier), so use 16-QAM
        p, b = rrc_taps(0.35, 4, 16), make_basis("ofdm", 16)
        rng = make_rng(0)
        single = np.array([periodic_acf(shape_signal(sample(QAM16, 16, rng=rng), b, p)) for _ in range(400)])
        avg = np.array([coherent_integrated_acf([shape_signal(sample(QAM16, 16, rng=rng), b, p) for _ in range(100)]) for _ in range(400)])
        ratio = np.mean(np.var(avg[:, 1:], axis=0)) / np.mean(np.var(single[:, 1:], axis=0))
        assert 0.8 / 100 < ratio < 1.25 / 100


class TestExpectedSquaredAcf:
    def test_mainlobe(self):
        st_ = expected_squared_acf(make_basis("ofdm", 128), QAM16, rrc_taps(0.35, 10, 128))
        assert st_.total[0] == pytest.approx(16424.96, rel=1e-9)
        assert mainlobe_level(128, 1.32) == pytest.approx(16424.96, rel=1e-12)

    @pytest.mark.parametrize("m", [1, 7, 100])
    def test_mainlobe_general(self, m):
        s = expected_squared_acf(make_basis("cdma", 16), QAM16, rrc_taps(0.5, 4, 16), m)
        assert s.total[0] == pytest.approx(16**2 + (1.32 - 1) * 16 / m, rel=1e-6)

    def test_gaussian_basis_free(self):
        p = rrc_taps(0.35, 4, 16)
        a = expected_squared_acf(make_basis("ofdm", 16), GaussianSymbols(), p)
        b = expected_squared_acf(make_basis("sc", 16), GaussianSymbols(), p)
        np.testing.assert_allclose(a.sea, b.sea, rtol=1e-12, atol=1e-12)

    def test_iceberg_is_pulse_acf(self):
        p = rrc_taps(0.35, 4, 16)
        s = expected_squared_acf(make_basis("sc", 16), QPSK, p)
        oracle = 16**2 * np.abs(periodic_acf(p.taps, method="shift")) ** 2
        np.testing.assert_allclose(s.iceberg, oracle, atol=1e-9 * oracle.max())

    def test_iceberg_basis_invariant(self):
        p = rrc_taps(0.35, 4, 16)
        ref = expected_squared_acf(make_basis("ofdm", 16), QAM16, p).iceberg
        for kind in ("sc", "cdma"):
            np.testing.assert_allclose(expected_squared_acf(make_basis(kind, 16), QAM16, p).iceberg, ref)

    def test_sea_scales_with_m(self):
        p, b = rrc_taps(0.35, 4, 16), make_basis("cdma", 16)
        np.testing.assert_allclose(expected_squared_acf(b, QAM16, p, 10).sea, expected_squared_acf(b, QAM16, p, 1).sea / 10, rtol=1e-14)

    def test_nonnegative(self):
        s = expected_squared_acf(make_basis("sc", 16), two_ring_apsk(), rrc_taps(0.2, 4, 16))
        assert s.iceberg.min() >= -1e-9 and s.sea.min() >= -1e-9

    def test_non_nyquist_refused(self):
        with pytest.raises(ValidationError):
            expected_squared_acf(make_basis("sc", 16), QPSK, gaussian_pulse(0.3, 4, 16))

    def test_unstandardized_refused(self):
        with pytest.raises(NormalizationError):
            expected_squared_acf(make_basis("sc", 4), Constellation(np.array([1.0 + 0j]), None, "dc"), rrc_taps(0.35, 4, 4))

    def test_csv_header(self):
        s = expected_squared_acf(make_basis("sc", 4), QPSK, rrc_taps(0.35, 4, 4))
        assert s.to_csv().splitlines()[0] == "lag,iceberg,sea,total,total_db"

    def test_ofdm_dominance(self):
        p = rrc_taps(0.35, 4, 16)
        best = expected_squared_acf(make_basis("ofdm", 16), QAM16, p).total
        rng = np.random.default_rng(4)
        others = [make_basis("sc", 16), make_basis("cdma", 16)] + [custom_basis(haar_unitary(16, rng)) for _ in range(20)]
        for b in others:
            assert np.all(best <= expected_squared_acf(b, QAM16, p).total + 1e-9)

    def test_super_gaussian_reversal(self):
        p = rrc_taps(0.35, 4, 16)
        apsk = two_ring_apsk()
        best = expected_squared_acf(make_basis("sc", 16), apsk, p).total
        for kind in ("ofdm", "cdma"):
            assert np.all(best <= expected_squared_acf(make_basis(kind, 16), apsk, p).total + 1e-9)


class TestMonteCarlo:
    def test_degenerate_constellation(self):
        # a single point fails zero-mean, but the MC oracle itself accepts any alphabet
        one = Constellation(np.array([1.0 + 0j]), None, "one")
        p = rrc_taps(0.35, 4, 8)
        mc = mc_expected_squared_acf(make_basis("sc", 8), one, p, trials=100, seed=0)
        train = shape_signal(np.ones(8), make_basis("sc", 8), p)
        np.testing.assert_allclose(mc.mean, np.abs(periodic_acf(train)) ** 2, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(mc.ci_halfwidth, 0, atol=1e-6)

    def test_ofdm_16qam_inside_ci(self):
        p, b = rrc_taps(0.35, 4, 8), make_basis("ofdm", 8)
        mc = mc_expected_squared_acf(b, QAM16, p, trials=100_000, seed=1)
        inside = mc.contains(expected_squared_acf(b, QAM16, p).total)
        assert inside.mean() >= 0.99

    def test_deterministic_and_pool_independent(self):
        p, b = rrc_taps(0.35, 4, 8), make_basis("cdma", 8)
        a = mc_expected_squared_acf(b, QPSK, p, trials=3000, seed=5, chunk=500)
        with ThreadPoolExecutor(max_workers=3) as pool:
            c = mc_expected_squared_acf(b, QPSK, p, trials=3000, seed=5, chunk=500, pool=pool)
        np.testing.assert_array_equal(a.mean, c.mean)
        np.testing.assert_array_equal(a.ci_halfwidth, c.ci_halfwidth)

    def test_m100_sea_drop(self):
        p, b = rrc_taps(0.35, 4, 8), make_basis("ofdm", 8)
        lvl = []
        for m, trials in ((1, 20_000), (100, 2_000)):
            mc = mc_expected_squared_acf(b, QAM16, p, m=m, trials=trials, seed=m)
            lvl.append(10 * np.log10(np.mean(mc.acf_variance[1:])))
        assert lvl[0] - lvl[1] == pytest.approx(20.0, abs=0.5)

    def test_too_few_trials(self):
        with pytest.raises(ValidationError):
            mc_expected_squared_acf(make_basis("sc", 4), QPSK, rrc_taps(0.35, 4, 4), trials=10)


class TestMainlobeLevel:
    @pytest.mark.parametrize("m", [1, 10, 1000])
    def test_psk(self, m):
        assert mainlobe_level(64, 1.0, m) == 64**2

    def test_large_m_limit(self):
        assert mainlobe_level(128, 1.32, 10**12) == pytest.approx(128**2, rel=1e-12)

    def test_domain(self):
        with pytest.raises(ValidationError):
            mainlobe_level(8, 0.5)
