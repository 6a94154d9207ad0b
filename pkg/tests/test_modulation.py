import numpy as np
import pytest
from hypothesis import given, strategies as st

from randsense.acf import expected_squared_acf_lags
from randsense.constellation import kurtosis, make_standard, two_ring_apsk
from randsense.errors import InvalidDimensionError, UnsupportedError, ValidationError
from randsense.modulation import ModulationBasis, bistochastic_v, custom_basis, haar_unitary, make_basis, optimal_basis
from randsense.numerics import unitary_dft
from randsense.pulse import rrc_taps


def assert_bistochastic(v):
    assert v.min() >= -1e-12
    np.testing.assert_allclose(v.sum(axis=0), 1, atol=1e-9)
    np.testing.assert_allclose(v.sum(axis=1), 1, atol=1e-9)


class TestMakeBasis:
    def test_sc(self):
        np.testing.assert_array_equal(make_basis("sc", 4).matrix, np.eye(4))

    def test_ofdm(self):
        u = make_basis("ofdm", 4).matrix
        np.testing.assert_allclose(u, unitary_dft(4).conj().T)
        assert np.max(np.abs(u.conj().T @ u - np.eye(4))) < 1e-12

    def test_afdm_zero_chirp_is_ofdm(self):
        np.testing.assert_array_equal(make_basis("afdm", 8, c1=0.0, c2=0.0).matrix, make_basis("ofdm", 8).matrix)

    def test_cdma_needs_power_of_two(self):
        with pytest.raises(UnsupportedError):
            make_basis("cdma", 6)

    def test_otfs_factorization(self):
        assert make_basis("otfs", 8, n1=2, n2=4).n == 8
        with pytest.raises(InvalidDimensionError):
            make_basis("otfs", 8, n1=3, n2=3)

    @pytest.mark.parametrize("kind,params", [("sc", {}), ("ofdm", {}), ("cdma", {}), ("afdm", {"c1": 0.1, "c2": 0.03}), ("otfs", {"n1": 4, "n2": 4})])
    def test_unitary(self, kind, params):
        u = make_basis(kind, 16, **params).matrix
        assert np.max(np.abs(u.conj().T @ u - np.eye(16))) < 1e-9

    def test_non_unitary_custom_rejected(self):
        with pytest.raises(ValidationError):
            custom_basis(np.ones((3, 3)))

    def test_round_trip_metadata(self):
        b = make_basis("afdm", 8, c1=0.2, c2=0.1)
        np.testing.assert_allclose(ModulationBasis.from_dict(b.to_dict()).matrix, b.matrix)


class TestBistochastic:
    def test_ofdm_identity(self):
        np.testing.assert_allclose(bistochastic_v(make_basis("ofdm", 8)), np.eye(8), atol=1e-12)

    def test_sc_uniform(self):
        np.testing.assert_allclose(bistochastic_v(make_basis("sc", 8)), np.full((8, 8), 1 / 8), atol=1e-12)

    def test_cdma_four(self):
        h = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]]) / 2
        oracle = np.abs(unitary_dft(4) @ h) ** 2
        v = bistochastic_v(make_basis("cdma", 4))
        np.testing.assert_allclose(v, oracle, atol=1e-12)
        assert_bistochastic(v)

    def test_haar_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            assert_bistochastic(bistochastic_v(custom_basis(haar_unitary(12, rng))))


class TestOptimalBasis:
    def test_sub_gaussian_plain(self):
        np.testing.assert_allclose(optimal_basis("sub_gaussian", 8).matrix, make_basis("ofdm", 8).matrix)

    def test_super_gaussian_plain(self):
        np.testing.assert_allclose(optimal_basis("super_gaussian", 8).matrix, np.eye(8))

    def test_permutation_phases(self):
        rng = np.random.default_rng(2)
        b = optimal_basis("sub_gaussian", 8, permutation=np.arange(8)[::-1], phases=rng.uniform(0, 2 * np.pi, 8))
        v = bistochastic_v(b)
        assert np.all(np.isclose(v, 0, atol=1e-12) | np.isclose(v, 1, atol=1e-12))
        assert_bistochastic(v)

    def test_bad_permutation(self):
        with pytest.raises(ValidationError):
            optimal_basis("sub_gaussian", 4, permutation=[0, 0, 1, 2])

    @given(st.permutations(list(range(6))), st.lists(st.floats(0, 6.28), min_size=6, max_size=6))
    def test_always_unitary(self, perm, phases):
        u = optimal_basis("super_gaussian", 6, permutation=perm, phases=phases).matrix
        assert np.max(np.abs(u.conj().T @ u - np.eye(6))) < 1e-12


class TestArgminProperty:
    n, l = 16, 4

    def sea(self, basis, kappa):
        return expected_squared_acf_lags(rrc_taps(0.35, self.l, self.n).g, self.l, basis, kappa).sea

    def competitors(self):
        rng = np.random.default_rng(11)
        yield make_basis("sc", self.n)
        yield make_basis("cdma", self.n)
        for _ in range(20):
            yield custom_basis(haar_unitary(self.n, rng))

    def test_sub_gaussian_prefers_permutation(self):
        kappa = kurtosis(make_standard("qam", 16))
        best = self.sea(make_basis("ofdm", self.n), kappa)
        for b in self.competitors():
            assert np.all(best <= self.sea(b, kappa) + 1e-9)

    def test_super_gaussian_prefers_sc(self):
        kappa = kurtosis(two_ring_apsk())
        best = self.sea(make_basis("sc", self.n), kappa)
        for b in [make_basis("ofdm", self.n), *list(self.competitors())[1:]]:
            assert np.all(best <= self.sea(b, kappa) + 1e-9)
