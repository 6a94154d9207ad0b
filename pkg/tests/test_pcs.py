import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from randsense.constellation import kurtosis, make_standard
from randsense.errors import InfeasibleError, ValidationError
from randsense.pcs import PcsProblem, awgn_mi, mba_solve, rotation_orbits, sweep_tradeoff

QAM16 = make_standard("qam", 16)
QPSK = make_standard("psk", 4)


def trapezoid_mi(probs, points, snr, step=0.01, reach=7.0):
    """Mutual information in bits by brute-force 2-D trapezoid integration."""
    pts = np.asarray(points) / math.sqrt(float(np.sum(probs * np.abs(points) ** 2)))
    var = 1.0 / snr / 2
    lim = np.max(np.abs(pts)) + reach * math.sqrt(var)
    g = np.arange(-lim, lim + step, step)
    yr, yi = np.meshgrid(g, g, indexing="ij")
    y = yr + 1j * yi
    dens = np.array([np.exp(-np.abs(y - a) ** 2 / (2 * var)) / (2 * np.pi * var) for a in pts])
    mix = np.tensordot(probs, dens, axes=1)
    total = 0.0
    for p, f in zip(probs, dens):
        if p == 0:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = np.where(f > 0, f * np.log2(f / mix), 0.0)
        total += p * trapezoid(trapezoid(integrand, g, axis=1), g)
    return total


@pytest.fixture(scope="module")
def sol16():
    return mba_solve(PcsProblem(QAM16.points, 1.2, 10.0))


class TestMutualInformation:
    def test_qam16_against_trapezoid(self):
        p = np.full(16, 1 / 16)
        assert awgn_mi(p, QAM16.points, 10.0) == pytest.approx(trapezoid_mi(p, QAM16.points, 10.0), abs=0.005)

    def test_nonuniform_against_trapezoid(self):
        p = np.abs(QAM16.points) ** -2
        p /= p.sum()
        assert awgn_mi(p, QAM16.points, 10.0) == pytest.approx(trapezoid_mi(p, QAM16.points, 10.0), abs=0.005)

    def test_low_snr(self):
        assert awgn_mi(np.full(4, 0.25), QPSK.points, 1e-4) < 1e-3

    def test_high_snr_qpsk(self):
        assert awgn_mi(np.full(4, 0.25), QPSK.points, 1e4) == pytest.approx(2.0, abs=1e-3)

    def test_bad_distribution(self):
        with pytest.raises(ValidationError):
            awgn_mi(np.full(4, 0.3), QPSK.points, 10.0)


class TestSolver:
    def test_constraints(self, sol16):
        assert sol16.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(sol16.probs >= 0)
        assert float(sol16.probs @ np.abs(sol16.points) ** 2) == pytest.approx(1.0, abs=1e-9)
        assert sol16.kurtosis_achieved <= 1.2 + 1e-7

    def test_ascent(self, sol16):
        # the moment projection is solved to ~1e-10, which bounds the jitter at convergence
        assert np.all(np.diff(sol16.trace) >= -1e-9)

    def test_rotation_symmetry(self, sol16):
        labels = rotation_orbits(QAM16.points)
        for lab in np.unique(labels):
            vals = sol16.probs[labels == lab]
            np.testing.assert_allclose(vals, vals[0], atol=1e-9)
        assert abs(np.sum(sol16.probs * sol16.points)) < 1e-9
        assert abs(np.sum(sol16.probs * sol16.points**2)) < 1e-9

    def test_reported_mi_consistent(self, sol16):
        assert sol16.mi == pytest.approx(trapezoid_mi(sol16.probs, QAM16.points, 10.0), abs=0.005)

    def test_constant_modulus_picks_best_ring(self):
        snr = 10 ** 2.5
        sol = mba_solve(PcsProblem(QAM16.points, 1.0, snr))
        rings = np.round(np.abs(QAM16.points) ** 2, 9)
        # exhaustive oracle over single-ring supports, uniform within each ring
        best, best_mi = None, -1.0
        for r in np.unique(rings):
            p = (rings == r).astype(float)
            p /= p.sum()
            mi = trapezoid_mi(p, QAM16.points, snr, step=0.004, reach=8.0)
            if mi > best_mi:
                best, best_mi = r, mi
        support = rings[sol.probs > 1e-6]
        assert np.all(support == best) and support.size == 8
        assert sol.kurtosis_achieved == pytest.approx(1.0, abs=1e-9)

    def test_cap_below_one(self):
        with pytest.raises(InfeasibleError):
            PcsProblem(QAM16.points, 0.9, 10.0)

    def test_loose_cap_at_least_uniform(self):
        k_uniform = kurtosis(QAM16)
        sol = mba_solve(PcsProblem(QAM16.points, k_uniform, 10.0))
        assert sol.mi >= awgn_mi(np.full(16, 1 / 16), QAM16.points, 10.0) - 1e-6


class TestSweep:
    def test_monotone(self):
        pts = sweep_tradeoff(PcsProblem(QAM16.points, 1.0, 10.0), [1.0, 1.1, 1.2, 1.32])
        mis = [p.mi for p in pts]
        assert all(b >= a - 1e-9 for a, b in zip(mis, mis[1:]))
        assert all(p.kurtosis <= p.c0 + 1e-7 for p in pts)

    def test_descending_rejected(self):
        with pytest.raises(ValidationError):
            sweep_tradeoff(PcsProblem(QAM16.points, 1.0, 10.0), [1.2, 1.1])
