import math

import numpy as np
import pytest
from scipy import integrate, stats

from randsense.cdtheory import (
    CdProblem,
    ba_solve,
    cd_curve,
    conditional_mi,
    gaussian_input_mi,
    make_problem,
    min_distortion,
    sensing_cost,
)
from randsense.errors import InfeasibleError, ValidationError


class TestSensingCost:
    def test_values(self):
        assert sensing_cost(0.0) == 1.0
        assert sensing_cost(1.0) == 0.5
        assert sensing_cost(1e6) < 1e-11

    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
    def test_against_monte_carlo(self, x):
        rng = np.random.default_rng(3)
        h = rng.standard_normal(400_000)
        z = h * x + rng.standard_normal(h.size)
        # conditional mean of h given z is x z / (1 + x^2)
        err = np.mean((h - x * z / (1 + x**2)) ** 2)
        assert err == pytest.approx(float(sensing_cost(x)), rel=0.01)


def bi_awgn_nats():
    """Capacity of BPSK over real unit-noise AWGN at unit amplitude."""
    f = lambda y: stats.norm.pdf(y, 1.0) * np.logaddexp(0.0, -2.0 * y)
    return math.log(2) - integrate.quad(f, -15, 17)[0]


def point_problem(x_grid, h=1.0):
    return CdProblem(np.asarray(x_grid, float), np.array([h]), np.array([1.0]), 1.0, 1.0)


class TestConditionalMi:
    def test_bi_awgn(self):
        assert conditional_mi([0.5, 0.0, 0.5], point_problem([-1, 0, 1])) == pytest.approx(bi_awgn_nats(), abs=1e-3)

    def test_degenerate_input(self):
        assert conditional_mi([0.0, 1.0, 0.0], point_problem([-1, 0, 1])) == pytest.approx(0.0, abs=1e-12)

    def test_asymmetric_grid(self):
        with pytest.raises(ValidationError):
            point_problem([-1, 0, 2])

    def test_gaussian_input_quadrature(self):
        pr = make_problem(10.0, 1.0)
        oracle = integrate.quad(lambda h: stats.norm.pdf(h) * 0.5 * math.log1p(10 * h * h), -12, 12, points=[0])[0]
        assert gaussian_input_mi(pr) == pytest.approx(oracle, rel=5e-4)


@pytest.fixture(scope="module")
def loose():
    return ba_solve(make_problem(1.0, 1.0, n_x=33, n_h=12))


@pytest.fixture(scope="module")
def active():
    return ba_solve(make_problem(1.0, 0.6, n_x=33, n_h=12))


class TestSolver:
    def test_zero_budget(self):
        sol = ba_solve(make_problem(0.0, 1.0, n_x=9, n_h=6))
        assert sol.rate == 0.0 and sol.probs[4] == 1.0

    def test_infeasible_cap(self):
        pr = make_problem(1.0, 0.4, n_x=33, n_h=12)
        assert min_distortion(pr) == pytest.approx(0.5, abs=1e-9)
        with pytest.raises(InfeasibleError):
            ba_solve(pr)

    def test_symmetric(self, active):
        np.testing.assert_allclose(active.probs, active.probs[::-1], atol=1e-12)

    def test_constraints_and_slackness(self, active):
        assert active.avg_distortion <= 0.6 + 1e-7
        assert active.avg_power <= 1.0 + 1e-7
        lam_d, lam_b = active.multipliers
        assert lam_d * abs(active.avg_distortion - 0.6) < 1e-6
        assert lam_b * abs(active.avg_power - 1.0) < 1e-6
        assert lam_d > 0

    def test_loose_near_gaussian(self, loose):
        pr = make_problem(1.0, 1.0, n_x=33, n_h=12)
        assert loose.rate <= gaussian_input_mi(pr) + 1e-9
        assert loose.rate >= 0.98 * gaussian_input_mi(pr)

    def test_tighter_cap_costs_rate(self, loose, active):
        assert active.rate < loose.rate

    def test_grid_refinement(self, active):
        fine = ba_solve(make_problem(1.0, 0.6, n_x=65, n_h=12))
        assert fine.rate == pytest.approx(active.rate, abs=1e-3)

    def test_deterministic(self, active):
        again = ba_solve(make_problem(1.0, 0.6, n_x=33, n_h=12))
        np.testing.assert_array_equal(again.probs, active.probs)

    @pytest.mark.parametrize("budget", [1.0, 5.0, 10.0])
    def test_tight_cap_is_antipodal(self, budget):
        pr = make_problem(budget, 1.0, n_x=33, n_h=12)
        d_min = min_distortion(pr)
        assert d_min == pytest.approx(1 / (1 + budget), abs=1e-9)
        sol = ba_solve(pr.with_cap(d_min + 1e-4))
        on = np.isclose(np.abs(sol.x_grid), math.sqrt(budget))
        assert sol.probs[on].sum() >= 0.99


class TestCurve:
    def test_monotone_in_budget(self):
        rates = [ba_solve(make_problem(b, 1.0, n_x=33, n_h=12)).rate for b in (1.0, 5.0, 10.0)]
        assert rates[0] < rates[1] < rates[2]

    def test_monotone_in_cap(self):
        pts = cd_curve(make_problem(1.0, 1.0, n_x=33, n_h=12), [0.52, 0.6, 0.8, 1.0])
        rates = [p.rate for p in pts]
        assert all(b >= a for a, b in zip(rates, rates[1:]))

    def test_descending_rejected(self):
        with pytest.raises(ValidationError):
            cd_curve(make_problem(1.0, 1.0, n_x=9, n_h=6), [0.8, 0.6])
