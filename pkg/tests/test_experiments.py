import math

import numpy as np
import pytest

from atypia.experiments import (
    COMPARE_KINDS,
    EstimatePoint,
    compare_bounds_report,
    conditional_concentration,
    coherence_experiment,
    estimate_probability,
    exceedance_max,
    exceedance_single,
    fit_exponent,
    single_coordinate_mc,
    sweep_exponent,
    weighted_line_fit,
)
from atypia.qstate import ValidationError
from atypia.rates import rate_max_eigenvalue
from atypia.solver import ConstraintSet, LinearConstraint, SpectralConstraint
from conftest import qubit_lambda_max_tail


def lam_max(m, c):
    return ConstraintSet(m, spectral=SpectralConstraint("lambda_max", c))


class TestEstimate:
    def test_full_space(self):
        p = estimate_probability(ConstraintSet.full_space(3), 3, 5, 1000)
        assert p.p_hat == 1.0 and p.stderr == 0.0

    def test_m1_exact(self):
        cs = ConstraintSet(1, linear=[LinearConstraint([[1.0]], 1.0)])
        p = estimate_probability(cs, 1, 5, 1000, "tilted")
        assert p.p_hat == 1.0 and p.log_p == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            estimate_probability(lam_max(2, 0.8), 3, 5, 1000)

    def test_too_few_samples(self):
        with pytest.raises(ValidationError):
            estimate_probability(lam_max(2, 0.8), 2, 5, 50)

    def test_zero_hits_rule_of_three(self):
        p = estimate_probability(lam_max(2, 0.99), 2, 200, 1000)
        assert p.p_hat == 0.0 and p.upper95 == pytest.approx(3e-3)
        assert p.log_p == -math.inf

    def test_naive_vs_tilted(self):
        cs = lam_max(2, 0.9)
        naive = estimate_probability(cs, 2, 3, 1_000_000, "naive", seed=1)
        tilted = estimate_probability(cs, 2, 3, 100_000, "tilted", seed=2)
        assert abs(naive.p_hat - tilted.p_hat) <= 3 * math.hypot(naive.stderr, tilted.stderr)
        exact = qubit_lambda_max_tail(3, 0.9)
        assert abs(naive.p_hat - exact) <= 3 * naive.stderr
        assert abs(tilted.p_hat - exact) <= 3 * tilted.stderr

    @pytest.mark.parametrize("n", [30, 80])
    def test_tilted_against_exact_law(self, n):
        p = estimate_probability(lam_max(2, 0.75), 2, n, 50_000, "tilted", seed=3)
        exact = qubit_lambda_max_tail(n, 0.75)
        assert abs(p.p_hat - exact) <= 4 * p.stderr
        assert 0 < p.ess <= p.N

    def test_tilted_linear_set(self):
        cs = ConstraintSet(3, linear=[LinearConstraint(np.diag([1.0, 0.0, -1.0]), 0.4, ">=")])
        naive = estimate_probability(cs, 3, 4, 200_000, "naive", seed=4)
        tilted = estimate_probability(cs, 3, 4, 50_000, "tilted", seed=5)
        assert abs(naive.p_hat - tilted.p_hat) <= 3 * math.hypot(naive.stderr, tilted.stderr)

    @pytest.mark.parametrize("method", ["naive", "tilted"])
    def test_reproducible_and_worker_independent(self, method):
        cs = lam_max(2, 0.8)
        a = estimate_probability(cs, 2, 10, 30_000, method, seed=7, workers=1)
        b = estimate_probability(cs, 2, 10, 30_000, method, seed=7, workers=1)
        c = estimate_probability(cs, 2, 10, 30_000, method, seed=7, workers=4)
        assert a == b == c

    def test_unknown_method(self):
        with pytest.raises(ValidationError):
            estimate_probability(lam_max(2, 0.8), 2, 5, 1000, "bogus")


class TestFit:
    def test_weighted_line_fit_exact(self):
        x = np.arange(10.0)
        s, i, se = weighted_line_fit(x, 0.3 * x + 2, np.full(10, 0.1))
        assert s == pytest.approx(0.3) and i == pytest.approx(2.0)
        assert se == pytest.approx(0.1 / math.sqrt(np.sum((x - x.mean()) ** 2)))

    def test_needs_four_points(self):
        pts = [EstimatePoint(n, 0.1, 0.01, math.log(0.1), 100, "naive", 100.0, 0) for n in (1, 2, 3)]
        pts.append(EstimatePoint(4, 0.0, 0.0, -math.inf, 100, "naive", 100.0, 0))
        with pytest.raises(ValidationError):
            fit_exponent(pts, 1.0)

    def test_sweep_theory_rate_and_slope(self):
        cs = lam_max(2, 0.75)
        res = sweep_exponent(cs, 2, [20, 40, 60, 80], 20_000, seed=1)
        theory = 2 * rate_max_eigenvalue(0.5, 2).rate
        assert res.fit.theory_rate == pytest.approx(theory, rel=1e-6)
        assert res.fit.theory_rate == pytest.approx(math.log(4 / 3), rel=1e-6)
        assert res.fit.relative_gap < 0.15

    def test_stderr_shrinks_with_samples(self):
        cs = lam_max(2, 0.75)
        small = sweep_exponent(cs, 2, [20, 40, 60, 80], 4_000, seed=2)
        big = sweep_exponent(cs, 2, [20, 40, 60, 80], 64_000, seed=2)
        assert big.fit.slope_stderr < small.fit.slope_stderr / 2

    def test_sweep_validates_list(self):
        with pytest.raises(ValidationError):
            sweep_exponent(lam_max(2, 0.75), 2, [20, 40, 30, 80], 1000)
        with pytest.raises(ValidationError):
            sweep_exponent(lam_max(2, 0.75), 2, [20, 40, 60], 1000)


class TestConcentration:
    def test_outside_mass_decreases(self):
        res = conditional_concentration(lam_max(2, 0.75), 2, [25, 50, 100, 200], 0.1, 20_000, seed=3)
        mass = [r.conditional_mass_outside for r in res.rows]
        assert all(b < a for a, b in zip(mass, mass[1:]))
        assert res.delta_hat > 2 * res.delta_stderr > 0
        assert res.minimizer_spectrum == pytest.approx([0.75, 0.25], abs=1e-8)
        assert res.rows[1].ratio == pytest.approx(mass[1] / mass[0])

    def test_full_space_trivial(self):
        res = conditional_concentration(ConstraintSet.full_space(2), 2, [5, 10], 1.0, 1000)
        assert all(r.conditional_mass_outside == 0.0 for r in res.rows)

    def test_bad_eps(self):
        with pytest.raises(ValidationError):
            conditional_concentration(lam_max(2, 0.75), 2, [5, 10], 0.0, 1000)


class TestCoherence:
    def test_exact_laws(self):
        assert exceedance_single(0.3, 20) == pytest.approx(0.7**19)
        # the union law lies between one coordinate and the union bound
        for n in (5, 20, 100):
            assert exceedance_single(0.3, n) <= exceedance_max(0.3, n) <= n * exceedance_single(0.3, n) * (1 + 1e-12)
        # for kappa > 1/2 at most one coordinate can exceed
        assert exceedance_max(0.6, 10) == pytest.approx(10 * 0.4**9, rel=1e-12)

    def test_single_coordinate(self):
        pt = single_coordinate_mc(0.3, 5, 100_000, seed=1)
        assert pt.sandwich_ok
        assert abs(pt.p_hat - 0.7**4) <= 3 * pt.stderr

    def test_experiment(self):
        res = coherence_experiment(0.3, [50, 100, 150, 200], 20_000, seed=2, table_n=(3, 5), table_N=20_000)
        assert all(p.sandwich_ok for p in res.points)
        for p in res.points:
            assert abs(p.p_hat - p.p_exact) <= 4 * p.stderr
        assert res.fit.theory_rate == pytest.approx(math.log(1 / 0.7))
        assert res.fit.relative_gap < 0.05


class TestCompare:
    def test_max_eig(self):
        rows = compare_bounds_report("max_eig", {"m": 4, "eps": [1e-4, 0.1]})
        assert rows[0]["factor"] == pytest.approx(7 / (1 - 1 / 4), abs=1e-12)
        assert rows[0]["ratio"] == pytest.approx(rows[0]["factor"], rel=1e-3)

    def test_entropy(self):
        rows = compare_bounds_report("entropy", {"m": 3, "delta": [1e-4]})
        r = rows[0]
        assert r["factor"] == pytest.approx(8 * math.pi**2 * math.log(3), abs=1e-12)
        assert r["factor_over_delta"] == pytest.approx(r["factor"] / 1e-4)
        assert r["ratio"] == pytest.approx(r["factor_over_delta"], rel=0.05)

    def test_expectation(self):
        W = np.diag([1.0, 0.0, -1.0])
        rows = compare_bounds_report("expectation", {"W": W, "w": [1e-4]})
        r = rows[0]
        assert r["factor"] == pytest.approx(9 * math.pi**3 * 3 * 4 / (4 * 2), abs=1e-10)
        assert r["factor_opnorm"] == pytest.approx(9 * math.pi**3 * 3 * 1 / 2, abs=1e-10)
        assert r["ratio"] == pytest.approx(r["factor"], rel=1e-3)

    def test_coherence(self):
        r = compare_bounds_report("coherence", {"omega": [0.2]})[0]
        assert r["factor"] == pytest.approx(36 * math.pi**3 * math.log(2) / 0.2)

    def test_unknown(self):
        assert "max_eig" in COMPARE_KINDS
        with pytest.raises(ValidationError):
            compare_bounds_report("purity", {})
