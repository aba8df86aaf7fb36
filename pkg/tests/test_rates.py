import math
import warnings

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from atypia.qstate import HermitianObservable, ValidationError, binary_rel_entropy, rel_entropy_vs_pi
from atypia.rates import (
    GaussianRatePoint,
    coherence_dstar,
    coherence_dstar_min,
    coherence_rate_levy,
    coherence_rate_upper,
    gaussian_rate_scale_min,
    gaussian_sanov_rate,
    gell_mann_basis,
    levy_comparison_rates,
    nu_star_m3,
    rate_binary_measurement,
    rate_entropy,
    rate_expectation,
    rate_max_eigenvalue,
    rate_qubit,
    rate_trace_distance,
    rate_w3,
)
from atypia.roots import solve_nu

RATE_05 = 0.5 * math.log(4 / 3)
W3 = HermitianObservable.diag([1, 0, -1])


def entropy(p):
    p = np.asarray(p)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def test_qubit():
    assert rate_qubit(0) == 0
    assert rate_qubit(0.5) == pytest.approx(0.143841, abs=1e-6)
    assert rate_qubit(1) == math.inf
    with pytest.raises(ValidationError):
        rate_qubit(1.1)


class TestMaxEigenvalue:
    def test_small_eps(self):
        assert rate_max_eigenvalue(1e-3, 2).rate / 1e-6 == pytest.approx(0.5, abs=1e-4)
        for m in (3, 10):
            gaps = [abs(rate_max_eigenvalue(e, m).rate / e**2 - (m - 1) / 2) for e in (1e-2, 1e-3, 1e-4)]
            assert gaps[0] > gaps[1] > gaps[2]
            assert gaps[2] <= 1e-4 * m * m

    def test_qubit_case(self):
        assert rate_max_eigenvalue(0.5, 2).rate == pytest.approx(RATE_05, abs=1e-15)
        assert rate_max_eigenvalue(0.5, 2).exponent == pytest.approx(math.log(4 / 3), abs=1e-15)

    def test_eps_one(self):
        assert rate_max_eigenvalue(1.0, 3).rate == math.inf
        assert rate_max_eigenvalue(1 - 1e-12, 3).rate > 10

    def test_minimizer(self):
        r = rate_max_eigenvalue(0.3, 4)
        spec = r.minimizer_spectrum()
        assert spec[0] == pytest.approx((1 + 3 * 0.3) / 4)
        assert rel_entropy_vs_pi(np.diag(spec)) == pytest.approx(r.rate, abs=1e-12)

    def test_monotone(self):
        vals = [rate_max_eigenvalue(e, 5).rate for e in np.linspace(0.01, 0.99, 100)]
        assert np.all(np.diff(vals) > 0)


class TestBinaryMeasurement:
    def test_examples(self):
        assert rate_binary_measurement(0.5, 2, 4).rate == 0
        assert rate_binary_measurement(0.75, 1, 2).rate == pytest.approx(0.143841, abs=1e-6)
        assert rate_binary_measurement(0.0, 1, 2).rate == math.inf
        assert rate_binary_measurement(1e-9, 1, 2).rate > 9

    def test_minimizer_in_set(self):
        r = rate_binary_measurement(0.2, 2, 5)
        rho = np.asarray(r.minimizer.entries)
        assert np.trace(rho[:2, :2]).real == pytest.approx(0.2, abs=1e-12)
        assert rel_entropy_vs_pi(rho) == pytest.approx(r.rate, abs=1e-12)

    def test_range(self):
        with pytest.raises(ValidationError):
            rate_binary_measurement(0.5, 0, 2)


class TestTraceDistance:
    def test_qubit_cross_check(self):
        assert rate_trace_distance(0.25, 2).rate == pytest.approx(rate_qubit(0.5), abs=1e-15)

    def test_small_t_quadratic_coefficient(self):
        # min over alpha of t^2 / (2 alpha (1 - alpha)) is attained at alpha = 1/2
        r = rate_trace_distance(1e-3, 64)
        assert r.rate / 1e-6 == pytest.approx(2.0, rel=1e-3)
        assert r.diagnostics["m_star"] == 32

    def test_distance_one_qubit(self):
        assert rate_trace_distance(0.999999, 2).rate > 5
        assert rate_trace_distance(0.6, 2).rate == math.inf

    def test_monotone(self):
        vals = [rate_trace_distance(t, 6).rate for t in np.linspace(0.01, 0.8, 100)]
        assert np.all(np.diff(vals) >= -1e-15)

    def test_minimizer(self):
        r = rate_trace_distance(0.3, 5)
        spec = r.minimizer_spectrum()
        assert 0.5 * np.sum(np.abs(spec - 0.2)) == pytest.approx(0.3, abs=1e-12)
        assert rel_entropy_vs_pi(np.diag(spec)) == pytest.approx(r.rate, abs=1e-12)


class TestEntropy:
    def test_eta_to_one(self):
        assert rate_entropy(1 - 1e-10, 5).rate < 1e-8

    def test_m2_grid_oracle(self):
        eta = 0.6
        target = eta * math.log(2)
        x = np.arange(0.5, 1.0, 1e-5)
        h = -x * np.log(x) - (1 - x) * np.log(1 - x)
        feasible = x[h <= target]
        oracle = np.min(-0.5 * np.log(4 * feasible * (1 - feasible)))
        assert rate_entropy(eta, 2).rate == pytest.approx(oracle, abs=1e-4)

    def test_minimizer_on_constraint(self):
        for m, eta in ((3, 0.4), (6, 0.7), (10, 0.95)):
            r = rate_entropy(eta, m)
            spec = r.minimizer_spectrum()
            assert entropy(spec) == pytest.approx(eta * math.log(m), abs=1e-10)
            assert rel_entropy_vs_pi(np.diag(spec)) == pytest.approx(r.rate, abs=1e-10)

    def test_small_delta_first_order(self):
        # the ratio rate / (delta ln m) tends to one as delta -> 0 at fixed m
        for m in (4, 16):
            prev = 0.0
            for d in (1e-2, 1e-3, 1e-4, 1e-5):
                ratio = rate_entropy(1 - d, m).rate / (d * math.log(m))
                assert ratio > prev
                prev = ratio
            assert prev == pytest.approx(1.0, abs=0.03)

    def test_monotone(self):
        vals = [rate_entropy(e, 5).rate for e in np.linspace(0.06, 0.99, 100)]
        assert np.all(np.diff(vals) <= 1e-15)

    def test_low_eta_warns(self):
        with pytest.warns(RuntimeWarning):
            r = rate_entropy(0.01, 4)
        assert r.diagnostics["divergence_warning"]


class TestExpectation:
    def test_w3_example(self):
        assert rate_w3(0.5) == pytest.approx(0.2100473206574948, abs=1e-13)
        assert rate_expectation(0.5, W3).rate == pytest.approx(rate_w3(0.5), abs=1e-13)
        terms = [1 - (0.5 - k) * nu_star_m3(0.5) for k in (-1, 0, 1)]
        assert terms == pytest.approx([2.4306, 1.4769, 0.5232], abs=1e-4)

    def test_nu_example_and_symmetry(self):
        assert nu_star_m3(0.5) == pytest.approx((0.25 - math.sqrt(1.75)) / 1.125, abs=1e-14)
        assert nu_star_m3(-0.3) == pytest.approx(-nu_star_m3(0.3), abs=1e-15)
        assert nu_star_m3(1e-6) / 1e-6 == pytest.approx(-1.5, rel=1e-6)
        with pytest.raises(ValidationError):
            nu_star_m3(0.0)

    def test_w3_even_and_small(self):
        for w in np.linspace(0.01, 0.99, 30):
            assert rate_w3(w) == pytest.approx(rate_w3(-w), abs=1e-14)
        assert rate_w3(1e-3) / 1e-6 == pytest.approx(0.75, rel=1e-3)
        assert rate_w3(0.0) == 0.0

    def test_nu_matches_closed_form(self):
        for w in np.linspace(-0.99, 0.99, 41):
            if abs(w) < 1e-9:
                continue
            assert abs(rate_expectation(w, W3).diagnostics["nu"] - nu_star_m3(w)) <= 1e-10

    def test_small_w_limits(self, rng):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        W = HermitianObservable(a + a.conj().T).centered()
        tr2 = float(np.trace(W.entries @ W.entries).real)
        w = 1e-4
        assert solve_nu(w, W) / w == pytest.approx(-4 / tr2, rel=1e-3)
        assert rate_expectation(w, W).rate / w**2 == pytest.approx(4 / (2 * tr2), rel=1e-2)

    def test_minimizer_kkt(self):
        r = rate_expectation(0.4, W3)
        rho = np.asarray(r.minimizer.entries)
        assert np.trace(W3.entries @ rho).real == pytest.approx(0.4, abs=1e-12)
        assert rel_entropy_vs_pi(rho) == pytest.approx(r.rate, abs=1e-12)

    def test_uncentered_observable(self):
        shifted = HermitianObservable.diag([3, 2, 1])
        assert rate_expectation(2.5, shifted).rate == pytest.approx(rate_w3(0.5), abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            rate_expectation(1.0, W3)


class TestGaussian:
    def test_basis_orthonormal(self):
        for m in (2, 3, 4):
            A = gell_mann_basis(m)
            G = np.einsum("rij,sji->rs", A, A).real / m
            assert np.allclose(G, np.eye(m * m), atol=1e-13)
            assert np.allclose(A[0], np.eye(m))

    def test_examples(self):
        assert gaussian_sanov_rate(GaussianRatePoint([4, 0, 0, 0])) == pytest.approx(0, abs=1e-15)
        # t.A / 2m = diag(1.5, 0.5)
        pt = GaussianRatePoint([4, 0, 0, 2])
        assert gaussian_sanov_rate(pt) == pytest.approx(
            (1.5 - 1 - math.log(1.5)) + (0.5 - 1 - math.log(0.5)), abs=1e-14
        )
        assert gaussian_sanov_rate(GaussianRatePoint([1, 0, 0, 2])) == math.inf

    def test_scale_min_identity(self, rng):
        for _ in range(20):
            m = int(rng.integers(2, 5))
            t = rng.standard_normal(m * m)
            op = GaussianRatePoint(t).operator()
            ev = np.linalg.eigvalsh(op)
            t[0] += -ev[0] + 0.1
            pt = GaussianRatePoint(t)
            rho = pt.operator() / np.trace(pt.operator()).real
            val = gaussian_rate_scale_min(pt)
            assert val == pytest.approx(m * rel_entropy_vs_pi(rho), abs=1e-10)
            grid = np.exp(np.linspace(-6, 6, 4001))
            best = min(gaussian_sanov_rate(GaussianRatePoint(lam * t)) for lam in grid)
            res = minimize_scalar(lambda x: gaussian_sanov_rate(GaussianRatePoint(math.exp(x) * t)),
                                  bracket=(-1, 1), tol=1e-12)
            assert min(best, res.fun) == pytest.approx(val, abs=1e-6)
            for lam in (0.01, 3.0, 100.0):
                assert gaussian_rate_scale_min(GaussianRatePoint(lam * t)) == pytest.approx(val, abs=1e-12)

    def test_rank_deficient(self):
        assert gaussian_rate_scale_min(GaussianRatePoint([1, 0, 0, 1])) == math.inf


class TestCoherence:
    def test_values(self):
        assert coherence_rate_upper(0.5) == pytest.approx(math.log(2), abs=1e-15)
        assert coherence_rate_levy(0.5) == pytest.approx(3.23e-4, rel=1e-3)
        assert coherence_rate_upper(1e-6) == pytest.approx(1e-6, rel=1e-5)

    def test_gap(self):
        for w in np.linspace(0.01, 0.99, 50):
            assert coherence_rate_upper(w) > coherence_rate_levy(w)

    def test_dstar(self):
        assert coherence_dstar(2, 0) == 0
        assert coherence_dstar(1.5, 1.5) == math.inf
        assert coherence_dstar(-1, 0) == math.inf
        for k in (0.1, 0.3, 0.5, 0.8):
            assert coherence_dstar_min(k) == pytest.approx(-math.log(1 - k), abs=1e-6)


class TestLevy:
    def test_max_eig(self):
        assert levy_comparison_rates("max_eig", m=3, eps=0.1) == pytest.approx(4 * 0.01 / 14)
        exact = 3 * rate_max_eigenvalue(1e-4, 3).rate
        assert exact / levy_comparison_rates("max_eig", m=3, eps=1e-4) == pytest.approx(10.5, rel=1e-3)

    def test_expectation_variants(self):
        W = np.diag([1.0, 0.0, -1.0])
        pop = levy_comparison_rates("expectation_opnorm", m=3, w=0.2, W=W)
        rei = levy_comparison_rates("expectation_spread", m=3, w=0.2, W=W)
        assert rei >= pop

    def test_unknown(self):
        with pytest.raises(ValidationError):
            levy_comparison_rates("nope")
