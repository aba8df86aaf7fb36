import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atypia.qstate import DensityMatrix, HermitianObservable, ValidationError, rel_entropy_vs_pi, qubit_from_bloch
from atypia.rates import (
    gell_mann_basis,
    rate_binary_measurement,
    rate_entropy,
    rate_expectation,
    rate_max_eigenvalue,
    rate_trace_distance,
    rate_w3,
)
from atypia.solver import (
    BlochRegion,
    ConstraintSet,
    InfeasibleError,
    LinearConstraint,
    SolverConfig,
    SpectralConstraint,
    kkt_fit_residual,
    min_rel_entropy,
)
from conftest import random_state

W3 = np.diag([1.0, 0.0, -1.0])


def lin(W, w, rel="="):
    return ConstraintSet(np.asarray(W).shape[0], linear=[LinearConstraint(W, w, rel)])


def spec(m, fn, target, rel=">="):
    return ConstraintSet(m, spectral=SpectralConstraint(fn, target, rel))


class TestExamples:
    def test_w3(self):
        res = min_rel_entropy(lin(W3, 0.5))
        assert res.rate == pytest.approx(rate_w3(0.5), abs=1e-6)
        assert res.rate == pytest.approx(0.210047, abs=1e-6)

    def test_max_eig(self):
        m, eps = 3, 0.3
        res = min_rel_entropy(spec(m, "lambda_max", (1 + (m - 1) * eps) / m))
        assert res.rate == pytest.approx(rate_max_eigenvalue(eps, m).rate, abs=1e-6)

    def test_equal_to_pi(self):
        m = 3
        G = gell_mann_basis(m)
        cs = ConstraintSet(m, linear=[LinearConstraint(g, 0.0) for g in G[1:]])
        res = min_rel_entropy(cs)
        assert res.rate == pytest.approx(0.0, abs=1e-10)
        assert np.allclose(res.minimizer.entries, np.eye(m) / m, atol=1e-8)

    def test_exponent_accessor(self):
        res = min_rel_entropy(lin(W3, 0.5))
        assert res.exponent == pytest.approx(3 * res.rate)


class TestOracleFamilies:
    @pytest.mark.parametrize("m", [2, 3, 5])
    @pytest.mark.parametrize("eps", [0.05, 0.3, 0.6, 0.9])
    def test_max_eigenvalue(self, m, eps):
        res = min_rel_entropy(spec(m, "lambda_max", (1 + (m - 1) * eps) / m))
        assert res.rate == pytest.approx(rate_max_eigenvalue(eps, m).rate, abs=1e-6)

    @pytest.mark.parametrize("m", [2, 3, 4, 6])
    @pytest.mark.parametrize("t", [0.05, 0.2, 0.4])
    def test_trace_distance(self, m, t):
        res = min_rel_entropy(spec(m, "trace_distance", t))
        assert res.rate == pytest.approx(rate_trace_distance(t, m).rate, abs=1e-6)

    @pytest.mark.parametrize("m", [2, 3, 5])
    @pytest.mark.parametrize("eta", [0.2, 0.5, 0.8])
    def test_entropy(self, m, eta):
        res = min_rel_entropy(spec(m, "entropy", eta * math.log(m), "<="))
        assert res.rate == pytest.approx(rate_entropy(eta, m).rate, abs=1e-6)

    @pytest.mark.parametrize("m,m0", [(2, 1), (4, 1), (4, 3), (6, 2)])
    @pytest.mark.parametrize("q", [0.1, 0.5, 0.75])
    def test_binary_measurement(self, m, m0, q):
        P = HermitianObservable.projector(m, m0).entries
        res = min_rel_entropy(lin(P, q))
        assert res.rate == pytest.approx(rate_binary_measurement(q, m0, m).rate, abs=1e-6)

    @pytest.mark.parametrize("seed", range(6))
    def test_expectation_random_observable(self, seed):
        rng = np.random.default_rng(seed)
        m = 2 + seed % 3
        a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        W = (a + a.conj().T) / 2
        ev = np.linalg.eigvalsh(W)
        w = ev[0] + (ev[-1] - ev[0]) * rng.uniform(0.1, 0.9)
        res = min_rel_entropy(lin(W, w))
        assert res.rate == pytest.approx(rate_expectation(w, W).rate, abs=1e-6)
        assert kkt_fit_residual(res.minimizer.entries, W) <= 1e-6


class TestStructure:
    def test_restarts_agree(self):
        cs = spec(4, "entropy", 0.6 * math.log(4), "<=")
        a = min_rel_entropy(cs, SolverConfig(seed=1))
        b = min_rel_entropy(cs, SolverConfig(seed=2))
        assert abs(a.rate - b.rate) <= 1e-8

    def test_constraint_residuals(self):
        res = min_rel_entropy(lin(W3, -0.3))
        assert res.diagnostics["residual"] <= 1e-8
        assert res.diagnostics["converged"]

    def test_inequality_equals_boundary(self):
        m, c = 3, 0.6
        geq = min_rel_entropy(spec(m, "lambda_max", c, ">="))
        eq = min_rel_entropy(spec(m, "lambda_max", c, "="))
        assert geq.rate == pytest.approx(eq.rate, abs=1e-9)

    def test_interior_point_gives_zero(self):
        assert min_rel_entropy(spec(3, "lambda_max", 0.5, "<=")).rate == pytest.approx(0.0, abs=1e-12)
        assert min_rel_entropy(lin(W3, 0.2, "<=")).rate == pytest.approx(0.0, abs=1e-12)

    def test_linear_inequality_active(self):
        res = min_rel_entropy(lin(W3, 0.5, ">="))
        assert res.rate == pytest.approx(rate_w3(0.5), abs=1e-6)

    def test_full_space(self):
        assert min_rel_entropy(ConstraintSet.full_space(4)).rate == 0.0

    def test_boundary_constraint_is_infinite(self):
        res = min_rel_entropy(lin(np.diag([1.0, 0.0]), 1.0))
        assert res.rate == math.inf

    def test_pure_state_max_eig_infinite(self):
        assert min_rel_entropy(spec(2, "lambda_max", 1.0)).rate == math.inf


class TestErrors:
    @pytest.mark.parametrize("rel", ["<", ">"])
    def test_strict_relations_rejected(self, rel):
        with pytest.raises(ValidationError, match="cl"):
            LinearConstraint(W3, 0.1, rel)

    def test_infeasible_linear(self):
        with pytest.raises(InfeasibleError):
            min_rel_entropy(lin(W3, 1.5))

    def test_infeasible_pair(self):
        cs = ConstraintSet(3, linear=[LinearConstraint(W3, 0.5), LinearConstraint(W3, -0.5)])
        with pytest.raises(InfeasibleError):
            min_rel_entropy(cs)

    def test_infeasible_trace_distance(self):
        with pytest.raises(InfeasibleError):
            min_rel_entropy(spec(3, "trace_distance", 0.7))

    def test_no_constraints(self):
        with pytest.raises(ValidationError):
            ConstraintSet(3)

    def test_unknown_spectral(self):
        with pytest.raises(ValidationError):
            SpectralConstraint("purity", 0.5)

    def test_bloch_needs_qubit(self):
        with pytest.raises(ValidationError):
            ConstraintSet(3, bloch=BlochRegion("ball", {"center": [0, 0, 0], "radius": 0.5}))

    def test_bad_config(self):
        with pytest.raises(ValidationError):
            SolverConfig(grad_tol=0)


def _grid_inf(region):
    # brute force: dense directions, coarse radial grid, then a fine grid in the first hit cell
    th = np.linspace(0, math.pi, 181)
    ph = np.linspace(0, 2 * math.pi, 361)
    T, P = np.meshgrid(th, ph, indexing="ij")
    u = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 1, 3)
    coarse = np.linspace(0, 0.9999, 400)
    hit = region.contains((u * coarse[None, :, None]).reshape(-1, 3)).reshape(u.shape[0], -1)
    rows = np.flatnonzero(hit.any(axis=1))
    first = hit[rows].argmax(axis=1)
    lo = coarse[np.maximum(first - 1, 0)]
    fine = lo[:, None] + np.linspace(0, 1, 400)[None, :] * (coarse[first] - lo)[:, None]
    fhit = region.contains((u[rows] * fine[:, :, None]).reshape(-1, 3)).reshape(rows.size, -1)
    r = fine[np.arange(rows.size), fhit.argmax(axis=1)].min()
    return float(-0.5 * math.log1p(-r * r))


class TestBloch:
    @pytest.mark.parametrize(
        "region",
        [
            BlochRegion("halfspace", {"normal": [0.3, -0.4, 0.866], "offset": 0.45}),
            BlochRegion("ball", {"center": [0.5, 0.2, -0.3], "radius": 0.2}),
            BlochRegion("outside_ball", {"radius": 0.6}),
            BlochRegion(predicate=lambda t: np.linalg.norm(t - [0.2, 0.1, 0.0], axis=1) >= 0.5),
        ],
    )
    def test_against_dense_grid(self, region):
        res = min_rel_entropy(ConstraintSet(2, bloch=region))
        assert res.rate == pytest.approx(_grid_inf(region), abs=1e-4)
        assert res.rate == pytest.approx(rel_entropy_vs_pi(res.minimizer), abs=1e-12)

    def test_predicate_corner(self):
        region = BlochRegion(predicate=lambda t: (t[:, 0] >= 0.3) & (np.abs(t[:, 2]) >= 0.4))
        res = min_rel_entropy(ConstraintSet(2, bloch=region))
        assert res.rate == pytest.approx(-0.5 * math.log(0.75), abs=1e-6)

    def test_ball_containing_origin(self):
        res = min_rel_entropy(ConstraintSet(2, bloch=BlochRegion("ball", {"center": [0.1, 0, 0], "radius": 0.3})))
        assert res.rate == 0.0


class TestSerialization:
    def test_examples(self):
        cs = ConstraintSet.from_json('{"m":3,"linear":[{"W":[[1,0,0],[0,0,0],[0,0,-1]],"w":0.5,"rel":"="}]}')
        assert cs == lin(W3, 0.5)
        assert ConstraintSet.from_json('{"m":3,"full":true}').full
        cs = ConstraintSet.from_json('{"m":4,"linear":[{"W":{"projector_rank":1},"w":0.5}]}')
        assert min_rel_entropy(cs).rate == pytest.approx(rate_binary_measurement(0.5, 1, 4).rate, abs=1e-6)

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError):
            ConstraintSet.from_dict({"m": 2, "spectral": {"fn": "lambda_max", "target": 0.7}, "bogus": 1})

    def test_empty_linear_rejected(self):
        with pytest.raises(ValidationError):
            ConstraintSet.from_dict({"m": 2, "linear": []})

    @given(
        m=st.integers(2, 4),
        target=st.floats(-1, 1, allow_nan=False),
        rel=st.sampled_from(["=", ">=", "<="]),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_linear_round_trip(self, m, target, rel, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        cs = lin((a + a.conj().T) / 2, target, rel)
        assert ConstraintSet.from_json(cs.to_json()) == cs

    @given(
        fn=st.sampled_from(["lambda_max", "lambda_min", "entropy", "trace_distance"]),
        target=st.floats(0, 1, allow_nan=False),
        rel=st.sampled_from(["=", ">=", "<="]),
    )
    @settings(max_examples=50, deadline=None)
    def test_spectral_round_trip(self, fn, target, rel):
        cs = spec(3, fn, target, rel)
        assert ConstraintSet.from_json(cs.to_json()) == cs

    @pytest.mark.parametrize(
        "region",
        [
            BlochRegion("halfspace", {"normal": [0.0, 0.0, 1.0], "offset": 0.5}),
            BlochRegion("ball", {"center": [0.5, 0.2, -0.3], "radius": 0.2}),
            BlochRegion("outside_ball", {"radius": 0.6}),
        ],
    )
    def test_bloch_round_trip(self, region):
        cs = ConstraintSet(2, bloch=region)
        assert ConstraintSet.from_json(cs.to_json()) == cs


class TestContains:
    def test_contains_states_matches_scalar(self, rng):
        cs = spec(3, "lambda_max", 0.6)
        states = np.stack([random_state(rng, 3, 3) for _ in range(50)])
        vec = cs.contains_states(states)
        scal = [cs.contains(s) for s in states]
        assert list(vec) == scal

    def test_bloch_contains(self):
        cs = ConstraintSet(2, bloch=BlochRegion("outside_ball", {"radius": 0.5}))
        assert cs.contains(qubit_from_bloch([0.6, 0, 0]).entries)
        assert not cs.contains(np.eye(2) / 2)

    def test_distance_invariant_vs_not(self):
        cs = spec(2, "lambda_max", 0.75)
        star = DensityMatrix(np.diag([0.75, 0.25]).astype(complex))
        flipped = np.diag([0.25, 0.75]).astype(complex)[None]
        assert cs.distance(flipped, star)[0] == pytest.approx(0.0, abs=1e-12)
        cs2 = lin(np.diag([1.0, -1.0]), 0.5)
        assert cs2.distance(flipped, star)[0] == pytest.approx(0.5)
