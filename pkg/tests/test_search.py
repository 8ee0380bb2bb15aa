"""Bayesian hyperparameter search over box-constrained spaces."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from melcgraph.search import (
    N_INITIAL_PROBES,
    ParamSpec,
    SearchResult,
    SearchSpace,
    bayes_opt,
    expected_improvement,
)


class TestParamSpec:
    def test_linear_endpoints_and_midpoint(self):
        p = ParamSpec("x", 2.0, 10.0)
        assert p.from_unit(0.0) == pytest.approx(2.0)
        assert p.from_unit(1.0) == pytest.approx(10.0)
        assert p.from_unit(0.5) == pytest.approx(6.0)

    def test_log_scale_geometric_midpoint(self):
        p = ParamSpec("lr", 1e-4, 1e-2, log=True)
        assert p.from_unit(0.0) == pytest.approx(1e-4)
        assert p.from_unit(1.0) == pytest.approx(1e-2)
        assert p.from_unit(0.5) == pytest.approx(1e-3)

    def test_integer_rounds_and_stays_in_bounds(self):
        p = ParamSpec("k", 1, 9, integer=True)
        assert p.from_unit(0.5) == 5
        assert p.from_unit(0.0) == 1
        assert p.from_unit(1.0) == 9
        assert isinstance(p.from_unit(0.3), int)

    def test_log_integer_combination(self):
        p = ParamSpec("width", 8, 128, integer=True, log=True)
        assert p.from_unit(0.0) == 8
        assert p.from_unit(1.0) == 128
        assert p.from_unit(0.5) == round(math.sqrt(8 * 128))

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError):
            ParamSpec("x", 1.0, 1.0)
        with pytest.raises(ValueError):
            ParamSpec("x", 2.0, 1.0)

    def test_log_scale_needs_positive_lo(self):
        with pytest.raises(ValueError):
            ParamSpec("x", 0.0, 1.0, log=True)
        with pytest.raises(ValueError):
            ParamSpec("x", -1.0, 1.0, log=True)


class TestSearchSpace:
    def test_decode_maps_names_in_order(self):
        space = SearchSpace(
            (ParamSpec("a", 0.0, 1.0), ParamSpec("b", 10.0, 20.0))
        )
        config = space.decode(np.array([0.5, 0.0]))
        assert config == {"a": pytest.approx(0.5), "b": pytest.approx(10.0)}
        assert space.dim == 2

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            SearchSpace((ParamSpec("a", 0.0, 1.0), ParamSpec("a", 1.0, 2.0)))

    def test_empty_space_rejected(self):
        with pytest.raises(ValueError):
            SearchSpace(())


class TestExpectedImprovement:
    def test_matches_closed_form(self):
        mu = np.array([0.2, 0.7, 1.3])
        sigma = np.array([0.5, 0.1, 0.8])
        best = 0.6
        z = (mu - best) / sigma
        want = (mu - best) * norm.cdf(z) + sigma * norm.pdf(z)
        np.testing.assert_allclose(
            expected_improvement(mu, sigma, best), want, atol=1e-12
        )

    def test_zero_sigma_collapses_to_hinge(self):
        mu = np.array([0.1, 0.9])
        sigma = np.zeros(2)
        out = expected_improvement(mu, sigma, 0.5)
        np.testing.assert_allclose(out, [0.0, 0.4], atol=1e-12)

    def test_nonnegative_and_monotone_in_mu(self):
        sigma = np.full(50, 0.3)
        mu = np.linspace(-2, 2, 50)
        out = expected_improvement(mu, sigma, 0.0)
        assert (out >= 0).all()
        assert (np.diff(out) >= -1e-12).all()

    def test_grows_with_sigma_at_the_mean(self):
        mu = np.zeros(3)
        sigma = np.array([0.1, 0.5, 2.0])
        out = expected_improvement(mu, sigma, 0.0)
        assert out[0] < out[1] < out[2]


class TestBayesOpt:
    def unit_space(self):
        return SearchSpace((ParamSpec("x", 0.0, 1.0),))

    def test_constant_objective_costs_probes_plus_patience(self):
        calls = []

        def objective(config):
            calls.append(config)
            return 1.0

        result = bayes_opt(objective, self.unit_space(), patience=5, max_evals=100)
        assert len(calls) == N_INITIAL_PROBES + 5
        assert result.best_value == 1.0
        assert len(result.values) == len(calls)

    def test_max_evals_caps_total_evaluations(self):
        result = bayes_opt(
            lambda c: 0.0, self.unit_space(), patience=1000, max_evals=12
        )
        assert len(result.values) == 12

    def test_finds_peak_of_smooth_objective(self):
        def objective(config):
            return -((config["x"] - 0.37) ** 2)

        result = bayes_opt(objective, self.unit_space(), patience=20, max_evals=80)
        assert abs(result.best_config["x"] - 0.37) < 0.05
        assert result.best_value == max(result.values)

    def test_deterministic_given_seed(self):
        def objective(config):
            return math.sin(7 * config["x"])

        a = bayes_opt(objective, self.unit_space(), patience=10, max_evals=30, seed=4)
        b = bayes_opt(objective, self.unit_space(), patience=10, max_evals=30, seed=4)
        assert a.values == b.values
        assert a.best_config == b.best_config

    def test_seed_changes_probe_sequence(self):
        def objective(config):
            return config["x"]

        a = bayes_opt(objective, self.unit_space(), patience=3, max_evals=15, seed=0)
        b = bayes_opt(objective, self.unit_space(), patience=3, max_evals=15, seed=1)
        assert a.values[:N_INITIAL_PROBES] != b.values[:N_INITIAL_PROBES]

    def test_best_config_corresponds_to_best_value(self):
        def objective(config):
            return config["x"] * (1 - config["x"])

        result = bayes_opt(objective, self.unit_space(), patience=10, max_evals=25)
        idx = result.values.index(result.best_value)
        assert result.configs[idx] == result.best_config

    def test_integer_params_decode_as_ints(self):
        space = SearchSpace(
            (ParamSpec("k", 2, 30, integer=True), ParamSpec("x", 0.0, 1.0))
        )
        seen = []
        bayes_opt(lambda c: seen.append(c) or 0.0, space, patience=2, max_evals=12)
        assert all(isinstance(c["k"], int) and 2 <= c["k"] <= 30 for c in seen)

    def test_invalid_budget_rejected(self):
        with pytest.raises(ValueError):
            bayes_opt(lambda c: 0.0, self.unit_space(), patience=0)
        with pytest.raises(ValueError):
            bayes_opt(lambda c: 0.0, self.unit_space(), max_evals=0)


class TestSearchResult:
    def test_best_so_far_is_running_maximum(self):
        result = SearchResult(
            best_config={"x": 1.0},
            best_value=0.9,
            configs=({"x": 0.1}, {"x": 0.5}, {"x": 1.0}, {"x": 0.2}),
            values=(0.3, 0.9, 0.1, 0.4),
        )
        np.testing.assert_allclose(result.best_so_far(), [0.3, 0.9, 0.9, 0.9])

    def test_best_so_far_monotone_on_real_run(self):
        result = bayes_opt(
            lambda c: math.cos(5 * c["x"]),
            SearchSpace((ParamSpec("x", 0.0, 1.0),)),
            patience=10,
            max_evals=40,
            seed=2,
        )
        curve = result.best_so_far()
        assert (np.diff(curve) >= 0).all()
        assert curve[-1] == result.best_value
