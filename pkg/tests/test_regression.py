import numpy as np
import pytest

from crmcopula.analytics.scenarios import load_scenarios, rep_seed
from crmcopula.errors import DomainError, NonPositiveMass, SchemaError
from crmcopula.model import observed_logdensity
from crmcopula.regression import (
    Portfolio,
    RegressionSpec,
    linear_parameters,
    loglik_terms,
    portfolio_loglik,
    simulate_regression,
)

SPEC = RegressionSpec(("x1", "x2"), ("x1", "x2"))
TRUTH = np.array([-2.5, 0.5, 1.0, 8.0, -0.1, 0.3, 0.7, -0.05, 0.10])


@pytest.fixture(scope="module")
def small():
    return simulate_regression(SPEC, TRUTH, 3000, seed=17)


class TestSpec:
    def test_names(self):
        assert SPEC.names() == ["beta0", "beta1", "beta2", "gamma0", "gamma1", "gamma2", "nu", "rho1", "rho2"]
        sep = RegressionSpec(("x1",), (), hurdle="separate", hurdle_covariates=("x2",), family="t", estimate_df=True)
        assert sep.names() == ["beta0", "beta1", "beta_star0", "beta_star1", "gamma0", "nu", "rho1", "rho2", "df"]
        assert sep.covariates() == ["x1", "x2"]

    def test_validation(self):
        with pytest.raises(DomainError):
            RegressionSpec(hurdle="both")
        with pytest.raises(DomainError):
            RegressionSpec(family="t")
        with pytest.raises(DomainError):
            SPEC.unpack(TRUTH[:-1])

    def test_policy_params(self):
        pr = SPEC.policy_params(TRUTH, {"x1": 1.0, "x2": 0.0})
        assert pr.freq_pos.lam == pytest.approx(np.exp(-2.0))
        assert pr.p == pytest.approx(1 - np.exp(-np.exp(-2.0)))
        assert pr.sev.xi == pytest.approx(np.exp(7.9)) and pr.sev.nu == 0.7
        assert pr.copula.rho1 == -0.05


class TestPortfolio:
    def test_validation(self):
        with pytest.raises(SchemaError):
            Portfolio([1, 2], [1, 0], [], {})
        with pytest.raises(SchemaError):
            Portfolio([1], [1], [-2.0], {})
        with pytest.raises(SchemaError):
            Portfolio([1, 2], [0, 0], [], {"x": [1.0]})
        with pytest.raises(SchemaError):
            Portfolio([1], [0], [], {}).design(["x"])

    def test_round_trip_records(self, small):
        back = Portfolio.from_records(small.records())
        assert np.array_equal(back.n, small.n) and np.array_equal(back.y, small.y)
        assert np.array_equal(back.covariates["x1"], small.covariates["x1"])

    def test_groups(self, small):
        for k, (rows, Y) in small.groups().items():
            assert Y.shape == (rows.size, k) and np.all(small.n[rows] == k)


class TestLikelihood:
    def test_matches_single_policy_density(self, small):
        terms = loglik_terms(SPEC, TRUTH, small)
        recs = small.records()
        for i in list(np.flatnonzero(small.n > 0)[:20]) + [0, 1, 2]:
            pr = SPEC.policy_params(TRUTH, recs[i].covariates)
            assert terms[i] == pytest.approx(observed_logdensity(pr, recs[i]), abs=1e-10)

    def test_additivity(self, small):
        idx = np.arange(len(small))
        a, b = small.subset(idx[::2]), small.subset(idx[1::2])
        total = portfolio_loglik(SPEC, TRUTH, small)
        assert total == pytest.approx(portfolio_loglik(SPEC, TRUTH, a) + portfolio_loglik(SPEC, TRUTH, b), rel=1e-12)

    def test_all_zero_claims(self):
        cov = {"x1": np.array([0.0, 1.0, 1.0]), "x2": np.array([1.0, 0.0, 1.0])}
        data = Portfolio([1, 2, 3], [0, 0, 0], [], cov)
        _, lam, _ = linear_parameters(SPEC, TRUTH, data)
        assert portfolio_loglik(SPEC, TRUTH, data) == pytest.approx(float(np.sum(-lam)), abs=1e-14)

    def test_separate_hurdle_zero_branch(self):
        spec = RegressionSpec((), (), hurdle="separate", hurdle_covariates=("x",))
        data = Portfolio(["a", "b"], [0, 0], [], {"x": [0.0, 2.0]})
        theta = np.array([0.1, -1.0, 0.5, 0.0, 1.0, 0.0, 0.2])
        p = 1 / (1 + np.exp(-np.array([-1.0, 0.0])))
        assert portfolio_loglik(spec, theta, data) == pytest.approx(float(np.sum(np.log1p(-p))), abs=1e-14)

    def test_vanishing_mass_names_policy(self):
        # an extreme claim count under a tiny Poisson mean has no representable mass
        data = Portfolio(["p1", "p2"], [0, 40], np.full(40, 5.0), {})
        spec = RegressionSpec()
        theta = np.array([-30.0, 0.0, 1.0, 0.3, 0.5])
        with pytest.raises(NonPositiveMass, match="p2"):
            portfolio_loglik(spec, theta, data)

    def test_invalid_dependence(self, small):
        bad = TRUTH.copy()
        bad[-1] = 0.001  # rho2 <= rho1^2 under Equi
        with pytest.raises(DomainError):
            portfolio_loglik(SPEC, bad, small)

    def test_truth_dominates_perturbation(self):
        # true parameters beat beta0 + 0.5 in at least 95% of 50 simulated portfolios
        sc1 = load_scenarios()[0]
        wins = 0
        for r in range(50):
            data = simulate_regression(SPEC, TRUTH, sc1.n_policies, rep_seed(20190101, 1, r))
            moved = TRUTH.copy()
            moved[0] += 0.5
            wins += portfolio_loglik(SPEC, TRUTH, data) > portfolio_loglik(SPEC, moved, data)
        assert wins >= 48


class TestSimulation:
    def test_deterministic(self):
        a = simulate_regression(SPEC, TRUTH, 5000, seed=3)
        b = simulate_regression(SPEC, TRUTH, 5000, seed=3, threads=3)
        assert np.array_equal(a.n, b.n) and np.array_equal(a.y, b.y)
        assert np.array_equal(a.covariates["x2"], b.covariates["x2"])

    def test_claim_frequency(self):
        data = simulate_regression(SPEC, TRUTH, 5000, seed=4)
        _, lam, _ = linear_parameters(SPEC, TRUTH, data)
        assert abs(data.n.mean() - lam.mean()) < 3 * np.sqrt(lam.mean() / len(data))

    def test_given_covariates(self):
        cov = {"x1": np.ones(100), "x2": np.zeros(100)}
        data = simulate_regression(SPEC, TRUTH, 100, seed=1, covariates=cov)
        assert np.all(data.covariates["x1"] == 1.0)
