import numpy as np
import pytest
from scipy import integrate, stats

from crmcopula import copula as cop
from crmcopula import margins as mg
from crmcopula.corrmat import CorrStructure
from crmcopula.errors import DomainError, NotPositiveDefinite

from conftest import cond_mass_integral, dense_ext, dense_sev


def family(kind="gaussian", structure="equi", rho1=0.3, rho2=0.4, df=None):
    return cop.CopulaFamily(kind, CorrStructure(structure, rho1, rho2), df)


class TestFamily:
    def test_aliases_and_domain(self):
        assert family("normal").kind == "gaussian"
        assert family("student", df=4).is_t
        with pytest.raises(DomainError):
            family("t")
        with pytest.raises(DomainError):
            family("clayton")
        assert family("gaussian", df=3).df is None


class TestSeverityCopula:
    def test_univariate_is_uniform(self):
        for u in (0.01, 0.5, 0.97):
            assert cop.sev_copula_logdensity(family(), [u]) == pytest.approx(0.0, abs=1e-14)

    def test_independence(self, rng):
        fam = family(rho1=0.0, rho2=1e-300)
        for k in (2, 5):
            assert cop.sev_copula_logdensity(fam, rng.uniform(size=k)) == pytest.approx(0.0, abs=1e-12)
        fam = family(structure="ar", rho1=0.0, rho2=0.0)
        assert cop.sev_copula_logdensity(fam, [0.1, 0.7, 0.3]) == pytest.approx(0.0, abs=1e-12)

    def test_dense_mvn_ratio(self):
        u = np.array([0.2, 0.5, 0.9])
        q = stats.norm.ppf(u)
        ref = stats.multivariate_normal(cov=dense_sev("equi", 0.4, 3)).logpdf(q) - stats.norm.logpdf(q).sum()
        assert abs(cop.sev_copula_logdensity(family(rho2=0.4), u) - ref) < 1e-10

    @pytest.mark.parametrize("structure", ["equi", "ar"])
    def test_dense_mvt_ratio(self, structure, rng):
        df = 4.5
        fam = family("t", structure=structure, rho2=0.35, df=df)
        for k in (2, 4):
            u = rng.uniform(0.02, 0.98, size=k)
            q = stats.t.ppf(u, df)
            ref = stats.multivariate_t(shape=dense_sev(structure, 0.35, k), df=df).logpdf(q) - stats.t.logpdf(q, df).sum()
            assert abs(cop.sev_copula_logdensity(fam, u) - ref) < 1e-10

    def test_domain(self):
        with pytest.raises(DomainError):
            cop.sev_copula_logdensity(family(), [0.0, 0.5])


class TestConditionalMoments:
    def test_independent_frequency(self):
        m = cop.cond_moments(family(rho1=0.0), [0.3, 0.8])
        assert m.mu == pytest.approx(0.0, abs=1e-15) and m.sigma == 1.0

    def test_bivariate(self):
        m = cop.cond_moments(family(rho1=0.5, rho2=0.4), [0.5])
        assert m.mu == pytest.approx(0.0, abs=1e-15)
        assert m.sigma == pytest.approx(np.sqrt(0.75), abs=1e-15)

    @pytest.mark.parametrize("structure", ["equi", "ar"])
    def test_dense_conditional_normal(self, structure, rng):
        for k in (2, 3, 6):
            u = rng.uniform(size=k)
            q = stats.norm.ppf(u)
            S = dense_ext(structure, 0.2, 0.3, k)
            w = np.linalg.solve(S[1:, 1:], S[1:, 0])
            m = cop.cond_moments(family(structure=structure, rho1=0.2, rho2=0.3), u)
            assert abs(m.mu - w @ q) < 1e-10
            assert abs(m.sigma - np.sqrt(1 - S[0, 1:] @ w)) < 1e-10

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            cop.cond_moments(family(structure="ar", rho1=0.9, rho2=-0.9), [0.3, 0.6])


class TestConditionalFrequencyCdf:
    def test_independent_frequency(self):
        fp = mg.ZeroTruncatedPoisson(1.4)
        ns = np.arange(1, 10)
        got = cop.cond_freq_cdf(family(rho1=0.0), fp, ns, [0.2, 0.9])
        assert np.max(np.abs(got - fp.cdf(ns))) < 1e-14

    def test_below_support(self):
        assert cop.cond_freq_cdf(family(), mg.ZeroTruncatedPoisson(1.0), 0, [0.4]) == 0.0

    def test_monte_carlo(self, rng):
        # latent pair (Z0, Z1) with corr 0.3: P(N+ <= 2 | U1 = 0.7) from draws near Z1 = Phi^-1(0.7)
        fp = mg.ZeroTruncatedPoisson(1.0)
        z1 = stats.norm.ppf(0.7)
        z0 = 0.3 * z1 + np.sqrt(1 - 0.09) * rng.standard_normal(400_000)
        zn = stats.norm.ppf(fp.cdf(2))
        hits = z0 <= zn
        est, se = hits.mean(), hits.std() / np.sqrt(hits.size)
        got = cop.cond_freq_cdf(family(rho1=0.3), fp, 2, [0.7])
        assert abs(got - est) < 3 * se

    def test_t_monotone_in_n(self):
        fp = mg.ZeroTruncatedPoisson(2.0)
        c = cop.cond_freq_cdf(family("t", df=5), fp, np.arange(1, 30), [0.3, 0.6])
        assert np.all(np.diff(c) >= 0) and c[-1] == pytest.approx(1.0, abs=1e-8)


class TestJointDensity:
    def test_independence_factorization(self):
        fp, sev = mg.ZeroTruncatedPoisson(1.3), mg.GammaSeverity(2.0, 0.5)
        y = np.array([0.4, 2.2, 5.0])
        ref = fp.logpmf(3) + sev.logpdf(y).sum()
        fam = family(structure="ar", rho1=0.0, rho2=0.0)
        assert cop.joint_logdensity(fam, fp, sev, 3, y) == pytest.approx(float(ref), abs=1e-12)

    @pytest.mark.parametrize("fam", [family(rho1=0.3, rho2=0.2), family("t", rho1=0.3, rho2=0.2, df=5)])
    def test_normalization(self, fam):
        n_max = mg.ztp_support_max(1.0)
        total = sum(cond_mass_integral(fam, 1.0, 1.5, 0.8, n) for n in range(1, n_max + 1))
        assert abs(total - 1.0) < 1e-6

    def test_t_limit(self, rng):
        fp, sev = mg.ZeroTruncatedPoisson(1.1), mg.GammaSeverity(1.0, 0.6)
        g, t = family(rho1=-0.3, rho2=0.25), family("t", rho1=-0.3, rho2=0.25, df=1e6)
        for n in (1, 2, 4):
            y = rng.gamma(2.0, 0.5, size=n)
            a, b = cop.joint_logdensity(g, fp, sev, n, y), cop.joint_logdensity(t, fp, sev, n, y)
            assert abs(np.exp(a - b) - 1) < 1e-4

    def test_large_count_stays_finite(self):
        fam, fp, sev = family(rho1=0.5, rho2=0.3), mg.ZeroTruncatedPoisson(0.5), mg.GammaSeverity(1.0, 1.0)
        assert np.isfinite(cop.joint_logdensity(fam, fp, sev, 15, np.full(15, 0.01)))

    def test_inheritance(self, rng):
        # integrating y2 out of the k=2 density gives the k=1 density
        lam, xi, nu = 1.2, 1.0, 0.7
        for structure in ("equi", "ar"):
            fam = family(structure=structure, rho1=0.3, rho2=0.4)
            for _ in range(3):
                n = int(rng.integers(1, 5))
                y1 = float(rng.gamma(2.0, 0.5))
                full = cond_mass_integral(fam, lam, xi, nu, n, fixed=(y1,))
                one = np.exp(cop.joint_logdensity(fam, mg.ZeroTruncatedPoisson(lam), mg.GammaSeverity(xi, nu), n, [y1]))
                assert abs(full - one) < 1e-6

    def test_batch_matches_scalar(self, rng):
        fam = family("t", structure="ar", rho1=-0.2, rho2=0.5, df=6)
        lam, xi = rng.uniform(0.3, 2, 5), rng.uniform(0.5, 3, 5)
        Y = rng.gamma(2.0, 1.0, size=(5, 3))
        n = np.array([3, 1, 4, 2, 7])
        batch = cop.joint_logdensity_batch(fam, lam, xi, 0.9, n, Y)
        for i in range(5):
            ref = cop.joint_logdensity(fam, mg.ZeroTruncatedPoisson(lam[i]), mg.GammaSeverity(xi[i], 0.9), n[i], Y[i])
            assert batch[i] == pytest.approx(ref, abs=1e-12)

    def test_domain(self):
        fp, sev = mg.ZeroTruncatedPoisson(1.0), mg.GammaSeverity(1.0, 1.0)
        with pytest.raises(DomainError):
            cop.joint_logdensity(family(), fp, sev, 0, [1.0])
        with pytest.raises(DomainError):
            cop.joint_logdensity(family(), fp, sev, 1, [-1.0])


class TestConditionalSeverity:
    def test_independent_frequency(self):
        fam, fp, sev = family(rho1=0.0, rho2=0.4), mg.ZeroTruncatedPoisson(1.0), mg.GammaSeverity(1.0, 1.0)
        y = [0.5, 1.7]
        vals = [cop.cond_severity_logdensity(fam, fp, sev, y, n) for n in (1, 2, 6)]
        assert max(vals) - min(vals) < 1e-12

    @staticmethod
    def _integral(n, power):
        fam, fp, sev = family(rho1=-0.4, rho2=0.3), mg.ZeroTruncatedPoisson(1.5), mg.GammaSeverity(2.0, 0.5)

        def f(u):
            y = float(mg.gamma_quantile(u, sev.xi, sev.nu))
            return y**power * np.exp(cop.cond_severity_logdensity(fam, fp, sev, [y], n) - float(sev.logpdf(y)))

        return integrate.quad(f, 0, 1, epsabs=1e-12, epsrel=1e-12, limit=400)[0]

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_integrates_to_one(self, n):
        assert abs(self._integral(n, 0) - 1) < 1e-6

    def test_mean_decreases_in_n_for_negative_rho1(self):
        m = [self._integral(n, 1) for n in (1, 2, 3, 5)]
        assert all(a > b for a, b in zip(m, m[1:]))
