import numpy as np
import pytest
from scipy import integrate
from scipy import special as sc

from crmcopula import copula as cop
from crmcopula import margins as mg

GRID = np.round(np.arange(-0.9, 0.91, 0.1), 10)


def dense_sev(kind, rho2, k):
    """k x k severity block built entrywise (independent of the library)."""
    i = np.arange(k)
    if kind == "equi":
        m = np.full((k, k), rho2)
        np.fill_diagonal(m, 1.0)
        return m
    return rho2 ** np.abs(i[:, None] - i[None, :]).astype(float)


def dense_ext(kind, rho1, rho2, k):
    m = np.eye(k + 1)
    m[1:, 1:] = dense_sev(kind, rho2, k)
    m[0, 1:] = m[1:, 0] = rho1
    return m


def valid_pairs(kind):
    for r1 in GRID:
        for r2 in GRID:
            if kind == "equi" and not r1**2 < r2:
                continue
            yield float(r1), float(r2)


def cond_mass_integral(fam, lam, xi, nu, n, fixed=(), tol=1e-12):
    """Integral of the joint density over the last severity, others fixed.

    Done in the latent score scale of the last severity, where the integrand
    is smooth (the t copula density is singular at the corners of the unit cube).
    """
    fp, sev = mg.ZeroTruncatedPoisson(lam), mg.GammaSeverity(xi, nu)
    lim = 1e4 if fam.is_t else 37.0
    if fam.is_t:
        df = fam.df
        cdf, sf = (lambda z: sc.stdtr(df, z)), (lambda z: sc.stdtr(df, -z))
        c0 = sc.gammaln((df + 1) / 2) - sc.gammaln(df / 2) - 0.5 * np.log(df * np.pi)
        logpdf = lambda z: c0 - (df + 1) / 2 * np.log1p(z * z / df)
    else:
        cdf, sf = sc.ndtr, (lambda z: sc.ndtr(-z))
        logpdf = lambda z: -0.5 * z * z - 0.5 * np.log(2 * np.pi)

    def f(z):
        y_last = float(mg.gamma_quantile_from_tails(cdf(z), sf(z), xi, nu))
        y = np.array([*fixed, y_last])
        return np.exp(cop.joint_logdensity(fam, fp, sev, n, y) - float(sev.logpdf(y_last)) + logpdf(z))

    return sum(integrate.quad(f, a, b, epsabs=0.1 * tol, epsrel=tol, limit=400)[0]
               for a, b in [(-lim, -10), (-10, 0), (0, 10), (10, lim)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
