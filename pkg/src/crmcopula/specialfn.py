"""Scalar special functions and univariate laws used throughout the package.

All functions are vectorised over numpy arrays and pure. The heavy lifting is
delegated to the Cephes-derived kernels in :mod:`scipy.special`; this module
adds the domain checks, tail-stable helpers and the log-space difference of
CDF values that the copula densities need.
"""

import numpy as np
from scipy import special as sc

from .errors import DomainError

LOG_2PI = np.log(2.0 * np.pi)


def _check_prob_open(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise DomainError("probability must lie strictly inside (0, 1)")
    return p


def _check_df(df):
    df = np.asarray(df, dtype=float)
    if np.any(~(df > 0.0)):
        raise DomainError("degrees of freedom must be positive")
    return df


def norm_cdf(x):
    """Standard normal CDF; saturates to 0/1 in the tails."""
    return sc.ndtr(x)


def norm_sf(x):
    return sc.ndtr(np.negative(x))


def norm_logcdf(x):
    return sc.log_ndtr(x)


def norm_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + x * x)


def norm_quantile(p):
    """Inverse of :func:`norm_cdf` on the open unit interval."""
    return sc.ndtri(_check_prob_open(p))


def norm_quantile_from_tails(cdf, sf):
    """Normal score of a probability given both its lower and upper tail.

    Uses whichever tail is smaller so scores of probabilities near one keep
    full relative precision. ``cdf = 0`` maps to ``-inf`` and ``sf = 0`` to
    ``+inf`` without raising.
    """
    cdf = np.asarray(cdf, dtype=float)
    sf = np.asarray(sf, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(cdf < 0.5, sc.ndtri(cdf), -sc.ndtri(sf))


def t_cdf(x, df):
    """Student-t CDF for real (non-integer allowed) degrees of freedom."""
    return sc.stdtr(_check_df(df), x)


def t_quantile(p, df):
    p = _check_prob_open(p)
    df = _check_df(df)
    x = sc.stdtrit(df, p)
    # one Newton polish, taken from the smaller tail
    lower = p < 0.5
    resid = np.where(lower, sc.stdtr(df, x) - p, (1.0 - p) - sc.stdtr(df, -x))
    dens = np.exp(t_logpdf(x, df))
    step = np.where(dens > 0, resid / np.where(dens > 0, dens, 1.0), 0.0)
    return np.where(np.isfinite(step), x - step, x)


def t_quantile_from_tails(cdf, sf, df):
    """t-analogue of :func:`norm_quantile_from_tails`."""
    cdf = np.asarray(cdf, dtype=float)
    sf = np.asarray(sf, dtype=float)
    df = _check_df(df)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = sc.stdtrit(df, np.where(cdf < 0.5, cdf, 0.25))
        hi = -sc.stdtrit(df, np.where(cdf < 0.5, 0.25, sf))
        out = np.where(cdf < 0.5, lo, hi)
    out = np.where(cdf <= 0.0, -np.inf, out)
    return np.where(sf <= 0.0, np.inf, out)


def t_logpdf(x, df):
    x = np.asarray(x, dtype=float)
    df = np.asarray(df, dtype=float)
    return (
        sc.gammaln(0.5 * (df + 1.0))
        - sc.gammaln(0.5 * df)
        - 0.5 * np.log(np.pi * df)
        - 0.5 * (df + 1.0) * np.log1p(x * x / df)
    )


def log_gamma_fn(x):
    """log Gamma(x) for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0.0)):
        raise DomainError("log_gamma_fn requires x > 0")
    return sc.gammaln(x)


def _log1mexp(a):
    # log(1 - exp(a)) for a <= 0, accurate on both sides of -log 2
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > -np.log(2.0), np.log(-np.expm1(a)), np.log1p(-np.exp(a)))


def log_norm_cdf_diff(hi, lo):
    """``log(Phi(hi) - Phi(lo))`` for ``hi >= lo``, stable in both tails.

    When both arguments are positive the difference is taken between upper
    tails, otherwise between lower tails, each in log space; ``lo = -inf``
    gives ``log Phi(hi)``. Returns ``-inf`` when the two coincide.
    """
    hi = np.asarray(hi, dtype=float)
    lo = np.asarray(lo, dtype=float)
    upper = lo > 0.0
    # lower-tail branch: log Phi(hi) + log(1 - Phi(lo)/Phi(hi))
    la = sc.log_ndtr(np.where(upper, 0.0, hi))
    lb = sc.log_ndtr(np.where(upper, 0.0, lo))
    with np.errstate(invalid="ignore"):
        low_branch = la + _log1mexp(np.minimum(lb - la, 0.0))
    # upper-tail branch: log Phi(-lo) + log(1 - Phi(-hi)/Phi(-lo))
    ua = sc.log_ndtr(np.where(upper, -lo, 0.0))
    ub = sc.log_ndtr(np.where(upper, -hi, 0.0))
    with np.errstate(invalid="ignore"):
        up_branch = ua + _log1mexp(np.minimum(ub - ua, 0.0))
    out = np.where(upper, up_branch, low_branch)
    return np.where(hi <= lo, -np.inf, out)


def log_t_cdf_diff(hi, lo, df):
    """``log(T_df(hi) - T_df(lo))`` using the smaller tails."""
    hi = np.asarray(hi, dtype=float)
    lo = np.asarray(lo, dtype=float)
    upper = lo > 0.0
    diff = np.where(
        upper,
        sc.stdtr(df, -lo) - sc.stdtr(df, -hi),
        sc.stdtr(df, hi) - sc.stdtr(df, lo),
    )
    with np.errstate(divide="ignore"):
        out = np.log(np.where(diff > 0.0, diff, 0.0))
    return np.where(hi <= lo, -np.inf, out)
