"""Marginal frequency and severity families.

Frequency: Poisson and its zero-truncated positive part, combined through a
hurdle (Bernoulli) indicator. Severity: gamma in mean/dispersion form,
``E[Y] = xi`` and ``Var[Y] = nu * xi**2`` (shape ``1/nu``, scale ``xi*nu``).

Module-level functions are vectorised in their parameters so the likelihood
can evaluate a whole portfolio at once; the small dataclasses wrap them for
single-policy use.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from . import specialfn
from .errors import DegenerateFrequency, DomainError

TRUNC_MASS = 1e-12
TRUNC_CAP = 10_000


def _check_lam(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0.0)):
        raise DomainError("Poisson mean must be positive")
    return lam


# --- Poisson ---------------------------------------------------------------


def poisson_logpmf(n, lam):
    n = np.asarray(n)
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = sc.xlogy(n, lam) - lam - sc.gammaln(n + 1.0)
    return np.where(n >= 0, out, -np.inf)


def poisson_pmf(n, lam):
    return np.exp(poisson_logpmf(n, _check_lam(lam)))


def poisson_cdf(n, lam):
    lam = _check_lam(lam)
    n = np.asarray(n)
    return np.where(n >= 0, sc.pdtr(np.maximum(n, 0), lam), 0.0)


def poisson_sf(n, lam):
    lam = _check_lam(lam)
    n = np.asarray(n)
    return np.where(n >= 0, sc.pdtrc(np.maximum(n, 0), lam), 1.0)


# --- zero-truncated Poisson --------------------------------------------------


def _pos_mass(lam):
    # P(N > 0) = 1 - exp(-lam), without cancellation for small lam
    return -np.expm1(-lam)


def ztp_logpmf(n, lam):
    n = np.asarray(n)
    lam = np.asarray(lam, dtype=float)
    out = poisson_logpmf(n, lam) - np.log(_pos_mass(lam))
    return np.where(n >= 1, out, -np.inf)


def ztp_pmf(n, lam):
    return np.exp(ztp_logpmf(n, _check_lam(lam)))


def ztp_sf(n, lam):
    """P(N+ > n) = P(N > n) / P(N > 0)."""
    lam = np.asarray(lam, dtype=float)
    n = np.asarray(n)
    sf = sc.pdtrc(np.maximum(n, 0), lam) / _pos_mass(lam)
    return np.where(n >= 1, sf, 1.0)


def ztp_tails(n, lam):
    """``(P(N+ <= n), P(N+ > n))`` in one pass, each from its accurate side."""
    lam = np.asarray(lam, dtype=float)
    n = np.asarray(n)
    nn = np.maximum(n, 1)
    pos = _pos_mass(lam)
    sf = sc.pdtrc(nn, lam) / pos
    # F(n) - F(0) summed directly when it is small, complement otherwise
    head = (sc.pdtr(nn, lam) - np.exp(-lam)) / pos
    cdf = np.clip(np.where(head < 0.5, head, 1.0 - sf), 0.0, 1.0)
    low = n < 1
    return np.where(low, 0.0, cdf), np.where(low, 1.0, sf)


def ztp_cdf(n, lam):
    """P(N+ <= n) = (F(n) - F(0)) / (1 - F(0)); zero for n < 1."""
    return ztp_tails(n, lam)[0]


def ztp_normal_score(n, lam):
    """``Phi^{-1}(F1+(n))`` computed from the smaller tail; -inf for n < 1."""
    return specialfn.norm_quantile_from_tails(*ztp_tails(n, lam))


def ztp_t_score(n, lam, df):
    return specialfn.t_quantile_from_tails(*ztp_tails(n, lam), df)


def ztp_support_max(lam, mass=TRUNC_MASS, cap=TRUNC_CAP):
    """Smallest n with ``F1+(n) > 1 - mass``, capped at ``cap``."""
    lam = float(lam)
    n = max(int(lam), 1)
    while n > 1 and ztp_sf(n - 1, lam) < mass:
        n -= 1
    while ztp_sf(n, lam) >= mass and n < cap:
        n += 1
    return n


# --- gamma severity -----------------------------------------------------------


def _gamma_args(xi, nu):
    xi = np.asarray(xi, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(~(xi > 0.0)) or np.any(~(nu > 0.0)):
        raise DomainError("gamma mean and dispersion must be positive")
    return 1.0 / nu, xi * nu


def gamma_logpdf(y, xi, nu):
    shape, scale = _gamma_args(xi, nu)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = sc.xlogy(shape - 1.0, y) - y / scale - sc.gammaln(shape) - shape * np.log(scale)
    return np.where(y > 0.0, out, -np.inf)


def gamma_pdf(y, xi, nu):
    return np.exp(gamma_logpdf(y, xi, nu))


def gamma_cdf(y, xi, nu):
    shape, scale = _gamma_args(xi, nu)
    y = np.asarray(y, dtype=float)
    return sc.gammainc(shape, np.maximum(y, 0.0) / scale)


def gamma_sf(y, xi, nu):
    shape, scale = _gamma_args(xi, nu)
    y = np.asarray(y, dtype=float)
    return sc.gammaincc(shape, np.maximum(y, 0.0) / scale)


def gamma_quantile(p, xi, nu):
    shape, scale = _gamma_args(xi, nu)
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise DomainError("gamma_quantile requires p in (0, 1)")
    return sc.gammaincinv(shape, p) * scale


def gamma_quantile_from_tails(cdf, sf, xi, nu):
    """Quantile from whichever tail probability is smaller."""
    shape, scale = _gamma_args(xi, nu)
    cdf = np.asarray(cdf, dtype=float)
    sf = np.asarray(sf, dtype=float)
    return np.where(cdf < 0.5, sc.gammaincinv(shape, cdf), sc.gammainccinv(shape, sf)) * scale


# --- dataclass wrappers --------------------------------------------------------


@dataclass(frozen=True)
class Poisson:
    """Poisson frequency with mean ``lam``.

    The frequency nuisance parameter has no role for this family and is not
    represented.
    """

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("Poisson mean must be positive")

    def pmf(self, n):
        return poisson_pmf(n, self.lam)

    def cdf(self, n):
        return poisson_cdf(n, self.lam)


@dataclass(frozen=True)
class ZeroTruncatedPoisson:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("Poisson mean must be positive")

    def pmf(self, n):
        return ztp_pmf(n, self.lam)

    def logpmf(self, n):
        return ztp_logpmf(n, self.lam)

    def cdf(self, n):
        return ztp_cdf(n, self.lam)

    def sf(self, n):
        return ztp_sf(n, self.lam)

    def mean(self):
        return self.lam / _pos_mass(self.lam)

    def support_max(self):
        return ztp_support_max(self.lam)


@dataclass(frozen=True)
class HurdleFrequency:
    """N = R * N+ with R ~ Bernoulli(p) independent of N+."""

    p: float
    positive_part: ZeroTruncatedPoisson

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("hurdle probability must lie in [0, 1]")

    def pmf(self, n):
        n = np.asarray(n)
        return np.where(n == 0, 1.0 - self.p, self.p * self.positive_part.pmf(n))

    def cdf(self, n):
        n = np.asarray(n)
        return np.where(n < 0, 0.0, 1.0 - self.p + self.p * self.positive_part.cdf(n))


def hurdle_from_base(base):
    """Hurdle decomposition that reproduces the base law exactly.

    ``p = 1 - F1(0)`` and ``F1+(n) = (F1(n) - F1(0)) / (1 - F1(0))``.
    """
    if not isinstance(base, Poisson):
        raise DomainError(f"unsupported base frequency family {type(base).__name__}")
    p = float(_pos_mass(base.lam))
    if p <= 1e-15:
        raise DegenerateFrequency("base frequency puts all mass at zero")
    return HurdleFrequency(p=p, positive_part=ZeroTruncatedPoisson(base.lam))


@dataclass(frozen=True)
class GammaSeverity:
    xi: float
    nu: float

    def __post_init__(self):
        if not (self.xi > 0 and self.nu > 0):
            raise DomainError("gamma mean and dispersion must be positive")

    @property
    def shape(self):
        return 1.0 / self.nu

    @property
    def scale(self):
        return self.xi * self.nu

    def logpdf(self, y):
        return gamma_logpdf(y, self.xi, self.nu)

    def pdf(self, y):
        return gamma_pdf(y, self.xi, self.nu)

    def cdf(self, y):
        return gamma_cdf(y, self.xi, self.nu)

    def sf(self, y):
        return gamma_sf(y, self.xi, self.nu)

    def quantile(self, p):
        return gamma_quantile(p, self.xi, self.nu)
