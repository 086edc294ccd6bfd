"""The dependent collective risk model for one policyholder.

``N = R * N+`` with ``R ~ Bernoulli(p)`` independent of ``(N+, Y_1, ...)``,
whose joint law is one of the copula models in :mod:`copula`. The observed
density of a record ``(n, y_1..y_n)`` is ``1 - p`` for ``n = 0`` and
``p * h(n, y)`` otherwise.

Moments of the aggregate ``S`` and average severity ``M = S / N`` only need
the ``k = 1`` joint density; the integrals against it are done in the copula
scale ``u = F2(y)`` with adaptive quadrature.
"""

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy import integrate

from . import copula as cop
from . import margins
from .corrmat import Structure
from .errors import DomainError, NonConvergence


@dataclass(frozen=True)
class CRMParams:
    """Full parameter set of the dependent collective risk model."""

    p: float
    freq_pos: margins.ZeroTruncatedPoisson
    sev: margins.GammaSeverity
    copula: cop.CopulaFamily

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("hurdle probability must lie in [0, 1]")

    @classmethod
    def from_values(cls, *, lam, xi, nu, rho1, rho2, structure="equi", family="gaussian", df=None, p=None):
        """Convenience constructor; ``p=None`` uses the shared-lambda hurdle ``p = 1 - exp(-lam)``."""
        from .corrmat import CorrStructure

        if p is None:
            p = float(-np.expm1(-lam))
        fam = cop.CopulaFamily(family, CorrStructure(structure, rho1, rho2), df)
        return cls(p=p, freq_pos=margins.ZeroTruncatedPoisson(lam), sev=margins.GammaSeverity(xi, nu), copula=fam)

    def replace_copula(self, rho1=None, rho2=None):
        from .corrmat import CorrStructure

        s = self.copula.structure
        new = CorrStructure(s.kind, s.rho1 if rho1 is None else rho1, s.rho2 if rho2 is None else rho2)
        return CRMParams(self.p, self.freq_pos, self.sev, cop.CopulaFamily(self.copula.kind, new, self.copula.df))


@dataclass
class PolicyRecord:
    id: object
    n: int
    y: np.ndarray = field(default_factory=lambda: np.empty(0))
    covariates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.n = int(self.n)
        if self.n < 0:
            raise DomainError("claim count must be non-negative")
        if self.y.size != self.n:
            raise DomainError(f"policy {self.id}: n={self.n} but {self.y.size} severities")
        if np.any(~(self.y > 0.0)):
            raise DomainError(f"policy {self.id}: severities must be positive")

    @property
    def aggregate(self):
        return float(self.y.sum()) if self.n else 0.0


@dataclass(frozen=True)
class PortfolioMoments:
    ES: float
    CovNS: float
    CovNM_pos: float
    EN: float = float("nan")
    EM_pos: float = float("nan")


def observed_logdensity(params, rec):
    """Log of the observed-data density of one policy record."""
    if rec.n == 0:
        return float(np.log1p(-params.p)) if params.p < 1 else -np.inf
    if params.p <= 0:
        return -np.inf
    return float(np.log(params.p)) + cop.joint_logdensity(params.copula, params.freq_pos, params.sev, rec.n, rec.y)


# --- moments ----------------------------------------------------------------------


def _k1_mass(params, ns, u):
    """Matrix of conditional masses ``P(N+ = n | U1 = u)`` for k = 1."""
    fam = params.copula
    u = np.atleast_1d(np.asarray(u, dtype=float))
    q = cop.scores(fam, u)[:, None]
    _, mu, scale = cop._block(fam, q)
    return np.exp(cop._log_cond_mass(fam, 1, ns[None, :], params.freq_pos.lam, mu[:, None], scale[:, None]))


def _quad_vec(f, tol, what):
    res, err = integrate.quad_vec(f, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=400)
    target = np.linalg.norm(np.maximum(tol, tol * np.abs(res)))
    if not np.all(np.isfinite(res)) or err > 10.0 * max(target, tol):
        raise NonConvergence(f"quadrature for {what} did not reach tolerance (err={err:.3g})")
    return res


def severity_mass_integrals(params, tol=1e-10):
    """``I_n = int y h(n, y) dy`` for n = 1..n_max (k = 1), with n_max truncated."""
    n_max = params.freq_pos.support_max()
    ns = np.arange(1, n_max + 1)
    sev = params.sev

    def f(u):
        y = margins.gamma_quantile(u, sev.xi, sev.nu)
        return y * _k1_mass(params, ns, u)[0]

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return ns, _quad_vec(f, tol, "severity integrals")


def moments(params, tol=1e-10):
    """E[S], Cov(N, S) and Cov(N, M | N > 0) by quadrature.

    ``E[M | N > 0]`` is ``sum_n I_n`` (the mean of a single severity under the
    positive part), which is the second factor of the covariance.
    """
    ns, I = severity_mass_integrals(params, tol)
    p = params.p
    f_pos = params.freq_pos.pmf(ns)
    EN_pos = float(np.sum(ns * f_pos))
    ES = p * float(np.sum(ns * I))
    ENS = p * float(np.sum(ns * ns * I))
    EN = p * EN_pos
    ES_pos = float(np.sum(ns * I))
    EM_pos = float(np.sum(I))
    return PortfolioMoments(
        ES=ES,
        CovNS=ENS - EN * ES,
        CovNM_pos=ES_pos - EN_pos * EM_pos,
        EN=EN,
        EM_pos=EM_pos,
    )


# --- Spearman's rho -----------------------------------------------------------------


def spearman_freq_sev(params, tol=1e-10):
    """Spearman's rho between N+ and one severity.

    ``12 * sum_n f1+(n) * int_0^1 (1 - w) [P(N+ <= n | w) - F1+(n)] dw``,
    which is the discrete-margin definition after integrating the copula in
    its second argument by parts.
    """
    fam = params.copula
    fp = params.freq_pos
    n_max = fp.support_max()
    ns = np.arange(1, n_max + 1)
    F = fp.cdf(ns)
    f = fp.pmf(ns)

    def g(w):
        c = cop.cond_freq_cdf(fam, fp, ns, np.array([w]))
        return (1.0 - w) * (np.asarray(c) - F)

    with np.errstate(divide="ignore", invalid="ignore"):
        inner = _quad_vec(g, tol, "Spearman's rho")
    return float(12.0 * np.sum(f * inner))


def spearman_sev_sev(params, lag=1):
    """Spearman's rho between two severities ``lag`` claims apart (Gaussian copula)."""
    if lag < 1:
        raise DomainError("lag must be a positive integer")
    fam = params.copula
    if fam.is_t:
        raise DomainError("closed-form severity rank correlation is only available for the Gaussian copula")
    r = fam.rho2 if fam.structure.kind is Structure.EQUI else fam.rho2**lag
    return float(6.0 / np.pi * np.arcsin(r / 2.0))
