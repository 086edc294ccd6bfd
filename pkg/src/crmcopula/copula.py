"""Gaussian and t copulas linking a positive claim count to its severities.

The latent vector is ``(Z0, Z1, ..., Zk)`` with correlation (Gaussian) or
scale (t) matrix given by the extended structure of :mod:`corrmat`. ``Z0``
drives the zero-truncated claim count through ``F1+``, ``Zj`` drive the
severities through ``F2``. Because the severity block is a margin of every
larger block, any ``k`` can be evaluated for a given count ``n``.

Given severity scores ``q`` the latent frequency score is normal (Gaussian
case) with

    mu    = rho1 * 1' S^-1 q
    sigma = sqrt(1 - rho1^2 * 1' S^-1 1)

and Student-t with ``df + k`` degrees of freedom (t case) with the same
location and scale inflated by ``sqrt((df + q' S^-1 q) / (df + k))``. The
joint density of ``(n, y)`` is the severity-block density times the
conditional mass ``P(N+ <= n | y) - P(N+ <= n-1 | y)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special as sc

from . import margins, specialfn
from .corrmat import PIVOT_TOL, CorrStructure, det_sev, one_inv_one, quad_forms
from .errors import DomainError, NonPositiveMass, NotPositiveDefinite

GAUSSIAN = "gaussian"
STUDENT_T = "t"


@dataclass(frozen=True)
class CopulaFamily:
    kind: str
    structure: CorrStructure
    df: Optional[float] = None

    def __post_init__(self):
        kind = str(self.kind).strip().lower()
        kind = {"normal": GAUSSIAN, "gauss": GAUSSIAN, "student": STUDENT_T, "student_t": STUDENT_T}.get(kind, kind)
        if kind not in (GAUSSIAN, STUDENT_T):
            raise DomainError(f"unknown copula family {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == STUDENT_T:
            if self.df is None or not float(self.df) > 0:
                raise DomainError("t copula needs df > 0")
            object.__setattr__(self, "df", float(self.df))
        else:
            object.__setattr__(self, "df", None)

    @property
    def is_t(self):
        return self.kind == STUDENT_T

    @property
    def rho1(self):
        return self.structure.rho1

    @property
    def rho2(self):
        return self.structure.rho2


@dataclass(frozen=True)
class CondMoments:
    mu: np.ndarray
    sigma: np.ndarray


# --- scores ---------------------------------------------------------------------


def scores(fam, u):
    """Latent scores ``Phi^{-1}(u)`` or ``T_df^{-1}(u)``."""
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0.0) | ~(u < 1.0)):
        raise DomainError("copula arguments must lie strictly inside (0, 1)")
    if fam.is_t:
        return specialfn.t_quantile(u, fam.df)
    return specialfn.norm_quantile(u)


def scores_from_tails(fam, cdf, sf):
    if fam.is_t:
        return specialfn.t_quantile_from_tails(cdf, sf, fam.df)
    return specialfn.norm_quantile_from_tails(cdf, sf)


def frequency_scores(fam, n, lam):
    """Latent threshold for ``N+ <= n``; ``-inf`` below the support."""
    if fam.is_t:
        return margins.ztp_t_score(n, lam, fam.df)
    return margins.ztp_normal_score(n, lam)


def severity_scores(fam, y, xi, nu):
    return scores_from_tails(fam, margins.gamma_cdf(y, xi, nu), margins.gamma_sf(y, xi, nu))


# --- core block computation ---------------------------------------------------------


def _cond_sigma(s, k):
    var = 1.0 - s.rho1**2 * one_inv_one(s, k)
    if not var > PIVOT_TOL:
        raise NotPositiveDefinite(
            f"extended correlation matrix of order {k} is not positive definite "
            f"(rho1={s.rho1}, rho2={s.rho2}, kind={s.kind.value})"
        )
    return np.sqrt(var)


def _block(fam, q):
    """Log copula density of the severity block and conditional law of Z0.

    ``q`` has shape ``(m, k)``; returns ``(logc, mu, scale)`` each ``(m,)``.
    """
    k = q.shape[-1]
    s = fam.structure
    one_q, _, q_q = quad_forms(s, k, q)
    logdet = np.log(det_sev(s, k))
    mu = s.rho1 * one_q
    sigma = _cond_sigma(s, k)
    if fam.is_t:
        df = fam.df
        logc = (
            sc.gammaln(0.5 * (df + k))
            - sc.gammaln(0.5 * df)
            - 0.5 * k * np.log(np.pi * df)
            - 0.5 * logdet
            - 0.5 * (df + k) * np.log1p(q_q / df)
        ) - specialfn.t_logpdf(q, df).sum(axis=-1)
        scale = sigma * np.sqrt((df + q_q) / (df + k))
    else:
        logc = -0.5 * logdet - 0.5 * (q_q - np.einsum("...i,...i->...", q, q))
        scale = np.full(q.shape[:-1], sigma)
    return logc, mu, scale


def _as_matrix(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def sev_copula_logdensity(fam, u):
    """Log density of the k-dimensional severity-block copula at ``u``.

    ``u`` has shape ``(k,)`` or ``(m, k)``.
    """
    U, single = _as_matrix(u)
    logc, _, _ = _block(fam, scores(fam, U))
    return logc[0] if single else logc


def cond_moments(fam, u):
    """Location and scale of the latent frequency score given severities."""
    U, single = _as_matrix(u)
    _, mu, scale = _block(fam, scores(fam, U))
    if single:
        return CondMoments(mu=float(mu[0]), sigma=float(scale[0]))
    return CondMoments(mu=mu, sigma=scale)


def _cond_cdf_from_scores(fam, k, zn, mu, scale):
    x = (zn - mu) / scale
    if fam.is_t:
        return sc.stdtr(fam.df + k, x)
    return sc.ndtr(x)


def cond_freq_cdf(fam, freq_pos, n, u):
    """``P(N+ <= n | severities with copula scale u)``.

    ``freq_pos`` is a :class:`margins.ZeroTruncatedPoisson`.
    """
    U, single = _as_matrix(u)
    k = U.shape[-1]
    _, mu, scale = _block(fam, scores(fam, U))
    if single:
        mu, scale = mu[0], scale[0]
    zn = frequency_scores(fam, np.asarray(n), freq_pos.lam)
    with np.errstate(invalid="ignore"):
        out = _cond_cdf_from_scores(fam, k, zn, mu, scale)
    out = np.where(np.isneginf(zn), 0.0, np.where(np.isposinf(zn), 1.0, out))
    return float(out) if out.ndim == 0 else out


def _log_cond_mass(fam, k, n, lam, mu, scale):
    z_hi = frequency_scores(fam, n, lam)
    z_lo = frequency_scores(fam, n - 1, lam)
    with np.errstate(invalid="ignore"):
        hi = (z_hi - mu) / scale
        lo = (z_lo - mu) / scale
    if fam.is_t:
        return specialfn.log_t_cdf_diff(hi, lo, fam.df + k)
    return specialfn.log_norm_cdf_diff(hi, lo)


def joint_logdensity_batch(fam, lam, xi, nu, n, Y, raise_on_zero=True):
    """Vectorised log joint density of ``(N+, Y^[k])``.

    Parameters
    ----------
    fam : CopulaFamily
    lam, xi : array_like, shape (m,)
        Per-row Poisson mean (before truncation) and gamma mean.
    nu : float
        Gamma dispersion.
    n : array_like of int, shape (m,)
        Positive claim counts.
    Y : ndarray, shape (m, k)
        Severities; ``k`` need not equal ``n``.
    raise_on_zero : bool
        Raise :class:`NonPositiveMass` when the conditional mass underflows
        instead of returning ``-inf``.
    """
    Y = np.asarray(Y, dtype=float)
    m, k = Y.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (m,))
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (m,))
    n = np.broadcast_to(np.asarray(n), (m,))
    xi_col = xi[:, None]
    log_f2 = margins.gamma_logpdf(Y, xi_col, nu).sum(axis=1)
    q = severity_scores(fam, Y, xi_col, nu)
    logc, mu, scale = _block(fam, q)
    lmass = _log_cond_mass(fam, k, n, lam, mu, scale)
    out = log_f2 + logc + lmass
    if raise_on_zero and not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise NonPositiveMass(
            f"joint density is not positive/finite at row {bad} (n={int(n[bad])})", policy_id=bad
        )
    return out


def joint_logdensity(fam, freq_pos, sev, n, y):
    """Log joint density ``h(n, y_1..y_k)`` of one positive count and k severities."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.ndim != 1 or y.size < 1:
        raise DomainError("need a 1-d vector of at least one severity")
    if np.any(~(y > 0.0)):
        raise DomainError("severities must be positive")
    if int(n) < 1:
        raise DomainError("claim count must be >= 1")
    return float(
        joint_logdensity_batch(fam, freq_pos.lam, sev.xi, sev.nu, np.array([int(n)]), y[None, :])[0]
    )


def cond_severity_logdensity(fam, freq_pos, sev, y, n):
    """Log density of the severities given ``N+ = n``."""
    return joint_logdensity(fam, freq_pos, sev, n, y) - float(freq_pos.logpmf(int(n)))
