"""Monte Carlo risk measures of aggregate severity.

Per risk group the aggregate ``S = Y_1 + ... + Y_N`` is simulated from the
fitted model; ``E[S]`` is the sample mean and ``VaR_alpha`` the
``ceil(alpha * draws)``-th order statistic. Draws are independent, so the
standard error of ``E[S]`` is the usual sd / sqrt(draws); the ``VaR`` one
uses non-overlapping batch means in draw order.
"""

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import DomainError
from ..sampling import BLOCK_SIZE, sample_params, sample_portfolio

N_BATCHES = 20


def var_order_stat(x, alpha):
    """Empirical ``alpha``-quantile as the ``ceil(alpha * n)``-th order statistic."""
    x = np.sort(np.asarray(x, dtype=float))
    if x.size == 0:
        raise DomainError("need at least one draw")
    r = min(max(math.ceil(alpha * x.size), 1), x.size)
    return float(x[r - 1])


def batch_means_se(x, stat, n_batches=N_BATCHES):
    x = np.asarray(x, dtype=float)
    m = x.size // n_batches
    if m < 1:
        return float("nan")
    vals = np.array([stat(x[b * m : (b + 1) * m]) for b in range(n_batches)])
    return float(vals.std(ddof=1) / math.sqrt(n_batches))


@dataclass(frozen=True)
class GroupRisk:
    group: str
    ES: float
    VaR: float
    ES_se: float
    VaR_se: float


@dataclass
class RiskReport:
    alpha: float
    draws: int
    rows: List[GroupRisk] = field(default_factory=list)

    def as_rows(self):
        return [
            {"group": r.group, "ES": r.ES, "VaR": r.VaR, "ES_se": r.ES_se, "VaR_se": r.VaR_se,
             "alpha": self.alpha, "draws": self.draws}
            for r in self.rows
        ]


def risk_measures(groups: Sequence[Tuple[str, object]], alpha=0.995, draws=5000, seed=0, threads=1):
    """E[S] and VaR_alpha per risk group.

    ``groups`` is a sequence of ``(label, CRMParams)``. Group ``g`` uses its
    own random stream, so adding a group leaves the others unchanged.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if draws < 1000:
        raise DomainError("use at least 1000 draws")
    report = RiskReport(alpha=float(alpha), draws=int(draws))
    for g, (label, params) in enumerate(groups):
        s = sample_params(params, draws, seed, tag=g, threads=threads).aggregate
        report.rows.append(GroupRisk(
            group=str(label),
            ES=float(s.mean()),
            VaR=var_order_stat(s, alpha),
            ES_se=float(s.std(ddof=1) / math.sqrt(draws)),
            VaR_se=batch_means_se(s, lambda b: var_order_stat(b, alpha)),
        ))
    return report


@dataclass
class PredictiveSample:
    total: np.ndarray
    mean: float
    lower: float
    upper: float
    mean_se: float

    @property
    def variance(self):
        return float(self.total.var(ddof=1))


def portfolio_predictive(p, lam, xi, nu, fam, draws=5000, seed=0, threads=1):
    """Draws of the total loss ``sum_i S_i`` over a portfolio.

    ``p``, ``lam``, ``xi`` are per-policy arrays; the severity dispersion and
    copula are common to all policies. Returns the sample with its mean and
    central 95% band.
    """
    p, lam, xi = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (p, lam, xi))
    size = p.size
    if size == 0:
        raise DomainError("portfolio is empty")
    if not (lam.size == xi.size == size):
        raise DomainError("per-policy parameter arrays differ in length")
    # draws per chunk depends only on the portfolio size, never on threads
    chunk = max(1, (16 * BLOCK_SIZE) // size)
    total = np.empty(draws)
    for c, start in enumerate(range(0, draws, chunk)):
        d = min(chunk, draws - start)
        sp = sample_portfolio(np.tile(p, d), np.tile(lam, d), np.tile(xi, d), nu, fam, d * size,
                              seed, tag=c, threads=threads)
        total[start : start + d] = sp.aggregate.reshape(d, size).sum(axis=1)
    return PredictiveSample(
        total=total,
        mean=float(total.mean()),
        lower=float(np.quantile(total, 0.025)),
        upper=float(np.quantile(total, 0.975)),
        mean_se=float(total.std(ddof=1) / math.sqrt(draws)),
    )
