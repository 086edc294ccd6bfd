"""Exact simulation from the dependent collective risk model.

Randomness comes from counter-based Philox streams keyed by
``(seed, stream tag, block index)``. Policies are processed in fixed blocks of
``BLOCK_SIZE``, so a sample depends only on the seed and the policy order,
never on how many workers produced it.

Per policy the draw is: ``R ~ Bernoulli(p)``; a latent frequency score
``Z0`` (normal, or normal over ``sqrt(W/df)`` for the t copula); the claim
count ``n = min{n >= 1 : F1+(n) >= Phi(Z0)}`` taken in the score scale; then
``n`` latent severity scores from their conditional law given ``Z0`` with
the same mixing variable ``W``, mapped through ``F2^{-1}``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from . import copula as cop
from . import margins
from .corrmat import conditional_chol
from .model import PolicyRecord

BLOCK_SIZE = 4096
SCAN_CAP = margins.TRUNC_CAP


def stream(seed, *key):
    """Philox generator for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SampledPortfolio:
    """Flat claims layout: policy ``i`` owns ``y[offsets[i]:offsets[i] + n[i]]``."""

    n: np.ndarray
    y: np.ndarray
    offsets: np.ndarray

    @property
    def aggregate(self):
        idx = np.repeat(np.arange(self.n.size), self.n)
        return np.bincount(idx, weights=self.y, minlength=self.n.size)

    def claims_of(self, i):
        o = self.offsets[i]
        return self.y[o : o + self.n[i]]

    def records(self, ids=None, covariates=None):
        out = []
        for i in range(self.n.size):
            cov = {} if covariates is None else {k: float(v[i]) for k, v in covariates.items()}
            out.append(PolicyRecord(i if ids is None else ids[i], int(self.n[i]), self.claims_of(i).copy(), cov))
        return out


def _count_from_score(fam, z0, lam):
    """Smallest n >= 1 whose frequency score reaches z0 (upward scan)."""
    n = np.ones(z0.shape, dtype=np.int64)
    active = np.flatnonzero(cop.frequency_scores(fam, 1, lam) < z0)
    while active.size:
        n[active] += 1
        still = cop.frequency_scores(fam, n[active], lam[active]) < z0[active]
        active = active[still & (n[active] < SCAN_CAP)]
    return n


def _severities(fam, sev_xi, nu, g0, mix, counts, eps, offsets):
    """Fill latent severity scores group-by-group over claim counts."""
    y = np.empty(eps.size)
    s = fam.structure
    for k in np.unique(counts[counts > 0]):
        rows = np.flatnonzero(counts == k)
        L = conditional_chol(s, int(k))
        E = eps[offsets[rows][:, None] + np.arange(k)]
        G = s.rho1 * g0[rows][:, None] + E @ L.T
        Z = G * mix[rows][:, None]
        if fam.is_t:
            cdf, sf = sc.stdtr(fam.df, Z), sc.stdtr(fam.df, -Z)
        else:
            cdf, sf = sc.ndtr(Z), sc.ndtr(-Z)
        xi = sev_xi[rows][:, None]
        vals = margins.gamma_quantile_from_tails(cdf, sf, xi, nu)
        y[(offsets[rows][:, None] + np.arange(k)).ravel()] = vals.ravel()
    return y


def _draw_block(rng, fam, p, lam, xi, nu, fixed_k=None):
    m = lam.size
    r = rng.random(m) < p
    g0 = rng.standard_normal(m)
    if fam.is_t:
        w = rng.gamma(0.5 * fam.df, 2.0 / fam.df, size=m)
        mix = 1.0 / np.sqrt(w)
    else:
        mix = np.ones(m)
    z0 = g0 * mix
    n_pos = _count_from_score(fam, z0, lam)
    if fixed_k is None:
        counts = np.where(r, n_pos, 0)
    else:
        counts = np.full(m, int(fixed_k), dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
    eps = rng.standard_normal(int(counts.sum()))
    y = _severities(fam, xi, nu, g0, mix, counts, eps, offsets)
    return np.where(r, n_pos, 0), n_pos, counts, y


def _broadcast(size, *arrays):
    return [np.broadcast_to(np.asarray(a, dtype=float), (size,)).copy() for a in arrays]


def _run_blocks(size, worker, threads=1):
    starts = list(range(0, size, BLOCK_SIZE))
    if threads and threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(worker, range(len(starts)), starts))
    return [worker(b, s) for b, s in enumerate(starts)]


def sample_portfolio(p, lam, xi, nu, fam, size, seed, tag=0, threads=1):
    """Simulate ``size`` independent policies (parameters broadcast per policy).

    Returns a :class:`SampledPortfolio`.
    """
    p, lam, xi = _broadcast(size, p, lam, xi)

    def worker(b, start):
        sl = slice(start, min(start + BLOCK_SIZE, size))
        n, _, counts, y = _draw_block(stream(seed, tag, b), fam, p[sl], lam[sl], xi[sl], nu)
        return n, y

    parts = _run_blocks(size, worker, threads)
    n = np.concatenate([a for a, _ in parts]) if parts else np.zeros(0, dtype=np.int64)
    y = np.concatenate([b for _, b in parts]) if parts else np.zeros(0)
    offsets = np.concatenate(([0], np.cumsum(n)[:-1])).astype(np.int64) if n.size else n.copy()
    return SampledPortfolio(n=n, y=y, offsets=offsets)


def sample_params(params, size, seed, tag=0, threads=1):
    """:func:`sample_portfolio` for one :class:`CRMParams` replicated ``size`` times."""
    return sample_portfolio(
        params.p, params.freq_pos.lam, params.sev.xi, params.sev.nu, params.copula, size, seed, tag, threads
    )


def sample_conditional(params, k, size, seed, tag=0):
    """Draw ``(N+, Y_1..Y_k)`` with ``k`` fixed, independent of the count.

    This samples the positive-part model directly (no hurdle); by inheritance
    ``Y_1..Y_k`` are the first ``k`` severities of the infinite sequence.
    """
    lam, xi = _broadcast(size, params.freq_pos.lam, params.sev.xi)
    ones = np.ones(size)
    ns, ys = [], []
    for b, start in enumerate(range(0, size, BLOCK_SIZE)):
        sl = slice(start, min(start + BLOCK_SIZE, size))
        _, n_pos, _, y = _draw_block(stream(seed, tag, b), params.copula, ones[sl], lam[sl], xi[sl], params.sev.nu, k)
        ns.append(n_pos)
        ys.append(y.reshape(-1, k))
    return np.concatenate(ns), np.concatenate(ys)


def sample_policy(params, rng, policy_id=0):
    """One policy record drawn with the supplied generator."""
    fam = params.copula
    n, _, _, y = _draw_block(
        rng, fam, np.array([params.p]), np.array([params.freq_pos.lam]), np.array([params.sev.xi]), params.sev.nu
    )
    return PolicyRecord(policy_id, int(n[0]), y)
