"""Kernel estimate of the copula of (jittered count, average severity).

Under the independent collective risk model the pair ``(N, M)`` is still
dependent, since the spread of ``M = S / N`` shrinks as ``N`` grows. To
look at its copula the discrete count is continued as ``N* = N + U`` with
``U ~ Unif[0, 1]``, the pairs are turned into pseudo-observations and a
boundary-reflected Gaussian product kernel is evaluated on a grid.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .. import copula as cop
from ..corrmat import CorrStructure, Structure
from ..errors import DomainError
from ..sampling import sample_portfolio, stream


@dataclass
class KernelGrid:
    u: np.ndarray  # grid nodes, shared by both axes
    density: np.ndarray  # density[i, j] at (u1=u[i], u2=u[j])
    bandwidth: tuple
    n: int

    def integral(self):
        return float(integrate.trapezoid(integrate.trapezoid(self.density, self.u, axis=1), self.u))

    def band_mean(self, u1_range, u2_range):
        i = (self.u >= u1_range[0]) & (self.u <= u1_range[1])
        j = (self.u >= u2_range[0]) & (self.u <= u2_range[1])
        return float(self.density[np.ix_(i, j)].mean())

    def rows(self):
        U1, U2 = np.meshgrid(self.u, self.u, indexing="ij")
        return zip(U1.ravel(), U2.ravel(), self.density.ravel())


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    return 0.9 * min(x.std(ddof=1), iqr / 1.34) * x.size ** -0.2


def pseudo_observations(x):
    x = np.asarray(x, dtype=float)
    return stats.rankdata(x, axis=0) / (x.shape[0] + 1.0)


def _reflected_kernel(grid, x, h):
    # Gaussian kernel with mirror images at 0 and 1, shape (grid, n)
    g = grid[:, None]
    return (stats.norm.pdf((g - x) / h) + stats.norm.pdf((g + x) / h) + stats.norm.pdf((g - 2.0 + x) / h)) / h


def reflected_kde(pairs, grid=50, bandwidth=None):
    """Product-kernel density of points in ``[0, 1]^2`` on a ``grid x grid`` mesh."""
    pairs = np.asarray(pairs, dtype=float)
    u = np.linspace(0.0, 1.0, int(grid))
    if bandwidth is None:
        h = (float(silverman_bandwidth(pairs[:, 0])), float(silverman_bandwidth(pairs[:, 1])))
    else:
        h = (float(bandwidth), float(bandwidth)) if np.isscalar(bandwidth) else tuple(map(float, bandwidth))
    K1 = _reflected_kernel(u, pairs[:, 0], h[0])
    K2 = _reflected_kernel(u, pairs[:, 1], h[1])
    return KernelGrid(u=u, density=K1 @ K2.T / pairs.shape[0], bandwidth=h, n=pairs.shape[0])


def simulate_count_average(lam, xi, nu, size, seed):
    """``(N, M)`` pairs from the independent zero-truncated Poisson / gamma model."""
    fam = cop.CopulaFamily(cop.GAUSSIAN, CorrStructure(Structure.AR, 0.0, 0.0))
    sp = sample_portfolio(1.0, lam, xi, nu, fam, size, seed, tag=0)
    return sp.n, sp.aggregate / sp.n


def kernel_copula_demo(lam=1.0, xi=1.0, nu=1.0, sample_size=2000, grid=50, bandwidth=None, seed=0):
    """Kernel copula density of ``(N + U, M)`` on a regular grid over ``[0, 1]^2``."""
    if sample_size < 500:
        raise DomainError("sample_size must be at least 500")
    if grid < 2:
        raise DomainError("grid must have at least two nodes")
    n, m = simulate_count_average(lam, xi, nu, sample_size, seed)
    jitter = stream(seed, 1).random(sample_size)
    pairs = pseudo_observations(np.column_stack([n + jitter, m]))
    return reflected_kde(pairs, grid, bandwidth)
