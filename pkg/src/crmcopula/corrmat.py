"""Structured correlation matrices for (frequency, severity_1, ..., severity_k).

Two severity blocks are supported: the equicorrelation matrix (all
off-diagonal entries ``rho2``) and the AR(1) matrix (entry ``rho2**|i-j|``).
The extended matrix borders a severity block with a frequency row/column of
constant correlation ``rho1``.

Nothing here materialises a dense k-by-k matrix on the hot path: determinants,
inverses and the three quadratic forms the copula densities need are all
closed-form and O(k). ``to_dense`` helpers exist for tests and debugging.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import DomainError, NotPositiveDefinite, SingularMatrix

DET_TOL = 1e-300
PIVOT_TOL = 1e-12
PD_MARGIN = 1e-12


class Structure(str, Enum):
    EQUI = "equi"
    AR = "ar"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"1": "equi", "equicorrelation": "equi", "2": "ar", "ar1": "ar"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise DomainError(f"unknown correlation structure {value!r}") from None


@dataclass(frozen=True)
class CorrStructure:
    """Correlation structure tag plus its two dependence parameters.

    For ``Structure.EQUI`` the constructor enforces ``rho1**2 < rho2`` so the
    extended matrix is positive definite for every claim count. AR matrices
    carry no joint constraint at construction; positive definiteness of the
    extended AR matrix depends on ``k`` and is checked where it is used.
    """

    kind: Structure
    rho1: float
    rho2: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Structure.parse(self.kind))
        object.__setattr__(self, "rho1", float(self.rho1))
        object.__setattr__(self, "rho2", float(self.rho2))
        if not (abs(self.rho1) < 1.0 and abs(self.rho2) < 1.0):
            raise DomainError("rho1 and rho2 must lie in (-1, 1)")
        if self.kind is Structure.EQUI and not self.rho1**2 < self.rho2:
            raise DomainError(
                f"equicorrelation requires rho1^2 < rho2 (got rho1={self.rho1}, rho2={self.rho2})"
            )


@dataclass(frozen=True)
class StructuredInverse:
    """Inverse of a k-by-k severity correlation block.

    Equi: ``a * I + b * J``. AR: symmetric tridiagonal with diagonal
    ``d_edge`` at both corners, ``d_inner`` elsewhere, off-diagonal ``off``.
    """

    kind: Structure
    k: int
    a: float = 0.0
    b: float = 0.0
    d_edge: float = 0.0
    d_inner: float = 0.0
    off: float = 0.0

    def to_dense(self):
        k = self.k
        if self.kind is Structure.EQUI:
            return self.a * np.eye(k) + self.b * np.ones((k, k))
        if k == 1:
            return np.array([[self.d_edge]])
        out = np.diag(np.full(k, self.d_inner))
        out[0, 0] = out[-1, -1] = self.d_edge
        idx = np.arange(k - 1)
        out[idx, idx + 1] = out[idx + 1, idx] = self.off
        return out

    def matvec(self, q):
        """Sigma^{-1} q along the last axis of ``q``."""
        q = np.asarray(q, dtype=float)
        if self.kind is Structure.EQUI:
            return self.a * q + self.b * q.sum(axis=-1, keepdims=True)
        out = q * self.d_inner
        out[..., 0] = q[..., 0] * self.d_edge
        out[..., -1] = q[..., -1] * self.d_edge
        if self.k > 1:
            out[..., :-1] += self.off * q[..., 1:]
            out[..., 1:] += self.off * q[..., :-1]
        return out


def sev_matrix(kind, rho2, k):
    """Dense k-by-k severity correlation block (test/debug use)."""
    kind = Structure.parse(kind)
    idx = np.arange(k)
    lag = np.abs(idx[:, None] - idx[None, :])
    if kind is Structure.EQUI:
        return np.where(lag == 0, 1.0, rho2)
    return np.where(lag == 0, 1.0, float(rho2) ** lag)


def ext_matrix(kind, rho1, rho2, k):
    """Dense (k+1)-by-(k+1) extended correlation matrix (test/debug use)."""
    out = np.ones((k + 1, k + 1))
    if k > 0:
        out[1:, 1:] = sev_matrix(kind, rho2, k)
        out[0, 1:] = out[1:, 0] = rho1
    return out


def det_sev(s, k):
    """Determinant of the k-by-k severity block."""
    if k < 1:
        raise DomainError("severity block order must be >= 1")
    r = s.rho2
    if s.kind is Structure.EQUI:
        return (1.0 + (k - 1) * r) * (1.0 - r) ** (k - 1)
    return (1.0 - r * r) ** (k - 1)


def one_inv_one(s, k):
    """1' Sigma^{-1} 1 for the k-by-k severity block."""
    r = s.rho2
    if s.kind is Structure.EQUI:
        return k / (1.0 + (k - 1) * r)
    return (k - (k - 2) * r) / (1.0 + r)


def det_ext(s, k):
    """Determinant of the extended matrix via the Schur complement of the
    severity block: ``det_sev * (1 - rho1^2 * 1' Sigma^{-1} 1)``."""
    if k < 0:
        raise DomainError("order must be >= 0")
    if k == 0:
        return 1.0
    if s.kind is Structure.EQUI:
        r1, r2 = s.rho1, s.rho2
        return (1.0 + (k - 1) * r2 - k * r1 * r1) * (1.0 - r2) ** (k - 1)
    return det_sev(s, k) * (1.0 - s.rho1**2 * one_inv_one(s, k))


def inv_sev(s, k):
    """Closed-form inverse of the severity block."""
    if abs(det_sev(s, k)) < DET_TOL:
        raise SingularMatrix(f"severity block of order {k} is singular")
    r = s.rho2
    if s.kind is Structure.EQUI:
        a = 1.0 / (1.0 - r)
        b = -a * r / (1.0 + (k - 1) * r)
        return StructuredInverse(Structure.EQUI, k, a=a, b=b)
    if k == 1:
        return StructuredInverse(Structure.AR, 1, d_edge=1.0, d_inner=1.0, off=0.0)
    c = 1.0 / (1.0 - r * r)
    return StructuredInverse(Structure.AR, k, d_edge=c, d_inner=(1.0 + r * r) * c, off=-r * c)


def quad_forms(s, k, q):
    """Return ``(1' S^-1 q, 1' S^-1 1, q' S^-1 q)`` for the severity block S.

    ``q`` has shape ``(k,)`` or ``(m, k)``; the first and last outputs then
    have shape ``()`` or ``(m,)``.
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != k:
        raise DomainError(f"score vector has length {q.shape[-1]}, expected {k}")
    inv = inv_sev(s, k)
    if inv.kind is Structure.EQUI:
        s1 = q.sum(axis=-1)
        s2 = np.einsum("...i,...i->...", q, q)
        return (inv.a + inv.b * k) * s1, k * (inv.a + inv.b * k), inv.a * s2 + inv.b * s1 * s1
    if k == 1:
        q0 = q[..., 0]
        return q0, 1.0, q0 * q0
    r = s.rho2
    edge = q[..., 0] + q[..., -1]
    inner = q[..., 1:-1].sum(axis=-1)
    one_q = (edge + (1.0 - r) * inner) / (1.0 + r)
    sq = np.einsum("...i,...i->...", q, q)
    cross = np.einsum("...i,...i->...", q[..., 1:], q[..., :-1])
    q_q = inv.d_inner * sq + (inv.d_edge - inv.d_inner) * (q[..., 0] ** 2 + q[..., -1] ** 2)
    q_q = q_q + 2.0 * inv.off * cross
    return one_q, one_inv_one(s, k), q_q


def is_pd_ext(kind, rho1, rho2, k):
    """Whether the extended (k+1)-by-(k+1) matrix is positive definite.

    Equi: ``k rho1^2 - 1 < (k-1) rho2``. AR: the severity block is always PD
    for |rho2| < 1, so the test reduces to a positive Schur complement
    ``1 - rho1^2 1' S^-1 1 > 0``; this does depend on k.
    """
    kind = Structure.parse(kind)
    if not (abs(rho1) < 1.0 and abs(rho2) < 1.0):
        raise DomainError("rho1 and rho2 must lie in (-1, 1)")
    if k == 0:
        return True
    # a margin keeps exact-boundary (singular) points from passing on rounding
    if kind is Structure.EQUI:
        return k * rho1 * rho1 - 1.0 < (k - 1) * rho2 - PD_MARGIN * k
    return rho1 * rho1 * (k - (k - 2) * rho2) < 1.0 + rho2 - PD_MARGIN * k


def pd_bound(rho1, k):
    """Lower bound on rho2 for the extended equicorrelation matrix of order k."""
    if k < 1:
        raise DomainError("k must be >= 1")
    if k == 1:
        return -1.0
    return (k * rho1 * rho1 - 1.0) / (k - 1)


def max_pd_order_ar(rho1, rho2):
    """Largest k for which the extended AR matrix stays PD (``inf`` when rho1 = 0)."""
    if rho1 == 0.0:
        return np.inf
    if rho2 >= 1.0:
        return np.inf
    # rho1^2 (k (1 - rho2) + 2 rho2) < 1 + rho2
    bound = ((1.0 + rho2) / (rho1 * rho1) - 2.0 * rho2) / (1.0 - rho2)
    k = max(int(np.ceil(bound) - 1), 0)
    while k > 0 and not is_pd_ext(Structure.AR, rho1, rho2, k):
        k -= 1
    while is_pd_ext(Structure.AR, rho1, rho2, k + 1):
        k += 1
    return k


@lru_cache(maxsize=4096)
def _conditional_chol_cached(kind, rho1, rho2, k):
    cov = sev_matrix(kind, rho2, k) - rho1 * rho1
    L = np.zeros((k, k))
    # plain Cholesky with an explicit pivot check; k is small
    for j in range(k):
        pivot = cov[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > PIVOT_TOL:
            raise NotPositiveDefinite(
                f"conditional covariance of order {k} is not PD (pivot {pivot:.3g} at {j})"
            )
        L[j, j] = np.sqrt(pivot)
        if j + 1 < k:
            L[j + 1 :, j] = (cov[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    L.setflags(write=False)
    return L


def conditional_chol(s, k):
    """Lower Cholesky factor of ``S - rho1^2 J``.

    That matrix is the covariance of the latent severity scores given the
    latent frequency score. Results are cached per (kind, rho1, rho2, k); the
    returned array is read-only.
    """
    return _conditional_chol_cached(s.kind, s.rho1, s.rho2, int(k))
