"""Regression extension: per-policy parameters through link functions.

Frequency mean ``lam_i = exp(x_i beta)``; severity mean ``xi_i = exp(w_i gamma)``.
The hurdle probability is either induced from the same Poisson mean
(``p_i = 1 - exp(-lam_i)``, so ``N_i`` is exactly Poisson(lam_i)), or has its
own logit regression ``logit p_i = x*_i beta*``.

Parameters travel as one flat natural-scale vector whose layout is
described by :meth:`RegressionSpec.names`.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import copula as cop
from . import margins
from .corrmat import CorrStructure, Structure
from .errors import DomainError, NonFiniteEvaluation, NonPositiveMass, SchemaError
from .model import CRMParams, PolicyRecord
from .sampling import sample_portfolio, stream

SHARED = "shared"
SEPARATE = "separate"
INTERCEPT = "(intercept)"


@dataclass(frozen=True)
class RegressionSpec:
    freq_covariates: Tuple[str, ...] = ()
    sev_covariates: Tuple[str, ...] = ()
    hurdle: str = SHARED
    hurdle_covariates: Tuple[str, ...] = ()
    structure: Structure = Structure.EQUI
    family: str = cop.GAUSSIAN
    df: Optional[float] = None
    estimate_df: bool = False
    with_severity: bool = True

    def __post_init__(self):
        object.__setattr__(self, "freq_covariates", tuple(self.freq_covariates))
        object.__setattr__(self, "sev_covariates", tuple(self.sev_covariates))
        object.__setattr__(self, "hurdle_covariates", tuple(self.hurdle_covariates))
        object.__setattr__(self, "structure", Structure.parse(self.structure))
        if self.hurdle not in (SHARED, SEPARATE):
            raise DomainError(f"hurdle mode must be {SHARED!r} or {SEPARATE!r}")
        fam = cop.CopulaFamily(self.family, CorrStructure(self.structure, 0.0, 0.5), self.df if self.df else 30.0)
        object.__setattr__(self, "family", fam.kind)
        if fam.is_t and self.df is None and not self.estimate_df:
            raise DomainError("t copula needs a fixed df or estimate_df=True")

    @property
    def is_t(self):
        return self.family == cop.STUDENT_T

    def covariates(self):
        seen = []
        for c in self.freq_covariates + self.hurdle_covariates + self.sev_covariates:
            if c not in seen:
                seen.append(c)
        return seen

    def blocks(self):
        """Ordered ``(block, names, covariate labels)`` triples."""
        out = [("frequency", [f"beta{j}" for j in range(len(self.freq_covariates) + 1)],
                [INTERCEPT, *self.freq_covariates])]
        if self.hurdle == SEPARATE:
            out.append(("hurdle", [f"beta_star{j}" for j in range(len(self.hurdle_covariates) + 1)],
                        [INTERCEPT, *self.hurdle_covariates]))
        if self.with_severity:
            out.append(("severity", [f"gamma{j}" for j in range(len(self.sev_covariates) + 1)],
                        [INTERCEPT, *self.sev_covariates]))
            out.append(("severity", ["nu"], [None]))
            out.append(("copula", ["rho1", "rho2"], [None, None]))
            if self.is_t and self.estimate_df:
                out.append(("copula", ["df"], [None]))
        return out

    def names(self):
        return [n for _, names, _ in self.blocks() for n in names]

    def unpack(self, theta):
        """Split a flat vector into named pieces."""
        theta = np.asarray(theta, dtype=float)
        names = self.names()
        if theta.shape != (len(names),):
            raise DomainError(f"expected {len(names)} parameters, got shape {theta.shape}")
        d = dict(zip(names, theta))
        nf = len(self.freq_covariates) + 1
        out = {"beta": theta[:nf]}
        i = nf
        if self.hurdle == SEPARATE:
            nh = len(self.hurdle_covariates) + 1
            out["beta_star"] = theta[i : i + nh]
            i += nh
        if self.with_severity:
            ns = len(self.sev_covariates) + 1
            out["gamma"] = theta[i : i + ns]
            i += ns
            out["nu"] = d["nu"]
            out["rho1"] = d["rho1"]
            out["rho2"] = d["rho2"]
            out["df"] = d["df"] if "df" in d else self.df
        return out

    def copula_family(self, theta):
        u = self.unpack(theta)
        return cop.CopulaFamily(self.family, CorrStructure(self.structure, u["rho1"], u["rho2"]),
                                u["df"] if self.is_t else None)

    def policy_params(self, theta, covariates):
        """:class:`CRMParams` for one covariate profile (mapping name -> value)."""
        u = self.unpack(theta)
        x = np.array([1.0] + [float(covariates[c]) for c in self.freq_covariates])
        lam = float(np.exp(x @ u["beta"]))
        if self.hurdle == SEPARATE:
            xs = np.array([1.0] + [float(covariates[c]) for c in self.hurdle_covariates])
            p = float(1.0 / (1.0 + np.exp(-(xs @ u["beta_star"]))))
        else:
            p = float(-np.expm1(-lam))
        if not self.with_severity:
            raise DomainError("spec has no severity part")
        w = np.array([1.0] + [float(covariates[c]) for c in self.sev_covariates])
        xi = float(np.exp(w @ u["gamma"]))
        return CRMParams(p, margins.ZeroTruncatedPoisson(lam), margins.GammaSeverity(xi, u["nu"]),
                         self.copula_family(theta))


@dataclass
class Portfolio:
    """Micro-level claims data in flat layout.

    Policy ``i`` has ``n[i]`` claims stored at ``y[offsets[i]:offsets[i]+n[i]]``.
    """

    ids: np.ndarray
    n: np.ndarray
    y: np.ndarray
    covariates: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        self.ids = np.asarray(self.ids, dtype=object)
        self.covariates = {k: np.asarray(v, dtype=float) for k, v in self.covariates.items()}
        if np.any(self.n < 0):
            raise SchemaError("claim counts must be non-negative")
        if int(self.n.sum()) != self.y.size:
            raise SchemaError("number of severities does not match the claim counts")
        if np.any(~(self.y > 0)):
            raise SchemaError("severities must be positive")
        for k, v in self.covariates.items():
            if v.shape != self.n.shape:
                raise SchemaError(f"covariate {k!r} is not aligned with the policies")
        self.offsets = np.concatenate(([0], np.cumsum(self.n)[:-1])).astype(np.int64) if self.n.size else self.n.copy()
        self._groups = None

    @classmethod
    def from_records(cls, records: Sequence[PolicyRecord]):
        names = sorted({k for r in records for k in r.covariates})
        cov = {k: np.array([r.covariates[k] for r in records], dtype=float) for k in names}
        y = np.concatenate([r.y for r in records]) if records else np.zeros(0)
        return cls(ids=[r.id for r in records], n=[r.n for r in records], y=y, covariates=cov)

    def __len__(self):
        return int(self.n.size)

    @property
    def n_claims(self):
        return int(self.y.size)

    def records(self):
        out = []
        for i in range(len(self)):
            o = self.offsets[i]
            cov = {k: float(v[i]) for k, v in self.covariates.items()}
            out.append(PolicyRecord(self.ids[i], int(self.n[i]), self.y[o : o + self.n[i]].copy(), cov))
        return out

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        parts = [self.y[self.offsets[i] : self.offsets[i] + self.n[i]] for i in idx]
        y = np.concatenate(parts) if parts else np.zeros(0)
        return Portfolio(self.ids[idx], self.n[idx], y, {k: v[idx] for k, v in self.covariates.items()})

    def design(self, names):
        missing = [c for c in names if c not in self.covariates]
        if missing:
            raise SchemaError(f"missing covariate column(s): {', '.join(missing)}")
        cols = [np.ones(len(self))] + [self.covariates[c] for c in names]
        return np.column_stack(cols)

    def groups(self):
        """Claimants grouped by claim count: ``{k: (rows, Y)}`` with ``Y`` of shape (m_k, k)."""
        if self._groups is None:
            g = {}
            for k in np.unique(self.n[self.n > 0]):
                rows = np.flatnonzero(self.n == k)
                Y = self.y[self.offsets[rows][:, None] + np.arange(k)]
                g[int(k)] = (rows, Y)
            self._groups = g
        return self._groups


class _Designs:
    """Design matrices for one (spec, portfolio) pair, built once."""

    def __init__(self, spec, data):
        self.X = data.design(spec.freq_covariates)
        self.Xh = data.design(spec.hurdle_covariates) if spec.hurdle == SEPARATE else None
        self.W = data.design(spec.sev_covariates) if spec.with_severity else None
        self.zero = np.flatnonzero(data.n == 0)
        self.pos = np.flatnonzero(data.n > 0)
        self.groups = data.groups()


_DESIGN_CACHE = {}


def _designs(spec, data):
    key = (id(data), spec)
    hit = _DESIGN_CACHE.get(key)
    if hit is None or hit[0] is not data:
        if len(_DESIGN_CACHE) > 64:
            _DESIGN_CACHE.clear()
        hit = (data, _Designs(spec, data))
        _DESIGN_CACHE[key] = hit
    return hit[1]


def loglik_terms(spec, theta, data):
    """Per-policy observed-data log densities, in policy order."""
    u = spec.unpack(theta)
    d = _designs(spec, data)
    eta = d.X @ u["beta"]
    lam = np.exp(eta)
    out = np.empty(len(data))
    if spec.hurdle == SEPARATE:
        eta_h = d.Xh @ u["beta_star"]
        log_q = -np.logaddexp(0.0, eta_h)  # log(1 - p)
        log_p = -np.logaddexp(0.0, -eta_h)
    else:
        log_q = -lam
        with np.errstate(divide="ignore"):
            log_p = np.log(-np.expm1(-lam))
    out[d.zero] = log_q[d.zero]
    if d.pos.size:
        if not spec.with_severity:
            raise DomainError("portfolio has claims but the spec has no severity part")
        # fails here with DomainError/NotPositiveDefinite if (rho1, rho2, df) are invalid
        fam = spec.copula_family(theta)
        xi = np.exp(d.W @ u["gamma"])
        for k, (rows, Y) in d.groups.items():
            try:
                lj = cop.joint_logdensity_batch(fam, lam[rows], xi[rows], u["nu"], k, Y)
            except NonPositiveMass as exc:
                pid = data.ids[rows[exc.policy_id]]
                raise NonPositiveMass(f"policy {pid}: {exc}", policy_id=pid) from None
            out[rows] = log_p[rows] + lj
    bad = ~np.isfinite(out)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        if np.isnan(out[i]):
            raise NonFiniteEvaluation(f"log-likelihood is NaN for policy {data.ids[i]}")
        raise NonPositiveMass(f"log-likelihood is -inf for policy {data.ids[i]}", policy_id=data.ids[i])
    return out


def portfolio_loglik(spec, theta, data):
    """Sum of observed-data log densities over the portfolio.

    The per-policy terms are reduced in policy order with numpy's pairwise
    summation, so the value does not depend on how terms were produced.
    """
    return float(np.sum(loglik_terms(spec, theta, data)))


def linear_parameters(spec, theta, data):
    """Per-policy ``(p, lam, xi)`` arrays."""
    u = spec.unpack(theta)
    lam = np.exp(data.design(spec.freq_covariates) @ u["beta"])
    if spec.hurdle == SEPARATE:
        p = 1.0 / (1.0 + np.exp(-(data.design(spec.hurdle_covariates) @ u["beta_star"])))
    else:
        p = -np.expm1(-lam)
    xi = np.exp(data.design(spec.sev_covariates) @ u["gamma"])
    return p, lam, xi


def simulate_regression(spec, theta, size, seed, covariates=None, threads=1):
    """Simulate a portfolio from the regression model.

    Without ``covariates`` every covariate named by ``spec`` is drawn as an
    independent Bernoulli(0.5) indicator (stream tag 1); claims use stream
    tag 2. Policy ids are ``0..size-1``.
    """
    size = int(size)
    names = spec.covariates()
    if covariates is None:
        draws = (stream(seed, 1).random((size, len(names))) < 0.5).astype(float)
        covariates = {c: draws[:, j] for j, c in enumerate(names)}
    else:
        covariates = {c: np.asarray(covariates[c], dtype=float) for c in names}
    shell = Portfolio(np.arange(size), np.zeros(size, dtype=np.int64), np.zeros(0), covariates)
    p, lam, xi = linear_parameters(spec, theta, shell)
    u = spec.unpack(theta)
    sp = sample_portfolio(p, lam, xi, u["nu"], spec.copula_family(theta), size, seed, tag=2, threads=threads)
    return Portfolio(np.arange(size), sp.n, sp.y, covariates)
