"""Maximum-likelihood fitting of the regression model.

The optimizer works on an unconstrained vector ``z``. The map to natural
parameters is coordinate-wise except for ``rho2`` under equicorrelation,
which depends on ``rho1`` so that ``rho1**2 < rho2`` holds everywhere:

    nu, df             log
    rho1               tanh
    rho2 (equi)        rho1^2 + (1 - rho1^2) * logistic(b)
    rho2 (AR)          tanh
    regression coefs   identity

Standard errors come from the observed information (central-difference
Hessian of the log-likelihood in ``z``) pushed through the Jacobian of the
map. Confidence intervals are Wald intervals in ``z`` mapped back, so they
always respect the parameter constraints.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional

import numpy as np
from scipy import optimize
from scipy import special as sc

from . import regression as reg
from .corrmat import Structure
from .errors import (
    CRMError,
    DomainError,
    NonFiniteEvaluation,
    NonPositiveMass,
    NotPositiveDefinite,
    SingularHessian,
)

log = logging.getLogger(__name__)

Z_975 = 1.959963984540054
NM_MAX_PARAMS = 12


class Optimizer(str, Enum):
    AUTO = "auto"
    NELDER_MEAD = "nelder-mead"
    QUASI_NEWTON_FD = "quasi-newton-fd"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"nm": cls.NELDER_MEAD, "neldermead": cls.NELDER_MEAD, "bfgs": cls.QUASI_NEWTON_FD,
                   "quasinewtonfd": cls.QUASI_NEWTON_FD, "qn": cls.QUASI_NEWTON_FD}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown optimizer {value!r}") from None


@dataclass(frozen=True)
class FitOptions:
    max_iters: int = 20000
    f_tol: float = 1e-9
    x_tol: float = 1e-8
    hessian_step: float = 1e-4
    optimizer: Optimizer = Optimizer.AUTO
    restarts: int = 3

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer.parse(self.optimizer))
        if not (self.f_tol > 0 and self.x_tol > 0 and self.hessian_step > 0):
            raise DomainError("tolerances and the Hessian step must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be positive")


@dataclass
class FitResult:
    names: List[str]
    estimates: np.ndarray
    se: Optional[np.ndarray]
    ci_lower: Optional[np.ndarray]
    ci_upper: Optional[np.ndarray]
    loglik: float
    iterations: int
    evaluations: int
    converged: bool
    transforms: Dict[str, str]
    message: str = ""
    absent: List[str] = field(default_factory=list)
    fixed: Dict[str, float] = field(default_factory=dict)
    n_policies: int = 0
    n_claims: int = 0

    def estimate(self, name):
        return float(self.estimates[self.names.index(name)])

    def as_dict(self):
        return dict(zip(self.names, map(float, self.estimates)))


# --- transforms -----------------------------------------------------------------------


def transform_kinds(spec):
    kinds = {}
    for name in spec.names():
        if name in ("nu", "df"):
            kinds[name] = "log"
        elif name == "rho1":
            kinds[name] = "tanh"
        elif name == "rho2":
            kinds[name] = "equi-logistic" if spec.structure is Structure.EQUI else "tanh"
        else:
            kinds[name] = "identity"
    return kinds


def _logit(x):
    return math.log(x) - math.log1p(-x)


def transform(spec, theta):
    """Natural-scale vector to the unconstrained optimizer scale."""
    names = spec.names()
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(names),):
        raise DomainError(f"expected {len(names)} parameters")
    kinds = transform_kinds(spec)
    d = dict(zip(names, theta))
    z = np.empty_like(theta)
    for i, name in enumerate(names):
        v, kind = d[name], kinds[name]
        if kind == "log":
            if not v > 0:
                raise DomainError(f"{name} must be positive")
            z[i] = math.log(v)
        elif kind == "tanh":
            if not abs(v) < 1:
                raise DomainError(f"{name} must lie in (-1, 1)")
            z[i] = math.atanh(v)
        elif kind == "equi-logistic":
            r1sq = d["rho1"] ** 2
            if not (r1sq < v < 1):
                raise DomainError("equicorrelation requires rho1^2 < rho2 < 1")
            z[i] = _logit((v - r1sq) / (1.0 - r1sq))
        else:
            z[i] = v
    return z


def untransform(spec, z):
    names = spec.names()
    z = np.asarray(z, dtype=float)
    kinds = transform_kinds(spec)
    theta = np.empty_like(z)
    for i, name in enumerate(names):
        kind = kinds[name]
        if kind == "log":
            theta[i] = math.exp(z[i])
        elif kind == "tanh":
            theta[i] = math.tanh(z[i])
        elif kind != "equi-logistic":
            theta[i] = z[i]
    for i, name in enumerate(names):
        if kinds[name] == "equi-logistic":
            r1sq = theta[names.index("rho1")] ** 2
            theta[i] = r1sq + (1.0 - r1sq) * sc.expit(z[i])
    return theta


def transform_jacobian(spec, z):
    """``d theta / d z`` (lower triangular in the parameter order)."""
    names = spec.names()
    kinds = transform_kinds(spec)
    theta = untransform(spec, z)
    J = np.zeros((len(names), len(names)))
    for i, name in enumerate(names):
        kind = kinds[name]
        if kind == "log":
            J[i, i] = theta[i]
        elif kind == "tanh":
            J[i, i] = 1.0 - theta[i] ** 2
        elif kind == "equi-logistic":
            j = names.index("rho1")
            r1 = theta[j]
            s = sc.expit(z[i])
            J[i, i] = (1.0 - r1**2) * s * (1.0 - s)
            J[i, j] = 2.0 * r1 * (1.0 - s) * (1.0 - r1**2)
        else:
            J[i, i] = 1.0
    return J


# --- numerical Hessian ------------------------------------------------------------------


def numerical_hessian(f, x, step=1e-4):
    """Central-difference Hessian of ``f`` at ``x``, symmetrised.

    The step for coordinate ``i`` is ``step * max(1, |x_i|)``.
    """
    x = np.asarray(x, dtype=float)
    p = x.size
    h = step * np.maximum(1.0, np.abs(x))

    def ev(v):
        try:
            val = float(f(v))
        except (NonPositiveMass, NotPositiveDefinite, DomainError) as exc:
            raise NonFiniteEvaluation(f"objective failed near the Hessian point: {exc}") from None
        if not math.isfinite(val):
            raise NonFiniteEvaluation("objective is not finite at a Hessian stencil point")
        return val

    f0 = ev(x)
    E = np.diag(h)
    fp = np.array([ev(x + E[i]) for i in range(p)])
    fm = np.array([ev(x - E[i]) for i in range(p)])
    H = np.empty((p, p))
    for i in range(p):
        H[i, i] = (fp[i] - 2.0 * f0 + fm[i]) / h[i] ** 2
        for j in range(i):
            fpp = ev(x + E[i] + E[j])
            fpm = ev(x + E[i] - E[j])
            fmp = ev(x - E[i] + E[j])
            fmm = ev(x - E[i] - E[j])
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return 0.5 * (H + H.T)


# --- initial values ----------------------------------------------------------------------


def initial_values(spec, data):
    """Independent-margins start: GLM fits of each part, rho1 = 0."""
    import statsmodels.api as sm

    theta = {}
    X = data.design(spec.freq_covariates)
    pos = data.n > 0
    with np.errstate(all="ignore"):
        if spec.hurdle == reg.SHARED:
            if pos.any():
                beta = sm.GLM(data.n.astype(float), X, family=sm.families.Poisson()).fit().params
            else:
                beta = np.r_[math.log(0.5 / max(len(data), 1)), np.zeros(X.shape[1] - 1)]
        else:
            Xh = data.design(spec.hurdle_covariates)
            if pos.any() and not pos.all():
                bstar = sm.GLM(pos.astype(float), Xh, family=sm.families.Binomial()).fit().params
            else:
                bstar = np.r_[(-8.0 if not pos.any() else 8.0), np.zeros(Xh.shape[1] - 1)]
            if pos.any():
                # Poisson fit to the positive counts; the truncation bias is left to the optimizer
                beta = sm.GLM(data.n[pos] - 1.0 + 0.5, X[pos], family=sm.families.Poisson()).fit().params
            else:
                beta = np.zeros(X.shape[1])
            for j, v in enumerate(bstar):
                theta[f"beta_star{j}"] = float(v)
    for j, v in enumerate(beta):
        theta[f"beta{j}"] = float(v)
    if spec.with_severity:
        W = data.design(spec.sev_covariates)
        Wc = np.repeat(W, data.n, axis=0)
        res = sm.GLM(data.y, Wc, family=sm.families.Gamma(sm.families.links.Log())).fit()
        for j, v in enumerate(res.params):
            theta[f"gamma{j}"] = float(v)
        mu = res.fittedvalues
        # dispersion by 1-d likelihood maximisation given the GLM means
        def nll(lnu):
            nu = math.exp(lnu)
            a = 1.0 / nu
            return -np.sum((a - 1) * np.log(data.y) - data.y / (mu * nu) - sc.gammaln(a) - a * np.log(mu * nu))

        lnu = optimize.minimize_scalar(nll, bounds=(-10.0, 5.0), method="bounded").x
        theta["nu"] = float(math.exp(lnu))
        theta["rho1"] = 0.0
        theta["rho2"] = 0.05 if spec.structure is Structure.EQUI else 0.0
        if spec.is_t and spec.estimate_df:
            theta["df"] = float(spec.df) if spec.df else 10.0
    return np.array([theta[n] for n in spec.names()])


# --- the fit ---------------------------------------------------------------------------------


class _Objective:
    """Mean negative log-likelihood over the free coordinates of ``z``."""

    def __init__(self, spec, data, z_full, free):
        self.spec, self.data = spec, data
        self.z_full = np.array(z_full, dtype=float)
        self.free = np.asarray(free)
        self.scale = 1.0 / max(len(data), 1)
        self.evals = 0

    def full(self, zf):
        z = self.z_full.copy()
        z[self.free] = zf
        return z

    def loglik(self, zf):
        return reg.portfolio_loglik(self.spec, untransform(self.spec, self.full(zf)), self.data)

    def __call__(self, zf):
        self.evals += 1
        try:
            val = -self.loglik(zf) * self.scale
        except (NonPositiveMass, NotPositiveDefinite, DomainError, NonFiniteEvaluation, FloatingPointError):
            return np.inf
        return val if math.isfinite(val) else np.inf


def _run_optimizer(obj, z0, opts, method):
    if method is Optimizer.NELDER_MEAD:
        res = optimize.minimize(
            obj, z0, method="Nelder-Mead",
            options={"xatol": opts.x_tol, "fatol": opts.f_tol, "maxiter": opts.max_iters,
                     "maxfev": 2 * opts.max_iters, "adaptive": z0.size > 4},
        )
    else:
        res = optimize.minimize(
            obj, z0, method="BFGS", jac="3-point",
            options={"gtol": max(opts.f_tol, 1e-10) ** 0.5 * 1e-2, "maxiter": opts.max_iters},
        )
    return res


def mle_fit(spec, data, init=None, opts=None, fixed=None):
    """Maximum-likelihood fit of ``spec`` to a :class:`regression.Portfolio`.

    Parameters
    ----------
    spec : RegressionSpec
    data : Portfolio
    init : array_like, optional
        Natural-scale start; defaults to :func:`initial_values`.
    opts : FitOptions, optional
    fixed : mapping, optional
        Parameters held at given natural values (e.g. ``{"rho1": 0.0}``).

    Returns
    -------
    FitResult
        If the optimizer stops on its iteration budget the best point found
        is returned with ``converged=False``. If the Hessian is singular or
        not negative definite the standard errors are ``None``.
    """
    opts = opts or FitOptions()
    if len(data) == 0:
        raise DomainError("cannot fit an empty portfolio")
    absent = []
    message = ""
    if data.n_claims == 0 and spec.with_severity:
        full_names = spec.names()
        spec = _frequency_only(spec)
        absent = [n for n in full_names if n not in spec.names()]
        message = "no claims in the data: severity and dependence parameters are not identified"
    names = spec.names()
    fixed = dict(fixed or {})
    unknown = set(fixed) - set(names)
    if unknown:
        raise DomainError(f"cannot fix unknown parameter(s): {sorted(unknown)}")
    theta0 = initial_values(spec, data) if init is None else np.asarray(init, dtype=float).copy()
    for k, v in fixed.items():
        theta0[names.index(k)] = v
    z0 = transform(spec, theta0)
    free = np.array([i for i, n in enumerate(names) if n not in fixed], dtype=int)
    obj = _Objective(spec, data, z0, free)

    method = opts.optimizer
    if method is Optimizer.AUTO:
        method = Optimizer.NELDER_MEAD if free.size <= NM_MAX_PARAMS else Optimizer.QUASI_NEWTON_FD

    if not math.isfinite(obj(z0[free])):
        raise NonFiniteEvaluation("log-likelihood is not finite at the initial values")

    zf = z0[free].copy()
    best = obj(zf)
    iterations, converged = 0, False
    for attempt in range(max(1, opts.restarts + 1)):
        res = _run_optimizer(obj, zf, opts, method)
        iterations += int(res.get("nit", 0))
        improved = best - res.fun
        if res.fun <= best:
            zf, best = np.asarray(res.x, dtype=float), float(res.fun)
        log.debug("optimizer pass %d: f=%.12g success=%s", attempt, res.fun, res.success)
        if res.success and improved <= opts.f_tol:
            converged = True
            break
        if obj.evals > 4 * opts.max_iters:
            break
    if not converged:
        message = message or "optimizer did not meet the tolerances within its budget"
    if absent:
        # the frequency MLE does not exist when every count is zero
        converged = False

    z_hat = obj.full(zf)
    theta_hat = untransform(spec, z_hat)
    loglik = reg.portfolio_loglik(spec, theta_hat, data)

    se = lo = hi = None
    try:
        se, lo, hi = _wald(spec, data, z_hat, free, opts)
    except (SingularHessian, NonFiniteEvaluation) as exc:
        message = (message + "; " if message else "") + f"standard errors unavailable: {exc}"

    return FitResult(
        names=names,
        estimates=theta_hat,
        se=se,
        ci_lower=lo,
        ci_upper=hi,
        loglik=loglik,
        iterations=iterations,
        evaluations=obj.evals,
        converged=converged,
        transforms=transform_kinds(spec),
        message=message,
        absent=absent,
        fixed={k: float(theta_hat[names.index(k)]) for k in fixed},
        n_policies=len(data),
        n_claims=data.n_claims,
    )


def _frequency_only(spec):
    from dataclasses import replace

    return replace(spec, with_severity=False)


def _wald(spec, data, z_hat, free, opts):
    names = spec.names()

    def negll(zf):
        z = z_hat.copy()
        z[free] = zf
        return -reg.portfolio_loglik(spec, untransform(spec, z), data)

    H = numerical_hessian(negll, z_hat[free], opts.hessian_step)
    try:
        cov_f = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise SingularHessian("observed information is singular") from None
    if not np.all(np.isfinite(cov_f)) or np.any(np.linalg.eigvalsh(H) <= 0):
        raise SingularHessian("observed information is not positive definite")
    p = len(names)
    cov_z = np.zeros((p, p))
    cov_z[np.ix_(free, free)] = cov_f
    J = transform_jacobian(spec, z_hat)
    cov = J @ cov_z @ J.T
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    lo = np.empty(p)
    hi = np.empty(p)
    se_z = np.sqrt(np.diag(cov_z))
    for i in range(p):
        a, b = z_hat.copy(), z_hat.copy()
        a[i] -= Z_975 * se_z[i]
        b[i] += Z_975 * se_z[i]
        va, vb = untransform(spec, a)[i], untransform(spec, b)[i]
        lo[i], hi[i] = min(va, vb), max(va, vb)
    return se, lo, hi
