"""Simulation study: repeated simulate-and-refit under fixed scenarios.

Each scenario fixes the regression coefficients, the gamma dispersion and the
copula parameters. A replication draws two Bernoulli(0.5) covariates per
policy (used by both the frequency and the severity predictor), simulates the
portfolio under the shared-lambda hurdle and refits the model.
"""

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional, Tuple

import numpy as np

from .. import copula as cop
from ..corrmat import CorrStructure, Structure
from ..errors import CRMError, InputParseError, SchemaError
from ..fit import FitOptions, mle_fit
from ..regression import RegressionSpec, simulate_regression

log = logging.getLogger(__name__)

PARAM_NAMES = ("beta0", "beta1", "beta2", "gamma0", "gamma1", "gamma2", "nu", "rho1", "rho2")
COVARIATES = ("x1", "x2")
SCENARIO_COLUMNS = ("scenario",) + PARAM_NAMES + ("structure", "n_policies", "reps")


@dataclass(frozen=True)
class Scenario:
    id: int
    beta: Tuple[float, float, float]
    gamma: Tuple[float, float, float]
    nu: float
    rho1: float
    rho2: float
    structure: Structure = Structure.EQUI
    n_policies: int = 5000
    reps: int = 500

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "structure", Structure.parse(self.structure))
        if len(self.beta) != 3 or len(self.gamma) != 3:
            raise SchemaError("a scenario needs three beta and three gamma coefficients")
        if not self.nu > 0:
            raise SchemaError("nu must be positive")
        CorrStructure(self.structure, self.rho1, self.rho2)  # validates the pair

    @property
    def truth(self):
        return np.array([*self.beta, *self.gamma, self.nu, self.rho1, self.rho2])

    def spec(self):
        return RegressionSpec(freq_covariates=COVARIATES, sev_covariates=COVARIATES, structure=self.structure)

    def family(self):
        return cop.CopulaFamily(cop.GAUSSIAN, CorrStructure(self.structure, self.rho1, self.rho2))


def parse_scenarios(text, source="<scenarios>"):
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in SCENARIO_COLUMNS[:10] if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"{source}: missing column(s) {', '.join(missing)}")
    out = []
    for row_no, row in enumerate(reader, start=2):
        vals = {}
        for col in SCENARIO_COLUMNS:
            raw = row.get(col)
            if raw is None or raw == "":
                continue
            try:
                if col == "structure":
                    vals[col] = Structure.parse(raw)
                elif col in ("scenario", "n_policies", "reps"):
                    vals[col] = int(raw)
                else:
                    vals[col] = float(raw)
            except (ValueError, CRMError):
                raise InputParseError(f"{source}: cannot parse {raw!r}", row=row_no, column=col) from None
        blank = [c for c in SCENARIO_COLUMNS[:10] if c not in vals]
        if blank:
            raise SchemaError(f"{source} row {row_no}: empty value(s) for {', '.join(blank)}")
        try:
            out.append(Scenario(
                id=vals["scenario"],
                beta=(vals["beta0"], vals["beta1"], vals["beta2"]),
                gamma=(vals["gamma0"], vals["gamma1"], vals["gamma2"]),
                nu=vals["nu"], rho1=vals["rho1"], rho2=vals["rho2"],
                structure=vals.get("structure", Structure.EQUI),
                n_policies=vals.get("n_policies", 5000),
                reps=vals.get("reps", 500),
            ))
        except CRMError as exc:
            raise SchemaError(f"{source} row {row_no}: {exc}") from None
    return out


def load_scenarios(path=None):
    """Scenarios from a CSV file; the bundled 12-scenario table by default."""
    if path is None:
        text = resources.files("crmcopula").joinpath("data/table1_scenarios.csv").read_text()
        return parse_scenarios(text, "table1_scenarios.csv")
    with open(path, newline="", encoding="utf-8") as f:
        return parse_scenarios(f.read(), str(path))


@dataclass
class StudyReport:
    scenario: Scenario
    names: Tuple[str, ...]
    estimates: np.ndarray  # (reps, p); NaN rows for failed reps
    ok: np.ndarray
    failures: List[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def n_ok(self):
        return int(self.ok.sum())

    @property
    def n_failed(self):
        return int((~self.ok).sum())

    def _good(self):
        return self.estimates[self.ok]

    @property
    def relative_bias(self):
        """Percent relative bias; NaN where the true value is zero."""
        truth = self.scenario.truth
        mean = self._good().mean(axis=0) if self.n_ok else np.full(truth.size, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(truth != 0, 100.0 * (mean - truth) / truth, np.nan)

    @property
    def mse(self):
        if not self.n_ok:
            return np.full(len(self.names), np.nan)
        return np.mean((self._good() - self.scenario.truth) ** 2, axis=0)

    @property
    def mae(self):
        if not self.n_ok:
            return np.full(len(self.names), np.nan)
        return np.mean(np.abs(self._good() - self.scenario.truth), axis=0)


def rep_seed(master_seed, scenario_id, rep):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(scenario_id), int(rep)))
    return int(ss.generate_state(1, np.uint64)[0])


def simulate_replication(scenario, seed, n_policies=None):
    """Covariates and portfolio for one replication."""
    size = scenario.n_policies if n_policies is None else int(n_policies)
    return simulate_regression(scenario.spec(), scenario.truth, size, seed)


def _one_rep(scenario, seed, n_policies, opts):
    data = simulate_replication(scenario, seed, n_policies)
    res = mle_fit(scenario.spec(), data, opts=opts)
    return res


def scenario_study(scenarios, master_seed, reps=None, n_policies=None, opts=None, threads=1, progress=None):
    """Run the simulate-and-refit study for each scenario.

    Replications that raise or do not converge are recorded and left out of
    the aggregates. The result depends only on ``master_seed``.
    """
    opts = opts or FitOptions()
    reports = []
    for sc in scenarios:
        n_reps = sc.reps if reps is None else int(reps)
        t0 = time.perf_counter()
        est = np.full((n_reps, len(PARAM_NAMES)), np.nan)
        ok = np.zeros(n_reps, dtype=bool)
        failures = []

        def work(r):
            try:
                return r, _one_rep(sc, rep_seed(master_seed, sc.id, r), n_policies, opts), None
            except CRMError as exc:
                return r, None, f"{type(exc).__name__}: {exc}"

        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(work, range(n_reps)))
        else:
            results = map(work, range(n_reps))
        for r, res, err in results:
            if res is not None:
                est[r] = res.estimates
                ok[r] = res.converged
                err = None if res.converged else res.message
            if err:
                failures.append(f"rep {r}: {err}")
                log.warning("scenario %s rep %d: %s", sc.id, r, err)
            if progress:
                progress(sc, r)
        reports.append(StudyReport(sc, PARAM_NAMES, est, ok, failures, time.perf_counter() - t0))
    return reports


def report_table(reports, metric):
    """Rows ``{scenario, <param>...}`` for ``metric`` in {'relative_bias', 'mse', 'mae'}."""
    rows = []
    for rep in reports:
        vals = getattr(rep, metric)
        row = {"scenario": rep.scenario.id}
        row.update({n: float(v) for n, v in zip(rep.names, vals)})
        row.update({"reps_ok": rep.n_ok, "reps_failed": rep.n_failed})
        rows.append(row)
    return rows
