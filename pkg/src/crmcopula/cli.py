"""Command-line interface.

Exit codes: 0 success, 2 unparseable input, 3 input that parses but violates
the schema or parameter domain, 4 fit did not converge (result still
written, flagged).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .analytics import kernel, risk, scenarios
from .errors import CRMError, InputParseError, NonConvergence, SchemaError
from .fit import mle_fit
from .regression import Portfolio, linear_parameters, simulate_regression

EXIT_OK, EXIT_PARSE, EXIT_SCHEMA, EXIT_NONCONV = 0, 2, 3, 4

log = logging.getLogger("crmcopula")


def _seed(args, cfg=None):
    if args.seed is not None:
        return args.seed
    if cfg is not None and cfg.seed is not None:
        return cfg.seed
    return 0


# --- commands ------------------------------------------------------------------------


def cmd_fit(args):
    cfg = io.read_config(args.config)
    data = io.load_portfolio(args.policies, args.claims)
    missing = [c for c in cfg.spec.covariates() if c not in data.covariates]
    if missing:
        raise SchemaError(f"policies file lacks covariate column(s): {', '.join(missing)}")
    log.info("fitting %d policies with %d claims", len(data), data.n_claims)
    res = mle_fit(cfg.spec, data, opts=cfg.options)
    io.write_json(args.out, io.fit_to_dict(cfg.spec, res))
    log.info("log-likelihood %.6f, converged=%s", res.loglik, res.converged)
    if not res.converged:
        log.warning("fit did not converge: %s", res.message)
        return EXIT_NONCONV
    return EXIT_OK


def _load_params(args):
    """``(spec, theta)`` from --scenario, or --params (fit JSON or flat name/value JSON)."""
    if args.scenario is not None:
        table = scenarios.load_scenarios(args.scenarios)
        match = [s for s in table if s.id == args.scenario]
        if not match:
            raise SchemaError(f"no scenario with id {args.scenario}")
        return match[0].spec(), match[0].truth
    if args.params is None:
        raise SchemaError("simulate needs --params or --scenario")
    try:
        with open(args.params, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"{args.params}: invalid JSON ({exc.msg})", row=exc.lineno, column=exc.colno) from None
    except OSError as exc:
        raise InputParseError(f"cannot read {args.params}: {exc.strerror}") from None
    if isinstance(doc, dict) and "schema_version" in doc:
        return io.read_fit(args.params)
    spec = io.read_config(args.config).spec
    if not isinstance(doc, dict):
        raise SchemaError(f"{args.params}: expected a JSON object of parameter values")
    missing = [n for n in spec.names() if n not in doc]
    if missing:
        raise SchemaError(f"{args.params}: missing parameter(s) {', '.join(missing)}")
    try:
        theta = np.array([float(doc[n]) for n in spec.names()])
    except (TypeError, ValueError):
        raise SchemaError(f"{args.params}: parameter values must be numbers") from None
    return spec, theta


def cmd_simulate(args):
    spec, theta = _load_params(args)
    seed = _seed(args, io.read_config(args.config) if args.config else None)
    spec.copula_family(theta)  # validates the dependence parameters
    if args.n_policies < 0:
        raise SchemaError("--n-policies must be non-negative")
    data = simulate_regression(spec, theta, args.n_policies, seed, threads=args.threads)
    io.write_policies(args.out_policies, data.ids, data.n, data.covariates)
    io.write_claims(args.out_claims, data.ids, data.n, data.y)
    if args.out_params:
        io.write_json(args.out_params, io.params_document(spec, theta))
    log.info("wrote %d policies and %d claims", len(data), data.n_claims)
    return EXIT_OK


def cmd_scenario_study(args):
    table = scenarios.load_scenarios(args.scenarios)
    if args.ids:
        wanted = {int(x) for x in args.ids.split(",") if x.strip()}
        table = [s for s in table if s.id in wanted]
        if not table:
            raise SchemaError("no scenarios match --ids")

    def progress(sc, r):
        log.info("scenario %s: rep %d done", sc.id, r + 1)

    reports = scenarios.scenario_study(table, args.seed if args.seed is not None else 0, reps=args.reps,
                                       n_policies=args.n_policies, threads=args.threads, progress=progress)
    rows = []
    for metric in ("relative_bias", "mse", "mae"):
        for row in scenarios.report_table(reports, metric):
            rows.append({"metric": metric, **row})
    cols = ["metric", "scenario", *scenarios.PARAM_NAMES, "reps_ok", "reps_failed"]
    io.write_rows(args.out, rows, cols)
    if args.estimates:
        est_rows = []
        for rep in reports:
            for r in range(rep.estimates.shape[0]):
                est_rows.append({"scenario": rep.scenario.id, "rep": r, "ok": int(rep.ok[r]),
                                 **{n: float(v) for n, v in zip(rep.names, rep.estimates[r])}})
        io.write_rows(args.estimates, est_rows, ["scenario", "rep", "ok", *scenarios.PARAM_NAMES])
    for rep in reports:
        if rep.n_failed:
            log.warning("scenario %s: %d of %d reps failed", rep.scenario.id, rep.n_failed, rep.estimates.shape[0])
    return EXIT_OK


def _covariate_table(path, spec, label_col=None):
    required = ["policy_id"] if label_col is None else [label_col]
    header, rows = io.read_table(path, required=required)
    missing = [c for c in spec.covariates() if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing covariate column(s) {', '.join(missing)} used by the fit")
    labels = [r[required[0]].strip() for r in rows]
    cov = {}
    for c in spec.covariates():
        vals = []
        for i, r in enumerate(rows, start=2):
            try:
                vals.append(float(r[c]))
            except ValueError:
                raise InputParseError(f"{path}: cannot parse {r[c]!r}", row=i, column=c) from None
        cov[c] = np.array(vals)
    return labels, cov


def cmd_risk(args):
    spec, theta = io.read_fit(args.fit)
    labels, cov = _covariate_table(args.groups, spec, label_col="group")
    groups = [(g, spec.policy_params(theta, {c: cov[c][i] for c in cov})) for i, g in enumerate(labels)]
    rep = risk.risk_measures(groups, alpha=args.alpha, draws=args.draws, seed=_seed(args), threads=args.threads)
    io.write_rows(args.out, rep.as_rows(), ["group", "ES", "VaR", "ES_se", "VaR_se", "alpha", "draws"])
    return EXIT_OK


def cmd_predictive(args):
    spec, theta = io.read_fit(args.fit)
    labels, cov = _covariate_table(args.policies, spec)
    if not labels:
        raise SchemaError(f"{args.policies}: no policies")
    shell = Portfolio(labels, np.zeros(len(labels), dtype=np.int64), np.zeros(0), cov)
    p, lam, xi = linear_parameters(spec, theta, shell)
    u = spec.unpack(theta)
    pred = risk.portfolio_predictive(p, lam, xi, u["nu"], spec.copula_family(theta), draws=args.draws,
                                     seed=_seed(args), threads=args.threads)
    io.write_rows(args.out, [{"draw": i, "total": float(t)} for i, t in enumerate(pred.total)], ["draw", "total"])
    summary = args.summary or str(Path(args.out).with_suffix(".summary.json"))
    io.write_json(summary, {
        "draws": int(args.draws), "n_policies": len(labels), "seed": _seed(args),
        "mean": pred.mean, "mean_se": pred.mean_se, "variance": pred.variance,
        "lower_2.5": pred.lower, "upper_97.5": pred.upper,
    })
    return EXIT_OK


def cmd_kernel_demo(args):
    g = kernel.kernel_copula_demo(lam=args.lam, xi=args.xi, nu=args.nu, sample_size=args.n, grid=args.grid,
                                  bandwidth=args.bandwidth, seed=_seed(args))
    io.write_rows(args.out, [{"u1": float(a), "u2": float(b), "density": float(d)} for a, b, d in g.rows()],
                  ["u1", "u2", "density"])
    log.info("grid integral %.6f", g.integral())
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--quiet", action="store_true", help="only report errors")


def build_parser():
    ap = argparse.ArgumentParser(prog="crm-copula", description="Copula-based dependent collective risk models")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="maximum-likelihood fit of policies + claims")
    p.add_argument("--policies", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate a portfolio into policies/claims CSVs")
    p.add_argument("--config", default=None)
    p.add_argument("--params", default=None, help="fit JSON, or a JSON object of parameter values")
    p.add_argument("--scenario", type=int, default=None, help="take parameters from a scenario table row")
    p.add_argument("--scenarios", default=None, help="scenario CSV (bundled table by default)")
    p.add_argument("--n-policies", type=int, default=5000)
    p.add_argument("--out-policies", required=True)
    p.add_argument("--out-claims", required=True)
    p.add_argument("--out-params", default=None, help="also write the true parameters as a fit-style JSON")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenario-study", help="repeated simulate-and-refit study")
    p.add_argument("--scenarios", default=None, help="scenario CSV (bundled table by default)")
    p.add_argument("--ids", default=None, help="comma-separated scenario ids to run")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--n-policies", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--estimates", default=None, help="optional CSV of per-rep estimates")
    _common(p)
    p.set_defaults(func=cmd_scenario_study)

    p = sub.add_parser("risk", help="E[S] and VaR per risk group")
    p.add_argument("--fit", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--alpha", type=float, default=0.995)
    p.add_argument("--draws", type=int, default=5000)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("predictive", help="predictive distribution of the portfolio total loss")
    p.add_argument("--fit", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--draws", type=int, default=5000)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", default=None)
    _common(p)
    p.set_defaults(func=cmd_predictive)

    p = sub.add_parser("kernel-demo", help="kernel copula density of (jittered N, M)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_kernel_demo)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s: %(message)s",
                        stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except InputParseError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except NonConvergence as exc:
        log.error("%s", exc)
        return EXIT_NONCONV
    except CRMError as exc:
        log.error("%s", exc)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
