"""File formats: policy/claim CSVs, the model config, fit JSON.

Policies CSV: ``policy_id, n, <covariate columns...>``. Claims CSV:
``policy_id, claim_index, y`` with ``claim_index`` running 1..n. Both are
RFC 4180 with a mandatory header row.

The model config is an INI file::

    [frequency]
    family = poisson
    covariates = x1, x2

    [hurdle]
    mode = shared          ; or: separate
    covariates =           ; logit-link covariates when mode = separate

    [severity]
    family = gamma
    covariates = x1, x2

    [copula]
    family = gaussian      ; or: t
    structure = equi       ; or: ar
    df =                   ; fixed degrees of freedom for the t copula
    estimate_df = false

    [optimizer]
    method = auto          ; nelder-mead, quasi-newton-fd
    max_iters = 20000
    f_tol = 1e-9
    x_tol = 1e-8
    hessian_step = 1e-4
    restarts = 3

    [seeds]
    seed = 20190101

Every section and key is optional; the values above are the defaults.
"""

import configparser
import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CRMError, InputParseError, SchemaError
from .fit import FitOptions, FitResult, transform_kinds
from .regression import Portfolio, RegressionSpec

SCHEMA_VERSION = 1
POLICY_KEYS = ("policy_id", "n")
CLAIM_COLUMNS = ("policy_id", "claim_index", "y")


def fmt(x):
    """Full-precision text for a float (shortest round-trip repr)."""
    return repr(float(x))


# --- CSV ------------------------------------------------------------------------------


def _read_csv(path, allow_empty=False):
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f, strict=True)
            rows = list(reader)
    except csv.Error as exc:
        raise InputParseError(f"{path}: {exc}", row=None, column=None) from None
    except UnicodeDecodeError as exc:
        raise InputParseError(f"{path}: not UTF-8 ({exc.reason})") from None
    except OSError as exc:
        raise InputParseError(f"cannot read {path}: {exc.strerror}") from None
    if not rows and allow_empty:
        return None, []
    if not rows:
        raise InputParseError(f"{path}: missing header row", row=1)
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InputParseError(f"{path}: expected {len(header)} fields, found {len(r)}", row=i)
    return header, body


def _num(raw, path, row, col, kind=float):
    try:
        v = kind(raw.strip())
    except ValueError:
        raise InputParseError(f"{path}: cannot parse {raw!r} as {kind.__name__}", row=row, column=col) from None
    if kind is float and not math.isfinite(v):
        raise InputParseError(f"{path}: non-finite value {raw!r}", row=row, column=col)
    return v


def _int(raw, path, row, col):
    v = _num(raw, path, row, col, float)
    if v != int(v):
        raise InputParseError(f"{path}: {raw!r} is not an integer", row=row, column=col)
    return int(v)


def read_policies(path):
    """``(ids, n, covariates)`` from a policies CSV."""
    header, body = _read_csv(path)
    missing = [c for c in POLICY_KEYS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    i_id, i_n = header.index("policy_id"), header.index("n")
    cov_cols = [c for c in header if c not in POLICY_KEYS]
    ids, ns = [], []
    cov = {c: [] for c in cov_cols}
    for row_no, r in enumerate(body, start=2):
        pid = r[i_id].strip()
        if not pid:
            raise InputParseError(f"{path}: empty policy_id", row=row_no, column="policy_id")
        n = _int(r[i_n], path, row_no, "n")
        if n < 0:
            raise SchemaError(f"{path} row {row_no}: negative claim count for policy {pid}")
        ids.append(pid)
        ns.append(n)
        for c in cov_cols:
            cov[c].append(_num(r[header.index(c)], path, row_no, c))
    seen = set()
    for pid in ids:
        if pid in seen:
            raise SchemaError(f"{path}: duplicate policy_id {pid}")
        seen.add(pid)
    return ids, np.array(ns, dtype=np.int64), {c: np.array(v) for c, v in cov.items()}


def read_claims(path):
    """Claim rows ``(policy_id, claim_index, y, row)``; a 0-byte file means no claims."""
    header, body = _read_csv(path, allow_empty=True)
    if header is None:
        return []
    missing = [c for c in CLAIM_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    idx = [header.index(c) for c in CLAIM_COLUMNS]
    out = []
    for row_no, r in enumerate(body, start=2):
        pid = r[idx[0]].strip()
        j = _int(r[idx[1]], path, row_no, "claim_index")
        y = _num(r[idx[2]], path, row_no, "y")
        out.append((pid, j, y, row_no))
    return out


def load_portfolio(policies_path, claims_path):
    """Read and cross-validate the two files into a :class:`Portfolio`."""
    ids, n, cov = read_policies(policies_path)
    claims = read_claims(claims_path) if claims_path is not None else []
    pos = {pid: i for i, pid in enumerate(ids)}
    per = [dict() for _ in ids]
    for pid, j, y, row_no in claims:
        if pid not in pos:
            raise SchemaError(f"{claims_path} row {row_no}: unknown policy_id {pid}")
        if not y > 0:
            raise SchemaError(f"{claims_path} row {row_no}: severity must be positive (policy {pid})")
        d = per[pos[pid]]
        if j in d:
            raise SchemaError(f"{claims_path} row {row_no}: duplicate claim_index {j} for policy {pid}")
        d[j] = y
    ys = []
    for i, pid in enumerate(ids):
        d = per[i]
        if sorted(d) != list(range(1, n[i] + 1)):
            raise SchemaError(
                f"policy {pid}: n={n[i]} but claim_index values are {sorted(d)[:10]}"
                + (" ..." if len(d) > 10 else "")
            )
        ys.extend(d[j] for j in range(1, n[i] + 1))
    return Portfolio(ids, n, np.array(ys, dtype=float), cov)


def write_policies(path, ids, n, covariates):
    names = list(covariates)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["policy_id", "n", *names])
        for i, pid in enumerate(ids):
            w.writerow([pid, int(n[i]), *(fmt(covariates[c][i]) for c in names)])


def write_claims(path, ids, n, y):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(CLAIM_COLUMNS)
        o = 0
        for i, pid in enumerate(ids):
            for j in range(int(n[i])):
                w.writerow([pid, j + 1, fmt(y[o + j])])
            o += int(n[i])


def write_rows(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def read_table(path, required=()):
    """Generic numeric-with-label table: returns (header, list of dict rows)."""
    header, body = _read_csv(path)
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    return header, [dict(zip(header, r)) for r in body]


# --- config -------------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    spec: RegressionSpec
    options: FitOptions
    seed: Optional[int] = None


def _list(raw):
    return tuple(c.strip() for c in raw.replace(";", ",").split(",") if c.strip())


def parse_config(text, source="<config>"):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise InputParseError(f"{source}: {exc.message if hasattr(exc, 'message') else exc}", row=line) from None

    def get(sec, key, default):
        return cp.get(sec, key, fallback=default).strip() if cp.has_section(sec) else default

    known = {"frequency", "hurdle", "severity", "copula", "optimizer", "seeds"}
    extra = set(cp.sections()) - known
    if extra:
        raise SchemaError(f"{source}: unknown section(s) {sorted(extra)}")
    if get("frequency", "family", "poisson").lower() != "poisson":
        raise SchemaError(f"{source}: only the poisson frequency family is supported")
    if get("severity", "family", "gamma").lower() != "gamma":
        raise SchemaError(f"{source}: only the gamma severity family is supported")
    try:
        df_raw = get("copula", "df", "")
        spec = RegressionSpec(
            freq_covariates=_list(get("frequency", "covariates", "")),
            sev_covariates=_list(get("severity", "covariates", "")),
            hurdle=get("hurdle", "mode", "shared").lower(),
            hurdle_covariates=_list(get("hurdle", "covariates", "")),
            structure=get("copula", "structure", "equi"),
            family=get("copula", "family", "gaussian"),
            df=float(df_raw) if df_raw else None,
            estimate_df=get("copula", "estimate_df", "false").lower() in ("1", "true", "yes", "on"),
        )
        opts = FitOptions(
            max_iters=int(get("optimizer", "max_iters", "20000")),
            f_tol=float(get("optimizer", "f_tol", "1e-9")),
            x_tol=float(get("optimizer", "x_tol", "1e-8")),
            hessian_step=float(get("optimizer", "hessian_step", "1e-4")),
            optimizer=get("optimizer", "method", "auto"),
            restarts=int(get("optimizer", "restarts", "3")),
        )
        seed_raw = get("seeds", "seed", "")
        seed = int(seed_raw) if seed_raw else None
    except CRMError as exc:
        raise SchemaError(f"{source}: {exc}") from None
    except ValueError as exc:
        raise InputParseError(f"{source}: {exc}") from None
    return ModelConfig(spec, opts, seed)


def read_config(path):
    if path is None:
        return parse_config("")
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config(f.read(), str(path))
    except OSError as exc:
        raise InputParseError(f"cannot read config {path}: {exc.strerror}") from None


def spec_to_dict(spec):
    return {
        "frequency": {"family": "poisson", "link": "log", "covariates": list(spec.freq_covariates)},
        "hurdle": {"mode": spec.hurdle, "covariates": list(spec.hurdle_covariates)},
        "severity": {"family": "gamma", "link": "log", "covariates": list(spec.sev_covariates)},
        "copula": {"family": spec.family, "structure": spec.structure.value, "df": spec.df,
                   "estimate_df": spec.estimate_df},
    }


def spec_from_dict(d):
    try:
        return RegressionSpec(
            freq_covariates=tuple(d["frequency"]["covariates"]),
            sev_covariates=tuple(d["severity"]["covariates"]),
            hurdle=d["hurdle"]["mode"],
            hurdle_covariates=tuple(d["hurdle"].get("covariates", ())),
            structure=d["copula"]["structure"],
            family=d["copula"]["family"],
            df=d["copula"].get("df"),
            estimate_df=bool(d["copula"].get("estimate_df", False)),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"model description is incomplete: missing {exc}") from None
    except CRMError as exc:
        raise SchemaError(str(exc)) from None


# --- fit JSON --------------------------------------------------------------------------------


def _num_or_none(x):
    return None if x is None or not math.isfinite(float(x)) else float(x)


def fit_to_dict(spec, res: FitResult):
    full_spec = spec
    rows = []
    labels = {}
    for block, names, covs in full_spec.blocks():
        for name, cov in zip(names, covs):
            labels[name] = (block, cov)
    for name in full_spec.names():
        block, cov = labels[name]
        entry = {"name": name, "block": block, "covariate": cov}
        if name in res.names:
            i = res.names.index(name)
            entry.update({
                "estimate": float(res.estimates[i]),
                "se": None if res.se is None else _num_or_none(res.se[i]),
                "ci_lower": None if res.ci_lower is None else float(res.ci_lower[i]),
                "ci_upper": None if res.ci_upper is None else float(res.ci_upper[i]),
                "transform": res.transforms[name],
                "fixed": name in res.fixed,
                "absent": False,
            })
        else:
            entry.update({"estimate": None, "se": None, "ci_lower": None, "ci_upper": None,
                          "transform": None, "fixed": False, "absent": True})
        rows.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "model": spec_to_dict(full_spec),
        "parameters": rows,
        "loglik": float(res.loglik),
        "iterations": int(res.iterations),
        "evaluations": int(res.evaluations),
        "converged": bool(res.converged),
        "message": res.message,
        "n_policies": int(res.n_policies),
        "n_claims": int(res.n_claims),
        "ci_level": 0.95,
    }


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, allow_nan=False)
        f.write("\n")


def read_fit(path):
    """``(spec, theta)`` from a fit JSON; every parameter must be present."""
    try:
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"{path}: invalid JSON ({exc.msg})", row=exc.lineno, column=exc.colno) from None
    except OSError as exc:
        raise InputParseError(f"cannot read {path}: {exc.strerror}") from None
    if not isinstance(d, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported schema_version {d.get('schema_version')!r}")
    spec = spec_from_dict(d.get("model", {}))
    values = {p["name"]: p.get("estimate") for p in d.get("parameters", [])}
    missing = [n for n in spec.names() if values.get(n) is None]
    if missing:
        raise SchemaError(f"{path}: no estimate for {', '.join(missing)}")
    return spec, np.array([float(values[n]) for n in spec.names()])


def params_document(spec, theta):
    """A fit-JSON-shaped document holding known parameter values (no SEs)."""
    names = spec.names()
    res = FitResult(names=names, estimates=np.asarray(theta, dtype=float), se=None, ci_lower=None,
                    ci_upper=None, loglik=float("nan"), iterations=0, evaluations=0, converged=True,
                    transforms=transform_kinds(spec))
    doc = fit_to_dict(spec, res)
    doc["loglik"] = None
    doc["message"] = "parameter values supplied, not estimated"
    return doc

