"""Command-line interface: ``ccep estimate | simulate | mc | compare``.

Every subcommand accepts ``--config path.json``; keys in the file use the
long flag names (``data``, ``proxy``, ``ci``, ...) and explicit flags win.
Exit codes: 0 success, 2 data error, 3 rank or period-count error,
4 configuration or usage error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dgp import DgpConfig, generate, preset, preset_estimator, presets
from .errors import (CcepError, DimensionMismatch, InvalidConfig, PanelError, RankDeficient,
                     TooFewPeriods)
from .estimator import EstimatorSpec, ccep_fit, compare_specs
from .montecarlo import McConfig, McReport, run, write_dump
from .panel import CsvSchema, PanelDataset, load_csv, write_csv
from .proxy import Intercept, MeanProduct, MeanX, MeanY, ProxySpec, Trend
from .variance import estimate_variance

EXIT_OK, EXIT_DATA, EXIT_RANK, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4, 5


class UsageError(InvalidConfig):
    """Bad command line."""


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PanelError):
        return EXIT_DATA
    if isinstance(exc, (RankDeficient, TooFewPeriods, DimensionMismatch)):
        return EXIT_RANK
    if isinstance(exc, (InvalidConfig, ValueError)):
        return EXIT_CONFIG
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1


# -- spec parsing --------------------------------------------------------------


def parse_proxy(text: str) -> ProxySpec:
    """``const,trend:2,mean_x,mean_y,prod:1,2`` -> ProxySpec (1-based ``prod`` indices)."""
    raw = [t.strip() for t in str(text).split(",") if t.strip()]
    tokens: list[str] = []
    for tok in raw:
        # "prod:1,2" arrives split at the comma
        if tok.lstrip("-").isdigit() and tokens and tokens[-1].startswith("prod:") \
                and tokens[-1].count(":") == 1:
            tokens[-1] = f"{tokens[-1]}:{tok}"
        else:
            tokens.append(tok)
    cols = []
    for tok in tokens:
        low = tok.lower()
        if low in ("const", "intercept", "1"):
            cols.append(Intercept())
        elif low == "trend" or low.startswith("trend:"):
            try:
                cols.append(Trend(int(low.split(":", 1)[1]) if ":" in low else 1))
            except ValueError:
                raise InvalidConfig(f"bad trend token {tok!r}; use trend:p") from None
        elif low == "mean_x":
            cols.append(MeanX())
        elif low == "mean_y":
            cols.append(MeanY())
        elif low.startswith("prod:"):
            parts = low.split(":")[1:]
            if len(parts) != 2:
                raise InvalidConfig(f"bad product token {tok!r}; use prod:j,l")
            try:
                j, l = (int(v) for v in parts)
            except ValueError:
                raise InvalidConfig(f"bad product token {tok!r}; use prod:j,l") from None
            if j < 1 or l < 1:
                raise InvalidConfig("prod indices are 1-based")
            cols.append(MeanProduct(j - 1, l - 1))
        else:
            raise InvalidConfig(f"unknown proxy token {tok!r} "
                                "(expected const, trend:p, mean_x, mean_y or prod:j,l)")
    if not cols:
        raise InvalidConfig("empty proxy list")
    return ProxySpec(tuple(cols))


def _read_matrix_csv(path: str) -> list[list[float]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if i == 0 and not rows:  # header
                    continue
                raise InvalidConfig(f"{path}: non-numeric entry on line {i + 1}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise InvalidConfig(f"{path}: D file must be a rectangular numeric table")
    return rows


def parse_det(text):
    """``time_dummies`` | ``trend:p`` | ``file:path`` | explicit nested list | None."""
    if text is None or isinstance(text, (list, tuple)):
        return text
    if isinstance(text, dict):
        return text.get("values")
    t = str(text).strip()
    if not t or t.lower() == "none":
        return None
    if t.startswith("file:"):
        return _read_matrix_csv(t[5:])
    if t == "time_dummies" or t == "trend" or t.startswith("trend:"):
        return t
    raise InvalidConfig(f"unknown --det value {t!r} (expected time_dummies, trend:p or file:path)")


def parse_estimator(text: str, det=None) -> EstimatorSpec:
    """A preset name (``CCEP_X``) or proxy tokens, optionally ``@det``."""
    body, _, det_part = str(text).partition("@")
    body = body.strip()
    if det_part:
        det = parse_det(det_part)
    try:
        return EstimatorSpec.preset(body, det)
    except InvalidConfig:
        pass
    label = body + (f"@{det_part.strip()}" if det_part else "")
    return EstimatorSpec(parse_proxy(body), det, label)


# -- result document -----------------------------------------------------------


def _f(x) -> list:
    return [float(v) for v in np.ravel(x)]


@dataclass
class EstimationReport:
    """Machine-readable estimation output; ``from_dict(to_dict())`` is lossless."""

    estimator: EstimatorSpec
    regressors: list
    N: int
    T: int
    beta_hat: list
    alpha_hat: list
    se_corrected: list
    se_naive: list
    ci_level: float
    ci_lower: list
    ci_upper: list
    ci_lower_naive: list
    ci_upper_naive: list
    avar_corrected: list
    avar_naive: list
    proxy_columns: list
    diagnostics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @classmethod
    def build(cls, ds: PanelDataset, spec: EstimatorSpec, ci: float, *, dof_correction=False,
              jobs: int = 1) -> "EstimationReport":
        fit = ccep_fit(ds, spec, jobs=jobs)
        var = estimate_variance(ds, fit, ci_level=ci, dof_correction=dof_correction)
        diag = {
            "condition_psi": float(fit.diagnostics["condition_psi"]),
            "condition_xdd": float(fit.diagnostics["condition_xdd"]),
            "rank_xdd": int(fit.diagnostics["rank_xdd"]),
            "r": fit.r,
            "m": fit.m,
            "alpha_numeric": _f(fit.diagnostics["alpha_numeric"]),
            "notes": list(fit.diagnostics["notes"]),
            "z": var.z,
        }
        return cls(spec, list(ds.regressor_names), ds.N, ds.T, _f(fit.beta_hat), _f(fit.alpha_hat),
                   _f(var.se_corrected), _f(var.se_naive), ci, _f(var.ci_lower), _f(var.ci_upper),
                   _f(var.ci_lower_naive), _f(var.ci_upper_naive),
                   var.avar_corrected.tolist(), var.avar_naive.tolist(),
                   list(fit.proxy.column_labels), diag, list(var.flags))

    def to_dict(self) -> dict:
        d = dict(vars(self))
        d["estimator"] = self.estimator.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimationReport":
        d = dict(d)
        d["estimator"] = EstimatorSpec.from_dict(d["estimator"])
        return cls(**d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "estimate", "se_corrected", "se_naive", "ci_lower", "ci_upper",
                    "ci_lower_naive", "ci_upper_naive"])
        for j, name in enumerate(self.regressors):
            w.writerow([name, repr(self.beta_hat[j]), repr(self.se_corrected[j]),
                        repr(self.se_naive[j]), repr(self.ci_lower[j]), repr(self.ci_upper[j]),
                        repr(self.ci_lower_naive[j]), repr(self.ci_upper_naive[j])])
        for j, a in enumerate(self.alpha_hat):
            w.writerow([f"alpha{j + 1}", repr(a), "", "", "", "", "", ""])
        return buf.getvalue()

    def to_table(self) -> str:
        lvl = f"{100 * self.ci_level:g}%"
        lines = [f"CCEP estimate: N={self.N}, T={self.T}, proxy [{', '.join(self.proxy_columns)}]",
                 f"{'term':<12}{'estimate':>14}{'se(corr)':>14}{'se(naive)':>14}"
                 f"{lvl + ' lower':>14}{lvl + ' upper':>14}"]
        for j, name in enumerate(self.regressors):
            lines.append(f"{name[:11]:<12}{_sig6(self.beta_hat[j]):>14}{_sig6(self.se_corrected[j]):>14}"
                         f"{_sig6(self.se_naive[j]):>14}{_sig6(self.ci_lower[j]):>14}"
                         f"{_sig6(self.ci_upper[j]):>14}")
        for j, a in enumerate(self.alpha_hat):
            lines.append(f"{'alpha' + str(j + 1):<12}{_sig6(a):>14}")
        lines.append(f"condition(Psi_hat) = {_sig6(self.diagnostics['condition_psi'])}, "
                     f"condition(Xdd) = {_sig6(self.diagnostics['condition_xdd'])}")
        for note in self.diagnostics.get("notes", []) + self.flags:
            lines.append(f"note: {note}")
        return "\n".join(lines)


def _sig6(x) -> str:
    x = float(x)
    return f"{x:.6g}" if math.isfinite(x) else str(x)


# -- argument handling ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # unknown flags etc. are configuration errors
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default values for any long flag")
    p.add_argument("--seed", type=int, help="random seed (simulate, mc)")
    p.add_argument("--jobs", type=int, help="worker count; results do not depend on it")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--format", choices=("json", "csv", "table"), help="output format")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="long-format CSV panel")
    p.add_argument("--unit", help="unit id column (default 'unit')")
    p.add_argument("--time", help="period column (default 'time')")
    p.add_argument("--y", help="outcome column (default 'y')")
    p.add_argument("--x", help="comma list of regressor columns (default x1, x2, ...)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ccep", description="Extended CCEP estimation for short panels.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate slopes and standard errors from a CSV panel")
    _add_data(p)
    p.add_argument("--proxy", help="comma list of const|trend:p|mean_x|mean_y|prod:j,l (default mean_x)")
    p.add_argument("--det", help="aggregate regressors: time_dummies | trend:p | file:path")
    p.add_argument("--ci", type=float, help="confidence level (default 0.95)")
    p.add_argument("--dof-correction", action="store_true", default=None,
                   help="scale B by N/(N-k-r)")
    _add_common(p)

    p = sub.add_parser("simulate", help="draw a panel from a DGP preset or config")
    p.add_argument("--preset", help=f"DGP preset: {', '.join(sorted(presets()))}")
    p.add_argument("--n", type=int, help="number of units (default 200)")
    p.add_argument("--truth", help="path for the truth JSON (default <out>.truth.json)")
    _add_common(p)

    p = sub.add_parser("mc", help="run a Monte Carlo study")
    p.add_argument("--preset", help="DGP preset name")
    p.add_argument("--estimator", action="append",
                   help="estimator preset (e.g. CCEP_X) or proxy list, optionally PROXY@DET; repeatable")
    p.add_argument("--det", help="aggregate regressors applied to every --estimator")
    p.add_argument("--n", type=int, help="units per replication (default 500)")
    p.add_argument("--reps", type=int, help="replications (default 100)")
    p.add_argument("--ci", type=float, help="confidence level (default 0.95)")
    p.add_argument("--efficiency", help="two labels SMALLER,LARGER for the variance comparison")
    p.add_argument("--dump", help="per-replication CSV path")
    _add_common(p)

    p = sub.add_parser("compare", help="fit several specifications on one dataset")
    _add_data(p)
    p.add_argument("--spec", action="append",
                   help="PROXY or PROXY@DET, e.g. mean_x@trend:1; repeatable")
    _add_common(p)
    return parser


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise InvalidConfig(f"{path}: top level must be an object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    cfg = _load_config(getattr(args, "config", None))
    out = dict(defaults)
    out.update(cfg)
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config"):
            out[k] = v
    return out


def _schema(o: dict) -> CsvSchema:
    base = o.get("schema") or {}
    return CsvSchema.from_mapping({
        "unit": o.get("unit") or base.get("unit", "unit"),
        "time": o.get("time") or base.get("time", "time"),
        "y": o.get("y") or base.get("y", "y"),
        "x": o.get("x") if o.get("x") is not None else base.get("x"),
    })


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True)


def _need_data(o: dict) -> str:
    path = o.get("data")
    if not path:
        raise UsageError("--data is required")
    if not Path(path).is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    return path


# -- subcommands ---------------------------------------------------------------


def cmd_estimate(args: argparse.Namespace) -> int:
    o = _merged(args, {"proxy": "mean_x", "ci": 0.95, "format": "json", "jobs": 1,
                       "dof_correction": False})
    path = _need_data(o)
    if isinstance(o.get("estimator"), dict) and args.proxy is None and args.det is None:
        spec = EstimatorSpec.from_dict(o["estimator"])
    else:
        spec = EstimatorSpec(parse_proxy(o["proxy"]), parse_det(o.get("det")))
    ds = load_csv(path, _schema(o))
    rep = EstimationReport.build(ds, spec, float(o["ci"]), dof_correction=bool(o["dof_correction"]),
                                 jobs=int(o["jobs"]))
    fmt = o["format"]
    text = _dumps(rep.to_dict()) if fmt == "json" else rep.to_csv() if fmt == "csv" else rep.to_table()
    _emit(text, o.get("out"))
    return EXIT_OK


def _dgp_from(o: dict) -> tuple[DgpConfig, str | None]:
    if o.get("preset"):
        return preset(o["preset"]), o["preset"]
    dgp = o.get("dgp")
    if isinstance(dgp, str):
        return preset(dgp), dgp
    if isinstance(dgp, dict):
        return DgpConfig.from_dict(dgp), None
    raise UsageError("a DGP is required: --preset NAME or a 'dgp' entry in --config")


def cmd_simulate(args: argparse.Namespace) -> int:
    o = _merged(args, {"n": 200, "jobs": 1})
    cfg, _ = _dgp_from(o)
    out = o.get("out")
    if not out:
        raise UsageError("--out is required for simulate")
    seed = int(o["seed"]) if o.get("seed") is not None else cfg.seed
    ds, truth = generate(cfg, int(o["n"]), seed, jobs=int(o["jobs"]))
    write_csv(ds, out)
    truth_path = o.get("truth") or str(Path(out).with_suffix("")) + ".truth.json"
    doc = {"dgp": cfg.to_dict(), "N": ds.N, "seed": seed, "truth": truth.to_dict()}
    Path(truth_path).write_text(_dumps(doc) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_mc(args: argparse.Namespace) -> int:
    o = _merged(args, {"n": 500, "reps": 100, "ci": 0.95, "seed": 0, "jobs": 1, "format": "json"})
    cfg, name = _dgp_from(o)
    det = parse_det(o.get("det"))
    est_in = o.get("estimator") or o.get("estimators")
    if not est_in:
        if name is None:
            raise UsageError("--estimator is required when the DGP is not a preset")
        specs = [preset_estimator(name)]
    else:
        specs = [EstimatorSpec.from_dict(e) if isinstance(e, dict) else parse_estimator(e, det)
                 for e in ([est_in] if isinstance(est_in, (str, dict)) else est_in)]
    eff = o.get("efficiency")
    if isinstance(eff, str):
        eff = tuple(s.strip() for s in eff.split(","))
    mc = McConfig(cfg, tuple(specs), int(o["n"]), int(o["reps"]), float(o["ci"]), int(o["seed"]),
                  int(o["jobs"]), eff)
    report = run(mc)
    if o.get("dump"):
        write_dump(report, o["dump"])
    fmt = o["format"]
    if fmt == "table":
        text = report.to_text()
    elif fmt == "csv":
        text = _mc_csv(report)
    else:
        text = report.to_json()
    _emit(text, o.get("out"))
    return EXIT_OK


def _mc_csv(report: McReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(vars(next(iter(report.summaries.values())).coefficients[0]))
    w.writerow(["estimator", "coef", "reps_used", *names])
    for label, s in report.summaries.items():
        for j, c in enumerate(s.coefficients):
            w.writerow([label, j + 1, s.reps_used, *(repr(float(v)) for v in vars(c).values())])
    return buf.getvalue()


def cmd_compare(args: argparse.Namespace) -> int:
    o = _merged(args, {"format": "table", "jobs": 1})
    path = _need_data(o)
    raw = o.get("spec") or o.get("specs")
    if not raw:
        raise UsageError("at least one --spec is required")
    specs = [EstimatorSpec.from_dict(s) if isinstance(s, dict) else parse_estimator(s)
             for s in ([raw] if isinstance(raw, (str, dict)) else raw)]
    ds = load_csv(path, _schema(o))
    rows = compare_specs(ds, specs, jobs=int(o["jobs"]))
    fmt = o["format"]
    if fmt == "json":
        text = _dumps({"regressors": list(ds.regressor_names), "rows": [
            {"label": r.label, "beta_hat": None if r.beta_hat is None else _f(r.beta_hat),
             "alpha_hat": None if r.alpha_hat is None else _f(r.alpha_hat), "flags": r.flags}
            for r in rows]})
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["spec", *ds.regressor_names, "flags"])
        for r in rows:
            vals = [repr(float(v)) for v in r.beta_hat] if r.ok else [""] * ds.k
            w.writerow([r.label, *vals, "; ".join(r.flags)])
        text = buf.getvalue()
    else:
        width = max(12, max(len(r.label) for r in rows) + 2)
        lines = [f"{'spec':<{width}}" + "".join(f"{n[:13]:>14}" for n in ds.regressor_names) + "  flags"]
        for r in rows:
            vals = [_sig6(v) for v in r.beta_hat] if r.ok else ["-"] * ds.k
            lines.append(f"{r.label:<{width}}" + "".join(f"{v:>14}" for v in vals)
                         + ("  " + "; ".join(r.flags) if r.flags else ""))
        text = "\n".join(lines)
    _emit(text, o.get("out"))
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "mc": cmd_mc, "compare": cmd_compare}


def _report_error(exc: BaseException, code: int) -> None:
    kinds = exc.kinds if isinstance(exc, CcepError) else [type(exc).__name__]
    doc = {"error": kinds[0] if kinds else type(exc).__name__, "kinds": kinds,
           "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(doc) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_CONFIG
        return COMMANDS[args.command](args)
    except (CcepError, OSError, ValueError) as exc:
        code = exit_code_for(exc)
        _report_error(exc, code)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
