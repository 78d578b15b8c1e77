"""Replication engine: generate, fit and infer ``reps`` times, then summarize.

Replication ``r`` uses the seed ``rep_seed(master_seed, r)``; work is split
into contiguous replication ranges whose results are merged in replication
order, so the report does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dgp import DgpConfig, generate
from .errors import CcepError, InvalidConfig
from .estimator import EstimatorSpec, ccep_fit
from .variance import estimate_variance


def rep_seed(master_seed: int, rep: int) -> int:
    """64-bit seed of replication ``rep``: first word of ``SeedSequence([master_seed, rep])``."""
    return int(np.random.SeedSequence([int(master_seed), int(rep)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class McConfig:
    dgp: DgpConfig
    estimators: tuple
    N: int
    reps: int
    ci_level: float = 0.95
    master_seed: int = 0
    workers: int = 1
    efficiency_pair: tuple | None = None  # (label of CCEP(X-bar), label of CCEP(X-bar, y-bar))
    dof_correction: bool = False
    keep_reps: bool = True

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.efficiency_pair is not None:
            object.__setattr__(self, "efficiency_pair", tuple(self.efficiency_pair))
        self.validate()

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.estimators]

    def validate(self) -> None:
        if int(self.reps) < 1:
            raise InvalidConfig("reps must be >= 1")
        if int(self.N) < 2:
            raise InvalidConfig("N must be >= 2")
        if int(self.workers) < 1:
            raise InvalidConfig("workers must be >= 1")
        if not 0.0 < float(self.ci_level) < 1.0:
            raise InvalidConfig("ci_level must lie in (0, 1)")
        if not self.estimators:
            raise InvalidConfig("at least one estimator is required")
        if not all(isinstance(e, EstimatorSpec) for e in self.estimators):
            raise InvalidConfig("estimators must be EstimatorSpec instances")
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise InvalidConfig(f"estimator labels must be unique: {labels}")
        if self.efficiency_pair is not None:
            if len(self.efficiency_pair) != 2 or any(l not in labels for l in self.efficiency_pair):
                raise InvalidConfig("efficiency_pair must name two estimator labels")

    def to_dict(self) -> dict:
        return {
            "dgp": self.dgp.to_dict(),
            "estimators": [e.to_dict() for e in self.estimators],
            "N": self.N, "reps": self.reps, "ci_level": self.ci_level,
            "master_seed": self.master_seed, "workers": self.workers,
            "efficiency_pair": list(self.efficiency_pair) if self.efficiency_pair else None,
            "dof_correction": self.dof_correction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        from .dgp import preset
        d = dict(d)
        dgp = d.pop("dgp")
        if isinstance(dgp, str):
            dgp = preset(dgp)
        elif isinstance(dgp, dict):
            dgp = DgpConfig.from_dict(dgp)
        ests = [EstimatorSpec.from_dict(e) for e in d.pop("estimators", [])]
        known = {"N", "reps", "ci_level", "master_seed", "workers", "efficiency_pair",
                 "dof_correction", "keep_reps"}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown McConfig keys: {sorted(unknown)}")
        if "N" not in d or "reps" not in d:
            raise InvalidConfig("McConfig needs N and reps")
        return cls(dgp, tuple(ests), **d)


# -- per-replication work ------------------------------------------------------


@dataclass
class _Block:
    """Raw results for a contiguous range of replications."""

    start: int
    seeds: np.ndarray  # (R,)
    estimates: np.ndarray  # (R, E, k)
    se_corrected: np.ndarray
    se_naive: np.ndarray
    ok: np.ndarray  # (R, E) bool
    errors: list  # (rep, label, kind, message)


def _run_block(cfg: McConfig, start: int, stop: int) -> _Block:
    R, E, k = stop - start, len(cfg.estimators), cfg.dgp.k
    est = np.full((R, E, k), np.nan)
    se_c = np.full((R, E, k), np.nan)
    se_n = np.full((R, E, k), np.nan)
    ok = np.zeros((R, E), dtype=bool)
    seeds = np.zeros(R, dtype=np.uint64)
    errors = []
    for i, rep in enumerate(range(start, stop)):
        seed = rep_seed(cfg.master_seed, rep)
        seeds[i] = seed
        try:
            ds, _ = generate(cfg.dgp, cfg.N, seed, record=False)
        except CcepError as exc:
            for spec in cfg.estimators:
                errors.append((rep, spec.label, exc.kind, str(exc)))
            continue
        for j, spec in enumerate(cfg.estimators):
            try:
                fit = ccep_fit(ds, spec)
                var = estimate_variance(ds, fit, ci_level=cfg.ci_level,
                                        dof_correction=cfg.dof_correction)
            except CcepError as exc:
                errors.append((rep, spec.label, exc.kind, str(exc)))
                continue
            except np.linalg.LinAlgError as exc:
                errors.append((rep, spec.label, "LinAlgError", str(exc)))
                continue
            est[i, j] = fit.beta_hat
            se_c[i, j] = var.se_corrected
            se_n[i, j] = var.se_naive
            ok[i, j] = True
    return _Block(start, seeds, est, se_c, se_n, ok, errors)


def _ranges(reps: int, workers: int) -> list[tuple[int, int]]:
    n = max(1, min(reps, 4 * workers)) if workers > 1 else 1
    edges = np.linspace(0, reps, n + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


# -- report --------------------------------------------------------------------


@dataclass
class CoefStats:
    mean_estimate: float
    mean_bias: float
    bias_mc_se: float
    rmse: float
    sd_of_estimates: float
    mean_se_corrected: float
    mean_se_naive: float
    mean_se_ratio: float
    calibration_corrected: float
    calibration_naive: float
    coverage_corrected: float
    coverage_naive: float
    coverage_mc_se: float
    rejection_rate_at_nominal: float
    rejection_rate_naive: float


@dataclass
class EstimatorSummary:
    label: str
    reps_used: int
    failures: dict
    coefficients: list  # CoefStats per coefficient
    mc_variance: np.ndarray  # k x k


@dataclass(eq=False)
class McReport:
    """Aggregated Monte Carlo results.

    ``per_rep`` (when kept) holds arrays of shape (reps, n_estimators, k):
    ``estimates``, ``se_corrected``, ``se_naive`` plus the boolean ``ok``
    matrix and the replication ``seeds``.
    """

    config: dict
    beta: np.ndarray
    ci_level: float
    z: float
    reps: int
    N: int
    summaries: dict  # label -> EstimatorSummary
    efficiency: dict | None = None
    per_rep: dict | None = None
    errors: list = field(default_factory=list)

    def summary(self, label: str) -> EstimatorSummary:
        return self.summaries[label]

    def stat(self, label: str, name: str) -> np.ndarray:
        """One statistic across coefficients, e.g. ``stat("CCEP_X", "rmse")``."""
        return np.array([getattr(c, name) for c in self.summaries[label].coefficients])

    def to_dict(self) -> dict:
        out = {
            "config": self.config,
            "beta": self.beta.tolist(),
            "ci_level": self.ci_level,
            "z": self.z,
            "reps": self.reps,
            "N": self.N,
            "estimators": {},
            "efficiency": self.efficiency,
            "errors": [list(e) for e in self.errors],
        }
        for label, s in self.summaries.items():
            out["estimators"][label] = {
                "reps_used": s.reps_used,
                "failures": dict(s.failures),
                "coefficients": [vars(c) for c in s.coefficients],
                "mc_variance": s.mc_variance.tolist(),
            }
        return out

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), indent=2, allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "McReport":
        summaries = {}
        for label, s in d["estimators"].items():
            coefs = [CoefStats(**{k: (math.nan if v is None else v) for k, v in c.items()})
                     for c in s["coefficients"]]
            summaries[label] = EstimatorSummary(label, s["reps_used"], s["failures"], coefs,
                                                np.array(_nan_back(s["mc_variance"]), dtype=float))
        return cls(d["config"], np.array(d["beta"]), d["ci_level"], d["z"], d["reps"], d["N"],
                   summaries, d.get("efficiency"), None, [tuple(e) for e in d.get("errors", [])])

    def to_text(self) -> str:
        lines = [f"Monte Carlo: N={self.N}, reps={self.reps}, CI level {self.ci_level:g}"]
        head = (f"{'estimator':<24}{'coef':>5}{'bias':>12}{'rmse':>12}{'sd':>12}"
                f"{'se_corr':>12}{'se_naive':>12}{'cov_corr':>10}{'cov_naive':>10}{'used':>7}")
        lines.append(head)
        lines.append("-" * len(head))
        for label, s in self.summaries.items():
            for j, c in enumerate(s.coefficients):
                lines.append(
                    f"{label[:23]:<24}{j + 1:>5}{_g(c.mean_bias):>12}{_g(c.rmse):>12}"
                    f"{_g(c.sd_of_estimates):>12}{_g(c.mean_se_corrected):>12}"
                    f"{_g(c.mean_se_naive):>12}{_g(c.coverage_corrected):>10}"
                    f"{_g(c.coverage_naive):>10}{s.reps_used:>7}")
            if s.failures:
                lines.append(f"  failures: {dict(s.failures)}")
        if self.efficiency:
            e = self.efficiency
            lines.append(f"efficiency {e['larger']} - {e['smaller']}: min eigenvalue "
                         f"{_g(e['min_eigenvalue'])} (MC se {_g(e['mc_se'])})")
        return "\n".join(lines)


def _g(x: float) -> str:
    return "nan" if x is None or not np.isfinite(x) else f"{x:.6g}"


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.floating):
        return _json_safe(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _nan_back(obj):
    if isinstance(obj, list):
        return [_nan_back(v) for v in obj]
    return math.nan if obj is None else obj


def _coef_stats(est: np.ndarray, se_c: np.ndarray, se_n: np.ndarray, beta: float, z: float) -> CoefStats:
    n = est.size
    if n == 0:
        nan = math.nan
        return CoefStats(*([nan] * 15))
    err = est - beta
    sd = float(np.std(est, ddof=1)) if n > 1 else math.nan
    cov_c = float(np.mean(np.abs(err) <= z * se_c))
    cov_n = float(np.mean(np.abs(err) <= z * se_n))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = float(np.mean(se_c / se_n))
        cal_c = float(np.mean(se_c) / sd) if n > 1 else math.nan
        cal_n = float(np.mean(se_n) / sd) if n > 1 else math.nan
    return CoefStats(
        mean_estimate=float(np.mean(est)),
        mean_bias=float(np.mean(err)),
        bias_mc_se=sd / math.sqrt(n) if n > 1 else math.nan,
        rmse=float(np.sqrt(np.mean(err * err))),
        sd_of_estimates=sd,
        mean_se_corrected=float(np.mean(se_c)),
        mean_se_naive=float(np.mean(se_n)),
        mean_se_ratio=ratio,
        calibration_corrected=cal_c,
        calibration_naive=cal_n,
        coverage_corrected=cov_c,
        coverage_naive=cov_n,
        coverage_mc_se=math.sqrt(cov_c * (1.0 - cov_c) / n),
        rejection_rate_at_nominal=1.0 - cov_c,
        rejection_rate_naive=1.0 - cov_n,
    )


def _mc_cov(est: np.ndarray) -> np.ndarray:
    if est.shape[0] < 2:
        return np.full((est.shape[1], est.shape[1]), np.nan)
    return np.atleast_2d(np.cov(est, rowvar=False, ddof=1))


def _efficiency(cfg: McConfig, est: np.ndarray, ok: np.ndarray) -> dict:
    """``Var_MC[larger] - Var_MC[smaller]`` on replications where both succeeded.

    The MC standard error is that of the smallest diagonal variance among the
    two matrices, ``v sqrt(2 / (n - 1))`` under normality.
    """
    small, large = cfg.efficiency_pair
    i, j = cfg.labels.index(small), cfg.labels.index(large)
    both = ok[:, i] & ok[:, j]
    n = int(both.sum())
    V_s, V_l = _mc_cov(est[both, i]), _mc_cov(est[both, j])
    diff = V_l - V_s
    if n < 2:
        return {"smaller": small, "larger": large, "reps_used": n, "min_eigenvalue": math.nan,
                "mc_se": math.nan, "difference": diff.tolist()}
    vmin = float(min(np.min(np.diag(V_s)), np.min(np.diag(V_l))))
    return {
        "smaller": small,
        "larger": large,
        "reps_used": n,
        "min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (diff + diff.T))[0]),
        "mc_se": vmin * math.sqrt(2.0 / (n - 1)),
        "difference": diff.tolist(),
    }


def run(config: McConfig, progress: Callable[[int, int], None] | None = None) -> McReport:
    """Run the study described by ``config``.

    Per-replication errors (rank failures and the like) are counted by kind
    and never abort the run; statistics use the successful replications of
    each estimator.
    """
    from .variance import normal_quantile

    cfg = config
    ranges = _ranges(cfg.reps, cfg.workers)
    blocks: list[_Block] = []
    if cfg.workers > 1 and len(ranges) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_block, cfg, a, b) for a, b in ranges]
            for f in futures:  # submission order = replication order
                blocks.append(f.result())
                if progress:
                    progress(sum(b.seeds.size for b in blocks), cfg.reps)
    else:
        for a, b in ranges:
            blocks.append(_run_block(cfg, a, b))
            if progress:
                progress(b, cfg.reps)

    est = np.concatenate([b.estimates for b in blocks])
    se_c = np.concatenate([b.se_corrected for b in blocks])
    se_n = np.concatenate([b.se_naive for b in blocks])
    ok = np.concatenate([b.ok for b in blocks])
    seeds = np.concatenate([b.seeds for b in blocks])
    errors = [e for b in blocks for e in b.errors]

    beta = np.asarray(cfg.dgp.beta, dtype=np.float64)
    z = normal_quantile(1.0 - (1.0 - cfg.ci_level) / 2.0)
    summaries = {}
    for j, label in enumerate(cfg.labels):
        good = ok[:, j]
        fails: dict[str, int] = {}
        for _, lab, kind, _msg in errors:
            if lab == label:
                fails[kind] = fails.get(kind, 0) + 1
        coefs = [_coef_stats(est[good, j, c], se_c[good, j, c], se_n[good, j, c], beta[c], z)
                 for c in range(cfg.dgp.k)]
        summaries[label] = EstimatorSummary(label, int(good.sum()), fails, coefs, _mc_cov(est[good, j]))

    eff = _efficiency(cfg, est, ok) if cfg.efficiency_pair else None
    per_rep = None
    if cfg.keep_reps:
        per_rep = {"seeds": seeds, "estimates": est, "se_corrected": se_c, "se_naive": se_n, "ok": ok}
    echo = cfg.to_dict()
    echo.pop("workers")  # execution detail; the report must not depend on it
    return McReport(echo, beta, cfg.ci_level, z, cfg.reps, cfg.N, summaries, eff,
                    per_rep, errors)


def write_dump(report: McReport, path, labels: Sequence[str] | None = None) -> None:
    """Per-replication CSV: one row per (rep, estimator, coefficient)."""
    if report.per_rep is None:
        raise InvalidConfig("report was produced with keep_reps=False")
    pr = report.per_rep
    labels = list(labels) if labels is not None else list(report.summaries)
    all_labels = list(report.summaries)
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "seed", "estimator", "coef", "estimate", "se_corrected", "se_naive",
                    "covered_corrected", "covered_naive", "ok"])
        for r in range(pr["estimates"].shape[0]):
            for label in labels:
                j = all_labels.index(label)
                for c in range(pr["estimates"].shape[2]):
                    b, sc, sn = (pr[key][r, j, c] for key in ("estimates", "se_corrected", "se_naive"))
                    good = bool(pr["ok"][r, j])
                    err = abs(b - report.beta[c])
                    w.writerow([r, int(pr["seeds"][r]), label, c + 1, repr(float(b)), repr(float(sc)),
                                repr(float(sn)), int(good and err <= report.z * sc),
                                int(good and err <= report.z * sn), int(good)])


@dataclass(frozen=True)
class RateDiagnostic:
    N_small: int
    N_large: int
    ratios: dict  # label -> list of RMSE(N_small) / RMSE(N_large) per coefficient
    expected: float

    def to_dict(self) -> dict:
        return {"N_small": self.N_small, "N_large": self.N_large,
                "ratios": {k: list(v) for k, v in self.ratios.items()}, "expected": self.expected}


def rate_check(small: McReport, large: McReport) -> RateDiagnostic:
    """RMSE ratio between two studies that differ only in ``N``.

    ``large.N`` must equal ``4 * small.N`` (ratio about 2 under root-N
    convergence) or ``small.N`` (identical studies, ratio exactly 1).
    """
    a, b = dict(small.config), dict(large.config)
    for cfg in (a, b):
        cfg.pop("N", None)
    if a.get("dgp") != b.get("dgp") or a.get("estimators") != b.get("estimators"):
        raise InvalidConfig("rate_check needs the same DGP and estimators in both reports")
    if large.N not in (small.N, 4 * small.N):
        raise InvalidConfig(f"rate_check needs N ratio 4 (got {small.N} and {large.N})")
    ratios = {}
    for label in small.summaries:
        rs, rl = small.stat(label, "rmse"), large.stat(label, "rmse")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[label] = [float(v) for v in rs / rl]
    expected = 2.0 if large.N == 4 * small.N else 1.0
    return RateDiagnostic(small.N, large.N, ratios, expected)
