"""Coverage studies for the contact-interval estimators.

Each replication draws scenario parameters with true R0 in [1.01, 16],
simulates until an outbreak reaches ``m_target`` infections (redrawing the
parameters when the restart budget runs out), fits the contact-interval
model, and checks whether the profile intervals and the bootstrap R0 interval
contain the truth.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .likelihoods import fit_mle
from .r0 import bootstrap_r0
from .simulation import (
    MassAction,
    ModelRejected,
    Network,
    SimulationConfig,
    draw_scenario_params,
    run_with_restarts,
)

POPULATIONS = {"ma": "mass-action", "net": "network"}
FAMILIES = {"exp": "exponential", "weib": "weibull"}
PERIODS = {"const": "constant", "exp": "exponential"}
SCENARIOS = tuple(f"{p}-{f}-{i}" for p in POPULATIONS for f in FAMILIES for i in PERIODS)

DESK_SCALE = {"n": 10_000, "m_target": 200, "replications": 200, "n_bootstrap": 2_000}
FULL_SCALE = {"n": 100_000, "m_target": 1_000, "replications": 1_000, "n_bootstrap": 10_000}
PLOT_MAX_R0 = 20.0


@dataclass(frozen=True)
class Scenario:
    population: str
    family: str
    period: str

    @classmethod
    def parse(cls, name: str) -> "Scenario":
        try:
            p, f, i = name.split("-")
            return cls(POPULATIONS[p], FAMILIES[f], PERIODS[i])
        except (ValueError, KeyError):
            raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None

    @property
    def name(self) -> str:
        inv = lambda d, v: next(k for k, x in d.items() if x == v)
        return f"{inv(POPULATIONS, self.population)}-{inv(FAMILIES, self.family)}-{inv(PERIODS, self.period)}"

    @property
    def targets(self) -> tuple:
        return ("beta", "R0") if self.family == "exponential" else ("alpha", "beta", "R0")


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple:
    if n == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="exact")
    return (float(ci.low), float(ci.high))


@dataclass
class CoverageReport:
    scenario: str
    estimator: str
    replications: int
    targets: dict
    records: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def coverage(self, target: str) -> float:
        return self.targets[target]["coverage"]

    def to_dict(self, include_records: bool = True) -> dict:
        d = {
            "scenario": self.scenario,
            "estimator": self.estimator,
            "replications": self.replications,
            "targets": self.targets,
            "diagnostics": self.diagnostics,
        }
        if include_records:
            d["records"] = self.records
        return d

    def to_json(self, include_records: bool = True) -> str:
        return json.dumps(self.to_dict(include_records), indent=2, sort_keys=True)

    def table(self) -> str:
        lines = [
            f"Scenario {self.scenario} ({self.estimator} estimates), {self.replications} replications",
            f"{'Parameter':<10} {'Coverage':>9}  {'Exact binomial 95% CI':<22} {'Mean est.':>10} {'Mean truth':>10}",
        ]
        for name, t in self.targets.items():
            lo, hi = t["binomial_ci"]
            cov = "nan" if t["coverage"] is None else f"{t['coverage']:.3f}"
            lines.append(
                f"{name:<10} {cov:>9}  ({lo:.3f}, {hi:.3f}){'':<8} "
                f"{_fmt(t['mean_estimate']):>10} {_fmt(t['mean_truth']):>10}"
            )
        return "\n".join(lines)


def _fmt(x):
    return "nan" if x is None or not math.isfinite(x) else f"{x:.3f}"


def _summarize(scenario: Scenario, estimator: str, records: list, diagnostics: dict) -> CoverageReport:
    targets = {}
    for name in scenario.targets:
        rows = [r[estimator][name] for r in records]
        hits = sum(bool(row["covered"]) for row in rows)
        n = len(rows)
        est = [row["estimate"] for row in rows if row["estimate"] is not None]
        truth = [row["truth"] for row in rows]
        targets[name] = {
            "hits": hits,
            "coverage": hits / n if n else None,
            "binomial_ci": clopper_pearson(hits, n),
            "mean_estimate": float(np.mean(est)) if est else None,
            "mean_truth": float(np.mean(truth)) if truth else None,
        }
    return CoverageReport(scenario.name, estimator, len(records), targets, records, diagnostics)


def _target_rows(scenario, fit, r0_est, truth):
    rows = {}
    names = fit.model.param_names if fit is not None else ()
    for name in scenario.targets:
        if name == "R0":
            if r0_est is None:
                rows[name] = {"estimate": None, "lo": None, "hi": None, "truth": truth[name], "covered": False}
            else:
                lo, hi = r0_est.ci
                rows[name] = {
                    "estimate": r0_est.point,
                    "lo": lo,
                    "hi": hi,
                    "truth": truth[name],
                    "covered": bool(lo <= truth[name] <= hi),
                }
            continue
        i = names.index(name) if name in names else None
        if fit is None or i is None or not fit.profile_cis:
            rows[name] = {"estimate": None, "lo": None, "hi": None, "truth": truth[name], "covered": False}
            continue
        lo, hi = fit.profile_cis[i]
        rows[name] = {
            "estimate": fit.model.params[i],
            "lo": lo,
            "hi": hi,
            "truth": truth[name],
            "covered": bool(lo <= truth[name] <= hi),
        }
    return rows


def _estimate(data, scenario, kind, network_r0, n_bootstrap, rng):
    try:
        fit = fit_mle(data, scenario.family, kind)
    except (ValueError, FloatingPointError):
        return None, None, "fit-error"
    if not fit.converged or fit.covariance is None:
        return fit, None, "not-converged"
    degrees = data.degrees if network_r0 else None
    r0_est = bootstrap_r0(fit, data.infectious_periods, degrees, n_bootstrap=n_bootstrap, rng=rng, keep_samples=False)
    return fit, r0_est, "ok"


def replicate(scenario: Scenario, index: int, seed: int, settings: dict, misspecified: bool) -> dict:
    """One replication; deterministic in ``(seed, index)``."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    sim_ss, boot_ss, mis_ss = ss.spawn(3)
    rng = np.random.default_rng(sim_ss)
    rejected = 0
    while True:
        params = draw_scenario_params(rng, scenario.population, scenario.family, scenario.period)
        if scenario.population == "mass-action":
            pop = MassAction(settings["n"])
        else:
            pop = Network(n=settings["n"], expected_degree=params.expected_degree)
        config = SimulationConfig(
            pop,
            params.contact_model,
            params.infectious_period,
            m_target=settings["m_target"],
            max_restarts=settings.get("max_restarts", 100),
        )
        try:
            data = run_with_restarts(config, rng)
            break
        except ModelRejected:
            rejected += 1
    truth = dict(zip(params.contact_model.param_names, params.contact_model.params))
    truth["R0"] = params.true_r0
    kind = "network" if scenario.population == "network" else "mass-action"
    fit, r0_est, status = _estimate(
        data, scenario, kind, kind == "network", settings["n_bootstrap"], np.random.default_rng(boot_ss)
    )
    record = {
        "index": index,
        "truth": truth,
        "expected_degree": params.expected_degree,
        "attempts": data.meta.get("attempts", 1),
        "rejected_models": rejected,
        "T": data.T,
        "status": status,
        "correct": _target_rows(scenario, fit, r0_est, truth),
    }
    if misspecified:
        mfit, mr0, mstatus = _estimate(
            data, scenario, "mass-action", False, settings["n_bootstrap"], np.random.default_rng(mis_ss)
        )
        record["mass-action"] = _target_rows(scenario, mfit, mr0, truth)
        record["mass-action-status"] = mstatus
    return record


def _settings(full_scale: bool, **overrides) -> dict:
    settings = dict(FULL_SCALE if full_scale else DESK_SCALE)
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return settings


def _run_records(scenario, replications, seed, settings, misspecified, n_jobs):
    args = [(scenario, r, seed, settings, misspecified) for r in range(replications)]
    if n_jobs and n_jobs > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_replicate_star, args))
    else:
        records = [replicate(*a) for a in args]
    return sorted(records, key=lambda r: r["index"])


def _replicate_star(args):
    return replicate(*args)


def _diagnostics(records, status_key="status"):
    return {
        "rejected_models": int(sum(r["rejected_models"] for r in records)),
        "restarts": int(sum(r["attempts"] - 1 for r in records)),
        "failed_fits": int(sum(r[status_key] != "ok" for r in records)),
    }


def run_coverage(
    scenario,
    replications: Optional[int] = None,
    seed: int = 0,
    full_scale: bool = False,
    n: Optional[int] = None,
    m_target: Optional[int] = None,
    n_bootstrap: Optional[int] = None,
    n_jobs: int = 1,
    misspecified: bool = False,
):
    """Coverage of correctly specified estimates for one scenario.

    With ``misspecified=True`` (network scenarios only) the same simulated
    data are also analysed with the mass-action likelihood and R0 formula,
    and ``(correct_report, mass_action_report)`` is returned.
    """
    sc = scenario if isinstance(scenario, Scenario) else Scenario.parse(scenario)
    settings = _settings(full_scale, n=n, m_target=m_target, n_bootstrap=n_bootstrap)
    R = settings["replications"] if replications is None else int(replications)
    if misspecified and sc.population != "network":
        raise ValueError("mass-action misspecification applies to network scenarios only")
    records = _run_records(sc, R, seed, settings, misspecified, n_jobs)
    correct = _summarize(sc, "correct", records, _diagnostics(records))
    if not misspecified:
        return correct
    wrong = _summarize(sc, "mass-action", records, _diagnostics(records, "mass-action-status"))
    return correct, wrong


def run_misspecification(scenario, replications: Optional[int] = None, seed: int = 0, **kwargs) -> CoverageReport:
    """Mass-action estimates applied to network-generated data."""
    return run_coverage(scenario, replications, seed, misspecified=True, **kwargs)[1]


SCATTER_FIELDS = ("index", "true_r0", "estimated_r0", "ci_lo", "ci_hi", "out_of_range")
LOG_FIELDS = ("log_true_r0", "log_estimated_r0", "log_ci_lo", "log_ci_hi")


def scatter_data(report: CoverageReport, log_scale: Optional[bool] = None) -> list:
    """Rows of (true R0, estimated R0, CI) for a scatterplot.

    Extreme estimates are kept and flagged ``out_of_range`` when above
    :data:`PLOT_MAX_R0`. Log columns are added by default for Weibull
    mass-action scenarios.
    """
    sc = Scenario.parse(report.scenario)
    if log_scale is None:
        log_scale = sc.family == "weibull" and sc.population == "mass-action" and report.estimator == "correct"
    rows = []
    for rec in report.records:
        r = rec[report.estimator]["R0"]
        if r["estimate"] is None:
            continue
        row = {
            "index": rec["index"],
            "true_r0": r["truth"],
            "estimated_r0": r["estimate"],
            "ci_lo": r["lo"],
            "ci_hi": r["hi"],
            "out_of_range": int(r["estimate"] > PLOT_MAX_R0),
        }
        if log_scale:
            row.update(
                {
                    "log_true_r0": math.log(r["truth"]),
                    "log_estimated_r0": _safe_log(r["estimate"]),
                    "log_ci_lo": _safe_log(r["lo"]),
                    "log_ci_hi": _safe_log(r["hi"]),
                }
            )
        rows.append(row)
    return rows


def _safe_log(x):
    return math.log(x) if x > 0 else float("-inf")


def scatter_csv(rows: list) -> str:
    fields = list(SCATTER_FIELDS) + (list(LOG_FIELDS) if rows and "log_true_r0" in rows[0] else [])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def regression_slope(rows: list) -> float:
    x = np.array([r["true_r0"] for r in rows])
    y = np.array([r["estimated_r0"] for r in rows])
    return float(np.polyfit(x, y, 1)[0])
