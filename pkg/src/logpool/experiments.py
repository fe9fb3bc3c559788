"""Reproducible experiment drivers: simulate, sweep, verify, diagnose.

Output files (all reals written with 17 significant digits):

* ``trace.csv``: one row per (run, round) with columns
  ``run_id, t, outcome, loss, eta_t, w_1..w_m, g_1..g_m, sga_flag, phi``
  where ``w`` are the weights played in round ``t`` and ``phi`` is the
  potential after round ``t``.
* ``trace.meta.json``: configuration plus each run's final (never played)
  weights, which ``diagnose`` needs to recompute the potential.
* ``summary.csv``: one row per run.
* ``sweep.csv``: one row per horizon.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .calibrated_world import (ScenarioSpec, load_structure, run_rng,
                               verify_calibration)
from .errors import ConfigError, LoadError
from .hindsight import best_weights
from .mirror_descent import RegularizerParams, run_learner

TRACE_FILE = "trace.csv"
META_FILE = "trace.meta.json"
SUMMARY_FILE = "summary.csv"
SWEEP_FILE = "sweep.csv"


def fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass
class ExperimentConfig:
    seed: int = 0
    T: int = 1000
    m: int = 2
    n: int = 2
    alpha: float = 0.25
    scenario: ScenarioSpec = field(default_factory=lambda: ScenarioSpec("bayesian_independent"))
    runs: int = 1
    eta_override: float | None = None
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.T < 1:
            raise ConfigError(f"T must be at least 1, got {self.T}")
        if self.runs < 1:
            raise ConfigError(f"runs must be at least 1, got {self.runs}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        RegularizerParams(self.alpha)
        if self.eta_override is not None and not self.eta_override > 0:
            raise ConfigError("eta_override must be positive")
        if (self.scenario.m, self.scenario.n) != (self.m, self.n):
            raise ConfigError(f"scenario is dimensioned m={self.scenario.m}, n={self.scenario.n} "
                              f"but the config says m={self.m}, n={self.n}")

    def with_T(self, T: int) -> ExperimentConfig:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["T"] = T
        return ExperimentConfig(**d)


@dataclass
class RunSummary:
    run_id: int
    realized_cumulative_loss: float
    hindsight_value: float
    regret: float
    sga_violations: int
    phi_monotone: bool
    zeta_observed: float


@dataclass
class RunResult:
    summary: RunSummary
    trajectory: object
    sga: dg.SgaMonitor
    potential: dg.PotentialSeries
    weight_bounds: dg.WeightBoundReport
    gamma: float


def simulate_run(config: ExperimentConfig, run_id: int) -> RunResult:
    """One independent learner run with its post-hoc diagnostics."""
    adversary = config.scenario.make_adversary()
    traj = run_learner(adversary, config.T, config.m, config.n, run_rng(config.seed, run_id),
                       RegularizerParams(config.alpha), eta_override=config.eta_override)
    sol = best_weights(traj.history)
    realized = traj.realized_loss
    gam = dg.gamma(max(config.T, 2), config.n)
    sga = dg.check_sga(traj, gam)
    phi = dg.potential_series(traj, traj.eta, gam)
    cor = dg.corollary_bounds_check(traj, traj.eta, gam, sga)
    summary = RunSummary(run_id=run_id, realized_cumulative_loss=realized,
                         hindsight_value=sol.value, regret=realized - sol.value,
                         sga_violations=len(sga.violations), phi_monotone=phi.monotone,
                         zeta_observed=sga.zeta_observed)
    return RunResult(summary, traj, sga, phi, cor, gam)


def run_many(config: ExperimentConfig, keep_trajectories: bool = True) -> list[RunResult]:
    """All runs of ``config``, sorted by run id; parallel when ``workers > 1``."""
    ids = range(config.runs)
    if config.workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(simulate_run, [config] * config.runs, ids))
    else:
        results = [simulate_run(config, i) for i in ids]
    results.sort(key=lambda r: r.summary.run_id)
    if not keep_trajectories:
        for r in results:
            r.trajectory = None
    return results


# -- writers --------------------------------------------------------------------

def trace_header(m: int):
    return (["run_id", "t", "outcome", "loss", "eta_t"]
            + [f"w_{i + 1}" for i in range(m)] + [f"g_{i + 1}" for i in range(m)]
            + ["sga_flag", "phi"])


def write_trace(results, path) -> None:
    buf = io.StringIO()
    m = results[0].trajectory.m
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_header(m))
    for r in results:
        tr = r.trajectory
        rid = r.summary.run_id
        for k in range(tr.completed):
            w.writerow([rid, k + 1, int(tr.outcomes[k]), fmt(tr.losses[k]), fmt(tr.eta_t[k]),
                        *map(fmt, tr.weights[k]), *map(fmt, tr.gradients[k]),
                        int(r.sga.flags[k]), fmt(r.potential.phi[k + 1])])
    Path(path).write_text(buf.getvalue())


SUMMARY_FIELDS = ["run_id", "realized_cumulative_loss", "hindsight_value", "regret",
                  "sga_violations", "phi_monotone", "zeta_observed"]


def write_summary(summaries, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for s in summaries:
        w.writerow([s.run_id, fmt(s.realized_cumulative_loss), fmt(s.hindsight_value),
                    fmt(s.regret), s.sga_violations, int(s.phi_monotone), fmt(s.zeta_observed)])
    Path(path).write_text(buf.getvalue())


def config_dict(config: ExperimentConfig) -> dict:
    d = {k: getattr(config, k) for k in ("seed", "T", "m", "n", "alpha", "runs", "eta_override")}
    d["scenario"] = {"kind": config.scenario.kind, "params": _jsonable(config.scenario.params)}
    return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_meta(config, results, path) -> None:
    tr = results[0].trajectory
    meta = {
        "config": config_dict(config),
        "eta": tr.eta,
        "gamma": results[0].gamma,
        "final_weights": {str(r.summary.run_id): r.trajectory.weights[r.trajectory.completed].tolist()
                          for r in results},
    }
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _out_dir(config) -> Path:
    if config.output_dir is None:
        raise ConfigError("an output directory is required (--out)")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -------------------------------------------------------------------

def cmd_simulate(config: ExperimentConfig, write_traces: bool = True) -> list[RunSummary]:
    """Run ``config.runs`` trajectories and write trace, meta and summary files."""
    results = run_many(config)
    if config.output_dir is not None:
        out = _out_dir(config)
        if write_traces:
            write_trace(results, out / TRACE_FILE)
            write_meta(config, results, out / META_FILE)
        write_summary([r.summary for r in results], out / SUMMARY_FILE)
    return [r.summary for r in results]


@dataclass
class SweepRow:
    T: int
    runs: int
    mean_regret: float
    ci_half_width: float
    bound: float
    ratio: float


@dataclass
class SweepResult:
    rows: list
    exponent: float  # least-squares slope of log mean regret against log T
    summaries: dict  # T -> list of RunSummary


def fitted_exponent(Ts, values) -> float:
    x = np.log(np.asarray(Ts, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def cmd_sweep(config: ExperimentConfig, T_list, eta_scale: float | None = None) -> SweepResult:
    """Simulate at each horizon in ``T_list`` and tabulate mean regret against the bound.

    With ``eta_scale`` set, each horizon uses the constant step ``eta_scale / sqrt(T)``.
    """
    T_list = [int(T) for T in T_list]
    if not T_list or any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ConfigError("T_list must be non-empty and strictly ascending")
    rows, summaries = [], {}
    for T in T_list:
        cfg = config.with_T(T)
        if eta_scale is not None:
            cfg.eta_override = eta_scale / math.sqrt(T)
        results = run_many(cfg, keep_trajectories=False)
        regrets = np.array([r.summary.regret for r in results])
        mean = float(regrets.mean())
        half = 1.96 * float(regrets.std(ddof=1)) / math.sqrt(len(regrets)) if len(regrets) > 1 else 0.0
        bound = dg.theoretical_bound(max(T, 2), config.m, config.n, config.alpha)
        rows.append(SweepRow(T, len(regrets), mean, half, bound, mean / bound))
        summaries[T] = [r.summary for r in results]
    means = [r.mean_regret for r in rows]
    exponent = fitted_exponent(T_list, means) if len(T_list) > 1 and min(means) > 0 else float("nan")
    if config.output_dir is not None:
        out = _out_dir(config)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "runs", "mean_regret", "ci_half_width", "bound", "ratio"])
        for r in rows:
            w.writerow([r.T, r.runs, fmt(r.mean_regret), fmt(r.ci_half_width), fmt(r.bound), fmt(r.ratio)])
        (out / SWEEP_FILE).write_text(buf.getvalue())
        for T, s in summaries.items():
            write_summary(s, out / f"summary_T{T}.csv")
    return SweepResult(rows, exponent, summaries)


def cmd_verify(source):
    """Calibration report for a structure file path or a ScenarioSpec."""
    if isinstance(source, ScenarioSpec):
        structure = source.base_structure()
    else:
        structure = load_structure(source)
    return verify_calibration(structure)


# -- diagnose -------------------------------------------------------------------

@dataclass
class RunDiagnosis:
    run_id: int
    T: int
    sga_violations: list
    zeta_observed: float
    phi: np.ndarray
    phi_monotone: bool
    phi_increases: list
    phi_column_max_diff: float
    weight_bound_counts: dict
    bad_case_ceiling: float


@dataclass
class DiagnosisReport:
    gamma: float
    eta: float
    runs: list
    tail_rows: list

    @property
    def clean(self) -> bool:
        return all(not r.sga_violations and r.phi_monotone for r in self.runs)


class _TraceRun:
    """Just enough of a Trajectory for the diagnostics functions."""

    def __init__(self, T, m, n, alpha, weights, gradients):
        self.T = self.completed = T
        self.m, self.n, self.alpha = m, n, alpha
        self.weights = weights
        self.gradients = gradients


def read_trace(path):
    """Parse a trace CSV into per-run column arrays keyed by run id."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except (OSError, StopIteration) as exc:
        raise LoadError(f"cannot read trace {path}: {exc}") from exc
    m = (len(header) - 7) // 2
    if m < 2 or header != trace_header(m):
        raise LoadError(f"{path}: not a trace file (unexpected header)")
    runs = {}
    for row in rows:
        runs.setdefault(int(row[0]), []).append(row)
    parsed = {}
    for rid, rr in runs.items():
        a = np.array([[float(x) for x in r[1:]] for r in rr])
        parsed[rid] = {
            "t": a[:, 0].astype(int), "outcome": a[:, 1].astype(int), "loss": a[:, 2],
            "eta_t": a[:, 3], "w": a[:, 4:4 + m], "g": a[:, 4 + m:4 + 2 * m],
            "sga_flag": a[:, 4 + 2 * m].astype(int), "phi": a[:, 5 + 2 * m],
        }
    return m, parsed


def cmd_diagnose(trace_path, zetas=(1.0, 2.0, 4.0, 8.0)) -> DiagnosisReport:
    """Re-derive every diagnostic from a trace and its meta file."""
    trace_path = Path(trace_path)
    meta_path = trace_path.with_name(META_FILE) if trace_path.name == TRACE_FILE \
        else trace_path.with_suffix(".meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, ValueError) as exc:
        raise LoadError(f"cannot read trace metadata {meta_path}: {exc}") from exc
    cfg = meta["config"]
    m, runs = read_trace(trace_path)
    n, alpha = int(cfg["n"]), float(cfg["alpha"])
    eta, gam = float(meta["eta"]), float(meta["gamma"])
    out = []
    all_g, all_w = [], []
    for rid in sorted(runs):
        r = runs[rid]
        T = len(r["t"])
        final = np.array(meta["final_weights"][str(rid)], dtype=float)
        W = np.vstack([r["w"], final])
        tr = _TraceRun(T, m, n, alpha, W, r["g"])
        sga = dg.check_sga(tr, gam)
        pot = dg.potential_series(tr, eta, gam)
        cor = dg.corollary_bounds_check(tr, eta, gam, sga)
        diff = float(np.max(np.abs(pot.phi[1:] - r["phi"])))
        out.append(RunDiagnosis(rid, T, sga.violations, sga.zeta_observed, pot.phi, pot.monotone,
                                pot.increases(), diff, cor.counts,
                                dg.bad_case_ceiling(sga.zeta_observed, T, alpha)))
        all_g.append(r["g"])
        all_w.append(r["w"])
    tails = dg.gradient_tail_rows(np.vstack(all_g), np.vstack(all_w), n, zetas)
    return DiagnosisReport(gam, eta, out, tails)
