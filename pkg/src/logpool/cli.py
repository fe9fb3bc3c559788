"""Command-line entry point: ``logpool {simulate,sweep,verify,diagnose}``.

Exit codes: 0 success, 1 validation error, 2 runtime/numerical/IO error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from .calibrated_world import KINDS, ScenarioSpec
from .errors import ConfigError, LoadError, LogPoolError, NumericalError

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

CONFIG_KEYS = {
    "seed": int, "T": int, "m": int, "n": int, "alpha": float, "scenario": str,
    "runs": int, "eta_override": float, "out": str, "output_dir": str, "workers": int,
    "prior": str, "accuracies": str, "table": str, "T_list": str, "eta_scale": float,
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    if "out" in values:
        values["output_dir"] = values.pop("out")
    return values


def _floats(text: str, what: str):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{what} must be a list of numbers, got {text!r}") from exc


def _add_common(p):
    p.add_argument("--config", help="key = value file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int, dest="T")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--scenario", choices=KINDS)
    p.add_argument("--runs", type=int)
    p.add_argument("--eta-override", type=float, dest="eta_override")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--prior", help="outcome prior, comma separated")
    p.add_argument("--accuracies", help="per-expert channel accuracies, comma separated")
    p.add_argument("--table", help="structure file for the custom_table scenario")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logpool",
                                     description="Logarithmic pooling weight-learner experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="run independent learner trajectories")
    _add_common(p)
    p = sub.add_parser("sweep", help="mean regret across horizons")
    _add_common(p)
    p.add_argument("--T-list", dest="T_list", help="ascending horizons, comma separated")
    p.add_argument("--eta-scale", type=float, dest="eta_scale",
                   help="use the constant step eta_scale / sqrt(T) at each horizon")
    p = sub.add_parser("verify", help="check calibration of a structure")
    p.add_argument("path", nargs="?", help="structure file (omit to verify --scenario)")
    _add_common(p)
    p = sub.add_parser("diagnose", help="post-hoc diagnostics of a trace")
    p.add_argument("trace", help="trace.csv written by simulate")
    return parser


def merged_settings(args) -> dict:
    settings = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def scenario_from(settings) -> ScenarioSpec:
    m, n = settings.get("m", 2), settings.get("n", 2)
    params = {}
    if "prior" in settings:
        params["prior"] = _floats(settings["prior"], "prior")
    if "accuracies" in settings:
        params["accuracies"] = _floats(settings["accuracies"], "accuracies")
    if "table" in settings:
        params["path"] = settings["table"]
    return ScenarioSpec(settings.get("scenario", "bayesian_independent"), m, n, params)


def config_from(settings) -> ex.ExperimentConfig:
    if not settings.get("output_dir"):
        raise ConfigError("an output directory is required (--out or 'out = ...')")
    keys = ("seed", "T", "m", "n", "alpha", "runs", "eta_override", "output_dir", "workers")
    kwargs = {k: settings[k] for k in keys if k in settings}
    return ex.ExperimentConfig(scenario=scenario_from(settings), **kwargs)


def _print_summaries(summaries, out):
    print("run_id regret realized hindsight sga_violations phi_monotone zeta_observed", file=out)
    for s in summaries:
        print(f"{s.run_id} {s.regret:.6g} {s.realized_cumulative_loss:.6g} "
              f"{s.hindsight_value:.6g} {s.sga_violations} {s.phi_monotone} "
              f"{s.zeta_observed:.6g}", file=out)


def run_simulate(args, out) -> int:
    cfg = config_from(merged_settings(args))
    summaries = ex.cmd_simulate(cfg)
    _print_summaries(summaries, out)
    return EXIT_OK


def run_sweep(args, out) -> int:
    settings = merged_settings(args)
    if "T_list" not in settings:
        raise ConfigError("sweep needs --T-list")
    T_list = [int(x) for x in _floats(settings["T_list"], "T-list")]
    cfg = config_from(settings)
    res = ex.cmd_sweep(cfg, T_list, eta_scale=settings.get("eta_scale"))
    print("T runs mean_regret ci_half_width bound ratio", file=out)
    for r in res.rows:
        print(f"{r.T} {r.runs} {r.mean_regret:.6g} {r.ci_half_width:.3g} {r.bound:.6g} {r.ratio:.3g}",
              file=out)
    print(f"fitted exponent: {res.exponent:.4f}", file=out)
    return EXIT_OK


def run_verify(args, out) -> int:
    if args.path:
        report = ex.cmd_verify(args.path)
    else:
        report = ex.cmd_verify(scenario_from(merged_settings(args)))
    for e in report.per_expert:
        print(f"expert {e.expert}: max violation {e.max_violation:.3g} over {len(e.groups)} report groups",
              file=out)
    verdict = "PASS" if report.passed else "FAIL"
    print(f"max violation {report.max_violation:.3g}: {verdict}", file=out)
    return EXIT_OK if report.passed else EXIT_VERIFY


def run_diagnose(args, out) -> int:
    rep = ex.cmd_diagnose(args.trace)
    print(f"gamma {rep.gamma:.6g}  eta {rep.eta:.6g}", file=out)
    for r in rep.runs:
        first = r.sga_violations[0] if r.sga_violations else None
        print(f"run {r.run_id}: T={r.T} sga_violations={len(r.sga_violations)}"
              + (f" (first at t={first[0]}, expert {first[1]}, {first[2]})" if first else ""),
              file=out)
        print(f"  zeta_observed={r.zeta_observed:.6g} bad-case ceiling={r.bad_case_ceiling:.3g}", file=out)
        print(f"  phi(0)={r.phi[0]:.10g} phi(T)={r.phi[-1]:.10g} monotone={r.phi_monotone}"
              f" increases={r.phi_increases[:10]} recomputation max diff={r.phi_column_max_diff:.3g}",
              file=out)
        print("  weight-bound counts: " + " ".join(f"{k}={v}" for k, v in r.weight_bound_counts.items()),
              file=out)
    print("tail table (event zeta expert frequency bound se ok):", file=out)
    for t in rep.tail_rows:
        print(f"  {t.event} {t.parameter:g} {t.expert} {t.frequency:.4g} {t.bound:.4g} {t.se:.3g} {t.ok}",
              file=out)
    return EXIT_OK


COMMANDS = {"simulate": run_simulate, "sweep": run_sweep, "verify": run_verify,
            "diagnose": run_diagnose}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        return COMMANDS[args.command](args, out)
    except (ConfigError, LoadError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_VALIDATION
    except (NumericalError, OSError) as exc:
        print(f"runtime error: {exc}", file=err)
        return EXIT_RUNTIME
    except LogPoolError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
