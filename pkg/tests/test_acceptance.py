"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary and when the module is run directly.
"""

import math
import time

import numpy as np
import pytest

from logpool.calibrated_world import (ScenarioSpec, bayesian_independent, random_structure,
                                      sample_rounds)
from logpool.diagnostics import (PHI_TOL, gradient_tail_table, mnq_table, regret_ceiling,
                                 theoretical_bound)
from logpool.experiments import ExperimentConfig, cmd_simulate, cmd_sweep, fitted_exponent, run_many
from logpool.hindsight import History, best_weights, golden_section_weights
from logpool.mirror_descent import RegularizerParams, mirror_step, regularizer_gradient
from logpool.pooling import log_pool, loss_gradient, pooled_loss

from conftest import random_reports, random_simplex

RESULTS = {}
SEED = 2026
RUNS = 50
T_LIST = (100, 1000, 10_000)


def record(k, name, passed, detail):
    line = f"criterion {k:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    RESULTS[k] = line
    print(line)
    return passed


@pytest.fixture(scope="module")
def no_regret_ensemble():
    """Criterion 4 runs: bayesian_independent, m = n = 2, alpha = 1/4, 50 runs per horizon."""
    out = {}
    for T in T_LIST:
        cfg = ExperimentConfig(seed=SEED, T=T, m=2, n=2, alpha=0.25,
                               scenario=ScenarioSpec("bayesian_independent"), runs=RUNS)
        t0 = time.perf_counter()
        out[T] = (run_many(cfg, keep_trajectories=(T == T_LIST[-1])), time.perf_counter() - t0)
    return out


def test_criterion_01_pooling_fidelity():
    reports, w = [(0.001, 0.999), (0.5, 0.5)], (0.5, 0.5)
    probs = log_pool(reports, w).probs
    reps = 2000
    t0 = time.perf_counter()
    for _ in range(reps):
        log_pool(reports, w)
    per_call = (time.perf_counter() - t0) / reps
    ok_val = np.all(np.abs(probs - (0.0307, 0.9693)) <= 1e-3)
    ok = record(1, "pooling fidelity", ok_val and per_call < 1e-3,
                f"pool = ({probs[0]:.5f}, {probs[1]:.5f}), {per_call * 1e6:.1f} us per call")
    assert ok


def test_criterion_02_gradient_oracle():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        m, n = int(rng.integers(2, 6)), int(rng.integers(2, 7))
        p, w = random_reports(rng, m, n, 1e-4), random_simplex(rng, m)
        j = int(rng.integers(n))
        g = loss_gradient(p, w, j)
        h = 1e-6
        # central differences along the simplex-tangent directions e_a - e_m
        for a in range(m - 1):
            d = np.zeros(m)
            d[a], d[-1] = 1.0, -1.0
            fd = (pooled_loss(p, w + h * d, j) - pooled_loss(p, w - h * d, j)) / (2 * h)
            an = g[a] - g[-1]
            worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
    elapsed = time.perf_counter() - t0
    ok = record(2, "gradient oracle", worst <= 1e-6 and elapsed < 10,
                f"max relative error {worst:.2e} over 1000 instances, {elapsed:.2f} s")
    assert ok


def test_criterion_03_mirror_step_exactness():
    rng = np.random.default_rng(SEED)
    worst_sum = worst_spread = 0.0
    bound_fail = small_cases = 0
    t0 = time.perf_counter()
    for _ in range(1000):
        m = int(rng.integers(2, 7))
        alpha = float(rng.uniform(0.02, 0.48))
        w = rng.dirichlet(np.full(m, rng.choice([0.3, 1.0, 5.0])))
        w = np.maximum(w, 1e-8)
        w /= w.sum()
        grad = rng.normal(size=m) * 10 ** rng.uniform(-3, 2)
        eta = 10 ** rng.uniform(-5, -0.5)
        p = RegularizerParams(alpha)
        w_next, sol = mirror_step(w, grad, eta, p)
        worst_sum = max(worst_sum, abs(w_next.sum() - 1))
        dual = regularizer_gradient(w, p) - eta * grad
        resid = regularizer_gradient(w_next, p) - dual
        worst_spread = max(worst_spread, (resid.max() - resid.min()) / max(1.0, np.max(np.abs(dual))))
        kappa = eta * max(np.max(grad), np.max(-grad * w))
        c = sol.offset
        slack = 1e-12 * max(1.0, abs(c))
        bound_fail += c < -kappa - slack
        if kappa <= np.min((1 - alpha) ** 2 * w ** alpha):
            small_cases += 1
            bound_fail += c > m * kappa + slack
    elapsed = time.perf_counter() - t0
    ok = worst_sum <= 1e-12 and worst_spread <= 1e-8 and bound_fail == 0 and elapsed < 10
    ok = record(3, "mirror-step exactness", ok,
                f"max |sum - 1| {worst_sum:.1e}, max offset spread {worst_spread:.1e}, "
                f"c-bound failures {bound_fail} ({small_cases} instances met the sharper hypothesis), "
                f"{elapsed:.2f} s")
    assert ok


def test_criterion_04_no_regret_scaling(no_regret_ensemble):
    means, parts = [], []
    for T in T_LIST:
        results, _ = no_regret_ensemble[T]
        means.append(float(np.mean([r.summary.regret for r in results])))
    bounds = [theoretical_bound(T, 2, 2, 0.25) for T in T_LIST]
    a = all(mr <= b for mr, b in zip(means, bounds))
    per_round = [mr / T for mr, T in zip(means, T_LIST)]
    b = all(y < x for x, y in zip(per_round, per_round[1:]))
    slope = fitted_exponent(T_LIST, means)
    c = 0.4 <= slope <= 0.75
    secs = sum(v[1] for v in no_regret_ensemble.values())
    parts = [f"mean regret {', '.join(f'{m:.3g}' for m in means)}",
             f"(a) below bound {a}", f"(b) regret/T decreasing {b}",
             f"(c) exponent {slope:.3f} in [0.4, 0.75] {c}", f"{secs:.0f} s"]
    ok = record(4, "no-regret scaling", a and b and c, "; ".join(parts))
    assert ok


def test_criterion_05_potential_monotonicity(no_regret_ensemble):
    results, _ = no_regret_ensemble[T_LIST[-1]]
    clean = [r for r in results if r.sga.clean]
    increases = sum(int(np.sum(np.diff(r.potential.phi) > PHI_TOL)) for r in clean)
    over = [r.summary.run_id for r in clean
            if r.summary.regret > regret_ceiling(r.trajectory, r.trajectory.eta, r.gamma)]
    ceiling = regret_ceiling(clean[0].trajectory, clean[0].trajectory.eta, clean[0].gamma) if clean else float("nan")
    ok = record(5, "potential monotonicity", bool(clean) and increases == 0 and not over,
                f"{len(clean)}/{len(results)} runs SGA-clean, {increases} increases above {PHI_TOL:g}, "
                f"{len(over)} runs above the regret ceiling {ceiling:.4g}")
    assert ok


def test_criterion_06_corollary_monitors(no_regret_ensemble):
    results, _ = no_regret_ensemble[T_LIST[-1]]
    clean = [r for r in results if r.sga.clean]
    power = sum(r.weight_bounds.counts["weight_power"] for r in clean)
    step = sum(r.weight_bounds.counts["step_bounds"] for r in clean)
    floor = sum(r.weight_bounds.counts["weight_floor"] for r in clean)
    checked = sum(r.weight_bounds.counts["rounds_checked"] for r in clean)
    ok = record(6, "weight-bound monitors", bool(clean) and power == 0 and step == 0,
                f"{checked} rounds checked: weight-power violations {power}, step-bound violations {step}"
                f" (weight-floor violations {floor}, monitored)")
    assert ok


def test_criterion_07_impossibility_demo():
    worst = {}
    for T in (50, 100, 200):
        cfg = ExperimentConfig(seed=SEED, T=T, scenario=ScenarioSpec("example_1_uncalibrated"), runs=RUNS)
        regrets = [s.regret for s in cmd_simulate(cfg)]
        worst[T] = min(regrets) / T
    ok = record(7, "impossibility demo", all(v >= 0.4 for v in worst.values()),
                "min regret/T " + ", ".join(f"T={T}: {v:.3f}" for T, v in worst.items()))
    assert ok


def test_criterion_08_lower_bound():
    fixed = cmd_sweep(ExperimentConfig(seed=SEED, scenario=ScenarioSpec("appendix_b_fixed"), runs=RUNS),
                      T_LIST, eta_scale=0.1)
    adaptive = cmd_sweep(ExperimentConfig(seed=SEED, scenario=ScenarioSpec("appendix_b_adaptive"),
                                          runs=RUNS), T_LIST, eta_scale=10.0)
    ratios = [r.mean_regret / math.sqrt(r.T) for r in adaptive.rows]
    a = fixed.exponent >= 0.45
    b = all(x >= 0.5 for x in ratios)
    ok = record(8, "lower bound", a and b,
                f"fixed: exponent {fixed.exponent:.3f} >= 0.45 {a}; adaptive: mean regret/sqrt(T) "
                + ", ".join(f"T={r.T}: {x:.3f}" for r, x in zip(adaptive.rows, ratios))
                + f" >= 0.5 at every T {b}")
    assert ok


def test_criterion_09_calibration_tails():
    rng = np.random.default_rng(SEED)
    N = 10 ** 6
    structures = [
        ("bayesian_independent m=n=3", bayesian_independent((0.2, 0.3, 0.5), (0.95, 0.9, 0.85))),
        ("random m=2 n=3", random_structure(rng, 2, 3, signals=4, concentration=0.3)),
        ("random m=3 n=2", random_structure(rng, 3, 2, signals=3, concentration=0.3)),
    ]
    t0 = time.perf_counter()
    bad, rows_checked = [], 0
    for name, st in structures:
        lp, out = sample_rounds(st, rng, N)
        rows = mnq_table(lp, (0.01, 0.05, 0.1))
        for w in (np.full(st.m, 1 / st.m), rng.dirichlet(np.ones(st.m))):
            rows += gradient_tail_table(lp, out, w, (1.0, 2.0, 4.0, 8.0))
        rows_checked += len(rows)
        bad += [(name, r) for r in rows if not r.ok]
    elapsed = time.perf_counter() - t0
    ok = record(9, "calibration tails", not bad and elapsed < 120,
                f"{rows_checked} tail rows over 3 structures x 1e6 rounds, {len(bad)} above bound + 4 SE, "
                f"{elapsed:.1f} s")
    assert ok, bad


def _grid_min(history, step=1e-4):
    """Independent grid oracle: vectorized evaluation of the defining formula on w_1 in [0, 1]."""
    x = np.arange(0.0, 1.0 + step / 2, step)[:, None, None]
    lp = history.log_probs
    scores = x * lp[None, :, 0, :] + (1 - x) * lp[None, :, 1, :]
    top = scores.max(axis=2, keepdims=True)
    lse = top[..., 0] + np.log(np.exp(scores - top).sum(axis=2))
    chosen = np.take_along_axis(scores, history.outcomes[None, :, None], axis=2)[..., 0]
    return float(np.min(np.sum(lse - chosen, axis=1)))


def test_criterion_10_hindsight_oracle():
    rng = np.random.default_rng(SEED)
    worst_grid = worst_gs = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 5))
        rounds = [(random_reports(rng, 2, n, 1e-4), int(rng.integers(n))) for _ in range(50)]
        h = History.from_rounds(rounds)
        v = best_weights(h).value
        worst_grid = max(worst_grid, abs(v - _grid_min(h)))
        worst_gs = max(worst_gs, abs(v - golden_section_weights(h).value))
    ok = record(10, "hindsight oracle", worst_grid <= 1e-4 and worst_gs <= 1e-6,
                f"max |value - grid| {worst_grid:.2e}, max |projected gradient - golden section| {worst_gs:.2e}")
    assert ok


def test_criterion_11_reproducibility(tmp_path):
    same = True
    for tag in ("a", "b"):
        base = dict(seed=SEED, T=300, runs=3, scenario=ScenarioSpec("bayesian_independent"))
        cmd_simulate(ExperimentConfig(output_dir=str(tmp_path / tag / "sim"), **base))
        cmd_sweep(ExperimentConfig(output_dir=str(tmp_path / tag / "sweep"), **base), [50, 100, 200])
    files = ["sim/trace.csv", "sim/summary.csv", "sim/trace.meta.json", "sweep/sweep.csv"]
    for f in files:
        same &= (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ok = record(11, "reproducibility", same, f"{len(files)} files byte-identical across reruns: {same}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
