"""Runtime monitors for the learner's regret analysis.

All functions are observe-only: they read a finished trajectory (or sampled
rounds) and never influence the learner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .pooling import stacked_gradients

PHI_TOL = 1e-9
PHI_ASSERT_MIN_T = 1000


def gamma(T: int, n: int) -> float:
    """Gradient scale of the small gradient assumption, ``12 n ln T``."""
    if T < 2:
        raise ConfigError(f"gamma needs T >= 2, got {T}")
    return 12.0 * n * math.log(T)


def theoretical_bound(T: int, m: int, n: int, alpha: float) -> float:
    """``(240 + 12/alpha) m^((3-alpha)/2) n sqrt(T) ln T``."""
    if T < 2:
        raise ConfigError(f"the regret bound needs T >= 2, got {T}")
    return (240.0 + 12.0 / alpha) * m ** ((3.0 - alpha) / 2.0) * n * math.sqrt(T) * math.log(T)


def regularizer_range_term(m: int, alpha: float, eta: float) -> float:
    """``m^(1-alpha) / (alpha eta)``, the regularizer part of the regret bound."""
    return m ** (1.0 - alpha) / (alpha * eta)


def bad_case_ceiling(zeta: float, T: int, alpha: float) -> float:
    """``zeta^(2(2-alpha)/(1-alpha)) T^((5-alpha)/(1-alpha))`` with unit constant (monitor only)."""
    return zeta ** (2 * (2 - alpha) / (1 - alpha)) * float(T) ** ((5 - alpha) / (1 - alpha))


@dataclass
class SgaMonitor:
    gamma: float
    violations: list  # (t, i, side) with t 1-based, side "upper" or "lower"
    zeta_observed: float
    flags: np.ndarray  # per round: any violation in that round

    @property
    def clean(self) -> bool:
        return not self.violations

    @property
    def first_violation(self):
        return self.violations[0][0] if self.violations else None


def check_sga(trajectory, gamma_value: float | None = None) -> SgaMonitor:
    """Flag every ``(t, i)`` with ``g_i > gamma`` or ``g_i < -gamma / w_i``."""
    T = trajectory.completed
    g = trajectory.gradients[:T]
    w = trajectory.weights[:T]
    gam = gamma(max(trajectory.T, 2), trajectory.n) if gamma_value is None else gamma_value
    upper = g > gam
    lower = g < -gam / w
    violations = []
    for t, i in zip(*np.nonzero(upper | lower)):
        violations.append((int(t) + 1, int(i), "upper" if upper[t, i] else "lower"))
    zeta = float(max(0.0, np.max(np.maximum(g, -g * w)))) if T else 0.0
    return SgaMonitor(gamma=gam, violations=violations, zeta_observed=zeta,
                      flags=np.any(upper | lower, axis=1))


@dataclass
class PotentialSeries:
    phi: np.ndarray  # phi[t] for t = 0..T
    increments: np.ndarray  # per-round closed-form phi(t) - phi(t-1), t = 1..T

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.phi) <= PHI_TOL))

    def increases(self):
        """Rounds ``t`` where ``phi(t) > phi(t-1) + PHI_TOL``."""
        return [int(t) + 1 for t in np.nonzero(np.diff(self.phi) > PHI_TOL)[0]]


def potential_series(trajectory, eta: float, gamma_value: float, T: int | None = None) -> PotentialSeries:
    """Potential ``phi(t)`` for ``t = 0..T`` from a trajectory that stores ``w^{T+1}``.

    phi(t) = sum_{s<=t} g^s . (w^s - w^{s+1}) + 19 m^2 gamma^2 eta (T - t)
             - 4 gamma sum_i ln w_i^{t+1}
    """
    T = trajectory.completed if T is None else T
    W = trajectory.weights[: T + 1]
    g = trajectory.gradients[:T]
    m = W.shape[1]
    return _potential(W, g, m, eta, gamma_value, T)


def _potential(W, g, m, eta, gam, T):
    lin = np.sum(g * (W[:-1] - W[1:]), axis=1)
    budget = 19.0 * m * m * gam * gam * eta
    t = np.arange(T + 1)
    logs = np.sum(np.log(W), axis=1)
    phi = np.concatenate([[0.0], np.cumsum(lin)]) + budget * (T - t) - 4.0 * gam * logs
    logW = np.log(W)
    inc = np.sum((W[:-1] - W[1:]) * g - 19.0 * m * gam * gam * eta
                 + 4.0 * gam * (logW[:-1] - logW[1:]), axis=1)
    return PotentialSeries(phi=phi, increments=inc)


@dataclass
class WeightBoundReport:
    applicable: np.ndarray  # rounds covered (no SGA violation up to and including t)
    weight_power: np.ndarray  # (w_i^t)^alpha >= 4 eta gamma for all i
    weight_floor: np.ndarray  # w_i^t >= T^(1/(2(alpha-1))) / (10 sqrt(m)) for all i
    step_bounds: np.ndarray  # two-sided bound on w^t - w^{t+1} for all i
    counts: dict = field(default_factory=dict)


def corollary_bounds_check(trajectory, eta: float, gamma_value: float,
                           sga: SgaMonitor | None = None) -> WeightBoundReport:
    """Evaluate the weight bounds that hold while the small gradient assumption holds."""
    T = trajectory.completed
    a = trajectory.alpha
    m = trajectory.m
    W = trajectory.weights[: T + 1]
    w, w1 = W[:-1], W[1:]
    sga = sga or check_sga(trajectory, gamma_value)
    applicable = np.cumsum(sga.flags[:T]) == 0
    eg = eta * gamma_value
    power = np.all(w ** a >= 4.0 * eg, axis=1)
    floor = np.all(w >= trajectory.T ** (1.0 / (2.0 * (a - 1.0))) / (10.0 * math.sqrt(m)), axis=1)
    drop = w - w1
    step = np.all((drop >= -32.0 * w ** (1.0 - a) * eg)
                  & (drop <= 2.0 * w ** (2.0 - a) * (m + 1) * eg), axis=1)
    counts = {
        "rounds_checked": int(applicable.sum()),
        "weight_power": int(np.sum(applicable & ~power)),
        "weight_floor": int(np.sum(applicable & ~floor)),
        "step_bounds": int(np.sum(applicable & ~step)),
    }
    return WeightBoundReport(applicable, power, floor, step, counts)


def regret_ceiling(trajectory, eta: float, gamma_value: float) -> float:
    """``phi(0) + m^(1-alpha)/(alpha eta)``: the regret ceiling on SGA-clean runs."""
    m, T = trajectory.m, trajectory.T
    phi0 = 19.0 * m * m * gamma_value ** 2 * eta * T + 4.0 * m * gamma_value * math.log(m)
    return phi0 + regularizer_range_term(m, trajectory.alpha, eta)


# -- tail statistics on sampled rounds ----------------------------------------

def binomial_se(p: float, N: int) -> float:
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / N)


@dataclass
class TailRow:
    event: str
    parameter: float
    expert: int | None
    frequency: float
    bound: float
    se: float

    @property
    def ok(self) -> bool:
        return self.frequency <= self.bound + 4.0 * self.se


def mnq_event_frequency(log_probs: np.ndarray, q: float) -> float:
    """Fraction of rounds in which every outcome has some expert reporting at most ``q``."""
    low = log_probs <= math.log(q)
    return float(np.mean(np.all(np.any(low, axis=1), axis=1)))


def mnq_table(log_probs, qs=(0.01, 0.05, 0.1)):
    N, m, n = log_probs.shape
    rows = []
    for q in qs:
        bound = m * n * q
        rows.append(TailRow("all_outcomes_doubted", q, None, mnq_event_frequency(log_probs, q),
                            bound, binomial_se(bound, N)))
    return rows


def gradient_tail_table(log_probs, outcomes, w, zetas=(1.0, 2.0, 4.0, 8.0)):
    """Empirical upper and lower gradient tails against their calibration bounds."""
    N, m, n = log_probs.shape
    w = np.asarray(w, dtype=float)
    g = stacked_gradients(log_probs, outcomes, w)
    return gradient_tail_rows(g, w, n, zetas)


def gradient_tail_rows(g, w, n, zetas=(1.0, 2.0, 4.0, 8.0)):
    """Tail rows from precomputed gradients ``g`` (``(N, m)``) at weights ``w`` (``(m,)`` or ``(N, m)``)."""
    N, m = g.shape
    rows = []
    for zeta in zetas:
        up_bound = n * math.exp(-zeta)
        lo_bound = m * n * n * math.exp(-zeta / n)
        up = np.mean(g >= zeta, axis=0)
        lo = np.mean(g <= -zeta / w, axis=0)
        for i in range(m):
            rows.append(TailRow("grad_upper", zeta, i, float(up[i]), up_bound, binomial_se(up_bound, N)))
            rows.append(TailRow("grad_lower", zeta, i, float(lo[i]), lo_bound, binomial_se(lo_bound, N)))
    return rows
