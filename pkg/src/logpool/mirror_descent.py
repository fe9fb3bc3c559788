"""Online mirror descent over expert weights with the power regularizer.

The regularizer is ``R(w) = -(1/alpha) sum_i w_i^alpha`` with ``0 < alpha < 1/2``.
Each round the dual point ``h = grad R(w) - eta_t * grad L`` is mapped back to
the simplex by solving for the unique offset ``c`` with

    sum_i (c - h_i)^(1/(alpha-1)) = 1

and setting ``w'_i = (c - h_i)^(1/(alpha-1))``.  The mirror map is a bijection
onto the interior of the simplex, so no projection step is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError, NumericalError
from .hindsight import History
from .pooling import loss_and_gradient

MAX_EXPANSIONS = 200
BISECT_RTOL = 1e-14


@dataclass(frozen=True)
class RegularizerParams:
    alpha: float = 0.25

    def __post_init__(self):
        a = float(self.alpha)
        if not 0.0 < a < 0.5:
            raise ConfigError(f"alpha must lie in (0, 1/2), got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)


def _interior(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise DomainError("weights must be strictly positive and finite")
    return w


def regularizer_value(w, params: RegularizerParams) -> float:
    """``R(w) = -(1/alpha) * sum_i w_i^alpha``."""
    w = _interior(w)
    return float(-np.sum(w ** params.alpha) / params.alpha)


def regularizer_gradient(w, params: RegularizerParams) -> np.ndarray:
    """Componentwise ``-w_i^(alpha-1)``."""
    w = _interior(w)
    return -(w ** (params.alpha - 1.0))


def base_step_size(T: int, m: int, n: int, params: RegularizerParams) -> float:
    """``eta = 1/(sqrt(T) ln T) * 1/(12 m^((1+alpha)/2) n)``."""
    if T < 2:
        raise ConfigError(f"the step-size schedule needs T >= 2, got {T}")
    a = params.alpha
    return 1.0 / (math.sqrt(T) * math.log(T)) / (12.0 * m ** ((1.0 + a) / 2.0) * n)


@dataclass
class LearnerState:
    """Mutable per-run learner state.

    ``eta_t`` holds the most recent effective step size; it is ``inf`` before
    the first round so the first round follows the branch condition alone.
    """

    t: int
    w: np.ndarray
    eta_base: float
    params: RegularizerParams
    eta_t: float = math.inf


def step_size_update(state: LearnerState) -> float:
    """Effective step size for round ``state.t`` given the played weights ``state.w``."""
    if state.eta_base <= float(np.min(state.w)) ** state.params.alpha:
        return min(state.eta_t, state.eta_base)
    # rare branch: some weight has become very small
    return min(state.eta_t, float(np.min(state.w)))


class MirrorSolve(NamedTuple):
    offset: float
    iterations: int
    residual: float


def _solve_gap(shifted, alpha: float):
    """Root ``d > 0`` of ``sum_i (d - shifted_i)^(1/(alpha-1)) = 1`` where ``max(shifted) = 0``.

    Working relative to ``max h`` avoids cancellation when ``|h|`` is large:
    the dominant coordinate's term depends on ``d`` alone.
    """
    p = 1.0 / (alpha - 1.0)

    def f(d):
        return sum((d - x) ** p for x in shifted)

    gap = 1.0
    for _ in range(MAX_EXPANSIONS + 1):
        if f(gap) < 1.0:
            break
        gap *= 2.0
    else:
        raise NumericalError("mirror step failed to bracket the offset from above")
    hi = gap
    d = min(1e-12, gap / 2)
    for _ in range(MAX_EXPANSIONS):
        lo = d
        if lo > 0.0 and f(lo) > 1.0:
            break
        d /= 2.0
    else:
        raise NumericalError("mirror step failed to bracket the offset from below")

    it = 0
    while hi - lo > BISECT_RTOL * hi and it < 400:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        it += 1
        if f(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    r = f(x) - 1.0
    slope = p * sum((x - v) ** (p - 1.0) for v in shifted)
    if slope != 0.0:
        x_new = x - r / slope
        if lo <= x_new <= hi and x_new > 0.0:
            r_new = f(x_new) - 1.0
            if abs(r_new) <= abs(r):
                x, r = x_new, r_new
    return x, it, abs(r)


def solve_offset(h, alpha: float) -> MirrorSolve:
    """Find the unique ``c > max(h)`` with ``sum_i (c - h_i)^(1/(alpha-1)) = 1``.

    The left side decreases strictly from ``+inf`` to ``0`` on ``(max h, inf)``.
    The gap ``c - max h`` is bracketed from below just above zero and from
    above by geometric expansion, bisected to a relative width of 1e-14 and
    finished with one Newton step that is kept only if it stays in the
    bracket and lowers the residual.  The residual reported is that of the
    gap equation, which is what the weights are built from.
    """
    hs = [float(x) for x in h]
    if not all(math.isfinite(x) for x in hs):
        raise NumericalError("non-finite dual point in mirror step")
    top = max(hs)
    gap, it, res = _solve_gap([x - top for x in hs], alpha)
    return MirrorSolve(offset=top + gap, iterations=it, residual=res)


def mirror_step(w, grad, eta_t: float, params: RegularizerParams):
    """One mirror-descent update; returns ``(w_next, MirrorSolve)``."""
    w = _interior(w)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != w.shape:
        raise DomainError("gradient and weights differ in length")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient in mirror step")
    return _mirror_step(w, grad, eta_t, params.alpha)


def _mirror_step(w, grad, eta_t, alpha):
    h = -(w ** (alpha - 1.0)) - eta_t * grad
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite dual point in mirror step")
    top = float(np.max(h))
    shifted = h - top
    gap, it, res = _solve_gap(shifted.tolist(), alpha)
    w_next = (gap - shifted) ** (1.0 / (alpha - 1.0))
    return w_next, MirrorSolve(offset=top + gap, iterations=it, residual=res)


@dataclass
class RoundRecord:
    t: int
    reports: np.ndarray  # log-probabilities, (m, n)
    outcome: int
    loss: float
    gradient: np.ndarray
    w: np.ndarray
    w_next: np.ndarray
    eta_t: float
    offset: float
    residual: float


@dataclass
class Trajectory:
    """Everything a learner run produced.

    ``weights`` has ``T + 1`` rows: row ``t - 1`` is the vector played in round
    ``t`` and the last row is the never-played ``w^{T+1}``.
    """

    T: int
    m: int
    n: int
    alpha: float
    eta: float  # base step size (the constant step when overridden)
    eta_override: float | None
    weights: np.ndarray
    eta_t: np.ndarray
    losses: np.ndarray
    gradients: np.ndarray
    outcomes: np.ndarray
    log_reports: np.ndarray
    offsets: np.ndarray
    residuals: np.ndarray
    completed: int = field(default=0)

    @property
    def history(self) -> History:
        return History(self.log_reports[: self.completed], self.outcomes[: self.completed])

    @property
    def realized_loss(self) -> float:
        return float(np.sum(self.losses[: self.completed]))

    def record(self, t: int) -> RoundRecord:
        """Round ``t`` (1-based)."""
        if not 1 <= t <= self.completed:
            raise IndexError(t)
        k = t - 1
        return RoundRecord(t=t, reports=self.log_reports[k], outcome=int(self.outcomes[k]),
                           loss=float(self.losses[k]), gradient=self.gradients[k],
                           w=self.weights[k], w_next=self.weights[t],
                           eta_t=float(self.eta_t[k]), offset=float(self.offsets[k]),
                           residual=float(self.residuals[k]))

    def __iter__(self):
        return (self.record(t) for t in range(1, self.completed + 1))


def run_learner(adversary, T: int, m: int, n: int, rng,
                params: RegularizerParams | None = None,
                eta_override: float | None = None) -> Trajectory:
    """Play the mirror-descent learner against ``adversary`` for ``T`` rounds.

    ``adversary.draw(w, t, T, rng)`` must return an object with ``reports``
    (a ReportSet) and ``outcome``.  The final mirror step after round ``T`` is
    performed and stored so potential-based diagnostics can use ``w^{T+1}``.
    """
    params = params or RegularizerParams()
    if T < 1:
        raise ConfigError(f"T must be at least 1, got {T}")
    alpha = params.alpha
    if eta_override is not None:
        if not eta_override > 0:
            raise ConfigError("eta_override must be positive")
        eta = float(eta_override)
    else:
        # the schedule is undefined at T = 1 (ln 1 = 0); use its T = 2 value
        eta = base_step_size(max(T, 2), m, n, params)

    traj = Trajectory(
        T=T, m=m, n=n, alpha=alpha, eta=eta, eta_override=eta_override,
        weights=np.empty((T + 1, m)), eta_t=np.empty(T), losses=np.empty(T),
        gradients=np.empty((T, m)), outcomes=np.empty(T, dtype=np.int64),
        log_reports=np.empty((T, m, n)), offsets=np.empty(T), residuals=np.empty(T))
    state = LearnerState(t=1, w=np.full(m, 1.0 / m), eta_base=eta, params=params)
    traj.weights[0] = state.w

    for t in range(1, T + 1):
        state.t = t
        if eta_override is None:
            state.eta_t = step_size_update(state)
        else:
            state.eta_t = eta
        draw = adversary.draw(state.w.copy(), t, T, rng)
        logp = draw.reports.log_probs
        if logp.shape != (m, n):
            raise ConfigError(f"adversary emitted reports of shape {logp.shape}, expected {(m, n)}")
        j = int(draw.outcome)
        loss, grad = loss_and_gradient(logp, state.w, j)
        w_next, sol = _mirror_step(state.w, grad, state.eta_t, alpha)

        k = t - 1
        traj.log_reports[k] = logp
        traj.outcomes[k] = j
        traj.losses[k] = loss
        traj.gradients[k] = grad
        traj.eta_t[k] = state.eta_t
        traj.offsets[k] = sol.offset
        traj.residuals[k] = sol.residual
        traj.completed = t
        if not (np.all(np.isfinite(w_next)) and np.all(w_next > 0)):
            raise NumericalError(f"learner produced invalid weights at round {t}",
                                 record=traj)
        traj.weights[t] = w_next
        state.w = w_next
    return traj
