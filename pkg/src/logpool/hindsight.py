"""Best fixed weights in hindsight and regret against them.

The cumulative pooled loss is convex in the weights, so a projected-gradient
method with backtracking finds the global minimum over the simplex.  For two
experts a golden-section search on the one-dimensional simplex gives an
independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from .pooling import ReportSet, stacked_loss_and_gradient, stacked_losses

WEIGHT_SHELL = 1e-9
DEFAULT_TOL = 1e-8
MAX_ITER = 100_000


@dataclass(frozen=True)
class History:
    """A sequence of rounds: stacked log-reports ``(T, m, n)`` and outcomes ``(T,)``."""

    log_probs: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=float)
        out = np.asarray(self.outcomes, dtype=np.int64)
        if lp.ndim != 3:
            raise StructuralError(f"log_probs must have shape (T, m, n), got {lp.shape}")
        if out.shape != (lp.shape[0],):
            raise StructuralError("one outcome per round is required")
        if lp.shape[0] < 1:
            raise StructuralError("a history needs at least one round")
        if np.any(out < 0) or np.any(out >= lp.shape[2]):
            raise StructuralError("outcome index out of range")
        object.__setattr__(self, "log_probs", lp)
        object.__setattr__(self, "outcomes", out)

    @classmethod
    def from_rounds(cls, rounds):
        """Build from an iterable of ``(reports, outcome)`` pairs."""
        logs, outs = [], []
        for reports, outcome in rounds:
            rs = reports if isinstance(reports, ReportSet) else ReportSet(reports)
            if logs and rs.log_probs.shape != logs[0].shape:
                raise StructuralError("all rounds must share the same (m, n)")
            logs.append(rs.log_probs)
            outs.append(int(outcome))
        if not logs:
            raise StructuralError("a history needs at least one round")
        return cls(np.stack(logs), np.array(outs))

    @property
    def T(self) -> int:
        return self.log_probs.shape[0]

    @property
    def m(self) -> int:
        return self.log_probs.shape[1]

    @property
    def n(self) -> int:
        return self.log_probs.shape[2]

    def __len__(self):
        return self.T

    def prefix(self, t: int) -> History:
        return History(self.log_probs[:t], self.outcomes[:t])


@dataclass(frozen=True)
class HindsightSolution:
    w_star: np.ndarray
    value: float
    method: str
    certificate: float  # projected-gradient stationarity residual of the mean loss
    iterations: int = 0
    converged: bool = True


def cumulative_loss(history: History, w) -> float:
    """Sum over rounds of the pooled log loss under fixed weights ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (history.m,):
        raise StructuralError(f"expected {history.m} weights, got shape {w.shape}")
    return float(np.sum(stacked_losses(history.log_probs, history.outcomes, w)))


def project_simplex(v: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = total}`` (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_shell(v: np.ndarray, eps: float = WEIGHT_SHELL) -> np.ndarray:
    """Projection onto the simplex with every coordinate at least ``eps``."""
    return project_simplex(v - eps, 1.0 - v.size * eps) + eps


def _stationarity(w, g, eps):
    return float(np.max(np.abs(w - project_shell(w - g, eps))))


def _floor_check(history, w, value):
    """Fall back to uniform or a vertex if either beats the optimizer's point."""
    m = history.m
    for cand in [np.full(m, 1.0 / m), *np.eye(m)]:
        v = cumulative_loss(history, cand)
        if v < value:
            w, value = cand, v
    return w, value


def best_weights(history: History, tol: float = DEFAULT_TOL,
                 max_iter: int = MAX_ITER, eps: float = WEIGHT_SHELL) -> HindsightSolution:
    """Minimize the cumulative pooled loss over the simplex by projected gradient descent.

    Works on the mean loss, starts at uniform weights, backtracks with a
    sufficient-decrease test for projected steps (in gradient form once value
    differences fall to rounding level), and stops when the projected-gradient
    residual falls to ``tol`` or after ``max_iter`` iterations.  A non-converged
    result is returned with ``converged=False`` rather than raised.
    """
    lp, out, T, m = history.log_probs, history.outcomes, history.T, history.m
    w = np.full(m, 1.0 / m)

    def f_and_g(x):
        # the projection ignores constant shifts, so step along the centred
        # gradient; this keeps w from being swamped when the step grows large
        val, grad = stacked_loss_and_gradient(lp, out, x)
        grad = grad / T
        return val / T, grad - grad.mean()

    f, g = f_and_g(w)
    step = 1.0
    res = _stationarity(w, g, eps)
    it = 0
    while res > tol and it < max_iter:
        it += 1
        t = step
        while True:
            w_new = project_shell(w - t * g, eps)
            d = w_new - w
            f_new, g_new = f_and_g(w_new)
            dd = d @ d
            slack = 8 * np.finfo(float).eps * max(1.0, abs(f))
            if abs(f_new - f) > slack:
                if f_new <= f + g @ d + dd / (2 * t):
                    break
            elif (g_new - g) @ d <= dd / t:
                # value changes are lost in rounding here; the same curvature
                # test in gradient form still rejects overshooting steps
                break
            t *= 0.5
            if t < 1e-30:
                break
        if t < 1e-30 or not np.any(d):
            break
        w, f, g = w_new, f_new, g_new
        step = min(2 * t, 1e12)
        res = _stationarity(w, g, eps)

    value = cumulative_loss(history, w)
    w_best, value = _floor_check(history, w, value)
    return HindsightSolution(w_star=w_best, value=value, method="projected_gradient",
                             certificate=res, iterations=it, converged=res <= tol)


def golden_section_weights(history: History, tol: float = 1e-12,
                           eps: float = WEIGHT_SHELL) -> HindsightSolution:
    """Two-expert cross-check: golden-section search over ``w_1`` in ``[eps, 1 - eps]``."""
    if history.m != 2:
        raise StructuralError("golden-section search is only defined for two experts")

    def F(x):
        return cumulative_loss(history, np.array([x, 1.0 - x]))

    invphi = (math.sqrt(5) - 1) / 2
    a, b = eps, 1.0 - eps
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = F(c), F(d)
    it = 0
    while b - a > tol:
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = F(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = F(d)
    candidates = [(fc, c), (fd, d), (F(eps), eps), (F(1 - eps), 1 - eps)]
    value, x = min(candidates)
    w, value = _floor_check(history, np.array([x, 1.0 - x]), value)
    return HindsightSolution(w_star=w, value=value, method="golden_section",
                             certificate=b - a, iterations=it, converged=True)


def regret(trajectory, history: History | None = None,
           solution: HindsightSolution | None = None) -> float:
    """Realized cumulative loss of ``trajectory`` minus the best-in-hindsight value."""
    if history is None:
        history = trajectory.history
    if len(trajectory.losses) != history.T:
        raise StructuralError("trajectory and history have different lengths")
    if solution is None:
        solution = best_weights(history)
    return float(np.sum(trajectory.losses)) - solution.value
