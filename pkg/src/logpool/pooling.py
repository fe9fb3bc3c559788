"""Weighted logarithmic pooling of probability forecasts.

The pool of reports ``p^1..p^m`` under weights ``w`` is

    p*_j(w) = exp(sum_i w_i ln p^i_j) / sum_l exp(sum_i w_i ln p^i_l)

and is always evaluated in the log domain with max-subtraction.  The loss of
weights ``w`` on a realized outcome ``j`` is ``L(w) = -ln p*_j(w)``; its
gradient is returned in the representative

    dL/dw_i = sum_l p*_l(w) ln p^i_l - ln p^i_j

which equals the ordinary partial derivative of the formula on all of R^m.

Outcomes are 0-based indices throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StructuralError

PROB_FLOOR = 1e-12
SUM_TOL = 1e-9


def as_forecast(probs, floor: float = PROB_FLOOR, clip: bool = True) -> np.ndarray:
    """Validate one forecast and return it clipped to ``[floor, 1]`` and renormalized."""
    p = np.array(probs, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise StructuralError(f"a forecast needs at least 2 outcomes, got shape {p.shape}")
    return _clean_rows(p[None, :], floor, clip)[0]


def _clean_rows(p: np.ndarray, floor: float, clip: bool) -> np.ndarray:
    if not np.all(np.isfinite(p)):
        raise DomainError("forecast contains non-finite entries")
    if np.any(p < 0):
        raise DomainError("forecast contains negative entries")
    sums = p.sum(axis=-1, keepdims=True)
    if np.any(np.abs(sums - 1.0) > SUM_TOL * p.shape[-1] + 1e-7):
        raise DomainError(f"forecast entries must sum to 1, got sums {sums.ravel()}")
    p = p / sums
    if clip:
        p = np.clip(p, floor, 1.0)
        p /= p.sum(axis=-1, keepdims=True)
    elif np.any(p < floor):
        raise DomainError(f"forecast entry below the probability floor {floor:g}")
    return p


def as_weights(w, m: int | None = None) -> np.ndarray:
    """Validate a weight vector (nonnegative, sums to one)."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise StructuralError(f"weights must be a vector, got shape {w.shape}")
    if m is not None and w.size != m:
        raise StructuralError(f"expected {m} weights, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DomainError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > SUM_TOL:
        raise DomainError(f"weights must sum to 1, got {w.sum()!r}")
    return w


class ReportSet:
    """Reports of ``m`` experts over ``n`` outcomes, floored and immutable.

    ``probs`` and ``log_probs`` have shape ``(m, n)``.  Pass ``floor`` to choose
    the probability floor (default ``PROB_FLOOR``); with ``clip=False`` entries
    under the floor are rejected instead of clipped.
    """

    __slots__ = ("probs", "log_probs", "floor")

    def __init__(self, reports, floor: float = PROB_FLOOR, clip: bool = True):
        if isinstance(reports, ReportSet):
            reports = reports.probs
        p = np.array(reports, dtype=float)
        if p.ndim != 2:
            raise StructuralError(
                f"reports must be an (m, n) array of forecasts, got shape {p.shape}")
        m, n = p.shape
        if m < 2:
            raise StructuralError(f"need at least 2 experts, got {m}")
        if n < 2:
            raise StructuralError(f"need at least 2 outcomes, got {n}")
        p = _clean_rows(p, floor, clip)
        logp = np.log(p)
        p.flags.writeable = False
        logp.flags.writeable = False
        self.probs = p
        self.log_probs = logp
        self.floor = floor

    @property
    def m(self) -> int:
        return self.probs.shape[0]

    @property
    def n(self) -> int:
        return self.probs.shape[1]

    def __len__(self):
        return self.m

    def __getitem__(self, i):
        return self.probs[i]

    def __repr__(self):
        return f"ReportSet(m={self.m}, n={self.n}, floor={self.floor:g})"


@dataclass(frozen=True)
class PooledForecast:
    """A pooled forecast together with ``log c``, the log of its normalizing constant."""

    probs: np.ndarray
    log_normalizer: float
    scores: np.ndarray  # per-outcome sum_i w_i ln p^i_j

    @property
    def n(self) -> int:
        return self.probs.size


def _as_reports(reports) -> ReportSet:
    return reports if isinstance(reports, ReportSet) else ReportSet(reports)


def _check_outcome(outcome, n: int) -> int:
    j = int(outcome)
    if j != outcome or not 0 <= j < n:
        raise StructuralError(f"outcome index {outcome!r} out of range for {n} outcomes")
    return j


def _scores(logp: np.ndarray, w: np.ndarray):
    s = w @ logp
    top = s.max()
    e = np.exp(s - top)
    z = e.sum()
    return s, e / z, top + np.log(z)


def log_pool(reports, w) -> PooledForecast:
    """Weighted logarithmic pool of ``reports`` under weights ``w``."""
    rs = _as_reports(reports)
    w = as_weights(w, rs.m)
    s, probs, lse = _scores(rs.log_probs, w)
    probs.flags.writeable = False
    return PooledForecast(probs=probs, log_normalizer=-lse, scores=s)


def log_loss(forecast, outcome) -> float:
    """Log loss ``-ln f_j`` of a forecast on outcome ``j``."""
    if isinstance(forecast, PooledForecast):
        j = _check_outcome(outcome, forecast.n)
        return float(-(forecast.scores[j] + forecast.log_normalizer))
    f = np.asarray(forecast, dtype=float)
    j = _check_outcome(outcome, f.size)
    return float(-np.log(f[j]))


def pooled_loss(reports, w, outcome) -> float:
    """``L(w) = -ln p*_j(w)`` for a single round."""
    return log_loss(log_pool(reports, w), outcome)


def loss_gradient(reports, w, outcome) -> np.ndarray:
    """Gradient of the pooled log loss with respect to the weights (formula representative)."""
    rs = _as_reports(reports)
    w = as_weights(w, rs.m)
    j = _check_outcome(outcome, rs.n)
    _, probs, _ = _scores(rs.log_probs, w)
    return rs.log_probs @ probs - rs.log_probs[:, j]


def loss_and_gradient(log_probs: np.ndarray, w: np.ndarray, j: int):
    """Unvalidated loss and gradient for one round, used on the learner's hot path."""
    s, probs, lse = _scores(log_probs, w)
    return lse - s[j], log_probs @ probs - log_probs[:, j]


# -- stacked rounds -----------------------------------------------------------
# log_probs has shape (T, m, n), outcomes shape (T,).

def _stacked_scores(log_probs: np.ndarray, w: np.ndarray):
    s = np.einsum("tin,i->tn", log_probs, w)
    top = s.max(axis=1, keepdims=True)
    e = np.exp(s - top)
    z = e.sum(axis=1, keepdims=True)
    return s, e / z, (top + np.log(z))[:, 0]


def stacked_losses(log_probs: np.ndarray, outcomes: np.ndarray, w) -> np.ndarray:
    """Per-round pooled losses for a stack of rounds under one weight vector."""
    w = np.asarray(w, dtype=float)
    s, _, lse = _stacked_scores(log_probs, w)
    return lse - s[np.arange(len(outcomes)), outcomes]


def stacked_gradients(log_probs: np.ndarray, outcomes: np.ndarray, w) -> np.ndarray:
    """Per-round loss gradients, shape ``(T, m)``."""
    w = np.asarray(w, dtype=float)
    _, probs, _ = _stacked_scores(log_probs, w)
    expect = np.einsum("tin,tn->ti", log_probs, probs)
    realized = log_probs[np.arange(len(outcomes)), :, outcomes]
    return expect - realized


def stacked_loss_and_gradient(log_probs, outcomes, w):
    """Summed loss and summed gradient over a stack of rounds."""
    w = np.asarray(w, dtype=float)
    s, probs, lse = _stacked_scores(log_probs, w)
    idx = np.arange(len(outcomes))
    loss = float(np.sum(lse - s[idx, outcomes]))
    expect = np.einsum("tin,tn->i", log_probs, probs)
    realized = log_probs[idx, :, outcomes].sum(axis=0)
    return loss, expect - realized
