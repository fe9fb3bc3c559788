"""Finite information structures and the adversaries that emit them.

An information structure is a finite joint distribution over signal profiles
``(s_1, ..., s_m)`` and the outcome ``j``.  Unless a structure carries explicit
report tables, each expert reports the Bayes posterior of the outcome given
its own signal, which makes every expert calibrated by construction.

Adversaries see the weights about to be played (plus ``t`` and ``T``) and
return the round's structure; the harness then samples reports and outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, LoadError, StructuralError
from .pooling import PROB_FLOOR, ReportSet

MASS_TOL = 1e-12
LOAD_MASS_TOL = 1e-9
CALIBRATION_TOL = 1e-9


def run_rng(seed: int, run_id: int) -> np.random.Generator:
    """Independent generator for one Monte Carlo run of a master seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run_id,))))


@dataclass(frozen=True)
class RoundDraw:
    reports: ReportSet
    outcome: int


class InformationStructure:
    """Joint distribution over signal profiles and outcomes.

    ``signals`` is a ``(K, m)`` integer array of support profiles, ``outcomes``
    and ``mass`` have length ``K``.  ``report_tables`` optionally fixes the
    report of expert ``i`` on signal ``s`` as ``report_tables[i][s]``; without
    it the reports are posteriors.  Signals are nonnegative integers.
    """

    def __init__(self, n, signals, outcomes, mass, report_tables=None,
                 floor: float = PROB_FLOOR, mass_tol: float = MASS_TOL):
        signals = np.asarray(signals, dtype=np.int64)
        outcomes = np.asarray(outcomes, dtype=np.int64)
        mass = np.asarray(mass, dtype=float)
        if signals.ndim != 2 or signals.shape[0] < 1:
            raise StructuralError("signals must be a non-empty (K, m) array")
        K, m = signals.shape
        if m < 2:
            raise StructuralError(f"need at least 2 experts, got {m}")
        if n < 2:
            raise StructuralError(f"need at least 2 outcomes, got {n}")
        if outcomes.shape != (K,) or mass.shape != (K,):
            raise StructuralError("signals, outcomes and mass must have matching lengths")
        if np.any(signals < 0):
            raise StructuralError("signals must be nonnegative integers")
        if np.any(outcomes < 0) or np.any(outcomes >= n):
            raise StructuralError("outcome index out of range")
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise DomainError("masses must be finite and nonnegative")
        if abs(mass.sum() - 1.0) > mass_tol:
            raise DomainError(f"masses must sum to 1, got {mass.sum()!r}")
        keep = mass > 0
        self.n, self.m = int(n), m
        self.signals = signals[keep]
        self.outcomes = outcomes[keep]
        self.mass = mass[keep] / mass[keep].sum()
        self.floor = floor
        self.explicit = report_tables is not None

        self.tables = []
        for i in range(m):
            if report_tables is not None:
                table = np.array(report_tables[i], dtype=float)
                if table.ndim != 2 or table.shape[1] != n:
                    raise StructuralError(f"report table of expert {i} must be (signals, {n})")
                if table.shape[0] <= self.signals[:, i].max():
                    raise StructuralError(f"report table of expert {i} misses a signal")
            else:
                table = self._posterior_table(i)
            self.tables.append(table)

        # reports per support entry, floored once
        self.entry_reports = [
            ReportSet(np.stack([self.tables[i][s[i]] for i in range(m)]), floor=floor)
            for s in self.signals
        ]
        self.entry_log_probs = np.stack([r.log_probs for r in self.entry_reports])
        self._cum = np.cumsum(self.mass)
        self._cum[-1] = 1.0

    def _posterior_table(self, i):
        size = self.signals[:, i].max() + 1
        joint = np.zeros((size, self.n))
        np.add.at(joint, (self.signals[:, i], self.outcomes), self.mass)
        tot = joint.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return joint / tot  # rows of impossible signals are NaN

    def signal_probability(self, i: int, s: int) -> float:
        return float(self.mass[self.signals[:, i] == s].sum())

    def outcome_marginal(self) -> np.ndarray:
        return np.bincount(self.outcomes, weights=self.mass, minlength=self.n)

    def __repr__(self):
        kind = "explicit" if self.explicit else "posterior"
        return f"InformationStructure(m={self.m}, n={self.n}, support={len(self.mass)}, reports={kind})"


def posterior_report(structure: InformationStructure, expert: int, signal: int) -> np.ndarray:
    """Bayes posterior over outcomes given expert ``expert`` observed ``signal``."""
    if not 0 <= expert < structure.m:
        raise StructuralError(f"expert index {expert} out of range")
    sel = structure.signals[:, expert] == signal
    total = structure.mass[sel].sum()
    if total <= 0:
        raise DomainError(f"signal {signal} of expert {expert} has zero probability")
    post = np.bincount(structure.outcomes[sel], weights=structure.mass[sel],
                       minlength=structure.n) / total
    post = np.clip(post, structure.floor, 1.0)
    return post / post.sum()


def sample_round(structure: InformationStructure, rng: np.random.Generator) -> RoundDraw:
    """Draw one support entry by mass and emit its reports and outcome."""
    k = int(np.searchsorted(structure._cum, rng.random(), side="right"))
    k = min(k, len(structure.mass) - 1)
    return RoundDraw(structure.entry_reports[k], int(structure.outcomes[k]))


def sample_rounds(structure: InformationStructure, rng: np.random.Generator, size: int):
    """Vectorized draws: returns ``(log_probs (size, m, n), outcomes (size,))``."""
    k = np.searchsorted(structure._cum, rng.random(size), side="right")
    k = np.minimum(k, len(structure.mass) - 1)
    return structure.entry_log_probs[k], structure.outcomes[k]


@dataclass
class ExpertCalibration:
    expert: int
    max_violation: float
    groups: list = field(default_factory=list)  # (report, P(J | report), mass)


@dataclass
class CalibrationReport:
    max_violation: float
    per_expert: list

    @property
    def passed(self) -> bool:
        return self.max_violation <= CALIBRATION_TOL


def verify_calibration(structure: InformationStructure, decimals: int = 12) -> CalibrationReport:
    """Exact calibration check by enumeration of the support.

    For each expert the support is grouped by the emitted report vector
    (rounded to ``decimals`` places to merge floating-point duplicates) and
    ``max_j |P(J = j | report) - report_j|`` is taken over the groups.
    """
    per_expert = []
    for i in range(structure.m):
        groups = {}
        for k, rs in enumerate(structure.entry_reports):
            rep = rs.probs[i]
            key = tuple(np.round(rep, decimals))
            g = groups.setdefault(key, [rep, np.zeros(structure.n)])
            g[1][structure.outcomes[k]] += structure.mass[k]
        worst, rows = 0.0, []
        for rep, joint in groups.values():
            total = joint.sum()
            cond = joint / total
            worst = max(worst, float(np.max(np.abs(cond - rep))))
            rows.append((rep, cond, float(total)))
        per_expert.append(ExpertCalibration(i, worst, rows))
    return CalibrationReport(max(e.max_violation for e in per_expert), per_expert)


# -- structure builders -------------------------------------------------------

def from_channels(prior, channels, floor: float = PROB_FLOOR) -> InformationStructure:
    """Conditionally independent signals: ``channels[i][j, s] = P(s_i = s | J = j)``."""
    prior = np.asarray(prior, dtype=float)
    n = prior.size
    if n < 2 or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-9:
        raise ConfigError("prior must be a probability vector over at least 2 outcomes")
    chans = [np.asarray(c, dtype=float) for c in channels]
    for c in chans:
        if c.ndim != 2 or c.shape[0] != n or np.any(c < 0) or np.any(np.abs(c.sum(axis=1) - 1) > 1e-9):
            raise ConfigError("each channel must be an (n, signals) row-stochastic matrix")
    sizes = [c.shape[1] for c in chans]
    profiles = np.array(np.meshgrid(*[np.arange(k) for k in sizes], indexing="ij")).reshape(len(sizes), -1).T
    sig, out, mass = [], [], []
    for j in range(n):
        for prof in profiles:
            p = prior[j] * math.prod(chans[i][j, s] for i, s in enumerate(prof))
            sig.append(prof)
            out.append(j)
            mass.append(p)
    mass = np.array(mass)
    return InformationStructure(n, np.array(sig), np.array(out), mass / mass.sum(), floor=floor)


def random_structure(rng: np.random.Generator, m: int, n: int, signals: int = 3,
                     concentration: float = 0.5, floor: float = PROB_FLOOR) -> InformationStructure:
    """Random joint over all signal profiles and outcomes (Dirichlet masses), posterior reports.

    Signals may be arbitrarily correlated with each other and the outcome;
    small ``concentration`` gives sparse joints and extreme posteriors.
    """
    profiles = np.array(np.meshgrid(*[np.arange(signals)] * m, indexing="ij")).reshape(m, -1).T
    sig = np.repeat(profiles, n, axis=0)
    out = np.tile(np.arange(n), len(profiles))
    mass = rng.dirichlet(np.full(len(out), concentration))
    return InformationStructure(n, sig, out, mass, floor=floor, mass_tol=1e-9)


def symmetric_channel(n: int, accuracy: float) -> np.ndarray:
    """Signal equals the outcome with probability ``accuracy``, else uniform over the rest."""
    if not 0 <= accuracy <= 1:
        raise ConfigError(f"channel accuracy must lie in [0, 1], got {accuracy}")
    c = np.full((n, n), (1 - accuracy) / (n - 1))
    np.fill_diagonal(c, accuracy)
    return c


def bayesian_independent(prior, accuracies, floor: float = PROB_FLOOR) -> InformationStructure:
    n = len(prior)
    return from_channels(prior, [symmetric_channel(n, a) for a in accuracies], floor=floor)


def symmetric_null(prior, m: int, floor: float = PROB_FLOOR) -> InformationStructure:
    """Every expert's signal is independent of the outcome, so everyone reports the prior."""
    return from_channels(prior, [np.ones((len(prior), 1))] * m, floor=floor)


def fixed_reports(reports, outcome_probs, floor: float = PROB_FLOOR) -> InformationStructure:
    """Each expert always emits the same report; the outcome is drawn from ``outcome_probs``."""
    reports = np.asarray(reports, dtype=float)
    m, n = reports.shape
    outcome_probs = np.asarray(outcome_probs, dtype=float)
    sig = np.zeros((n, m), dtype=np.int64)
    tables = [reports[i][None, :] for i in range(m)]
    return InformationStructure(n, sig, np.arange(n), outcome_probs, report_tables=tables, floor=floor)


INFORMED = (0.9, 0.1)
IGNORANT = (0.5, 0.5)


def ignorant_informed_structure(informed: int) -> InformationStructure:
    """Expert ``informed`` reports (0.9, 0.1), the other (0.5, 0.5); outcome 0 w.p. 0.9."""
    reps = [IGNORANT, IGNORANT]
    reps[informed] = INFORMED
    return fixed_reports(reps, INFORMED)


def extreme_first_round(victim: int, T: int, floor: float) -> InformationStructure:
    """The victim reports (e^-T, 1 - e^-T), the other (1/2, 1/2), and outcome 0 is forced."""
    tiny = max(math.exp(-T), floor)
    reps = [IGNORANT, IGNORANT]
    reps[victim] = (tiny, 1.0 - tiny)
    return fixed_reports(reps, (1.0, 0.0), floor=floor)


def extreme_later_round(victim: int, floor: float) -> InformationStructure:
    """The non-victim is perfect (its signal is the outcome); the victim reports (1/2, 1/2)."""
    perfect = np.eye(2)
    channels = [None, None]
    channels[1 - victim] = perfect
    channels[victim] = np.ones((2, 1))
    return from_channels((0.5, 0.5), channels, floor=floor)


# -- custom tables ------------------------------------------------------------

def load_structure(path, floor: float = PROB_FLOOR) -> InformationStructure:
    """Read a tabular structure: header ``n m`` then rows ``s_1 .. s_m j mass``.

    Blank lines and ``#`` comments are ignored.  Signals and outcomes are
    0-based integers.  Masses must sum to 1 within 1e-9 and are renormalized.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise LoadError(f"{path}: empty structure file")
    (hl, header), body = rows[0], rows[1:]
    try:
        n, m = (int(x) for x in header)
    except ValueError:
        raise LoadError(f"{path}:{hl}: header must be two integers 'n m'") from None
    if n < 2 or m < 2:
        raise LoadError(f"{path}:{hl}: need n >= 2 and m >= 2")
    sig, out, mass = [], [], []
    for lineno, fields in body:
        if len(fields) != m + 2:
            raise LoadError(f"{path}:{lineno}: expected {m + 2} fields, got {len(fields)}")
        try:
            s = [int(x) for x in fields[:m]]
            j = int(fields[m])
            p = float(fields[m + 1])
        except ValueError:
            raise LoadError(f"{path}:{lineno}: malformed row") from None
        if min(s) < 0 or not 0 <= j < n:
            raise LoadError(f"{path}:{lineno}: signal or outcome out of range")
        if not (math.isfinite(p) and p >= 0):
            raise LoadError(f"{path}:{lineno}: mass must be a nonnegative number")
        sig.append(s)
        out.append(j)
        mass.append(p)
    if not body:
        raise LoadError(f"{path}: no support rows")
    mass = np.array(mass)
    if abs(mass.sum() - 1.0) > LOAD_MASS_TOL:
        raise LoadError(f"{path}: masses sum to {mass.sum()!r}, not 1")
    return InformationStructure(n, np.array(sig), np.array(out), mass / mass.sum(), floor=floor)


def write_structure(structure: InformationStructure, path) -> None:
    """Write ``structure`` in the tabular format read by ``load_structure``."""
    lines = [f"{structure.n} {structure.m}"]
    for s, j, p in zip(structure.signals, structure.outcomes, structure.mass):
        lines.append(" ".join(str(int(x)) for x in s) + f" {int(j)} {float(p)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


# -- scenarios ----------------------------------------------------------------

KINDS = ("bayesian_independent", "symmetric_null", "appendix_b_fixed",
         "appendix_b_adaptive", "example_1_uncalibrated", "custom_table")

DEFAULT_ACCURACIES = (0.8, 0.7)
EXAMPLE_1_FLOOR = 1e-300


@dataclass(frozen=True)
class ScenarioSpec:
    """Scenario kind plus its parameters.

    Parameters by kind:
      bayesian_independent: ``prior`` (n-vector, default uniform), ``accuracies``
        (one per expert, default 0.8 then 0.7 alternating)
      symmetric_null: ``prior``
      custom_table: ``path``
      example_1_uncalibrated: ``floor`` (default 1e-300)
    The ignorant-vs-informed kinds and the uncalibrated kind require ``m = n = 2``.
    """

    kind: str
    m: int = 2
    n: int = 2
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.m < 2 or self.n < 2:
            raise ConfigError("scenarios need m >= 2 experts and n >= 2 outcomes")
        if self.kind in ("appendix_b_fixed", "appendix_b_adaptive", "example_1_uncalibrated") \
                and (self.m, self.n) != (2, 2):
            raise ConfigError(f"scenario {self.kind} is defined for m = n = 2 only")
        if self.kind == "custom_table" and "path" not in self.params:
            raise ConfigError("custom_table needs a 'path' parameter")
        if self.kind in ("bayesian_independent", "symmetric_null"):
            prior = self.prior()
            if prior.size != self.n or np.any(prior <= 0) or abs(prior.sum() - 1) > 1e-9:
                raise ConfigError(f"prior must be a positive probability vector of length {self.n}")
        if self.kind == "bayesian_independent":
            acc = self.accuracies()
            if len(acc) != self.m or any(not 0 <= a <= 1 for a in acc):
                raise ConfigError(f"need {self.m} channel accuracies in [0, 1]")

    def prior(self) -> np.ndarray:
        p = self.params.get("prior")
        return np.full(self.n, 1.0 / self.n) if p is None else np.asarray(p, dtype=float)

    def accuracies(self):
        acc = self.params.get("accuracies")
        if acc is None:
            return [DEFAULT_ACCURACIES[i % 2] for i in range(self.m)]
        return [float(a) for a in acc]

    def base_structure(self) -> InformationStructure:
        """The fixed structure of oblivious kinds, or the first-round one otherwise."""
        return self.make_adversary().structure(np.full(self.m, 1.0 / self.m), 1, 2)

    def make_adversary(self):
        if self.kind == "bayesian_independent":
            return ObliviousAdversary(bayesian_independent(self.prior(), self.accuracies()))
        if self.kind == "symmetric_null":
            return ObliviousAdversary(symmetric_null(self.prior(), self.m))
        if self.kind == "appendix_b_fixed":
            # expert 0 ignorant, expert 1 informed
            return ObliviousAdversary(ignorant_informed_structure(informed=1))
        if self.kind == "appendix_b_adaptive":
            return InformedLaggardAdversary()
        if self.kind == "example_1_uncalibrated":
            return ExtremeReportAdversary(float(self.params.get("floor", EXAMPLE_1_FLOOR)))
        structure = load_structure(self.params["path"])
        if (structure.m, structure.n) != (self.m, self.n):
            raise ConfigError(f"table has m={structure.m}, n={structure.n}; "
                              f"config says m={self.m}, n={self.n}")
        return ObliviousAdversary(structure)


class Adversary:
    """Base adversary: subclasses choose the round's structure from ``(w, t, T)``."""

    def structure(self, w, t, T) -> InformationStructure:
        raise NotImplementedError

    def draw(self, w, t, T, rng) -> RoundDraw:
        return sample_round(self.structure(w, t, T), rng)


class ObliviousAdversary(Adversary):
    def __init__(self, structure: InformationStructure):
        self.fixed = structure

    def structure(self, w, t, T):
        return self.fixed


class InformedLaggardAdversary(Adversary):
    """The lower-weight expert is informed; ties go to expert 0."""

    def __init__(self):
        self._by_informed = [ignorant_informed_structure(0), ignorant_informed_structure(1)]

    def structure(self, w, t, T):
        return self._by_informed[0 if w[0] <= w[1] else 1]


class ExtremeReportAdversary(Adversary):
    """Uncalibrated two-expert adversary.

    Round 1: the expert holding weight at least 1/2 (expert 0 on ties) reports
    (e^-T, 1 - e^-T) while outcome 0 is forced.  Later rounds: the other
    expert is perfect and the first-round victim reports (1/2, 1/2).
    """

    def __init__(self, floor: float = EXAMPLE_1_FLOOR):
        self.floor = floor
        self.victim = None
        self._cache = {}

    def structure(self, w, t, T):
        if t == 1 or self.victim is None:
            self.victim = 0 if w[0] >= 0.5 else 1
        key = ("first", self.victim, T) if t == 1 else ("later", self.victim)
        if key not in self._cache:
            if t == 1:
                self._cache[key] = extreme_first_round(self.victim, T, self.floor)
            else:
                self._cache[key] = extreme_later_round(self.victim, self.floor)
        return self._cache[key]


def adversary_round(adversary: Adversary, w_t, t: int, T: int, rng) -> RoundDraw:
    """One adversarial round: the adversary builds a structure from ``w_t``, then nature samples."""
    return adversary.draw(np.asarray(w_t, dtype=float), t, T, rng)
