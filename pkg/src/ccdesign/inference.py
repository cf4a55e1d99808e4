"""Belief tracking over streams from scalar projected measurements.

Each stream k keeps a pseudo log-likelihood ratio between "stream k is
shifted by delta_k" and "stream k is nominal", treating all other streams
as nominal in both hypotheses. Observing y from weights c updates every
stream in the support of c in closed form:

    dllr_k = delta_k c_k (y - c@mu0) / s2 - (delta_k c_k)^2 / (2 s2),

with s2 = c@sigma@c. Streams outside the support are untouched, exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covmodel import CovarianceModel
from .errors import ConfigError, DataError, NumericError

# llr is clamped at +-700 before exponentiation; beliefs away from {0, 1}.
LLR_CLAMP = 700.0
BELIEF_EPS = 1e-16


def prior_llr(k: int, n: int, *, uniform: bool = False) -> np.ndarray:
    """Shared prior: logit(n/k) per stream, or 0 when ``uniform`` is set."""
    if not (1 <= n < k):
        raise ConfigError(f"need 1 <= n < k, got n={n}, k={k}")
    if uniform:
        return np.zeros(k)
    p = n / k
    return np.full(k, math.log(p / (1.0 - p)))


@dataclass
class BeliefState:
    """Mutable per-stream evidence accumulator."""

    llr: np.ndarray
    t: int = 0
    pull_counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.llr = np.asarray(self.llr, dtype=float).copy()
        if self.pull_counts is None:
            self.pull_counts = np.zeros(self.llr.size, dtype=int)

    @property
    def k(self) -> int:
        return self.llr.size

    @classmethod
    def from_prior(cls, k: int, n: int, *, uniform: bool = False) -> "BeliefState":
        return cls(llr=prior_llr(k, n, uniform=uniform))


def beliefs(state: BeliefState) -> np.ndarray:
    """Posterior-style probabilities, clamped into [1e-16, 1 - 1e-16]."""
    z = np.clip(state.llr, -LLR_CLAMP, LLR_CLAMP)
    p = 1.0 / (1.0 + np.exp(-z))
    return np.clip(p, BELIEF_EPS, 1.0 - BELIEF_EPS)


def update_pseudo_llr(state: BeliefState, c: np.ndarray, y: float,
                      cov: CovarianceModel | None, delta: np.ndarray,
                      mu0: np.ndarray, *, sigma_sq: float | None = None) -> BeliefState:
    """Apply one observation in place and return the state.

    ``sigma_sq`` short-circuits the quadratic form when the caller has it
    cached; otherwise it is computed from ``cov``.
    """
    c = np.asarray(c, dtype=float)
    if not math.isfinite(y):
        raise DataError(f"observation must be finite, got {y}")
    if sigma_sq is None:
        if cov is None:
            raise ConfigError("need cov or a precomputed sigma_sq")
        sigma_sq = float(c @ cov.sigma @ c)
    if sigma_sq <= 0.0 or not math.isfinite(sigma_sq):
        raise NumericError(f"projected variance must be positive, got {sigma_sq}")
    shift = delta * c
    centered = float(y) - float(c @ mu0)
    state.llr += shift * centered / sigma_sq - shift * shift / (2.0 * sigma_sq)
    state.t += 1
    state.pull_counts[c != 0.0] += 1
    return state


def top_n_by_score(score: np.ndarray, n: int) -> tuple[int, ...]:
    """Indices of the n largest scores; exact ties go to the lowest index."""
    order = np.lexsort((np.arange(score.size), -score))
    return tuple(sorted(int(i) for i in order[:n]))


@dataclass(frozen=True)
class GapReport:
    champion_set: tuple[int, ...]
    i_star: int
    j_star: int
    pairwise_gap: float


def select_champion_challenger(state: BeliefState, n: int) -> GapReport:
    """Top-n champion set, its weakest member, and the strongest outsider.

    Ranks on the raw llr, which orders streams exactly as the posterior
    probabilities do but is immune to the belief clamp collapsing deeply
    suppressed streams into artificial ties (the clamp would otherwise
    freeze the challenger rotation on the lowest suppressed index). All
    argmin/argmax ties resolve to the lowest index.
    """
    if not (1 <= n < state.k):
        raise ConfigError(f"need 1 <= n < k, got n={n}, k={state.k}")
    score = state.llr
    s_t = top_n_by_score(score, n)
    inside = np.asarray(s_t, dtype=int)
    outside = np.setdiff1d(np.arange(state.k), inside, assume_unique=True)
    i_star = int(inside[np.lexsort((inside, score[inside]))[0]])
    j_star = int(outside[np.lexsort((outside, -score[outside]))[0]])
    return GapReport(champion_set=s_t, i_star=i_star, j_star=j_star,
                     pairwise_gap=pairwise_gap(state, n))


def pairwise_gap(state: BeliefState, n: int) -> float:
    """min llr inside the top-n set minus max llr outside it."""
    s_t = np.asarray(top_n_by_score(state.llr, n), dtype=int)
    mask = np.zeros(state.k, dtype=bool)
    mask[s_t] = True
    return float(state.llr[mask].min() - state.llr[~mask].max())


# ---------------------------------------------------------------------------
# stopping rules

def glr_threshold(t: int, delta: float) -> float:
    """beta(t, delta) = log(1/delta) + log(1 + log(max(t, e)))."""
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    return math.log(1.0 / delta) + math.log(1.0 + math.log(max(float(t), math.e)))


@dataclass(frozen=True)
class GlrStop:
    """Stop when the pairwise llr gap clears the anytime threshold."""

    delta: float

    def should_stop(self, state: BeliefState, n: int) -> bool:
        return pairwise_gap(state, n) >= glr_threshold(state.t, self.delta)


@dataclass(frozen=True)
class PosteriorGapStop:
    """Stop when min belief inside top-n exceeds max outside by gamma."""

    gamma: float

    def should_stop(self, state: BeliefState, n: int) -> bool:
        p = beliefs(state)
        s_t = np.asarray(top_n_by_score(p, n), dtype=int)
        mask = np.zeros(state.k, dtype=bool)
        mask[s_t] = True
        return float(p[mask].min() - p[~mask].max()) >= self.gamma


@dataclass(frozen=True)
class FixedBudgetStop:
    """Stop unconditionally after ``horizon`` rounds."""

    horizon: int

    def should_stop(self, state: BeliefState, n: int) -> bool:
        return state.t >= self.horizon


StopRule = GlrStop | PosteriorGapStop | FixedBudgetStop


def should_stop(state: BeliefState, n: int, rule: StopRule) -> bool:
    return rule.should_stop(state, n)


def parse_stop_rule(text: str) -> StopRule:
    """Parse "glr:0.1", "posterior-gap:0.99", or "fixed:2000"."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "glr":
            return GlrStop(delta=float(arg))
        if kind == "posterior-gap":
            return PosteriorGapStop(gamma=float(arg))
        if kind == "fixed":
            return FixedBudgetStop(horizon=int(arg))
    except ValueError as exc:
        raise ConfigError(f"bad stop rule argument in {text!r}: {exc}") from exc
    raise ConfigError(f"unknown stop rule {text!r}; expected glr:, posterior-gap:, or fixed:")


# ---------------------------------------------------------------------------
# diagnostics

def accumulate_snr(snr: np.ndarray, c: np.ndarray, cov: CovarianceModel,
                   i: int, j: int) -> np.ndarray:
    """Add one round's contribution (c_i - c_j)^2 / (c@sigma@c) to snr[i, j]."""
    c = np.asarray(c, dtype=float)
    s2 = float(c @ cov.sigma @ c)
    if s2 <= 0.0:
        raise NumericError("projected variance must be positive")
    snr[i, j] += float(c[i] - c[j]) ** 2 / s2
    return snr


def write_belief_trajectory_csv(path: str | Path, llr_history: np.ndarray) -> None:
    """Write per-round llr rows (columns: t, stream_0..stream_{K-1})."""
    llr_history = np.asarray(llr_history, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"stream_{k}" for k in range(llr_history.shape[1])])
        for t, row in enumerate(llr_history, start=1):
            writer.writerow([t] + [repr(float(v)) for v in row])
