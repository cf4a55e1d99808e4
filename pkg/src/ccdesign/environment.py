"""Synthetic and replayed measurement environments.

A :class:`ProblemInstance` owns the ground truth: which streams carry the
anomalous mean shift, the shift magnitudes, the covariance of the process
noise, and the per-round measurement budget. Policies never see it; they
get an :class:`InstanceView` with the truth stripped out.

One measurement is a weight vector ``c``; the environment responds with

    y = c @ (mu + L z),   z ~ N(0, I),  L = chol(sigma)

so y ~ N(c@mu, c@sigma@c) and draws are i.i.d. across rounds. The noise
is realized through the full K-dimensional process vector rather than a
scalar, so replaying the same stream gives the same hidden process.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .covmodel import CovarianceModel
from .errors import ActionError, ConfigError
from .seeding import TAG_INSTANCE, rng_from

# Relative slack on the budget check; designed actions sit at or below B.
BUDGET_SLACK = 1e-9


@dataclass(frozen=True)
class Observation:
    y: float
    t: int


@dataclass(frozen=True)
class InstanceView:
    """What a policy is allowed to know: everything except the truth."""

    k: int
    n: int
    delta: np.ndarray
    mu0: np.ndarray
    cov: CovarianceModel
    budget: float


@dataclass(frozen=True)
class ProblemInstance:
    """Ground-truth problem: K streams, n of them shifted by delta."""

    k: int
    n: int
    s_star: tuple[int, ...]
    delta: np.ndarray
    mu0: np.ndarray
    cov: CovarianceModel
    budget: float

    def __post_init__(self):
        if not (1 <= self.n < self.k):
            raise ConfigError(f"need 1 <= n < k, got n={self.n}, k={self.k}")
        if len(self.s_star) != self.n or sorted(set(self.s_star)) != sorted(self.s_star):
            raise ConfigError("s_star must hold n distinct stream indices")
        if any(not 0 <= i < self.k for i in self.s_star):
            raise ConfigError("s_star indices out of range")
        if self.delta.shape != (self.k,) or np.any(self.delta <= 0):
            raise ConfigError("delta must be a length-k vector of positive shifts")
        if self.mu0.shape != (self.k,):
            raise ConfigError("mu0 must be a length-k vector")
        if self.cov.k != self.k:
            raise ConfigError("covariance dimension disagrees with k")
        if self.budget <= 0:
            raise ConfigError(f"budget must be positive, got {self.budget}")

    @cached_property
    def _true_mean(self) -> np.ndarray:
        mu = self.mu0.copy()
        idx = np.asarray(self.s_star, dtype=int)
        mu[idx] += self.delta[idx]
        mu.flags.writeable = False
        return mu

    def true_mean(self) -> np.ndarray:
        """mu0 with the anomalous coordinates shifted by their delta."""
        return self._true_mean

    def view(self) -> InstanceView:
        return InstanceView(k=self.k, n=self.n, delta=self.delta,
                            mu0=self.mu0, cov=self.cov, budget=self.budget)

    def horizon(self) -> int | None:
        return None  # synthetic data never runs out

    def observe(self, c: np.ndarray, t: int, rng: np.random.Generator,
                *, enforce_budget: bool = True) -> Observation:
        c = _check_action(c, self.k, self.budget, enforce_budget)
        z = rng.standard_normal(self.k)
        y = float(c @ (self._true_mean + self.cov.cholesky @ z))
        return Observation(y=y, t=t)


def sample_observation(instance: ProblemInstance, c: np.ndarray,
                       rng: np.random.Generator, *, t: int = 0,
                       enforce_budget: bool = True) -> Observation:
    """Draw one measurement y = c @ (mu + L z) from the instance."""
    return instance.observe(c, t, rng, enforce_budget=enforce_budget)


def _check_action(c: np.ndarray, k: int, budget: float, enforce_budget: bool) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (k,):
        raise ActionError(f"action must have shape ({k},), got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ActionError("action contains non-finite weights")
    l1 = float(np.abs(c).sum())
    if l1 == 0.0:
        raise ActionError("action must be nonzero")
    if enforce_budget and l1 > budget * (1.0 + BUDGET_SLACK):
        raise ActionError(f"action l1 norm {l1:.6g} exceeds budget {budget:g}")
    return c


@dataclass(frozen=True)
class InstanceConfig:
    """Everything needed to draw a ProblemInstance except the seed.

    ``delta`` may be a scalar (shared shift) or a length-k sequence.
    ``corr`` is a CorrelationSpec-compatible generated model; None means
    independent streams (identity covariance).
    """

    k: int
    n: int
    delta: float | Sequence[float] = 3.0
    budget: float = 5.0
    cov: CovarianceModel | None = None
    mu0: Sequence[float] | None = None


def make_instance(config: InstanceConfig, seed: int) -> ProblemInstance:
    """Draw the anomalous set uniformly at random and assemble the instance."""
    rng = rng_from(seed, TAG_INSTANCE)
    s_star = tuple(sorted(rng.choice(config.k, size=config.n, replace=False).tolist()))
    delta = np.asarray(config.delta, dtype=float)
    if delta.ndim == 0:
        delta = np.full(config.k, float(delta))
    mu0 = (np.zeros(config.k) if config.mu0 is None
           else np.asarray(config.mu0, dtype=float))
    cov = config.cov if config.cov is not None else CovarianceModel.from_matrix(np.eye(config.k))
    delta.flags.writeable = False
    mu0.flags.writeable = False
    return ProblemInstance(k=config.k, n=config.n, s_star=s_star, delta=delta,
                           mu0=mu0, cov=cov, budget=float(config.budget))


@dataclass(frozen=True)
class ReplayInstance:
    """Fixed recorded window rows played back in order.

    ``observe`` returns ``c @ x_t`` for the stored row ``x_t``; the rng
    argument is accepted for interface parity and never used. ``s_star``
    and ``delta`` exist for evaluation only and typically come from the
    labeled segment of an ingested dataset.
    """

    windows: np.ndarray
    k: int
    n: int
    s_star: tuple[int, ...]
    delta: np.ndarray
    mu0: np.ndarray
    cov: CovarianceModel
    budget: float

    def view(self) -> InstanceView:
        return InstanceView(k=self.k, n=self.n, delta=self.delta,
                            mu0=self.mu0, cov=self.cov, budget=self.budget)

    def true_mean(self) -> np.ndarray:
        mu = self.mu0.copy()
        idx = np.asarray(self.s_star, dtype=int)
        mu[idx] += self.delta[idx]
        return mu

    def horizon(self) -> int | None:
        return self.windows.shape[0]

    def observe(self, c: np.ndarray, t: int, rng: np.random.Generator,
                *, enforce_budget: bool = True) -> Observation:
        c = _check_action(c, self.k, self.budget, enforce_budget)
        if not 0 <= t - 1 < self.windows.shape[0]:
            raise ActionError(f"replay exhausted: round {t} of {self.windows.shape[0]}")
        return Observation(y=float(c @ self.windows[t - 1]), t=t)


def instance_to_json(instance: ProblemInstance) -> str:
    return json.dumps(
        {
            "k": instance.k,
            "n": instance.n,
            "s_star": list(instance.s_star),
            "delta": instance.delta.tolist(),
            "mu0": instance.mu0.tolist(),
            "budget": instance.budget,
            "sigma": instance.cov.sigma.tolist(),
            "jitter_applied": instance.cov.jitter_applied,
        },
        sort_keys=True,
    )


def instance_from_json(text: str) -> ProblemInstance:
    p = json.loads(text)
    cov = CovarianceModel.from_matrix(np.asarray(p["sigma"], dtype=float),
                                      jitter_applied=p.get("jitter_applied", 0.0))
    delta = np.asarray(p["delta"], dtype=float)
    mu0 = np.asarray(p["mu0"], dtype=float)
    delta.flags.writeable = False
    mu0.flags.writeable = False
    return ProblemInstance(k=p["k"], n=p["n"], s_star=tuple(p["s_star"]),
                           delta=delta, mu0=mu0, cov=cov, budget=p["budget"])
