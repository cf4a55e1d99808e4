"""Measurement policies and the single-trial runner.

Every policy sees an :class:`~ccdesign.environment.InstanceView` (never
the ground truth) and produces one weight vector per round. After the
environment responds, the same pseudo-likelihood update is applied for
every kind, using that kind's effective covariance: the full process
covariance for most, its diagonal for the model-blind ablation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .covmodel import CovarianceModel
from .design import (MeasurementAction, design_budgeted, design_unconstrained,
                     restricted_best, round_robin_action, rsp_action,
                     simple_diff_action)
from .environment import InstanceView, ProblemInstance, ReplayInstance
from .errors import CcdesignError, ConfigError
from .inference import (BeliefState, FixedBudgetStop, GapReport, StopRule,
                        beliefs, pairwise_gap, should_stop, top_n_by_score,
                        update_pseudo_llr, LLR_CLAMP)


class PolicyKind(Enum):
    ECC_AHT = "EccAht"
    ECC_AHT_COST_FREE = "EccAhtCostFree"
    ECC_AHT_NO_QP = "EccAhtNoQp"
    ECC_AHT_DIAGONAL = "EccAhtDiagonal"
    ECC_AHT_RESTRICTED = "EccAhtRestricted"
    TTTS_CHALLENGER = "TttsChallenger"
    BASE_ARM_COMB_GAP_E = "BaseArmCombGapE"
    ROUND_ROBIN = "RoundRobin"
    RSP = "Rsp"

    @classmethod
    def from_name(cls, name: str) -> "PolicyKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ConfigError(f"unknown policy {name!r}; expected one of "
                          f"{', '.join(k.value for k in cls)}")


# Stable stream index per kind so run results never depend on the order
# policies are listed in a config.
def policy_stream_index(kind: PolicyKind) -> int:
    return list(PolicyKind).index(kind)


@dataclass
class PolicyState:
    """Per-trial mutable state: beliefs plus per-stream mean estimates.

    ``mean_num``/``mean_wt`` hold a precision-weighted running estimate of
    each stream's deviation from nominal: a round with weights c and
    observation y contributes (y - c@mu0)/c_k at weight c_k^2/s2 to every
    stream in the support. A single-coordinate pull reduces to the plain
    running mean of that stream's observations.
    """

    kind: PolicyKind
    belief: BeliefState
    eff_cov: CovarianceModel
    ranking: str = "belief"
    mean_num: np.ndarray = field(default=None)  # type: ignore[assignment]
    mean_wt: np.ndarray = field(default=None)  # type: ignore[assignment]
    design_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ranking not in ("belief", "sample_mean"):
            raise ConfigError(f"ranking must be 'belief' or 'sample_mean', got {self.ranking!r}")
        k = self.belief.k
        if self.mean_num is None:
            self.mean_num = np.zeros(k)
        if self.mean_wt is None:
            self.mean_wt = np.zeros(k)

    def deviation_estimates(self) -> np.ndarray:
        out = np.zeros(self.belief.k)
        seen = self.mean_wt > 0.0
        out[seen] = self.mean_num[seen] / self.mean_wt[seen]
        return out


def init_policy_state(kind: PolicyKind, view: InstanceView, *,
                      ranking: str = "belief", uniform_prior: bool = False) -> PolicyState:
    eff_cov = (view.cov.diagonal_model()
               if kind is PolicyKind.ECC_AHT_DIAGONAL else view.cov)
    return PolicyState(kind=kind,
                       belief=BeliefState.from_prior(view.k, view.n, uniform=uniform_prior),
                       eff_cov=eff_cov, ranking=ranking)


def _selection_scores(state: PolicyState) -> np.ndarray:
    if state.ranking == "sample_mean":
        return state.deviation_estimates()
    # Raw llr: same ordering as the posterior probabilities, but deeply
    # suppressed streams keep distinct ranks despite the belief clamp.
    return state.belief.llr


def _select_pair(state: PolicyState, n: int) -> GapReport:
    score = _selection_scores(state)
    s_t = top_n_by_score(score, n)
    inside = np.asarray(s_t, dtype=int)
    outside = np.setdiff1d(np.arange(score.size), inside, assume_unique=True)
    i_star = int(inside[np.lexsort((inside, score[inside]))[0]])
    j_star = int(outside[np.lexsort((outside, -score[outside]))[0]])
    return GapReport(champion_set=s_t, i_star=i_star, j_star=j_star,
                     pairwise_gap=pairwise_gap(state.belief, n))


def _pair_contrast(view: InstanceView, i: int, j: int) -> np.ndarray:
    dvec = np.zeros(view.k)
    dvec[i] = view.delta[i]
    dvec[j] = -view.delta[j]
    return dvec


def _designed_action(state: PolicyState, view: InstanceView, i: int, j: int,
                     *, budgeted: bool) -> MeasurementAction:
    key = (i, j, budgeted)
    cached = state.design_cache.get(key)
    if cached is not None:
        return cached
    dvec = _pair_contrast(view, i, j)
    if budgeted:
        action = design_budgeted(state.eff_cov, dvec, view.budget, target_pair=(i, j))
    else:
        action = design_unconstrained(state.eff_cov, dvec, target_pair=(i, j))
    state.design_cache[key] = action
    return action


def policy_step(state: PolicyState, view: InstanceView,
                rng: np.random.Generator) -> MeasurementAction:
    """Choose this round's measurement. Draw order per kind is fixed."""
    kind = state.kind
    if kind is PolicyKind.ROUND_ROBIN:
        return round_robin_action(state.belief.t + 1, view.k, view.budget)
    if kind is PolicyKind.RSP:
        return rsp_action(view.k, view.budget, rng)
    if kind is PolicyKind.TTTS_CHALLENGER:
        z = np.clip(state.belief.llr, -LLR_CLAMP, LLR_CLAMP)
        a = 1.0 + np.maximum(z, 0.0)
        b = 1.0 + np.maximum(-z, 0.0)
        q1 = rng.beta(a, b)
        s_t = top_n_by_score(q1, view.n)
        inside = np.asarray(s_t, dtype=int)
        i_star = int(inside[np.lexsort((inside, q1[inside]))[0]])
        q2 = rng.beta(a, b)
        outside = np.setdiff1d(np.arange(view.k), inside, assume_unique=True)
        j_star = int(outside[np.lexsort((outside, -q2[outside]))[0]])
        return _designed_action(state, view, i_star, j_star, budgeted=True)

    report = _select_pair(state, view.n)
    i, j = report.i_star, report.j_star
    if kind is PolicyKind.ECC_AHT:
        return _designed_action(state, view, i, j, budgeted=True)
    if kind is PolicyKind.ECC_AHT_COST_FREE:
        return _designed_action(state, view, i, j, budgeted=False)
    if kind is PolicyKind.ECC_AHT_NO_QP:
        return simple_diff_action(i, j, view.budget, view.k)
    if kind is PolicyKind.ECC_AHT_DIAGONAL:
        return _designed_action(state, view, i, j, budgeted=True)
    if kind is PolicyKind.ECC_AHT_RESTRICTED:
        return restricted_best(view.cov, _pair_contrast(view, i, j))
    if kind is PolicyKind.BASE_ARM_COMB_GAP_E:
        counts = state.belief.pull_counts
        # Pull whichever of the pair has fewer pulls; champion on ties.
        a_idx = i if counts[i] <= counts[j] else j
        c = np.zeros(view.k)
        c[a_idx] = 1.0
        c.flags.writeable = False
        return MeasurementAction(c=c, target_pair=(i, j), l1_norm=1.0,
                                 objective=float(state.eff_cov.sigma[a_idx, a_idx]))
    raise ConfigError(f"unhandled policy kind {kind}")  # pragma: no cover


def policy_observe(state: PolicyState, view: InstanceView,
                   action: MeasurementAction, y: float) -> None:
    """Shared posterior update plus the per-stream mean estimates."""
    c = action.c
    sigma_sq = action.objective
    if sigma_sq is None:
        sigma_sq = float(c @ state.eff_cov.sigma @ c)
    update_pseudo_llr(state.belief, c, y, None, view.delta, view.mu0,
                      sigma_sq=sigma_sq)
    support = np.flatnonzero(c)
    resid = y - float(c @ view.mu0)
    est = resid / c[support]
    wts = c[support] ** 2 / sigma_sq
    state.mean_num[support] += wts * est
    state.mean_wt[support] += wts


def estimate_set(state: PolicyState, n: int) -> tuple[int, ...]:
    """Current top-n answer; mean-based for the base-arm policy."""
    if state.kind is PolicyKind.BASE_ARM_COMB_GAP_E or state.ranking == "sample_mean":
        return top_n_by_score(state.deviation_estimates(), n)
    return top_n_by_score(state.belief.llr, n)


# ---------------------------------------------------------------------------
# trial runner

@dataclass
class TrialRecord:
    """Everything one trial produced, in order."""

    policy: str
    k: int
    n: int
    horizon: int
    tau: int | None
    stopped: bool
    s_hat: tuple[int, ...]
    f1: np.ndarray
    gap: np.ndarray
    y: np.ndarray
    l1: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    budget_exempt: bool = False
    failure: str | None = None
    actions: np.ndarray | None = None
    llr_checkpoints: dict[int, np.ndarray] = field(default_factory=dict)
    lambda_pairs: list[tuple[int, int]] | None = None
    lambda_final: np.ndarray | None = None

    @property
    def final_f1(self) -> float:
        return float(self.f1[-1]) if self.f1.size else 0.0

    def to_json(self) -> str:
        """Serialize the trial for trace files; arrays become lists."""
        def listify(arr):
            if arr is None:
                return None
            out = []
            for v in np.asarray(arr, dtype=float).ravel():
                out.append(float(v) if np.isfinite(v) else None)
            return out

        payload = {
            "policy": self.policy,
            "k": self.k,
            "n": self.n,
            "horizon": self.horizon,
            "tau": self.tau,
            "stopped": self.stopped,
            "s_hat": list(self.s_hat),
            "f1": listify(self.f1),
            "gap": listify(self.gap),
            "y": listify(self.y),
            "l1": listify(self.l1),
            "pair_i": [int(v) for v in self.pair_i],
            "pair_j": [int(v) for v in self.pair_j],
            "budget_exempt": self.budget_exempt,
            "failure": self.failure,
            "final_f1": self.final_f1,
        }
        return json.dumps(payload, sort_keys=True)

    def write_action_matrix_csv(self, path) -> None:
        """Write the per-round weight matrix (row t, one column per stream)."""
        if self.actions is None:
            raise ConfigError(
                "trial was run without diagnostics; no action matrix recorded")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"stream_{k}" for k in range(self.k)])
            for t, row in enumerate(np.asarray(self.actions, dtype=float), start=1):
                writer.writerow([t] + [repr(float(v)) for v in row])


def f1_score(estimate: tuple[int, ...], truth: tuple[int, ...]) -> float:
    """2|est & truth| / (|est| + |truth|); truth must be nonempty."""
    if len(truth) == 0:
        raise ConfigError("truth set must be nonempty")
    hits = len(set(estimate) & set(truth))
    denom = len(estimate) + len(truth)
    return 2.0 * hits / denom


def run_trial(instance: ProblemInstance | ReplayInstance, kind: PolicyKind,
              stop_rule: StopRule, rng: np.random.Generator, *,
              horizon: int = 2000, diagnostics: bool = False,
              llr_checkpoints: tuple[int, ...] = (),
              ranking: str = "belief",
              uniform_prior: bool = False) -> TrialRecord:
    """Play one policy against one instance until the rule fires.

    ``horizon`` censors rules that never fire; the replay row count and a
    FixedBudget rule tighten it. Errors raised mid-trial are converted to
    a tagged failure record carrying the partial trajectories.
    """
    view = instance.view()
    state = init_policy_state(kind, view, ranking=ranking, uniform_prior=uniform_prior)
    budget_exempt = kind is PolicyKind.ECC_AHT_COST_FREE

    cap = horizon
    if isinstance(stop_rule, FixedBudgetStop):
        cap = min(cap, stop_rule.horizon)
    data_cap = instance.horizon()
    if data_cap is not None:
        cap = min(cap, data_cap)

    truth = instance.s_star
    want_lambda = diagnostics
    if want_lambda:
        lam_pairs = [(i, j) for i in sorted(truth)
                     for j in range(view.k) if j not in truth]
        lam_i = np.asarray([p[0] for p in lam_pairs], dtype=int)
        lam_j = np.asarray([p[1] for p in lam_pairs], dtype=int)
        lam_vals = np.zeros(len(lam_pairs))
        true_sigma = instance.cov.sigma

    f1s: list[float] = []
    gaps: list[float] = []
    ys: list[float] = []
    l1s: list[float] = []
    pis: list[int] = []
    pjs: list[int] = []
    act_rows: list[np.ndarray] = [] if diagnostics else None  # type: ignore[assignment]
    checkpoints: dict[int, np.ndarray] = {}
    failure = None
    stopped = False

    try:
        while True:
            if should_stop(state.belief, view.n, stop_rule):
                stopped = True
                break
            if state.belief.t >= cap:
                break
            t_next = state.belief.t + 1
            action = policy_step(state, view, rng)
            obs = instance.observe(action.c, t_next, rng,
                                   enforce_budget=not budget_exempt)
            policy_observe(state, view, action, obs.y)

            f1s.append(f1_score(estimate_set(state, view.n), truth))
            gaps.append(pairwise_gap(state.belief, view.n))
            ys.append(obs.y)
            l1s.append(action.l1_norm)
            pair = action.target_pair or (-1, -1)
            pis.append(pair[0])
            pjs.append(pair[1])
            if diagnostics:
                act_rows.append(np.asarray(action.c, dtype=float).copy())
                s2_true = float(action.c @ true_sigma @ action.c)
                contrib = (action.c[lam_i] - action.c[lam_j]) ** 2 / s2_true
                lam_vals += contrib
            if state.belief.t in llr_checkpoints:
                checkpoints[state.belief.t] = state.belief.llr.copy()
    except CcdesignError as exc:
        failure = f"{type(exc).__name__}: {exc}"

    tau = state.belief.t if stopped else None
    return TrialRecord(
        policy=kind.value, k=view.k, n=view.n, horizon=cap,
        tau=tau, stopped=stopped,
        s_hat=estimate_set(state, view.n),
        f1=np.asarray(f1s), gap=np.asarray(gaps), y=np.asarray(ys),
        l1=np.asarray(l1s),
        pair_i=np.asarray(pis, dtype=int), pair_j=np.asarray(pjs, dtype=int),
        budget_exempt=budget_exempt, failure=failure,
        actions=(np.vstack(act_rows) if diagnostics and act_rows else None),
        llr_checkpoints=checkpoints,
        lambda_pairs=(lam_pairs if want_lambda else None),
        lambda_final=(lam_vals if want_lambda else None),
    )
