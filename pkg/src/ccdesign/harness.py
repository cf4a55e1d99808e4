"""Experiment orchestration: presets, paired sweeps, bootstrap statistics.

The statistical conventions are deliberately boring: medians for
samples-to-threshold (robust to a censoring tail), means for F1
trajectories, BCa bootstrap intervals for both. Censored trials — the
threshold is never hit inside the horizon — enter the median as +inf
sentinels and are reported separately, never imputed away. A policy
whose success rate drops below one half is marked ``did_not_converge``
and gets no median at all.

Seeding is paired: trial ``j`` of every policy at every grid point of a
sweep sees the same problem instance (same anomalous set; the swept
parameter itself may reshape it), so monotonicity comparisons across a
grid are within-instance.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .covmodel import CorrelationSpec, CovarianceModel, generate_correlation, spectrum
from .environment import InstanceConfig, make_instance
from .errors import ConfigError
from .inference import (FixedBudgetStop, StopRule, parse_stop_rule,
                        write_belief_trajectory_csv)
from .policies import PolicyKind, TrialRecord, policy_stream_index, run_trial
from .seeding import (RNG_SCHEME, TAG_BOOTSTRAP, TAG_INSTANCE, TAG_TRIAL,
                      rng_from, seed_sequence)

RAW_COLUMNS = ("experiment_id", "preset", "policy", "seed", "grid_value",
               "tau", "samples_to_f1", "censored", "final_f1")
SCHEMA_VERSION = 1
SWEEPABLE = ("rho", "budget", "delta", "n", "confidence")

_NORMAL = NormalDist()


# ---------------------------------------------------------------------------
# scalar metrics


def samples_to_threshold(record: TrialRecord, threshold: float, *,
                         sustain: int = 1) -> int | None:
    """First round t whose F1 reaches ``threshold``; None if it never does.

    ``sustain`` > 1 demands the level hold for that many consecutive
    rounds and returns the first round of the sustained stretch.
    """
    f1 = np.asarray(record.f1, dtype=float)
    if f1.size == 0:
        return None
    if threshold <= 0.0:
        return 1
    ok = f1 >= threshold
    if sustain > 1:
        if ok.size < sustain:
            return None
        runs = np.convolve(ok.astype(int), np.ones(sustain, dtype=int), "valid")
        hits = np.flatnonzero(runs == sustain)
    else:
        hits = np.flatnonzero(ok)
    return int(hits[0]) + 1 if hits.size else None


# ---------------------------------------------------------------------------
# bootstrap


def bca_interval(samples: Sequence[float], *, statistic: Callable = np.median,
                 resamples: int = 10000, level: float = 0.95,
                 rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Bias-corrected-and-accelerated bootstrap interval for ``statistic``.

    ``statistic`` must accept an ``axis`` keyword (np.median / np.mean do).
    Degenerate inputs (all equal, level <= 0) collapse to a point. Samples
    containing non-finite sentinels (censored trials) fall back to the
    plain percentile interval: jackknife moments are meaningless there.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ConfigError("bca_interval needs at least 2 samples")
    if rng is None:
        rng = rng_from(0, TAG_BOOTSTRAP)
    theta = float(statistic(x))
    if level <= 0.0 or np.all(x == x[0]):
        return (theta, theta)

    b = int(resamples)
    idx = rng.integers(0, x.size, size=(b, x.size))
    boot = np.asarray(statistic(x[idx], axis=1), dtype=float)

    alpha = (1.0 - level) / 2.0
    if not (np.isfinite(theta) and np.all(np.isfinite(boot))):
        # order statistics, no interpolation: inf sentinels must survive
        lo = float(np.quantile(boot, alpha, method="inverted_cdf"))
        hi = float(np.quantile(boot, 1.0 - alpha, method="inverted_cdf"))
        return (lo, hi)

    # bias correction; ties split evenly so z0 stays symmetric under sign flip
    below = np.count_nonzero(boot < theta) + 0.5 * np.count_nonzero(boot == theta)
    p0 = min(max(below / b, 1.0 / (b + 1.0)), b / (b + 1.0))
    z0 = _NORMAL.inv_cdf(p0)

    # jackknife acceleration from leave-one-out skewness
    n = x.size
    mask = ~np.eye(n, dtype=bool)
    loo = np.broadcast_to(x, (n, n))[mask].reshape(n, n - 1)
    jack = np.asarray(statistic(loo, axis=1), dtype=float)
    dev = jack.mean() - jack
    den = float(np.sum(dev * dev)) ** 1.5
    accel = float(np.sum(dev ** 3)) / (6.0 * den) if den > 0.0 else 0.0

    out = []
    for q in (alpha, 1.0 - alpha):
        z = _NORMAL.inv_cdf(q)
        shrink = 1.0 - accel * (z0 + z)
        adj = q if shrink <= 0.0 else _NORMAL.cdf(z0 + (z0 + z) / shrink)
        out.append(float(np.quantile(boot, min(max(adj, 0.0), 1.0))))
    lo, hi = sorted(out)
    return (lo, hi)


def _columnwise_quantile(sorted_cols: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-column quantile with a different q per column (linear interp)."""
    b = sorted_cols.shape[0]
    pos = np.clip(q, 0.0, 1.0) * (b - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, b - 1)
    frac = pos - lo
    cols = np.arange(sorted_cols.shape[1])
    return (1.0 - frac) * sorted_cols[lo, cols] + frac * sorted_cols[hi, cols]


def mean_trajectory_ci(f1_matrix: np.ndarray, *, resamples: int = 2000,
                       level: float = 0.95,
                       rng: np.random.Generator | None = None) -> dict:
    """Pointwise BCa bands around the mean F1 trajectory.

    ``f1_matrix`` is trials x rounds. One resample index matrix is shared
    across all rounds so the bands are coherent along the trajectory.
    """
    f = np.asarray(f1_matrix, dtype=float)
    s, t = f.shape
    if s < 2:
        mean = f.mean(axis=0)
        return {"mean": mean.tolist(), "lo": mean.tolist(), "hi": mean.tolist()}
    if rng is None:
        rng = rng_from(0, TAG_BOOTSTRAP, 1)

    b = int(resamples)
    idx = rng.integers(0, s, size=(b, s))
    weights = np.zeros((b, s))
    np.add.at(weights, (np.arange(b)[:, None], idx), 1.0)
    boot = (weights @ f) / s                      # resamples x rounds
    theta = f.mean(axis=0)

    below = (boot < theta).sum(axis=0) + 0.5 * (boot == theta).sum(axis=0)
    p0 = np.clip(below / b, 1.0 / (b + 1.0), b / (b + 1.0))
    inv_cdf = np.vectorize(_NORMAL.inv_cdf)
    cdf = np.vectorize(_NORMAL.cdf)
    z0 = inv_cdf(p0)

    jack = (s * theta[None, :] - f) / (s - 1)     # leave-one-out means
    dev = jack.mean(axis=0) - jack
    den = np.sum(dev * dev, axis=0) ** 1.5
    with np.errstate(divide="ignore", invalid="ignore"):
        accel = np.where(den > 0.0, np.sum(dev ** 3, axis=0) / (6.0 * den), 0.0)

    alpha = (1.0 - level) / 2.0
    boot.sort(axis=0)
    bands = {}
    for name, q in (("lo", alpha), ("hi", 1.0 - alpha)):
        z = _NORMAL.inv_cdf(q)
        shrink = 1.0 - accel * (z0 + z)
        adj = np.where(shrink > 0.0, cdf(z0 + (z0 + z) / np.where(shrink > 0.0, shrink, 1.0)), q)
        bands[name] = _columnwise_quantile(boot, adj)
    return {"mean": theta.tolist(), "lo": bands["lo"].tolist(),
            "hi": bands["hi"].tolist()}


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: an instance family, a policy list, and statistics knobs.

    ``pattern`` None means independent streams (identity covariance).
    ``stop`` is a rule string ("glr:0.1", "posterior-gap:0.99", "fixed:500");
    empty means run to the horizon. A sweep re-runs the whole grid with the
    named parameter replaced by each grid value, reusing seeds across points.
    """

    k: int
    n: int
    delta: float = 3.0
    pattern: str | None = "toeplitz"
    rho: float = 0.6
    budget: float = 5.0
    policies: tuple[PolicyKind, ...] = (PolicyKind.ECC_AHT,)
    seeds: int = 20
    horizon: int = 2000
    f1_threshold: float = 0.95
    resamples: int = 10000
    ci_level: float = 0.95
    stop: str = ""
    sustain: int = 1
    sweep_param: str | None = None
    sweep_grid: tuple[float, ...] = ()
    uniform_prior: bool = False
    record_spectrum: bool = False
    belief_csv: bool = False
    experiment_id: str = "exp"
    preset: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not 0.0 < self.f1_threshold <= 1.0:
            raise ConfigError("f1_threshold must lie in (0, 1]")
        if self.seeds < 1:
            raise ConfigError("need at least one seed")
        if self.sustain < 1:
            raise ConfigError("sustain must be >= 1")
        if self.sweep_param is not None:
            if self.sweep_param not in SWEEPABLE:
                raise ConfigError(f"sweep parameter must be one of {SWEEPABLE}")
            if not self.sweep_grid:
                raise ConfigError("sweep_grid must be nonempty when sweeping")
        if not self.policies:
            raise ConfigError("policy list must be nonempty")

    def grid_points(self) -> tuple:
        return tuple(self.sweep_grid) if self.sweep_param else (None,)


@lru_cache(maxsize=32)
def _cov_for(pattern: str | None, k: int, rho: float) -> CovarianceModel | None:
    if pattern is None:
        return None
    return generate_correlation(CorrelationSpec(pattern=pattern, k=k, rho=float(rho)))


def _materialize(config: ExperimentConfig, grid_value) -> tuple[InstanceConfig, StopRule]:
    """Resolve one grid point to an instance config and a stop rule."""
    k, n = config.k, config.n
    delta, rho, budget = config.delta, config.rho, config.budget
    stop_text = config.stop
    if config.sweep_param == "rho":
        rho = float(grid_value)
    elif config.sweep_param == "budget":
        budget = float(grid_value)
    elif config.sweep_param == "delta":
        delta = float(grid_value)
    elif config.sweep_param == "n":
        n = int(grid_value)
    elif config.sweep_param == "confidence":
        stop_text = f"glr:{float(grid_value):g}"

    cov = _cov_for(config.pattern, k, rho)
    inst = InstanceConfig(k=k, n=n, delta=delta, budget=budget, cov=cov)
    rule: StopRule = (parse_stop_rule(stop_text) if stop_text
                      else FixedBudgetStop(config.horizon))
    return inst, rule


def _instance_seed(master: int, j: int) -> int:
    return int(seed_sequence(master, TAG_INSTANCE, j).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# trial execution (picklable unit of work for the process pool)


def _run_one(task: tuple) -> tuple:
    (master, exp_id, preset, gi, grid_value, policy_name, j,
     cfg_fields, threshold, sustain, horizon, uniform_prior) = task
    config = ExperimentConfig(**cfg_fields)
    kind = PolicyKind(policy_name)
    inst_cfg, rule = _materialize(config, grid_value)
    instance = make_instance(inst_cfg, seed=_instance_seed(master, j))
    rng = rng_from(master, TAG_TRIAL, j, policy_stream_index(kind))
    record = run_trial(instance, kind, rule, rng, horizon=horizon,
                       uniform_prior=uniform_prior)
    stf = samples_to_threshold(record, threshold, sustain=sustain)
    row = {
        "experiment_id": exp_id,
        "preset": preset,
        "policy": policy_name,
        "seed": j,
        "grid_value": "" if grid_value is None else repr(float(grid_value)),
        "tau": "" if record.tau is None else str(record.tau),
        "samples_to_f1": "" if stf is None else str(stf),
        "censored": "false" if stf is not None else "true",
        "final_f1": repr(float(record.final_f1)),
    }
    return ((gi, policy_name, j), row, record.f1.tolist(), record.failure)


# ---------------------------------------------------------------------------
# aggregation


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, PolicyKind):
        return obj.value
    return obj


def _summarize_policy(delays: np.ndarray, taus: list, finals: np.ndarray,
                      failures: list, config: ExperimentConfig,
                      rng: np.random.Generator) -> dict:
    """Per-policy scalar summary; delays carry +inf where censored."""
    trials = delays.size
    censored = int(np.sum(~np.isfinite(delays)))
    success = (trials - censored) / trials
    finite = delays[np.isfinite(delays)]
    out: dict = {
        "trials": trials,
        "censored": censored,
        "success_rate": success,
        "failures": len(failures),
        "failure_messages": sorted(set(failures)),
        "final_f1_mean": float(finals.mean()) if finals.size else None,
        "delay_mean_uncensored": float(finite.mean()) if finite.size else None,
    }
    if success >= 0.5 and np.isfinite(np.median(delays)):
        out["did_not_converge"] = False
        out["delay_median"] = float(np.median(delays))
        lo, hi = bca_interval(delays, statistic=np.median,
                              resamples=config.resamples,
                              level=config.ci_level, rng=rng)
        out["delay_ci"] = [lo, hi]
    else:
        out["did_not_converge"] = True
        out["delay_median"] = None
        out["delay_ci"] = None
    if taus:
        tau_arr = np.asarray(taus, dtype=float)
        out["stop_rate"] = len(taus) / trials
        out["tau_mean"] = float(tau_arr.mean())
        out["tau_median"] = float(np.median(tau_arr))
        if tau_arr.size >= 2:
            lo, hi = bca_interval(tau_arr, statistic=np.mean,
                                  resamples=config.resamples,
                                  level=config.ci_level, rng=rng)
            out["tau_ci"] = [lo, hi]
    else:
        out["stop_rate"] = 0.0
        out["tau_mean"] = None
        out["tau_median"] = None
    return out


def _pad_trajectories(trajs: list[list[float]], horizon: int) -> np.ndarray:
    """Equalize trial trajectories: a stopped trial's estimate is frozen,
    so its F1 continues at the last value."""
    width = min(horizon, max((len(t) for t in trajs), default=0))
    mat = np.zeros((len(trajs), width))
    for i, t in enumerate(trajs):
        row = np.asarray(t[:width], dtype=float)
        mat[i, :row.size] = row
        if row.size < width:
            mat[i, row.size:] = row[-1] if row.size else 0.0
    return mat


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    summary: dict
    raw_path: Path | None = None
    summary_path: Path | None = None


def write_raw_csv(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RAW_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def run_experiment(config: ExperimentConfig, *, master_seed: int = 0,
                   out_dir: str | Path | None = None, jobs: int = 1,
                   trajectories: bool = True,
                   traj_resamples: int = 2000) -> ExperimentResult:
    """Run every (grid point, policy, seed) trial and aggregate.

    Output is independent of ``jobs``: tasks are keyed and sorted before
    aggregation, and every trial's randomness is derived from
    (master_seed, tags, seed index, policy index) alone.
    """
    grid = config.grid_points()
    cfg_fields = asdict(config)
    cfg_fields["policies"] = tuple(PolicyKind(p) if not isinstance(p, PolicyKind) else p
                                   for p in config.policies)
    tasks = []
    for gi, gv in enumerate(grid):
        for kind in config.policies:
            for j in range(config.seeds):
                tasks.append((master_seed, config.experiment_id, config.preset,
                              gi, gv, kind.value, j, cfg_fields,
                              config.f1_threshold, config.sustain,
                              config.horizon, config.uniform_prior))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_one, tasks, chunksize=4))
    else:
        outcomes = [_run_one(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])

    rows = [row for _, row, _, _ in outcomes]
    by_key: dict[tuple, list] = {}
    for key, row, traj, failure in outcomes:
        gi, policy, j = key
        by_key.setdefault((gi, policy), []).append((j, row, traj, failure))

    boot_rng = rng_from(master_seed, TAG_BOOTSTRAP)
    grid_summaries = []
    for gi, gv in enumerate(grid):
        point: dict = {"grid_value": gv}
        if config.record_spectrum:
            cov = _cov_for(config.pattern, config.k,
                           float(gv) if config.sweep_param == "rho" else config.rho)
            if cov is not None:
                point["spectrum"] = spectrum(cov).to_dict()
        policies_out = {}
        for kind in config.policies:
            entries = by_key.get((gi, kind.value), [])
            delays = np.array([float(r["samples_to_f1"]) if r["samples_to_f1"] else np.inf
                               for _, r, _, _ in entries])
            taus = [int(r["tau"]) for _, r, _, _ in entries if r["tau"]]
            finals = np.array([float(r["final_f1"]) for _, r, _, _ in entries])
            failures = [f for _, _, _, f in entries if f]
            stats = _summarize_policy(delays, taus, finals, failures, config, boot_rng)
            if trajectories:
                trajs = [traj for _, _, traj, _ in entries]
                if trajs and min(len(t) for t in trajs) > 0:
                    mat = _pad_trajectories(trajs, config.horizon)
                    stats["trajectory"] = mean_trajectory_ci(
                        mat, resamples=traj_resamples, level=config.ci_level,
                        rng=rng_from(master_seed, TAG_BOOTSTRAP, 1))
            policies_out[kind.value] = stats
        point["policies"] = policies_out
        grid_summaries.append(point)

    summary = {
        "schema": SCHEMA_VERSION,
        "experiment_id": config.experiment_id,
        "preset": config.preset,
        "rng_scheme": RNG_SCHEME,
        "master_seed": master_seed,
        "config": {k: (v if k != "policies" else [p.value for p in config.policies])
                   for k, v in asdict(config).items()},
        "sweep_param": config.sweep_param,
        "grid": grid_summaries,
    }
    summary = _jsonable(summary)

    result = ExperimentResult(config=config, rows=rows, summary=summary)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.raw_path = out / "raw.csv"
        result.summary_path = out / "summary.json"
        write_raw_csv(result.raw_path, rows)
        with open(result.summary_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if config.belief_csv:
            _write_belief_panel(config, master_seed, out / "beliefs.csv")
    return result


def _write_belief_panel(config: ExperimentConfig, master_seed: int,
                        path: Path) -> None:
    """Full llr history of seed 0 under the first policy (plot fodder)."""
    inst_cfg, rule = _materialize(config, config.grid_points()[0])
    instance = make_instance(inst_cfg, seed=_instance_seed(master_seed, 0))
    kind = config.policies[0]
    rng = rng_from(master_seed, TAG_TRIAL, 0, policy_stream_index(kind))
    checkpoints = tuple(range(1, config.horizon + 1))
    record = run_trial(instance, kind, rule, rng, horizon=config.horizon,
                       llr_checkpoints=checkpoints,
                       uniform_prior=config.uniform_prior)
    steps = sorted(record.llr_checkpoints)
    history = np.vstack([record.llr_checkpoints[t] for t in steps])
    write_belief_trajectory_csv(path, history)


# ---------------------------------------------------------------------------
# presets

_EXP1_POLICIES = (PolicyKind.ECC_AHT, PolicyKind.TTTS_CHALLENGER,
                  PolicyKind.BASE_ARM_COMB_GAP_E, PolicyKind.ROUND_ROBIN,
                  PolicyKind.RSP)
_ABLATION_POLICIES = (PolicyKind.ECC_AHT, PolicyKind.ECC_AHT_NO_QP,
                      PolicyKind.RSP, PolicyKind.ECC_AHT_DIAGONAL,
                      PolicyKind.ECC_AHT_COST_FREE)
_PATTERN_NAMES = ("toeplitz", "equicorrelation", "block", "circulant",
                  "graph", "exponential", "rbf", "kronecker")


def _presets() -> dict[str, ExperimentConfig]:
    reg = {
        "fig1-toy": ExperimentConfig(
            k=15, n=3, delta=3.0, pattern="toeplitz", rho=0.6, budget=4.0,
            policies=(PolicyKind.ECC_AHT,), seeds=20, horizon=300,
            belief_csv=True, preset="fig1-toy", experiment_id="fig1-toy"),
        "exp1-independent": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern=None, budget=4.0,
            policies=_EXP1_POLICIES, seeds=20, horizon=2000,
            preset="exp1-independent", experiment_id="exp1-independent"),
        "exp1-rho05": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern="toeplitz", rho=0.5, budget=4.0,
            policies=_EXP1_POLICIES, seeds=20, horizon=2000,
            preset="exp1-rho05", experiment_id="exp1-rho05"),
        "exp1-k1000": ExperimentConfig(
            k=1000, n=3, delta=3.0, pattern="toeplitz", rho=0.8, budget=10.0,
            policies=_EXP1_POLICIES, seeds=20, horizon=2000,
            preset="exp1-k1000", experiment_id="exp1-k1000"),
        "ablation": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern="toeplitz", rho=0.8, budget=4.0,
            policies=_ABLATION_POLICIES, seeds=20, horizon=2000,
            preset="ablation", experiment_id="ablation"),
        "robustness-baseline": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern="toeplitz", rho=0.6, budget=5.0,
            policies=(PolicyKind.ECC_AHT,), seeds=20, horizon=2000,
            preset="robustness-baseline", experiment_id="robustness-baseline"),
        "robustness-rho": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern="toeplitz", rho=0.6, budget=5.0,
            policies=(PolicyKind.ECC_AHT,), seeds=20, horizon=2000,
            sweep_param="rho", sweep_grid=(0.0, 0.3, 0.6, 0.9),
            preset="robustness-rho", experiment_id="robustness-rho"),
        "robustness-budget": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern="toeplitz", rho=0.6, budget=5.0,
            policies=(PolicyKind.ECC_AHT,), seeds=20, horizon=2000,
            sweep_param="budget", sweep_grid=(2.0, 5.0, 10.0),
            preset="robustness-budget", experiment_id="robustness-budget"),
        "robustness-delta": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern="toeplitz", rho=0.6, budget=5.0,
            policies=(PolicyKind.ECC_AHT,), seeds=20, horizon=2000,
            sweep_param="delta", sweep_grid=(1.0, 2.0, 3.0, 5.0),
            preset="robustness-delta", experiment_id="robustness-delta"),
        "robustness-n": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern="toeplitz", rho=0.6, budget=5.0,
            policies=(PolicyKind.ECC_AHT,), seeds=20, horizon=2000,
            sweep_param="n", sweep_grid=(1, 3, 5, 10),
            preset="robustness-n", experiment_id="robustness-n"),
        "spectral-mixing": ExperimentConfig(
            k=100, n=3, delta=3.0, pattern="equicorrelation", rho=0.6,
            budget=5.0, policies=(PolicyKind.ECC_AHT,), seeds=20,
            horizon=2000, sweep_param="rho",
            sweep_grid=(0.0, 0.2, 0.4, 0.6, 0.8, 0.95),
            record_spectrum=True, preset="spectral-mixing",
            experiment_id="spectral-mixing"),
        "glr-scaling": ExperimentConfig(
            k=20, n=2, delta=5.0, pattern="toeplitz", rho=0.6, budget=5.0,
            policies=(PolicyKind.ECC_AHT,), seeds=50, horizon=5000,
            sweep_param="confidence", sweep_grid=(1e-1, 1e-2, 1e-3),
            preset="glr-scaling", experiment_id="glr-scaling"),
    }
    for name in _PATTERN_NAMES:
        key = f"patterns-{name}"
        reg[key] = ExperimentConfig(
            k=128, n=3, delta=3.0, pattern=name, rho=0.8, budget=5.0,
            policies=(PolicyKind.ECC_AHT,), seeds=20, horizon=2000,
            record_spectrum=True, preset=key, experiment_id=key)
    return reg


PRESETS = _presets()


def get_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown preset {name!r}; known presets: {known}") from None
