"""Measurement-vector design.

The central problem: given process covariance ``sigma`` and a contrast
``delta_vec`` between two composite hypotheses, choose weights ``c`` that
minimize the projected noise power ``c @ sigma @ c`` subject to a unit
separation constraint ``c @ delta_vec = 1`` and an effort budget
``||c||_1 <= B``. The per-sample discrimination rate between the two
hypotheses is ``1 / (2 * objective)``, so minimizing the objective
maximizes the rate.

Without the budget the minimizer is closed-form,

    c = sigma^{-1} d / (d @ sigma^{-1} d),   objective = 1 / (d @ sigma^{-1} d).

With an active budget the problem is solved as a projected-gradient
descent on the split variable u = [c+, c-] >= 0 over the polytope
{u >= 0, sum(u) = B, [d, -d] @ u = 1}, warm-started from the clipped
closed form, with exact line search and a final active-set polish.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .covmodel import CovarianceModel
from .errors import ConfigError, InfeasibleBudgetError, NumericError

# Designed actions must satisfy the separation equality to this residual.
EQ_TOL = 1e-6
# KKT residual bound for the closed-form unconstrained solution.
KKT_TOL = 1e-8
MAX_PG_ITERS = 5000
PG_F_TOL = 1e-10


@dataclass(frozen=True)
class MeasurementAction:
    """One round's measurement weights plus design metadata.

    ``objective`` is ``c @ sigma @ c`` under the design covariance when
    one was involved (None for covariance-free constructions), and
    ``eq_residual`` is ``|c @ delta_vec - 1|`` for designed actions.
    """

    c: np.ndarray
    target_pair: tuple[int, int] | None = None
    objective: float | None = None
    l1_norm: float = 0.0
    eq_residual: float | None = None
    kkt_residual: float | None = None
    budget_active: bool = False

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.c)

    def to_json(self) -> str:
        """Serialize for trace files; non-finite floats become null."""
        def scalar(v):
            if v is None:
                return None
            v = float(v)
            return v if np.isfinite(v) else None

        payload = {
            "c": [scalar(v) for v in self.c],
            "target_pair": list(self.target_pair) if self.target_pair else None,
            "objective": scalar(self.objective),
            "l1_norm": scalar(self.l1_norm),
            "eq_residual": scalar(self.eq_residual),
            "kkt_residual": scalar(self.kkt_residual),
            "budget_active": bool(self.budget_active),
        }
        return json.dumps(payload, sort_keys=True)


def _finalize(c: np.ndarray, **kw) -> MeasurementAction:
    c = np.asarray(c, dtype=float)
    c.flags.writeable = False
    return MeasurementAction(c=c, l1_norm=float(np.abs(c).sum()), **kw)


def pairwise_kl(c: np.ndarray, mu_i: np.ndarray, mu_j: np.ndarray,
                cov: CovarianceModel | np.ndarray) -> float:
    """Per-sample divergence between the two stream-mean hypotheses under c."""
    sigma = cov.sigma if isinstance(cov, CovarianceModel) else np.asarray(cov, dtype=float)
    c = np.asarray(c, dtype=float)
    noise = float(c @ sigma @ c)
    if noise <= 0.0:
        raise NumericError("zero or negative projected variance; c must be nonzero")
    gap = float(c @ (np.asarray(mu_i, dtype=float) - np.asarray(mu_j, dtype=float)))
    return gap * gap / (2.0 * noise)


def _validate_delta(delta_vec: np.ndarray, k: int) -> np.ndarray:
    d = np.asarray(delta_vec, dtype=float)
    if d.shape != (k,):
        raise ConfigError(f"delta_vec must have shape ({k},), got {d.shape}")
    if not np.any(d != 0.0):
        raise ConfigError("delta_vec must be nonzero")
    return d


def design_unconstrained(cov: CovarianceModel, delta_vec: np.ndarray,
                         target_pair: tuple[int, int] | None = None) -> MeasurementAction:
    """Closed-form minimizer of c@sigma@c subject to c@delta_vec = 1."""
    d = _validate_delta(delta_vec, cov.k)
    w = np.linalg.solve(cov.sigma, d)
    quad = float(d @ w)
    if quad <= 0.0:
        raise NumericError("delta @ sigma^{-1} @ delta must be positive")
    c = w / quad
    objective = 1.0 / quad
    # Stationarity: 2 sigma c = nu d with nu = 2 * objective, exactly in
    # exact arithmetic; the float residual certifies the solve.
    kkt = float(np.max(np.abs(2.0 * (cov.sigma @ c) - 2.0 * objective * d)))
    if kkt > KKT_TOL * (1.0 + float(np.max(np.abs(d)))):
        raise NumericError(f"unconstrained design KKT residual {kkt:.3e} too large")
    return _finalize(c, target_pair=target_pair, objective=objective,
                     eq_residual=abs(float(c @ d) - 1.0), kkt_residual=kkt)


def min_feasible_budget(delta_vec: np.ndarray) -> float:
    """Smallest budget for which c@delta_vec = 1 is reachable: 1/max|delta_k|."""
    d = np.asarray(delta_vec, dtype=float)
    m = float(np.max(np.abs(d)))
    if m == 0.0:
        raise ConfigError("delta_vec must be nonzero")
    return 1.0 / m


def _project_polytope(v: np.ndarray, d: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {u >= 0, sum(u) = budget, d @ u = 1}.

    Inner problem (fixed nu): water-filling for the shift lambda making
    sum(max(0, w - lambda)) = budget, solved exactly by sorting. Outer
    problem: bisection on nu; the residual d @ u - 1 is non-increasing in
    nu because it is the derivative of a concave reduced dual.
    """

    def inner(nu: float) -> tuple[np.ndarray, float]:
        w = v - nu * d
        ws = np.sort(w)[::-1]
        prefix = np.cumsum(ws)
        m = np.arange(1, w.size + 1)
        lam_cand = (prefix - budget) / m
        # Largest m with ws[m-1] > lam_cand[m-1] gives the exact shift.
        valid = np.flatnonzero(ws > lam_cand)
        idx = valid[-1]
        lam = lam_cand[idx]
        u = np.maximum(0.0, w - lam)
        return u, float(d @ u - 1.0)

    lo, hi = -1.0, 1.0
    u, g = inner(0.0)
    if abs(g) <= 1e-14:
        return u
    if g > 0.0:
        lo = 0.0
        while True:
            u, g = inner(hi)
            if g <= 0.0:
                break
            lo, hi = hi, hi * 4.0
            if hi > 1e18:
                raise NumericError("projection bisection failed to bracket (budget at its floor?)")
    else:
        hi = 0.0
        while True:
            u, g = inner(lo)
            if g >= 0.0:
                break
            hi, lo = lo, lo * 4.0
            if lo < -1e18:
                raise NumericError("projection bisection failed to bracket (budget at its floor?)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        u, g = inner(mid)
        if abs(g) <= 1e-14:
            break
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, abs(lo), abs(hi)):
            break
    return u


def _polish_active_set(sigma: np.ndarray, d: np.ndarray, budget: float,
                       c: np.ndarray) -> np.ndarray | None:
    """Solve the equality-constrained QP on the sign pattern of ``c``.

    Returns the polished weights when they reproduce the sign pattern and
    satisfy the stationarity conditions off the support; None otherwise.
    """
    scale = float(np.max(np.abs(c)))
    if scale == 0.0:
        return None
    support = np.flatnonzero(np.abs(c) > 1e-10 * scale)
    if support.size == 0:
        return None
    signs = np.sign(c[support])
    m = support.size
    kkt = np.zeros((m + 2, m + 2))
    kkt[:m, :m] = 2.0 * sigma[np.ix_(support, support)]
    kkt[:m, m] = -d[support]
    kkt[:m, m + 1] = -signs
    kkt[m, :m] = d[support]
    kkt[m + 1, :m] = signs
    rhs = np.zeros(m + 2)
    rhs[m] = 1.0
    rhs[m + 1] = budget
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    c_sup, nu, mu = sol[:m], sol[m], sol[m + 1]
    if mu < -1e-10 or np.any(c_sup * signs < -1e-12 * max(1.0, budget)):
        return None
    full = np.zeros_like(c)
    full[support] = c_sup
    # Off-support stationarity: the subgradient condition bounds the
    # magnitude of the unpenalized gradient by mu.
    grad = 2.0 * (sigma @ full) - nu * d
    off = np.setdiff1d(np.arange(c.size), support, assume_unique=False)
    if off.size and np.any(np.abs(grad[off]) > mu * (1.0 + 1e-6) + 1e-9):
        return None
    return full


def design_budgeted(cov: CovarianceModel, delta_vec: np.ndarray, budget: float,
                    target_pair: tuple[int, int] | None = None) -> MeasurementAction:
    """Budget-constrained design: min c@sigma@c, c@delta_vec = 1, ||c||_1 <= B.

    Returns the closed-form solution whenever it already fits the budget.
    Otherwise runs projected gradient with exact line search on the split
    variable over the budget-tight polytope, then polishes the detected
    active set through its KKT system.
    """
    d = _validate_delta(delta_vec, cov.k)
    if budget <= 0.0:
        raise ConfigError(f"budget must be positive, got {budget}")
    b_min = min_feasible_budget(d)
    if budget < b_min * (1.0 - 1e-12):
        raise InfeasibleBudgetError(budget, b_min)

    unconstrained = design_unconstrained(cov, d, target_pair=target_pair)
    if unconstrained.l1_norm <= budget * (1.0 + 1e-12):
        return unconstrained

    if budget <= b_min * (1.0 + 1e-12):
        # Feasible set collapses to the single cheapest vertex.
        k_star = int(np.argmax(np.abs(d)))
        c = np.zeros(cov.k)
        c[k_star] = np.sign(d[k_star]) / abs(d[k_star])
        sigma_cc = float(c @ cov.sigma @ c)
        return _finalize(c, target_pair=target_pair, objective=sigma_cc,
                         eq_residual=abs(float(c @ d) - 1.0), budget_active=True)

    sigma = cov.sigma
    k = cov.k
    d2 = np.concatenate([d, -d])

    # Warm start: clip the closed form into the polytope.
    u = np.concatenate([np.maximum(unconstrained.c, 0.0),
                        np.maximum(-unconstrained.c, 0.0)])
    u = _project_polytope(u, d2, budget)

    c = u[:k] - u[k:]
    sig_c = sigma @ c
    f = float(c @ sig_c)
    step = 1.0
    for _ in range(MAX_PG_ITERS):
        grad = np.concatenate([2.0 * sig_c, -2.0 * sig_c])
        u_trial = _project_polytope(u - step * grad, d2, budget)
        p = u_trial - u
        if float(np.max(np.abs(p))) < 1e-15:
            break
        pc = p[:k] - p[k:]
        sig_pc = sigma @ pc
        a = float(pc @ sig_pc)
        b = 2.0 * float(c @ sig_pc)
        if a > 0.0:
            alpha = min(1.0, max(0.0, -b / (2.0 * a)))
        else:
            alpha = 1.0 if b < 0.0 else 0.0
        if alpha == 0.0:
            break
        u = u + alpha * p
        c = u[:k] - u[k:]
        sig_c = sigma @ c
        f_new = float(c @ sig_c)
        # Barzilai-Borwein style rescale keeps the trial step informative.
        gp = float(grad @ p)
        if gp < 0.0 and a > 0.0:
            step = min(1e12, max(1e-12, -gp / (2.0 * a)))
        if f - f_new < PG_F_TOL:
            f = f_new
            break
        f = f_new

    polished = _polish_active_set(sigma, d, budget, c)
    if polished is not None:
        f_pol = float(polished @ sigma @ polished)
        if f_pol <= f * (1.0 + 1e-12):
            c = polished
            f = f_pol

    l1 = float(np.abs(c).sum())
    if l1 > budget:
        c = c * (budget / l1)
    eq_res = abs(float(c @ d) - 1.0)
    if eq_res > EQ_TOL:
        raise NumericError(f"budgeted design equality residual {eq_res:.3e} exceeds {EQ_TOL}")
    return _finalize(c, target_pair=target_pair, objective=float(c @ sigma @ c),
                     eq_residual=eq_res, budget_active=True)


def restricted_best(cov: CovarianceModel, delta_vec: np.ndarray) -> MeasurementAction:
    """Best single-coordinate probe: argmax_k delta_k^2 / sigma_kk over +-e_k.

    The sign is chosen so c @ delta_vec >= 0; exact ties go to the lowest
    index (argmax returns the first maximizer).
    """
    d = _validate_delta(delta_vec, cov.k)
    ratios = d * d / np.diag(cov.sigma)
    k_star = int(np.argmax(ratios))
    sign = 1.0 if d[k_star] >= 0.0 else -1.0
    c = np.zeros(cov.k)
    c[k_star] = sign
    return _finalize(c, objective=float(cov.sigma[k_star, k_star]))


def simple_diff_action(i: int, j: int, budget: float, k: int) -> MeasurementAction:
    """Fixed contrast (B/2)(e_i - e_j); no covariance involved."""
    if i == j or not (0 <= i < k and 0 <= j < k):
        raise ConfigError(f"need distinct indices in [0, {k}), got ({i}, {j})")
    c = np.zeros(k)
    c[i] = budget / 2.0
    c[j] = -budget / 2.0
    return _finalize(c, target_pair=(i, j))


def round_robin_action(t: int, k: int, budget: float) -> MeasurementAction:
    """Cycle the full budget through single streams: B * e_{(t-1) mod k}."""
    if t < 1:
        raise ConfigError(f"round index starts at 1, got {t}")
    c = np.zeros(k)
    c[(t - 1) % k] = budget
    return _finalize(c)


def rsp_action(k: int, budget: float, rng: np.random.Generator) -> MeasurementAction:
    """Random sparse probe: ceil(B) uniform coordinates, Gaussian weights,
    rescaled to spend the budget exactly."""
    m = int(np.ceil(budget))
    if m > k:
        raise ConfigError(f"ceil(budget)={m} exceeds k={k}")
    idx = rng.choice(k, size=m, replace=False)
    while True:
        weights = rng.standard_normal(m)
        if np.any(weights != 0.0):
            break
    c = np.zeros(k)
    c[idx] = weights
    c *= budget / np.abs(c).sum()
    return _finalize(c)


def information_rate_lower_bound(cov: CovarianceModel, delta: np.ndarray,
                                 s_star: tuple[int, ...], budget: float) -> tuple[float, np.ndarray]:
    """Lower bound on the best worst-pair discrimination rate.

    Evaluates, for every pair-designed candidate action, the minimum
    divergence over all (anomalous, nominal) stream pairs, and returns the
    best candidate. Exact maximization over all actions is not attempted.
    """
    delta = np.asarray(delta, dtype=float)
    k = cov.k
    inside = sorted(s_star)
    outside = [j for j in range(k) if j not in s_star]
    if not inside or not outside:
        raise ConfigError("need at least one anomalous and one nominal stream")
    pairs = [(i, j) for i in inside for j in outside]
    best_rate, best_c = -np.inf, None
    for (i, j) in pairs:
        dvec = np.zeros(k)
        dvec[i] = delta[i]
        dvec[j] = -delta[j]
        cand = design_budgeted(cov, dvec, budget, target_pair=(i, j))
        noise = float(cand.c @ cov.sigma @ cand.c)
        worst = min(
            (float(cand.c[a] * delta[a] - cand.c[b] * delta[b]) ** 2) / (2.0 * noise)
            for (a, b) in pairs
        )
        if worst > best_rate:
            best_rate, best_c = worst, cand.c
    return float(best_rate), best_c
