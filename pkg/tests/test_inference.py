"""Belief updates, selection, gaps, stopping rules, diagnostics."""

import itertools
import math

import numpy as np
import pytest

from ccdesign.covmodel import CovarianceModel
from ccdesign.errors import ConfigError, DataError
from ccdesign.inference import (BeliefState, FixedBudgetStop, GlrStop,
                                PosteriorGapStop, accumulate_snr, beliefs,
                                glr_threshold, pairwise_gap, parse_stop_rule,
                                prior_llr, select_champion_challenger,
                                should_stop, top_n_by_score, update_pseudo_llr)

from conftest import identity_model, toeplitz_model


def state_with_llr(llr, t=0):
    return BeliefState(llr=np.asarray(llr, dtype=float), t=t)


def do_update(state, c, y, cov, delta, mu0=None):
    k = len(state.llr)
    mu0 = np.zeros(k) if mu0 is None else np.asarray(mu0, dtype=float)
    return update_pseudo_llr(state, np.asarray(c, dtype=float), y, cov,
                             np.asarray(delta, dtype=float), mu0)


# ---------------------------------------------------------------------------
# prior and beliefs

def test_prior_llr_default_matches_anomaly_fraction():
    state = BeliefState(llr=prior_llr(10, 3))
    np.testing.assert_allclose(beliefs(state), np.full(10, 0.3), atol=1e-12)


def test_prior_llr_uniform_is_half():
    state = BeliefState(llr=prior_llr(8, 2, uniform=True))
    np.testing.assert_array_equal(state.llr, np.zeros(8))
    np.testing.assert_allclose(beliefs(state), np.full(8, 0.5), atol=1e-15)


def test_beliefs_examples():
    assert beliefs(state_with_llr([0.0]))[0] == pytest.approx(0.5)
    assert beliefs(state_with_llr([math.log(3.0)]))[0] == pytest.approx(0.75)
    clamped = beliefs(state_with_llr([800.0, -800.0]))
    assert clamped[0] == pytest.approx(1.0 - 1e-16)
    assert clamped[1] <= 1e-15
    assert np.all(clamped > 0.0) and np.all(clamped < 1.0)


# ---------------------------------------------------------------------------
# update_pseudo_llr

def test_update_worked_example():
    # c = e_0, mu0 = 0, delta_0 = 2, Sigma = I, y = 2:
    # increment = 2*2/1 - 4/2 = 2.0
    state = state_with_llr([0.0, 0.0])
    new = do_update(state, [1.0, 0.0], 2.0, identity_model(2), [2.0, 2.0])
    assert new.llr[0] == pytest.approx(2.0)
    assert new.llr[1] == pytest.approx(0.0)
    assert new.t == 1


def test_update_midpoint_is_neutral():
    # y at the midpoint of the two hypothesis means leaves the score unchanged
    cov = toeplitz_model(3, 0.4)
    mu0 = np.array([1.0, -1.0, 0.5])
    delta = np.array([2.0, 3.0, 1.0])
    c = np.array([0.8, -0.3, 0.0])
    k = 1
    y = float(c @ mu0) + delta[k] * c[k] / 2.0
    new = do_update(state_with_llr([0.0, 0.0, 0.0]), c, y, cov, delta, mu0)
    assert new.llr[k] == pytest.approx(0.0, abs=1e-12)


def test_update_zero_coefficient_exactly_unchanged():
    state = state_with_llr([0.7, -1.3, 0.2])
    c = np.array([0.5, 0.0, -0.5])
    new = do_update(state, c, 3.14, toeplitz_model(3, 0.5), [2.0, 2.0, 2.0])
    assert new.llr[1] == state.llr[1]  # bitwise, not approximately


def test_update_rejects_non_finite_observation():
    state = state_with_llr([0.0, 0.0])
    with pytest.raises(DataError):
        do_update(state, [1.0, 0.0], float("nan"), identity_model(2), [2.0, 2.0])
    with pytest.raises(DataError):
        do_update(state, [1.0, 0.0], float("inf"), identity_model(2), [2.0, 2.0])


def test_update_belief_llr_consistency(rng):
    state = state_with_llr(np.zeros(4))
    cov = toeplitz_model(4, 0.6)
    delta = np.array([1.0, 2.0, 3.0, 4.0])
    for _ in range(50):
        c = rng.normal(size=4)
        y = float(rng.normal())
        state = do_update(state, c, y, cov, delta)
        p = beliefs(state)
        ell = np.clip(state.llr, -700, 700)
        np.testing.assert_allclose(p, 1.0 / (1.0 + np.exp(-ell)), atol=1e-12)
    assert state.t == 50


def test_update_drift_signs_match_closed_form(rng):
    # single-anomaly truth, probe the anomalous stream then a null stream
    delta = np.array([3.0, 3.0])
    cov = identity_model(2)
    n_draws = 10**5

    for probe, sign in ((0, +1.0), (1, -1.0)):
        c = np.zeros(2)
        c[probe] = 1.0
        sigma_sq = float(c @ cov.sigma @ c)
        mean_true = np.array([3.0, 0.0])  # stream 0 is anomalous
        ys = mean_true @ c + rng.standard_normal(n_draws) * math.sqrt(sigma_sq)
        incr = delta[probe] * c[probe] * ys / sigma_sq \
            - (delta[probe] * c[probe]) ** 2 / (2 * sigma_sq)
        expected = sign * (delta[probe] * c[probe]) ** 2 / (2 * sigma_sq)
        se = abs(delta[probe] * c[probe]) / math.sqrt(sigma_sq * n_draws)
        assert abs(incr.mean() - expected) < 3 * se


# ---------------------------------------------------------------------------
# selection and gaps

def test_top_n_by_score_ties_take_lowest_indices():
    assert top_n_by_score(np.array([1.0, 1.0, 1.0, 1.0]), 2) == (0, 1)
    assert top_n_by_score(np.array([0.1, 0.9, 0.9, 0.3]), 2) == (1, 2)


def test_select_worked_examples():
    # beliefs (.9, .1, .8, .2), n=2
    llr = np.log([9.0, 1 / 9.0, 4.0, 0.25])
    rep = select_champion_challenger(state_with_llr(llr), 2)
    assert rep.champion_set == (0, 2)
    assert rep.i_star == 2
    assert rep.j_star == 3

    # all ties resolve to the lowest index
    rep = select_champion_challenger(state_with_llr([0.0, 0.0, 0.0, 0.0]), 2)
    assert rep.champion_set == (0, 1)
    assert rep.i_star == 0
    assert rep.j_star == 2

    # beliefs (.2, .9, .9), n=1
    llr = np.log([0.25, 9.0, 9.0])
    rep = select_champion_challenger(state_with_llr(llr), 1)
    assert rep.champion_set == (1,)
    assert rep.i_star == 1
    assert rep.j_star == 2

    with pytest.raises(ConfigError):
        select_champion_challenger(state_with_llr([0.0, 0.0]), 2)


def test_pairwise_gap_examples():
    assert pairwise_gap(state_with_llr([5.0, 1.0, 4.0, 0.0]), 2) == pytest.approx(3.0)
    assert pairwise_gap(state_with_llr([2.0, 2.0, 2.0]), 1) == pytest.approx(0.0)


def test_pairwise_gap_equals_single_swap_enumeration(rng):
    for _ in range(40):
        k = int(rng.integers(3, 9))
        n = int(rng.integers(1, k))
        llr = rng.normal(size=k)
        state = state_with_llr(llr)
        top = set(top_n_by_score(llr, n))
        swaps = [llr[i] - llr[j]
                 for i, j in itertools.product(sorted(top), range(k))
                 if j not in top]
        assert pairwise_gap(state, n) == pytest.approx(min(swaps), abs=1e-12)


# ---------------------------------------------------------------------------
# stopping rules

def test_glr_threshold_worked_example():
    # log(1/0.1) + log(1 + log(max(1, e))) = log 10 + log 2
    assert glr_threshold(1, 0.1) == pytest.approx(math.log(10) + math.log(2), abs=1e-9)
    assert glr_threshold(1, 0.1) == pytest.approx(2.996, abs=1e-3)


def test_glr_threshold_monotone():
    ts = [1, 2, 5, 10, 100, 10**4]
    vals = [glr_threshold(t, 0.1) for t in ts]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    deltas = [0.2, 0.1, 0.01, 1e-3]
    vals = [glr_threshold(7, d) for d in deltas]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_should_stop_glr():
    state = state_with_llr([10.0, 0.0, 0.0], t=1)
    assert should_stop(state, 1, GlrStop(delta=0.1))
    state = state_with_llr([2.9, 0.0, 0.0], t=1)
    assert not should_stop(state, 1, GlrStop(delta=0.1))


def test_should_stop_fixed_budget():
    state = state_with_llr([0.0, 0.0], t=499)
    assert not should_stop(state, 1, FixedBudgetStop(horizon=500))
    state = state_with_llr([0.0, 0.0], t=500)
    assert should_stop(state, 1, FixedBudgetStop(horizon=500))


def test_should_stop_posterior_gap():
    def logit(p):
        return math.log(p / (1 - p))

    llr = [logit(.99), logit(.99), logit(.99), logit(.01), logit(.01)]
    state = state_with_llr(llr)
    assert should_stop(state, 3, PosteriorGapStop(gamma=0.9))
    assert not should_stop(state, 3, PosteriorGapStop(gamma=0.985))


def test_parse_stop_rule():
    assert parse_stop_rule("glr:0.1") == GlrStop(delta=0.1)
    assert parse_stop_rule("posterior-gap:0.99") == PosteriorGapStop(gamma=0.99)
    assert parse_stop_rule("fixed:2000") == FixedBudgetStop(horizon=2000)
    with pytest.raises(ConfigError):
        parse_stop_rule("banana:3")
    with pytest.raises(ConfigError):
        parse_stop_rule("glr:not-a-number")


# ---------------------------------------------------------------------------
# diagnostics

def test_accumulate_snr_unit_probe():
    cov = identity_model(3)
    snr = np.zeros((3, 3))
    c = np.array([1.0, 0.0, 0.0])
    for _ in range(25):
        accumulate_snr(snr, c, cov, 0, 2)
    assert snr[0, 2] == pytest.approx(25.0)


def test_accumulate_snr_orthogonal_probe_adds_nothing():
    cov = identity_model(3)
    snr = np.zeros((3, 3))
    c = np.array([0.5, 0.5, 0.0])  # c_i == c_j, contrast vanishes
    accumulate_snr(snr, c, cov, 0, 1)
    assert snr[0, 1] == 0.0


def test_accumulate_snr_matches_replay_recomputation(rng):
    cov = toeplitz_model(4, 0.5)
    snr = np.zeros((4, 4))
    log = [rng.normal(size=4) for _ in range(30)]
    for c in log:
        accumulate_snr(snr, c, cov, 1, 3)
    expected = sum((c[1] - c[3]) ** 2 / float(c @ cov.sigma @ c) for c in log)
    assert snr[1, 3] == pytest.approx(expected, rel=1e-12)
