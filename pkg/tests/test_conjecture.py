import numpy as np
import pytest

from mobal.conjecture import (ConjectureSpace, EmpiricalHistory, Posterior, consistent_set, discrepancies,
                              discrepancy, likelihood, posterior_gap, posterior_update, sample_conjecture)
from mobal.errors import DegenerateEvidenceError
from mobal.netsys import NetSysConfig, build_model
from mobal.pomdp import PomdpModel, observation_likelihood, point_belief


def test_space_validation(netsys1, netsys2):
    with pytest.raises(ValueError):
        ConjectureSpace((), ())
    with pytest.raises(ValueError):
        ConjectureSpace((0.1, 0.2), (netsys1,))
    with pytest.raises(ValueError):
        ConjectureSpace((0.1, 0.2), (netsys1, netsys2))


def test_posterior_normalizes():
    rho = Posterior(np.array([0.0, np.log(3.0)]))
    assert np.allclose(rho.weights, [0.25, 0.75])
    assert Posterior.uniform(4).entropy() == pytest.approx(np.log(4))
    with pytest.raises(ValueError):
        Posterior.from_weights([0.5, 0.6])


def test_flat_likelihood_leaves_posterior(space3):
    rho = Posterior.from_weights([0.2, 0.3, 0.5])
    # under block all conjectures share the kernel
    out = posterior_update(space3, rho, [0.4, 0.6], 1, 3)
    assert np.allclose(out.weights, rho.weights, atol=1e-12)


def test_zero_likelihood_kills_weight():
    Z0 = np.array([[1.0, 0.0], [1.0, 0.0]])
    Z1 = np.array([[0.5, 0.5], [0.5, 0.5]])
    T = np.eye(2)[None]
    C = np.zeros((2, 1))
    space = ConjectureSpace((0, 1), (PomdpModel(T, Z0, C), PomdpModel(T, Z1, C)))
    out = posterior_update(space, Posterior.uniform(2), [1, 0], 0, 1)
    assert out.weights[0] == 0.0 and out.weights[1] == 1.0
    with pytest.raises(DegenerateEvidenceError):
        posterior_update(ConjectureSpace((0,), (space.models[0],)), Posterior.uniform(1), [1, 0], 0, 1)


def test_three_term_bayes_by_hand(space3):
    o = 4
    lik = [observation_likelihood(m, point_belief(2), 0, o) for m in space3.models]
    expect = np.array(lik) / sum(lik)
    out = posterior_update(space3, Posterior.uniform(3), point_belief(2), 0, o)
    assert np.allclose(out.weights, expect, atol=1e-12)


def test_monte_carlo_likelihood_close(netsys1):
    rng = np.random.default_rng(0)
    exact = likelihood(netsys1, np.array([0.6, 0.4]), 0, 7)
    mc = likelihood(netsys1, np.array([0.6, 0.4]), 0, 7, "monte-carlo", 200_000, rng)
    assert abs(exact - mc) < 0.005


def test_log_space_survives_long_runs(space3):
    rho = Posterior.uniform(3)
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        rho = posterior_update(space3, rho, [0.7, 0.3], 0, int(rng.integers(8)))
    w = rho.weights
    assert np.all(np.isfinite(rho.log_weights[w > 0])) and w.sum() == pytest.approx(1.0)


def test_sample_conjecture():
    rng = np.random.default_rng(0)
    point = Posterior.from_weights([0, 1, 0])
    assert all(sample_conjecture(point, rng) == 1 for _ in range(100))
    draws = [sample_conjecture(Posterior.uniform(3), rng) for _ in range(100_000)]
    assert np.all(np.abs(np.bincount(draws) / 1e5 - 1 / 3) < 0.01)
    assert sample_conjecture(Posterior.uniform(3), np.random.default_rng(5)) == \
        sample_conjecture(Posterior.uniform(3), np.random.default_rng(5))


def hist_of(beliefs, actions):
    h = EmpiricalHistory()
    for b in beliefs:
        h.add_belief(b)
    for a in actions:
        h.add_action(a)
    return h


def test_discrepancy_identical_model_zero(netsys1):
    space = ConjectureSpace((0.2, 0.5), (netsys1, build_model(NetSysConfig(), 0.5)))
    h = hist_of([[1, 0], [0.3, 0.7]], [0, 1, 0])
    assert discrepancy(space, 0, netsys1, h) == 0.0
    assert np.all(discrepancies(space, netsys1, h) >= 0)


def test_discrepancy_hand_enumerated(space3, netsys1):
    h = hist_of([[1.0, 0.0]], [0])
    p = point_belief(2) @ netsys1.transition[0] @ netsys1.observation
    q = point_belief(2) @ space3.models[1].transition[0] @ space3.models[1].observation
    expect = sum(p[o] * np.log(p[o] / q[o]) for o in range(8))
    assert discrepancy(space3, 1, netsys1, h) == pytest.approx(expect, abs=1e-14)


def test_discrepancy_infinite_sentinel():
    T = np.eye(2)[None]
    C = np.zeros((2, 1))
    true = PomdpModel(T, np.array([[0.5, 0.5], [0.5, 0.5]]), C)
    space = ConjectureSpace((0, 1), (PomdpModel(T, np.array([[1.0, 0.0], [1.0, 0.0]]), C), true))
    K = discrepancies(space, true, hist_of([[1, 0]], [0]))
    assert np.isinf(K[0]) and K[1] == 0
    assert consistent_set(space, true, hist_of([[1, 0]], [0])) == {1}


def test_discrepancy_needs_history(space3, netsys1):
    with pytest.raises(ValueError):
        discrepancies(space3, netsys1, EmpiricalHistory())


def test_consistent_set_basics(space3, netsys1):
    space = ConjectureSpace((0.0, 0.2), (space3.models[0], netsys1))
    h = hist_of([[0.8, 0.2]], [0])
    assert 1 in consistent_set(space, netsys1, h)
    assert consistent_set(space3, netsys1, h, tol=np.inf) == {0, 1, 2}


def test_posterior_gap_arithmetic(space3, netsys1):
    h = hist_of([[1, 0]], [0])
    assert posterior_gap(space3, netsys1, h, Posterior.uniform(3), K=np.array([0.0, 1.0, 2.0])) == \
        pytest.approx(1.0)
    K = discrepancies(space3, netsys1, h)
    best = np.zeros(3)
    best[np.argmin(K)] = 1.0
    assert posterior_gap(space3, netsys1, h, Posterior.from_weights(best)) == 0.0
    # an infinite discrepancy with zero weight does not poison the gap
    assert posterior_gap(space3, netsys1, h, Posterior.from_weights([1, 0, 0]),
                         K=np.array([0.0, np.inf, 1.0])) == 0.0
