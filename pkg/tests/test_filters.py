import numpy as np
import pytest

from mobal.filters import (ParticleSet, filter_error, init_particles, particle_belief, particle_filter_batch,
                           particle_filter_step, systematic_resample)
from mobal.pomdp import PomdpModel, belief_update, point_belief


def test_particle_belief_examples():
    assert np.array_equal(particle_belief(ParticleSet(np.zeros(5, dtype=int)), 2), [1, 0])
    assert np.array_equal(particle_belief(ParticleSet([0, 1, 0, 1]), 2), [0.5, 0.5])
    ps = init_particles([0.3, 0.7], 50, np.random.default_rng(0))
    assert particle_belief(ps, 2).sum() == pytest.approx(1.0)


def test_particle_belief_batched_matches_rows():
    p = np.array([[0, 1, 1], [2, 2, 0]])
    out = particle_belief(p, 3)
    for i in range(2):
        assert np.allclose(out[i], particle_belief(p[i], 3))


def test_filter_error_examples():
    assert filter_error([0.3, 0.7], [0.3, 0.7]) == 0
    assert filter_error([1, 0], [0, 1]) == pytest.approx(np.sqrt(2))
    assert filter_error([0.5, 0.5], [1, 0]) == pytest.approx(np.sqrt(0.5))
    with pytest.raises(ValueError):
        filter_error([1, 0], [1, 0, 0])


def test_systematic_resample_counts():
    w = np.array([[0.1, 0.2, 0.3, 0.4]] * 3)
    idx = systematic_resample(w, np.random.default_rng(0))
    assert idx.shape == (3, 4)
    for row in idx:
        counts = np.bincount(row, minlength=4)
        # systematic resampling keeps each count within one of M * w
        assert np.all(np.abs(counts - 4 * w[0]) < 1)


def test_systematic_resample_zero_weight_never_chosen():
    w = np.array([[0.0, 1.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0]])
    idx = systematic_resample(w, np.random.default_rng(5))
    assert set(idx[0]) <= {1, 3} and set(idx[1]) == {0}


def test_perfect_information_lands_on_truth():
    m = PomdpModel(np.array([[[0.0, 1.0], [1.0, 0.0]]]), np.eye(2), np.zeros((2, 1)))
    ps = ParticleSet(np.zeros(20, dtype=int))
    ps = particle_filter_step(m, ps, 0, 1, np.random.default_rng(0))
    assert np.all(ps.particles == 1) and ps.m == 20


def test_many_particles_match_exact(netsys1):
    rng = np.random.default_rng(2)
    ps = init_particles(point_belief(2), 100_000, rng)
    for o in (0, 5):
        out = particle_filter_step(netsys1, ps, 0, o, rng)
        exact = belief_update(netsys1, point_belief(2), 0, o)
        assert np.abs(particle_belief(out, 2) - exact).sum() < 0.01


def test_same_seed_same_particles(netsys1):
    ps = init_particles([0.5, 0.5], 30, np.random.default_rng(1))
    a = particle_filter_step(netsys1, ps, 0, 4, np.random.default_rng(9))
    b = particle_filter_step(netsys1, ps, 0, 4, np.random.default_rng(9))
    assert np.array_equal(a.particles, b.particles)


def test_zero_weight_fallback():
    m = PomdpModel(np.eye(2)[None], np.array([[1.0, 0.0], [1.0, 0.0]]), np.zeros((2, 1)))
    ps = ParticleSet(np.zeros(10, dtype=int))
    out = particle_filter_step(m, ps, 0, 1, np.random.default_rng(0))
    assert out.fallbacks == 1 and out.m == 10 and np.all(out.particles == 0)


def test_batch_rows_independent(netsys1):
    rng = np.random.default_rng(4)
    parts = np.zeros((5, 40), dtype=int)
    new, fb = particle_filter_batch(netsys1, parts, [0, 0, 1, 1, 0], [7, 7, 0, 0, 3], rng)
    assert new.shape == (5, 40) and not fb.any()
    assert np.all((new >= 0) & (new < 2))


def test_error_shrinks_with_particles(netsys1):
    rng = np.random.default_rng(11)
    errs = {4: [], 64: []}
    for _ in range(100):
        s, b = 0, point_belief(2)
        obs = []
        for _ in range(20):
            s = int(rng.random() < netsys1.transition[0, s, 1])
            o = int(rng.choice(8, p=netsys1.observation[s]))
            obs.append(o)
        for m in errs:
            ps = init_particles(point_belief(2), m, rng)
            b = point_belief(2)
            e = 0.0
            for o in obs:
                ps = particle_filter_step(netsys1, ps, 0, o, rng)
                b = belief_update(netsys1, b, 0, o)
                e += filter_error(b, particle_belief(ps, 2))
            errs[m].append(e / len(obs))
    assert np.mean(errs[64]) < np.mean(errs[4])


def test_particle_set_validation():
    with pytest.raises(ValueError):
        ParticleSet([])
    with pytest.raises(ValueError):
        ParticleSet([-1, 0])
