"""Exact and particle belief filters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pomdp import PomdpModel, as_belief, belief_update

DEFAULT_PARTICLES = 50

exact_filter_step = belief_update


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """A bootstrap particle set.

    ``fallbacks`` counts steps where every particle had zero observation
    weight and the set was propagated without reweighting.
    """

    particles: np.ndarray
    fallbacks: int = 0

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=np.int64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("particles must be a non-empty 1-d array of state indices")
        if np.any(p < 0):
            raise ValueError("particle state indices must be nonnegative")
        object.__setattr__(self, "particles", p)

    @property
    def m(self) -> int:
        return self.particles.shape[0]


def init_particles(b, m: int, rng: np.random.Generator) -> ParticleSet:
    """Draw ``m`` particles i.i.d. from belief ``b``."""
    b = as_belief(b)
    return ParticleSet(_draw(np.cumsum(b), rng.random(m)))


def _draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # u[..., None] against a cdf row (or rows broadcast on the leading axes)
    return np.minimum((u[..., None] >= cdf).sum(axis=-1), cdf.shape[-1] - 1)


def particle_belief(ps: ParticleSet | np.ndarray, n_states: int) -> np.ndarray:
    particles = ps.particles if isinstance(ps, ParticleSet) else np.asarray(ps)
    if particles.size == 0:
        raise ValueError("empty particle set")
    if particles.ndim == 1:
        return np.bincount(particles, minlength=n_states) / particles.size
    return (particles[..., None] == np.arange(n_states)).mean(axis=-2)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling of each row of ``weights`` (shape (B, M)).

    Returns parent indices of the same shape. Rows must have positive sum.
    """
    weights = np.atleast_2d(weights)
    B, M = weights.shape
    cdf = np.cumsum(weights, axis=1)
    cdf /= cdf[:, -1:]
    cdf[:, -1] = 1.0
    positions = (rng.random((B, 1)) + np.arange(M)) / M
    # offset each row into its own unit interval so one searchsorted serves all rows
    offset = np.arange(B)[:, None]
    idx = np.searchsorted((cdf + offset).ravel(), (positions + offset).ravel(), side="right")
    return np.minimum(idx.reshape(B, M) - offset * M, M - 1)


def particle_filter_batch(model: PomdpModel, particles: np.ndarray, actions, observations,
                          rng: np.random.Generator):
    """One bootstrap step for a batch of independent particle sets.

    Args:
        particles: (B, M) state indices.
        actions, observations: scalars or length-B arrays.

    Returns:
        (new_particles, fallback) where ``fallback`` flags rows whose
        weights were all zero and were therefore only propagated.
    """
    particles = np.atleast_2d(particles)
    B, M = particles.shape
    actions = np.broadcast_to(np.asarray(actions, dtype=np.int64), (B,))
    observations = np.broadcast_to(np.asarray(observations, dtype=np.int64), (B,))
    cdf = np.cumsum(model.transition, axis=2)  # (A, n, n)
    row_cdf = cdf[actions[:, None], particles]  # (B, M, n)
    moved = _draw(row_cdf, rng.random((B, M)))
    weights = model.observation[moved, observations[:, None]]
    total = weights.sum(axis=1)
    fallback = total <= 0.0
    weights[fallback] = 1.0
    parents = systematic_resample(weights, rng)
    return np.take_along_axis(moved, parents, axis=1), fallback


def particle_filter_step(model: PomdpModel, ps: ParticleSet, a: int, o: int,
                         rng: np.random.Generator) -> ParticleSet:
    """Propagate, weight by z(o | s') and resample systematically."""
    model.check_action(a)
    model.check_observation(o)
    new, fallback = particle_filter_batch(model, ps.particles[None, :], a, o, rng)
    return ParticleSet(new[0], ps.fallbacks + int(fallback[0]))


def filter_error(b_exact, b_hat) -> float:
    b_exact = np.asarray(b_exact, dtype=float)
    b_hat = np.asarray(b_hat, dtype=float)
    if b_exact.shape != b_hat.shape:
        raise ValueError("beliefs have different lengths")
    return float(np.linalg.norm(b_exact - b_hat))
