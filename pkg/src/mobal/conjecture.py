"""Bayesian learning over a finite set of conjectured models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateEvidenceError
from .pomdp import PomdpModel, as_belief


@dataclass(frozen=True, eq=False)
class ConjectureSpace:
    parameters: tuple
    models: tuple

    def __post_init__(self):
        params, models = tuple(self.parameters), tuple(self.models)
        if not params:
            raise ValueError("conjecture space is empty")
        if len(params) != len(models):
            raise ValueError("need exactly one model per parameter")
        ref = models[0]
        shape = (ref.n_states, ref.n_actions, ref.n_observations, ref.discount)
        for m in models[1:]:
            if (m.n_states, m.n_actions, m.n_observations, m.discount) != shape:
                raise ValueError("conjectured models must share dimensions and discount")
        object.__setattr__(self, "parameters", params)
        object.__setattr__(self, "models", models)

    def __len__(self) -> int:
        return len(self.parameters)

    @classmethod
    def from_builder(cls, parameters: Sequence, build) -> "ConjectureSpace":
        """Build one model per parameter with ``build(parameter)``."""
        return cls(tuple(parameters), tuple(build(p) for p in parameters))


@dataclass(frozen=True, eq=False)
class Posterior:
    """Distribution over a conjecture space, stored as log-weights."""

    log_weights: np.ndarray

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        lw = lw - logsumexp(lw)
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @classmethod
    def from_weights(cls, weights) -> "Posterior":
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a probability vector")
        with np.errstate(divide="ignore"):
            return cls(np.log(w))

    @classmethod
    def uniform(cls, k: int) -> "Posterior":
        return cls(np.zeros(k))

    def entropy(self) -> float:
        w = self.weights
        nz = w > 0
        return float(-np.sum(w[nz] * self.log_weights[nz]))


@dataclass
class EmpiricalHistory:
    """Visited beliefs and executed actions, each with uniform weight."""

    beliefs: list = field(default_factory=list)
    actions: list = field(default_factory=list)

    def add_belief(self, b) -> None:
        self.beliefs.append(np.asarray(b, dtype=float))

    def add_action(self, a: int) -> None:
        self.actions.append(int(a))

    def action_frequencies(self, n_actions: int) -> np.ndarray:
        if not self.actions:
            raise ValueError("no actions recorded")
        return np.bincount(self.actions, minlength=n_actions) / len(self.actions)


def likelihood(model: PomdpModel, b, a: int, o: int, mode: str = "exact",
               mc_samples: int = 1000, rng: np.random.Generator | None = None) -> float:
    """P(o | model, b, a), exactly or by sampling s ~ b, s' ~ p(. | s, a)."""
    if mode == "exact":
        return float(b @ model.transition[a] @ model.observation[:, o])
    if mode != "monte-carlo":
        raise ValueError(f"unknown likelihood mode {mode!r}")
    rng = rng or np.random.default_rng()
    s = rng.choice(model.n_states, size=mc_samples, p=b)
    cdf = np.cumsum(model.transition[a], axis=1)[s]
    s_next = np.minimum((rng.random(mc_samples)[:, None] >= cdf).sum(axis=1), model.n_states - 1)
    return float(model.observation[s_next, o].mean())


def posterior_update(space: ConjectureSpace, rho: Posterior, b_prev, a_prev: int, o: int,
                     mode: str = "exact", mc_samples: int = 1000,
                     rng: np.random.Generator | None = None) -> Posterior:
    """Bayes' rule over the conjectures for observation ``o``."""
    ref = space.models[0]
    b_prev = as_belief(b_prev, ref.n_states)
    ref.check_action(a_prev)
    ref.check_observation(o)
    lik = np.array([likelihood(m, b_prev, a_prev, o, mode, mc_samples, rng) for m in space.models])
    with np.errstate(divide="ignore"):
        log_post = rho.log_weights + np.log(lik)
    if not np.any(np.isfinite(log_post)):
        raise DegenerateEvidenceError(f"observation {o} has zero likelihood under every conjecture")
    return Posterior(log_post)


def sample_conjecture(rho: Posterior, rng: np.random.Generator) -> int:
    w = rho.weights
    return int(rng.choice(len(w), p=w / w.sum()))


def _marginal_obs(model: PomdpModel, beliefs: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    out = np.zeros((beliefs.shape[0], model.n_observations))
    for a in np.flatnonzero(freqs):
        out += freqs[a] * (beliefs @ model.transition[a] @ model.observation)
    return out


def _kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # conventions: 0 ln 0 = 0 and -ln 0 = +inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=1)


def discrepancies(space: ConjectureSpace, true_model: PomdpModel, hist: EmpiricalHistory) -> np.ndarray:
    """Discrepancy of every conjecture against the true model (may hold +inf)."""
    if not hist.beliefs:
        raise ValueError("history has no beliefs")
    beliefs = np.vstack(hist.beliefs)
    freqs = hist.action_frequencies(true_model.n_actions)
    p_true = _marginal_obs(true_model, beliefs, freqs)
    return np.array([_kl_rows(p_true, _marginal_obs(m, beliefs, freqs)).mean() for m in space.models])


def discrepancy(space: ConjectureSpace, idx: int, true_model: PomdpModel, hist: EmpiricalHistory) -> float:
    if not hist.beliefs:
        raise ValueError("history has no beliefs")
    beliefs = np.vstack(hist.beliefs)
    freqs = hist.action_frequencies(true_model.n_actions)
    p_true = _marginal_obs(true_model, beliefs, freqs)
    return float(_kl_rows(p_true, _marginal_obs(space.models[idx], beliefs, freqs)).mean())


def consistent_set(space: ConjectureSpace, true_model: PomdpModel, hist: EmpiricalHistory,
                   tol: float = 1e-9) -> set[int]:
    K = discrepancies(space, true_model, hist)
    return {int(i) for i in np.flatnonzero(K <= K.min() + tol)}


def posterior_gap(space: ConjectureSpace, true_model: PomdpModel, hist: EmpiricalHistory,
                  rho: Posterior, K: np.ndarray | None = None) -> float:
    """Posterior-weighted excess discrepancy over the best conjecture."""
    if K is None:
        K = discrepancies(space, true_model, hist)
    w = rho.weights
    with np.errstate(invalid="ignore"):
        excess = np.where(w > 0, K - K.min(), 0.0)
    return float(np.sum(w * excess))
