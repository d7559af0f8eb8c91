"""Finite POMDP model and belief-MDP primitives.

States, actions and observations are dense 0-based indices. A belief is a
1-d float array over states. Tensors follow the layout

    transition[a, s, s']   observation[s', o]   cost[s, a]
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ImpossibleObservationError

ROW_TOL = 1e-9
MERGE_DECIMALS = 12


def _normalized_rows(arr: np.ndarray, name: str) -> np.ndarray:
    if np.any(arr < -ROW_TOL) or np.any(arr > 1 + ROW_TOL):
        raise ValueError(f"{name} has entries outside [0, 1]")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"{name} rows do not sum to 1 (max drift {worst:.3g})")
    arr = np.clip(arr, 0.0, None)
    # leave rows alone that are already exact up to rounding, so serialization round-trips
    sums = arr.sum(axis=-1, keepdims=True)
    return np.where(np.abs(sums - 1.0) > 1e-14, arr / sums, arr)


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """Finite discounted-cost POMDP.

    Rows of ``transition`` and ``observation`` may drift from 1 by up to
    ``ROW_TOL``; they are renormalized on construction. Arrays are made
    read-only so a model can be shared freely.
    """

    transition: np.ndarray
    observation: np.ndarray
    cost: np.ndarray
    discount: float = 0.99

    def __post_init__(self):
        T = np.array(self.transition, dtype=float)
        Z = np.array(self.observation, dtype=float)
        C = np.array(self.cost, dtype=float)
        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise ValueError(f"transition must be (A, n, n), got {T.shape}")
        n_actions, n = T.shape[:2]
        if Z.ndim != 2 or Z.shape[0] != n:
            raise ValueError(f"observation must be (n, O) with n={n}, got {Z.shape}")
        if C.shape != (n, n_actions):
            raise ValueError(f"cost must be ({n}, {n_actions}), got {C.shape}")
        if not 0.0 < float(self.discount) < 1.0:
            raise ValueError("discount must lie strictly between 0 and 1")
        T = _normalized_rows(T, "transition")
        Z = _normalized_rows(Z, "observation")
        for arr in (T, Z, C):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "observation", Z)
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[0]

    @property
    def n_observations(self) -> int:
        return self.observation.shape[1]

    def check_action(self, a: int) -> int:
        if not 0 <= a < self.n_actions:
            raise IndexError(f"action {a} out of range [0, {self.n_actions})")
        return int(a)

    def check_observation(self, o: int) -> int:
        if not 0 <= o < self.n_observations:
            raise IndexError(f"observation {o} out of range [0, {self.n_observations})")
        return int(o)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "n_observations": self.n_observations,
            "transition": self.transition.tolist(),
            "observation": self.observation.tolist(),
            "cost": self.cost.tolist(),
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PomdpModel":
        try:
            model = cls(
                transition=doc["transition"],
                observation=doc["observation"],
                cost=doc["cost"],
                discount=doc.get("discount", 0.99),
            )
        except KeyError as exc:
            raise ConfigError(f"model document missing field {exc}") from None
        declared = (doc.get("n_states"), doc.get("n_actions"), doc.get("n_observations"))
        actual = (model.n_states, model.n_actions, model.n_observations)
        for want, got, name in zip(declared, actual, ("n_states", "n_actions", "n_observations")):
            if want is not None and want != got:
                raise ConfigError(f"{name}={want} disagrees with array shape ({got})")
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PomdpModel":
        return cls.from_dict(json.loads(text))


def as_belief(b, n_states: int | None = None) -> np.ndarray:
    """Validate ``b`` as a probability vector and return it as a float array."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 1:
        raise ValueError("belief must be a 1-d vector")
    if n_states is not None and b.shape[0] != n_states:
        raise ValueError(f"belief has length {b.shape[0]}, expected {n_states}")
    if np.any(b < -ROW_TOL) or abs(b.sum() - 1.0) > ROW_TOL:
        raise ValueError("belief must be nonnegative and sum to 1")
    return b


def point_belief(n_states: int, s: int = 0) -> np.ndarray:
    b = np.zeros(n_states)
    b[s] = 1.0
    return b


def predict(model: PomdpModel, b, a: int) -> np.ndarray:
    """One-step predicted state distribution sum_s b(s) p_ss'(a)."""
    return np.asarray(b, dtype=float) @ model.transition[model.check_action(a)]


def belief_cost(model: PomdpModel, b, a: int) -> float:
    b = as_belief(b, model.n_states)
    return float(b @ model.cost[:, model.check_action(a)])


def observation_likelihood(model: PomdpModel, b, a: int, o: int) -> float:
    """Probability of observing ``o`` after taking ``a`` in belief ``b``."""
    b = as_belief(b, model.n_states)
    o = model.check_observation(o)
    return float(predict(model, b, a) @ model.observation[:, o])


def observation_distribution(model: PomdpModel, b, a: int) -> np.ndarray:
    """Vector of observation_likelihood over all observations."""
    return predict(model, b, a) @ model.observation


def belief_update(model: PomdpModel, b, a: int, o: int) -> np.ndarray:
    """Exact Bayes filter step.

    Raises ImpossibleObservationError when ``o`` has zero likelihood.
    """
    b = as_belief(b, model.n_states)
    o = model.check_observation(o)
    joint = predict(model, b, a) * model.observation[:, o]
    total = joint.sum()
    if total <= 0.0:
        raise ImpossibleObservationError(f"observation {o} has zero likelihood under action {a}")
    return joint / total


def successor_table(model: PomdpModel, beliefs: np.ndarray, a: int):
    """Batched successor beliefs for every observation.

    Args:
        beliefs: (m, n) array of beliefs.

    Returns:
        (probs, posts): probs is (m, O) with the observation likelihoods and
        posts is (m, O, n) with the updated beliefs. Rows with zero
        likelihood hold zeros in ``posts``.
    """
    pred = np.atleast_2d(beliefs) @ model.transition[model.check_action(a)]
    joint = pred[:, None, :] * model.observation.T[None, :, :]
    probs = joint.sum(axis=2)
    safe = np.where(probs > 0.0, probs, 1.0)
    posts = joint / safe[:, :, None]
    return probs, posts


def belief_transition_support(model: PomdpModel, b, a: int) -> list[tuple[np.ndarray, float]]:
    """Finite support of the belief-MDP kernel p(b' | b, a).

    Successors that agree to 1e-12 componentwise are merged and their
    probabilities summed. Entries are ordered by first observation index.
    """
    b = as_belief(b, model.n_states)
    probs, posts = successor_table(model, b[None, :], a)
    probs, posts = probs[0], posts[0]
    merged: dict[bytes, list] = {}
    for o in np.flatnonzero(probs > 0.0):
        key = np.round(posts[o], MERGE_DECIMALS).tobytes()
        if key in merged:
            merged[key][1] += probs[o]
        else:
            merged[key] = [posts[o], probs[o]]
    return [(post, float(p)) for post, p in merged.values()]
