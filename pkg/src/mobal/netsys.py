"""Networked-system intrusion example.

N components, each safe (0) or compromised (1). Each step the defender
chooses per component whether to block traffic (1) or not (0), and sees a
per-component alert count drawn from a Beta-binomial distribution.

Joint states, actions and observations are flattened to indices with
component 0 as the most significant digit, so for N=1 state 1 means
"compromised" and action 1 means "block".
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import betabinom

from .errors import CapacityError, ConfigError
from .pomdp import PomdpModel

MAX_COMPONENTS = 4


@dataclass(frozen=True)
class BetaBinomial:
    trials: int
    alpha: float
    beta: float

    def pmf(self) -> np.ndarray:
        return np.array([betabin_pmf(self.trials, self.alpha, self.beta, k)
                         for k in range(self.trials + 1)])


def betabin_pmf(trials: int, alpha: float, beta_param: float, k: int) -> float:
    if not 0 <= k <= trials:
        raise ValueError(f"k={k} outside [0, {trials}]")
    if alpha <= 0 or beta_param <= 0:
        raise ValueError("alpha and beta must be positive")
    return float(betabinom.pmf(k, trials, alpha, beta_param))


def path_graph(n: int) -> np.ndarray:
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return adj


@dataclass(frozen=True)
class NetSysConfig:
    n_components: int = 1
    adjacency: np.ndarray | None = None
    p_attack: float = 0.2
    max_alerts: int = 7
    betabin_compromised: BetaBinomial = field(default_factory=lambda: BetaBinomial(7, 1.0, 0.7))
    betabin_safe: BetaBinomial = field(default_factory=lambda: BetaBinomial(7, 0.7, 3.0))
    discount: float = 0.99

    def __post_init__(self):
        n = self.n_components
        if n < 1:
            raise ValueError("n_components must be positive")
        adj = path_graph(n) if self.adjacency is None else np.array(self.adjacency, dtype=bool)
        if adj.shape != (n, n):
            raise ValueError(f"adjacency must be {n}x{n}")
        if np.any(adj != adj.T) or np.any(np.diag(adj)):
            raise ValueError("adjacency must be symmetric with zero diagonal")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        if not 0.0 < self.p_attack <= 1.0:
            raise ValueError("p_attack must lie in (0, 1]")
        for dist in (self.betabin_compromised, self.betabin_safe):
            if dist.trials != self.max_alerts:
                raise ValueError("Beta-binomial trials must equal max_alerts")

    @classmethod
    def from_dict(cls, doc: dict) -> "NetSysConfig":
        try:
            kwargs = dict(
                n_components=int(doc["n_components"]),
                adjacency=doc.get("adjacency"),
                p_attack=float(doc.get("p_attack", 0.2)),
                max_alerts=int(doc.get("max_alerts", 7)),
                discount=float(doc.get("discount", 0.99)),
            )
            for key in ("betabin_compromised", "betabin_safe"):
                if key in doc:
                    d = doc[key]
                    kwargs[key] = BetaBinomial(int(d["trials"]), float(d["alpha"]), float(d["beta"]))
            return cls(**kwargs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid netsys config: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "NetSysConfig":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        def bb(d):
            return {"trials": d.trials, "alpha": d.alpha, "beta": d.beta}
        return {
            "n_components": self.n_components,
            "adjacency": self.adjacency.astype(int).tolist(),
            "p_attack": self.p_attack,
            "max_alerts": self.max_alerts,
            "betabin_compromised": bb(self.betabin_compromised),
            "betabin_safe": bb(self.betabin_safe),
            "discount": self.discount,
        }


def joint_vectors(n_components: int, base: int = 2) -> np.ndarray:
    """All joint vectors in index order (component 0 most significant)."""
    return np.array(list(itertools.product(range(base), repeat=n_components)), dtype=int)


def compromise_prob(config: NetSysConfig, s, l: int, p_attack: float | None = None) -> float:
    """Probability that safe component ``l`` becomes compromised this step."""
    s = np.asarray(s, dtype=int)
    if s[l] != 0:
        raise ValueError(f"component {l} is already compromised")
    p = config.p_attack if p_attack is None else p_attack
    n_bad = int(np.sum(s[config.adjacency[l]]))
    return min(p * (1 + n_bad), 1.0)


def stage_cost(s, a) -> float:
    s = np.asarray(s)
    a = np.asarray(a)
    return float(np.sum(2 * s * (1 - a) + a))


def build_model(config: NetSysConfig, p_override: float | None = None) -> PomdpModel:
    """Flatten the networked system into a PomdpModel.

    ``p_override`` replaces ``p_attack`` and may be 0, which is how
    conjectured models are built.
    """
    N = config.n_components
    if N > MAX_COMPONENTS:
        raise CapacityError(f"N={N} exceeds the dense-model limit of {MAX_COMPONENTS}")
    p = config.p_attack if p_override is None else float(p_override)
    if not 0.0 <= p <= 1.0:
        raise ValueError("attack probability must lie in [0, 1]")
    vecs = joint_vectors(N)
    n = len(vecs)

    T = np.zeros((n, n, n))
    for si, s in enumerate(vecs):
        p_comp = [compromise_prob(config, s, l, p) if s[l] == 0 else 0.0 for l in range(N)]
        for ai, a in enumerate(vecs):
            # per-component probability of being compromised next step
            q = np.array([0.0 if a[l] else (1.0 if s[l] else p_comp[l]) for l in range(N)])
            T[ai, si] = np.prod(np.where(vecs == 1, q, 1.0 - q), axis=1)

    pmf = {0: config.betabin_safe.pmf(), 1: config.betabin_compromised.pmf()}
    Z = np.ones((n, 1))
    for l in range(N):
        per = np.stack([pmf[int(v)] for v in vecs[:, l]])
        Z = (Z[:, :, None] * per[:, None, :]).reshape(n, -1)

    C = np.array([[stage_cost(s, a) for a in vecs] for s in vecs])
    return PomdpModel(T, Z, C, config.discount)


def sample_step(model: PomdpModel, s: int, a: int, rng: np.random.Generator):
    """Simulate one transition; returns (next_state, observation, cost)."""
    a = model.check_action(a)
    s_next = int(np.searchsorted(np.cumsum(model.transition[a, s]), rng.random(), side="right"))
    s_next = min(s_next, model.n_states - 1)
    o = int(np.searchsorted(np.cumsum(model.observation[s_next]), rng.random(), side="right"))
    o = min(o, model.n_observations - 1)
    return s_next, o, float(model.cost[s, a])
