"""The online learn-and-plan loop and episode simulation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .conjecture import ConjectureSpace, EmpiricalHistory, Posterior, posterior_update, sample_conjecture
from .errors import DegenerateEvidenceError, ImpossibleObservationError
from .netsys import sample_step
from .filters import DEFAULT_PARTICLES, init_particles, particle_belief, particle_filter_step
from .pomdp import PomdpModel, belief_update, point_belief, predict, successor_table
from .quantize import (RepresentativeBeliefSet, SolvedPlan, build_quantized_mdp, enumerate_lattice,
                       quantize, quantize_many, value_iteration)


@dataclass
class LoopConfig:
    conjecture_space: ConjectureSpace
    prior: Posterior | None = None
    resolution: int = 5
    vi_threshold: float = 0.1
    particle_count: int = DEFAULT_PARTICLES
    filter_mode: str = "exact"
    replan_policy: str = "per-step"
    likelihood_mode: str = "exact"
    likelihood_samples: int = 1000
    horizon: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.filter_mode not in ("exact", "particle"):
            raise ValueError(f"unknown filter mode {self.filter_mode!r}")
        if self.replan_policy not in ("per-step", "on-conjecture-change"):
            raise ValueError(f"unknown replan policy {self.replan_policy!r}")
        if self.prior is None:
            self.prior = Posterior.uniform(len(self.conjecture_space))
        if len(self.prior.log_weights) != len(self.conjecture_space):
            raise ValueError("prior length differs from the conjecture space")


class PlanCache:
    """Solved plans keyed by (conjecture index, resolution)."""

    def __init__(self, space: ConjectureSpace, vi_threshold: float = 0.1):
        self.space = space
        self.vi_threshold = vi_threshold
        self._plans: dict = {}
        self._lattices: dict = {}
        self.solves = 0
        self.hits = 0

    def lattice(self, r: int) -> RepresentativeBeliefSet:
        if r not in self._lattices:
            self._lattices[r] = enumerate_lattice(self.space.models[0].n_states, r)
        return self._lattices[r]

    def get(self, idx: int, r: int) -> SolvedPlan:
        key = (idx, r)
        if key in self._plans:
            self.hits += 1
        else:
            rep = self.lattice(r)
            qmdp = build_quantized_mdp(self.space.models[idx], rep)
            self._plans[key] = value_iteration(qmdp, self.vi_threshold)
            self.solves += 1
        return self._plans[key]


def lookahead_action(model: PomdpModel, rep: RepresentativeBeliefSet, plan: SolvedPlan, b) -> int:
    """argmin_a [c(b,a) + gamma * E J~(b')] at a single belief."""
    q = np.empty(model.n_actions)
    for a in range(model.n_actions):
        probs, posts = successor_table(model, np.asarray(b)[None, :], a)
        nz = probs[0] > 0
        q[a] = b @ model.cost[:, a] + model.discount * probs[0, nz] @ plan.values[quantize_many(rep, posts[0, nz])]
    return int(np.argmin(q))


class MobalAgent:
    """Online controller. It only ever sees observations."""

    def __init__(self, cfg: LoopConfig, rng: np.random.Generator, cache: PlanCache | None = None,
                 b0=None):
        self.cfg = cfg
        self.space = cfg.conjecture_space
        self.rng = rng
        self.cache = cache or PlanCache(self.space, cfg.vi_threshold)
        n = self.space.models[0].n_states
        self.belief = point_belief(n) if b0 is None else np.asarray(b0, dtype=float)
        self.particles = None
        if cfg.filter_mode == "particle":
            self.particles = init_particles(self.belief, cfg.particle_count, rng)
        self.posterior = cfg.prior
        self.history = EmpiricalHistory()
        self.events = {"impossible_observation": 0, "degenerate_evidence": 0, "particle_fallback": 0}
        self.conjecture = None
        self.action = None
        self._plan = None

    def _plan_for(self, idx: int) -> SolvedPlan:
        if self.cfg.replan_policy == "per-step" or idx != self.conjecture or self._plan is None:
            self._plan = self.cache.get(idx, self.cfg.resolution)
        return self._plan

    def reset(self) -> int:
        """Choose the first action from the prior, before any observation."""
        idx = sample_conjecture(self.posterior, self.rng)
        plan = self._plan_for(idx)
        self.conjecture = idx
        rep = self.cache.lattice(self.cfg.resolution)
        self.action = lookahead_action(self.space.models[idx], rep, plan, self.belief)
        self.history.add_action(self.action)
        return self.action

    def _filter(self, o: int) -> np.ndarray:
        model = self.space.models[self.conjecture]
        if self.particles is not None:
            before = self.particles.fallbacks
            self.particles = particle_filter_step(model, self.particles, self.action, o, self.rng)
            self.events["particle_fallback"] += self.particles.fallbacks - before
            return particle_belief(self.particles, model.n_states)
        try:
            return belief_update(model, self.belief, self.action, o)
        except ImpossibleObservationError:
            self.events["impossible_observation"] += 1
            return predict(model, self.belief, self.action)

    def step(self, o: int) -> int:
        b_prev = self.belief
        self.belief = self._filter(o)
        try:
            self.posterior = posterior_update(self.space, self.posterior, b_prev, self.action, o,
                                              self.cfg.likelihood_mode, self.cfg.likelihood_samples,
                                              self.rng)
        except DegenerateEvidenceError:
            self.events["degenerate_evidence"] += 1
        idx = sample_conjecture(self.posterior, self.rng)
        plan = self._plan_for(idx)
        self.conjecture = idx
        rep = self.cache.lattice(self.cfg.resolution)
        self.action = int(plan.policy[quantize(rep, self.belief)])
        self.history.add_belief(self.belief)
        self.history.add_action(self.action)
        return self.action


@dataclass
class StepRecord:
    t: int
    state: int
    observation: int  # -1 at t = 0
    action: int
    belief: np.ndarray
    conjecture: int
    posterior: np.ndarray
    cost: float
    discounted_return: float


@dataclass
class EpisodeLog:
    records: list = field(default_factory=list)
    discount: float = 0.99
    events: dict = field(default_factory=dict)

    @property
    def discounted_return(self) -> float:
        return self.records[-1].discounted_return if self.records else 0.0

    def to_rows(self) -> list[list]:
        rows = []
        for r in self.records:
            rows.append([r.t, r.state, r.observation, r.action, r.conjecture,
                         ";".join(f"{w:.17g}" for w in r.posterior), f"{r.cost:.17g}",
                         f"{r.discounted_return:.17g}"])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# schema=episode-v1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "s", "o", "a", "conjecture_idx", "posterior", "cost", "discounted_return"])
        w.writerows(self.to_rows())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "discount": self.discount,
            "discounted_return": self.discounted_return,
            "events": self.events,
            "records": [{
                "t": r.t, "state": r.state, "observation": r.observation, "action": r.action,
                "belief": r.belief.tolist(), "conjecture": r.conjecture,
                "posterior": r.posterior.tolist(), "cost": r.cost,
                "discounted_return": r.discounted_return,
            } for r in self.records],
        })


class Environment:
    """The true system. Holds the hidden state; emits observations."""

    def __init__(self, model: PomdpModel, rng: np.random.Generator, s0: int = 0):
        self.model = model
        self.rng = rng
        self.state = s0

    def step(self, a: int):
        s = self.state
        self.state, o, cost = sample_step(self.model, s, a, self.rng)
        return o, cost


def episode_rngs(seed: int):
    env_seq, agent_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(agent_seq)


def _snapshot(agent, n_states: int):
    belief = getattr(agent, "belief", None)
    belief = np.full(n_states, np.nan) if belief is None else np.array(belief, dtype=float)
    conjecture = getattr(agent, "conjecture", None)
    posterior = getattr(agent, "posterior", None)
    weights = np.array([]) if posterior is None else posterior.weights
    return belief, -1 if conjecture is None else int(conjecture), weights


def simulate(env: Environment, agent, horizon: int) -> EpisodeLog:
    """Run ``agent`` (with ``reset()`` and ``step(o)``) against ``env``."""
    gamma = env.model.discount
    log = EpisodeLog(discount=gamma)
    a = agent.reset()
    o = -1
    total = 0.0
    for t in range(horizon):
        s = env.state
        cost = float(env.model.cost[s, a])
        total += gamma ** t * cost
        log.records.append(StepRecord(t, s, o, a, *_snapshot(agent, env.model.n_states), cost, total))
        if t + 1 == horizon:
            break
        o, _ = env.step(a)
        a = agent.step(o)
    log.events = dict(getattr(agent, "events", {}))
    return log


def run_episode(env_model: PomdpModel, cfg: LoopConfig, cache: PlanCache | None = None) -> EpisodeLog:
    """Simulate one MOBAL episode against the true model, deterministic per seed."""
    env_rng, agent_rng = episode_rngs(cfg.seed)
    agent = MobalAgent(cfg, agent_rng, cache)
    log = simulate(Environment(env_model, env_rng), agent, cfg.horizon)
    log.events["plan_solves"] = agent.cache.solves
    return log


class RandomAgent:
    """Uniformly random actions; a baseline."""

    def __init__(self, n_actions: int, rng: np.random.Generator):
        self.n_actions = n_actions
        self.rng = rng

    def reset(self) -> int:
        return int(self.rng.integers(self.n_actions))

    def step(self, o: int) -> int:
        return int(self.rng.integers(self.n_actions))


class FixedAgent:
    """Always the same action."""

    def __init__(self, action: int):
        self.action = action

    def reset(self) -> int:
        return self.action

    def step(self, o: int) -> int:
        return self.action


def run_baseline(env_model: PomdpModel, kind: str, horizon: int, seed: int, action: int = 0) -> EpisodeLog:
    env_rng, agent_rng = episode_rngs(seed)
    agent = RandomAgent(env_model.n_actions, agent_rng) if kind == "random" else FixedAgent(action)
    return simulate(Environment(env_model, env_rng), agent, horizon)
