"""Experiment drivers behind the command-line subcommands.

Each ``*_rows`` function returns ``(header, rows)``; ``write_csv`` renders
them with a versioned schema comment and 17 significant digits so output
is byte-identical across reruns with the same seeds.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import (compute_alpha, compute_c_max, compute_epsilon, grid_beliefs, misspecification_bound,
                     approximation_bound, reference_cost_function, sup_grid_gap)
from .conjecture import ConjectureSpace, discrepancies, posterior_gap
from .errors import ConfigError
from .filters import _draw, particle_belief, particle_filter_batch
from .loop import (Environment, LoopConfig, MobalAgent, PlanCache, episode_rngs, run_baseline,
                   simulate)
from .netsys import NetSysConfig, build_model
from .pomdp import PomdpModel
from .quantize import enumerate_lattice, lattice_count, quantize_many, solve

GAMMA = 0.99
PARTICLES = 50
VI_THRESHOLD = 0.1
BOUND_VI_THRESHOLD = 1e-6


# ---------------------------------------------------------------- helpers

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: str | None, schema: str, header: list, rows: list) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={schema}-v1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_csv(text: str) -> tuple[str, list[dict]]:
    """Parse text produced by ``write_csv`` into (schema, records)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# schema="):
        raise ValueError("missing schema line")
    schema = lines[0][len("# schema="):]
    return schema, list(csv.DictReader(lines[1:]))


def parse_seeds(spec: str) -> list[int]:
    """'a..b' (inclusive), 'a,b,c' or a single integer."""
    spec = spec.strip()
    try:
        if ".." in spec:
            lo, hi = spec.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        seeds = [int(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed range {spec!r}") from None
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def thread_count() -> int:
    raw = os.environ.get("MOBAL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"MOBAL_THREADS must be an integer, got {raw!r}") from None


def map_seeds(fn, seeds, *args):
    """``[fn(seed, *args) for seed in seeds]``, in seed order, optionally in worker processes."""
    workers = min(thread_count(), len(seeds))
    if workers <= 1:
        return [fn(s, *args) for s in seeds]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(fn, seeds, *[[a] * len(seeds) for a in args]))


def components_for(n_states: int) -> int:
    N = n_states.bit_length() - 1
    if N < 1 or 2 ** N != n_states:
        raise ConfigError(f"number of states must be a power of two, got {n_states}")
    return N


# ---------------------------------------------------------------- scenario

@dataclass
class Scenario:
    """The networked-system setting with a true attack probability and a conjecture set."""

    netsys: NetSysConfig = field(default_factory=NetSysConfig)
    true_p: float = 0.2
    conjectures: tuple = (0.0, 0.5, 1.0)
    resolution: int = 5
    horizon: int = 100
    vi_threshold: float = VI_THRESHOLD
    filter_mode: str = "exact"
    particle_count: int = PARTICLES
    likelihood_mode: str = "exact"
    likelihood_samples: int = 1000
    baselines: tuple = ("random",)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {"netsys", "true_p", "conjectures", "resolution", "horizon", "vi_threshold", "filter_mode",
                 "particle_count", "likelihood_mode", "likelihood_samples", "baselines"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kw = {}
            if "netsys" in doc:
                kw["netsys"] = NetSysConfig.from_dict({"n_components": 1, **doc["netsys"]})
            for key, cast in (("true_p", float), ("resolution", int), ("horizon", int),
                              ("vi_threshold", float), ("filter_mode", str), ("particle_count", int),
                              ("likelihood_mode", str), ("likelihood_samples", int)):
                if key in doc:
                    kw[key] = cast(doc[key])
            if "conjectures" in doc:
                kw["conjectures"] = tuple(float(p) for p in doc["conjectures"])
            if "baselines" in doc:
                kw["baselines"] = tuple(str(b) for b in doc["baselines"])
            sc = cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        sc.validate()
        return sc

    def validate(self) -> None:
        if not self.conjectures:
            raise ConfigError("conjecture set is empty")
        if any(not 0.0 <= p <= 1.0 for p in (self.true_p, *self.conjectures)):
            raise ConfigError("attack probabilities must lie in [0, 1]")
        if self.resolution < 1 or self.horizon < 1 or self.particle_count < 1:
            raise ConfigError("resolution, horizon and particle_count must be positive")
        if self.filter_mode not in ("exact", "particle"):
            raise ConfigError(f"unknown filter_mode {self.filter_mode!r}")
        if self.likelihood_mode not in ("exact", "monte-carlo"):
            raise ConfigError(f"unknown likelihood_mode {self.likelihood_mode!r}")
        bad = set(self.baselines) - {"random", "oracle"}
        if bad:
            raise ConfigError(f"unknown baselines {sorted(bad)}")

    def true_model(self) -> PomdpModel:
        return build_model(self.netsys, self.true_p)

    def space(self, params=None) -> ConjectureSpace:
        params = self.conjectures if params is None else params
        return ConjectureSpace.from_builder(params, lambda p: build_model(self.netsys, p))

    def loop_config(self, seed: int, space: ConjectureSpace | None = None, horizon: int | None = None) -> LoopConfig:
        return LoopConfig(space or self.space(), resolution=self.resolution, vi_threshold=self.vi_threshold,
                          particle_count=self.particle_count, filter_mode=self.filter_mode,
                          likelihood_mode=self.likelihood_mode, likelihood_samples=self.likelihood_samples,
                          horizon=horizon or self.horizon, seed=seed)


# ---------------------------------------------------------------- obs-dist

def obs_dist_rows(netsys: NetSysConfig | None = None):
    netsys = netsys or NetSysConfig()
    safe, comp = netsys.betabin_safe.pmf(), netsys.betabin_compromised.pmf()
    return ["k", "p_safe", "p_compromised"], [[k, safe[k], comp[k]] for k in range(len(safe))]


# ---------------------------------------------------------------- lattice-count

def lattice_count_rows(n_grid=(2, 4, 8), r_grid=range(9)):
    return ["n", "r", "count"], [[n, r, lattice_count(n, r)] for n in n_grid for r in r_grid]


# ---------------------------------------------------------------- filter-eval

def _exact_batch(model: PomdpModel, b: np.ndarray, actions: np.ndarray, obs: np.ndarray) -> np.ndarray:
    pred = np.einsum("ei,eij->ej", b, model.transition[actions])
    post = pred * model.observation[:, obs].T
    return post / post.sum(axis=1, keepdims=True)


def _filter_eval_seed(seed: int, model: PomdpModel, r: int, m_grid, episodes: int, steps: int,
                      vi_threshold: float) -> np.ndarray:
    """Mean filter error per M for one seed, averaged over episodes and steps."""
    rep, _, plan = solve(model, r, threshold=vi_threshold)
    streams = np.random.SeedSequence(seed).spawn(1 + len(m_grid))
    env_rng = np.random.default_rng(streams[0])
    n = model.n_states
    t_cdf = np.cumsum(model.transition, axis=2)
    z_cdf = np.cumsum(model.observation, axis=1)

    # trajectories under the quantized strategy applied to the exact belief
    s = np.zeros(episodes, dtype=np.int64)
    b = np.zeros((episodes, n))
    b[:, 0] = 1.0
    acts, obss, beliefs = [], [], []
    for _ in range(steps):
        a = plan.policy[quantize_many(rep, b)]
        s = _draw(t_cdf[a, s], env_rng.random(episodes))
        o = _draw(z_cdf[s], env_rng.random(episodes))
        b = _exact_batch(model, b, a, o)
        acts.append(a)
        obss.append(o)
        beliefs.append(b)

    out = np.empty(len(m_grid))
    for j, m in enumerate(m_grid):
        rng = np.random.default_rng(streams[1 + j])
        particles = np.zeros((episodes, m), dtype=np.int64)
        total = 0.0
        for a, o, b_exact in zip(acts, obss, beliefs):
            particles, _ = particle_filter_batch(model, particles, a, o, rng)
            total += np.linalg.norm(particle_belief(particles, n) - b_exact, axis=1).sum()
        out[j] = total / (episodes * steps)
    return out


def filter_eval_rows(n_grid=(2,), m_grid=tuple(range(1, 19)), episodes=100, steps=100, seeds=range(100),
                     r=5, netsys: NetSysConfig | None = None, vi_threshold=VI_THRESHOLD):
    if not m_grid or not n_grid:
        raise ConfigError("grids must be non-empty")
    if any(m < 1 for m in m_grid):
        raise ConfigError("particle counts must be positive")
    base = (netsys or NetSysConfig()).to_dict()
    seeds = list(seeds)
    rows = []
    for n in n_grid:
        base.pop("adjacency", None)
        model = build_model(NetSysConfig.from_dict({**base, "n_components": components_for(n)}))
        per_seed = np.array(map_seeds(_filter_eval_seed, seeds, model, r, tuple(m_grid), episodes, steps,
                                      vi_threshold))
        for j, m in enumerate(m_grid):
            rows.append([n, m, per_seed[:, j].mean(), per_seed[:, j].std(), len(seeds), episodes, steps])
    return ["n", "m", "mean_error", "std_error", "seeds", "episodes", "steps"], rows


# ---------------------------------------------------------------- posterior-eval

def posterior_trace(scenario: Scenario, seed: int, steps: int, cache: PlanCache | None = None):
    """Run the loop for ``steps`` observations and record posterior and discrepancies after each.

    The last discrepancy column is for a conjecture equal to the true
    parameter, which must always be zero.
    """
    true = scenario.true_model()
    space = scenario.space()
    diag = scenario.space((*scenario.conjectures, scenario.true_p))
    env_rng, agent_rng = episode_rngs(seed)
    agent = MobalAgent(scenario.loop_config(seed, space), agent_rng, cache)
    env = Environment(true, env_rng)
    a = agent.reset()
    out = []
    for t in range(1, steps + 1):
        o, _ = env.step(a)
        a = agent.step(o)
        K = discrepancies(diag, true, agent.history)
        gap = posterior_gap(space, true, agent.history, agent.posterior, K[:-1])
        out.append((t, agent.conjecture, agent.posterior.weights, K, gap))
    return out


def _posterior_seed(seed, scenario, steps):
    return posterior_trace(scenario, seed, steps, PlanCache(scenario.space(), scenario.vi_threshold))


def posterior_eval_rows(scenario: Scenario | None = None, steps=100, seeds=range(20)):
    scenario = scenario or Scenario()
    labels = [f"{p:g}" for p in scenario.conjectures]
    header = (["seed", "t", "sampled"] + [f"w_{x}" for x in labels] + [f"K_{x}" for x in labels]
              + [f"K_true_{scenario.true_p:g}", "posterior_gap"])
    rows = []
    for seed, trace in zip(seeds, map_seeds(_posterior_seed, list(seeds), scenario, steps)):
        for t, idx, w, K, gap in trace:
            rows.append([seed, t, idx, *w, *K, gap])
    return header, rows


# ---------------------------------------------------------------- bound-eval / costfun-eval

def bound_eval_rows(r_grid=(1, 2, 3, 4, 5, 10, 20, 50), conj_p=0.5, true_p=0.2, r_ref=200,
                    samples_per_cell=64, threshold=BOUND_VI_THRESHOLD, netsys: NetSysConfig | None = None,
                    seed=0):
    """Approximation bound against the measured error of the quantized cost function.

    Both are taken on the conjectured model; the misspecification terms
    compare it with the true model.
    """
    if not r_grid:
        raise ConfigError("r grid is empty")
    netsys = netsys or NetSysConfig()
    if netsys.n_components != 1:
        raise ConfigError("bound-eval sweeps two-state beliefs and needs n_components = 1")
    conj = build_model(netsys, conj_p)
    true = build_model(netsys, true_p)
    ref = reference_cost_function(conj, r_ref, threshold)
    grid = grid_beliefs()
    j_ref = ref.values(grid)
    alpha = compute_alpha(true, conj, grid)
    c_max = compute_c_max(true)
    mis = misspecification_bound(alpha, c_max, conj.discount)
    rng = np.random.default_rng(seed)
    rows = []
    for r in r_grid:
        rep, _, plan = solve(conj, r, threshold=threshold)
        eps = compute_epsilon(ref, rep, samples_per_cell, rng)
        approx = approximation_bound(eps, conj.discount)
        actual = sup_grid_gap(plan.values[quantize_many(rep, grid)], j_ref)
        rows.append([r, eps, approx, actual, alpha, mis, approx + mis])
    return ["r", "epsilon", "approx_bound", "actual_error", "alpha", "misspec_bound", "total_bound"], rows


def costfun_eval_rows(r_grid=(1, 5, 10), conj_p=0.5, true_p=0.2, r_ref=200, threshold=BOUND_VI_THRESHOLD,
                      netsys: NetSysConfig | None = None, points=101):
    netsys = netsys or NetSysConfig()
    if netsys.n_components != 1:
        raise ConfigError("costfun-eval sweeps two-state beliefs and needs n_components = 1")
    conj = build_model(netsys, conj_p)
    true = build_model(netsys, true_p)
    grid = grid_beliefs(points)
    j_true = reference_cost_function(true, r_ref, threshold).values(grid)
    j_conj = reference_cost_function(conj, r_ref, threshold).values(grid)
    approx = []
    for r in r_grid:
        rep, _, plan = solve(conj, r, threshold=threshold)
        approx.append(plan.values[quantize_many(rep, grid)])
    header = ["b1", "J_true_ref", "J_conj_ref"] + [f"J_approx_r{r}" for r in r_grid]
    rows = [[grid[i, 1], j_true[i], j_conj[i], *(col[i] for col in approx)] for i in range(points)]
    return header, rows


# ---------------------------------------------------------------- run-loop

def _loop_seed(seed, scenario: Scenario, log_dir):
    true = scenario.true_model()
    space = scenario.space()
    out = []
    cfg = scenario.loop_config(seed, space)
    env_rng, agent_rng = episode_rngs(seed)
    agent = MobalAgent(cfg, agent_rng, PlanCache(space, scenario.vi_threshold))
    log = simulate(Environment(true, env_rng), agent, scenario.horizon)
    out.append(("mobal", log, agent.posterior.weights))
    if "oracle" in scenario.baselines:
        oracle = scenario.space((scenario.true_p,))
        env_rng, agent_rng = episode_rngs(seed)
        agent = MobalAgent(scenario.loop_config(seed, oracle), agent_rng, PlanCache(oracle, scenario.vi_threshold))
        out.append(("oracle", simulate(Environment(true, env_rng), agent, scenario.horizon), np.ones(1)))
    if "random" in scenario.baselines:
        out.append(("random", run_baseline(true, "random", scenario.horizon, seed), np.array([])))
    if log_dir:
        for name, lg, _ in out:
            with open(os.path.join(log_dir, f"episode_{name}_seed{seed}.csv"), "w", newline="") as fh:
                fh.write(lg.to_csv())
    return [(name, lg.discounted_return, w, lg.events) for name, lg, w in out]


def run_loop_rows(scenario: Scenario | None = None, seeds=range(100), log_dir: str | None = None):
    scenario = scenario or Scenario()
    seeds = list(seeds)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
    header = ["seed", "agent", "discounted_return", "final_posterior", "impossible_observation",
              "degenerate_evidence", "particle_fallback"]
    rows = []
    returns: dict = {}
    for seed, results in zip(seeds, map_seeds(_loop_seed, seeds, scenario, log_dir)):
        for name, ret, w, ev in results:
            rows.append([seed, name, ret, ";".join(fmt(x) for x in w), ev.get("impossible_observation", 0),
                         ev.get("degenerate_evidence", 0), ev.get("particle_fallback", 0)])
            returns.setdefault(name, []).append(ret)
    for name, vals in returns.items():
        vals = np.array(vals)
        rows.append(["mean", name, vals.mean(), "", "", "", ""])
        rows.append(["std", name, vals.std(ddof=1) if len(vals) > 1 else 0.0, "", "", "", ""])
    return header, rows
