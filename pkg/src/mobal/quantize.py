"""Belief-space quantization and planning on the quantized MDP.

The representative set is the simplex lattice {beta / r : sum(beta) = r}
ordered lexicographically by the integer composition beta, so index 0 is
(0, ..., 0, r). Beliefs map to the nearest lattice point in the max-norm;
ties go to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import sparse

from .errors import CapacityError
from .pomdp import PomdpModel, as_belief, successor_table

MAX_POINTS = 2_000_000
MAX_KERNEL = 2_000_000_000  # |points|^2 * |A|
EXACT_MAX_OBS = 4096
TIE_TOL = 1e-12
_CHUNK = 1 << 22  # floats per successor-table chunk


def lattice_count(n: int, r: int) -> int:
    """Number of representative beliefs, C(r+n-1, n-1). Allows r = 0."""
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    return comb(r + n - 1, n - 1)


@dataclass(frozen=True, eq=False)
class RepresentativeBeliefSet:
    resolution: int
    n_states: int
    compositions: np.ndarray  # (K, n) int, ascending lexicographic

    @property
    def points(self) -> np.ndarray:
        return self.compositions / self.resolution

    def __len__(self) -> int:
        return self.compositions.shape[0]

    def rank(self, compositions: np.ndarray) -> np.ndarray:
        """Lexicographic index of each composition row."""
        return _composition_rank(np.atleast_2d(compositions), self.resolution)


def enumerate_lattice(n: int, r: int, limit: int = MAX_POINTS) -> RepresentativeBeliefSet:
    if n < 1 or r < 1:
        raise ValueError("enumerate_lattice needs n >= 1 and r >= 1")
    count = lattice_count(n, r)
    if count > limit:
        raise CapacityError(f"lattice n={n}, r={r} has {count} points (limit {limit})")
    comps = np.zeros((count, n), dtype=np.int64)
    # walk compositions in lexicographic order
    beta = np.zeros(n, dtype=np.int64)
    beta[-1] = r
    for i in range(count):
        comps[i] = beta
        if i + 1 == count:
            break
        # find rightmost position j < n-1 that can be incremented
        j = n - 2
        while beta[j + 1:].sum() == 0:
            j -= 1
        beta[j] += 1
        rest = r - beta[: j + 1].sum()
        beta[j + 1:] = 0
        beta[-1] = rest
    comps.setflags(write=False)
    return RepresentativeBeliefSet(r, n, comps)


def _composition_rank(beta: np.ndarray, r: int) -> np.ndarray:
    m_count, n = beta.shape
    # table[m, t] = C(t + m, m); differences count skipped compositions (hockey stick)
    table = np.array([[comb(t + m, m) for t in range(r + 1)] for m in range(n)], dtype=np.int64)
    rank = np.zeros(m_count, dtype=np.int64)
    remaining = np.full(m_count, r, dtype=np.int64)
    for i in range(n - 1):
        m = n - 1 - i
        rank += table[m, remaining] - table[m, remaining - beta[:, i]]
        remaining = remaining - beta[:, i]
    return rank


def nearest_compositions(beliefs: np.ndarray, r: int) -> np.ndarray:
    """Max-norm nearest lattice compositions, lexicographically smallest on ties.

    Every optimal composition rounds each coordinate of r*b down or up (the
    optimum is always below 1/r), so the search reduces to picking which
    coordinates to round up.
    """
    x = np.atleast_2d(beliefs) * r
    m, n = x.shape
    f = np.floor(x)
    fr = x - f
    k = (r - f.sum(axis=1)).round().astype(np.int64)
    k = np.clip(k, 0, n)
    order = np.sort(fr, axis=1)[:, ::-1]
    rows = np.arange(m)
    up_err = np.where(k > 0, 1.0 - order[rows, np.maximum(k - 1, 0)], 0.0)
    down_err = np.where(k < n, order[rows, np.minimum(k, n - 1)], 0.0)
    d = np.maximum(up_err, down_err)[:, None]
    must = fr > d + TIE_TOL
    can = (1.0 - fr) <= d + TIE_TOL
    optional = can & ~must
    need = k - must.sum(axis=1)
    # take optional coordinates from the right end first
    from_right = np.cumsum(optional[:, ::-1], axis=1)[:, ::-1]
    raise_ = must | (optional & (from_right <= need[:, None]))
    return (f + raise_).astype(np.int64)


def quantize_many(rep: RepresentativeBeliefSet, beliefs: np.ndarray) -> np.ndarray:
    beliefs = np.atleast_2d(beliefs)
    if beliefs.shape[1] != rep.n_states:
        raise ValueError(f"beliefs have {beliefs.shape[1]} states, lattice has {rep.n_states}")
    return rep.rank(nearest_compositions(beliefs, rep.resolution))


def quantize(rep: RepresentativeBeliefSet, b) -> int:
    b = as_belief(b, rep.n_states)
    return int(quantize_many(rep, b[None, :])[0])


@dataclass(frozen=True, eq=False)
class QuantizedMdp:
    rep_set: RepresentativeBeliefSet
    transitions: list  # one (K, K) CSR matrix per action
    costs: np.ndarray  # (K, A)
    discount: float

    @property
    def n_actions(self) -> int:
        return len(self.transitions)

    def dense_transitions(self) -> np.ndarray:
        return np.stack([P.toarray() for P in self.transitions])

    def to_dict(self) -> dict:
        return {
            "resolution": self.rep_set.resolution,
            "n_states": self.rep_set.n_states,
            "transitions": self.dense_transitions().tolist(),
            "costs": self.costs.tolist(),
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QuantizedMdp":
        rep = enumerate_lattice(doc["n_states"], doc["resolution"])
        P = [sparse.csr_matrix(np.asarray(p, dtype=float)) for p in doc["transitions"]]
        return cls(rep, P, np.asarray(doc["costs"], dtype=float), float(doc["discount"]))


def _successor_chunks(model: PomdpModel, points: np.ndarray):
    per_row = model.n_observations * model.n_states
    step = max(1, _CHUNK // per_row)
    for start in range(0, len(points), step):
        yield start, points[start:start + step]


def build_quantized_mdp(model: PomdpModel, rep: RepresentativeBeliefSet, mode: str = "auto",
                        mc_samples: int = 10_000, rng: np.random.Generator | None = None,
                        max_kernel: int = MAX_KERNEL) -> QuantizedMdp:
    """Aggregate the belief-MDP kernel onto the representative set.

    ``mode='exact'`` enumerates every observation; ``'monte-carlo'`` draws
    ``mc_samples`` observations per (point, action); ``'auto'`` picks exact
    when the observation space has at most 4096 elements.
    """
    if model.n_states != rep.n_states:
        raise ValueError("model and lattice disagree on the number of states")
    K = len(rep)
    if K * K * model.n_actions > max_kernel:
        raise CapacityError(f"quantized kernel {K}x{K}x{model.n_actions} exceeds limit")
    if mode == "auto":
        mode = "exact" if model.n_observations <= EXACT_MAX_OBS else "monte-carlo"
    if mode not in ("exact", "monte-carlo"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "monte-carlo" and rng is None:
        rng = np.random.default_rng(0)

    points = rep.points
    transitions = []
    for a in range(model.n_actions):
        rows, cols, vals = [], [], []
        for start, chunk in _successor_chunks(model, points):
            probs, posts = successor_table(model, chunk, a)
            if mode == "monte-carlo":
                p = probs / probs.sum(axis=1, keepdims=True)
                probs = rng.multinomial(mc_samples, p) / mc_samples
            i, o = np.nonzero(probs > 0.0)
            rows.append(i + start)
            cols.append(quantize_many(rep, posts[i, o]))
            vals.append(probs[i, o])
        P = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(K, K)).tocsr()
        P.sum_duplicates()
        transitions.append(P)
    costs = points @ model.cost
    return QuantizedMdp(rep, transitions, costs, model.discount)


@dataclass(frozen=True, eq=False)
class SolvedPlan:
    values: np.ndarray
    policy: np.ndarray
    sweeps: int
    residual: float

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "policy": self.policy.tolist(),
                "sweeps": self.sweeps, "residual": self.residual}

    @classmethod
    def from_dict(cls, doc: dict) -> "SolvedPlan":
        return cls(np.asarray(doc["values"], dtype=float), np.asarray(doc["policy"], dtype=int),
                   int(doc["sweeps"]), float(doc["residual"]))


def q_values(qmdp: QuantizedMdp, V: np.ndarray) -> np.ndarray:
    return qmdp.costs + qmdp.discount * np.column_stack([P @ V for P in qmdp.transitions])


def value_iteration(qmdp: QuantizedMdp, threshold: float = 0.1,
                    max_sweeps: int = 1_000_000) -> SolvedPlan:
    """Synchronous value iteration from V = 0.

    Stops once the sup-norm change of a sweep is at most ``threshold``.
    The returned policy is greedy with respect to the final values, with
    ties resolved toward the lowest action index.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    V = np.zeros(qmdp.costs.shape[0])
    sweeps = 0
    while True:
        V_new = q_values(qmdp, V).min(axis=1)
        delta = float(np.max(np.abs(V_new - V))) if V.size else 0.0
        V = V_new
        sweeps += 1
        if delta <= threshold or sweeps >= max_sweeps:
            break
    Q = q_values(qmdp, V)
    policy = np.argmin(Q, axis=1)
    residual = float(np.max(np.abs(Q.min(axis=1) - V)))
    V.setflags(write=False)
    policy.setflags(write=False)
    return SolvedPlan(V, policy, sweeps, residual)


def approx_cost(plan: SolvedPlan, rep: RepresentativeBeliefSet, b) -> float:
    return float(plan.values[quantize(rep, b)])


def approx_policy(plan: SolvedPlan, rep: RepresentativeBeliefSet, b) -> int:
    return int(plan.policy[quantize(rep, b)])


def solve(model: PomdpModel, r: int, threshold: float = 0.1, **kwargs):
    """Convenience: lattice, quantized MDP and value iteration in one call."""
    rep = enumerate_lattice(model.n_states, r)
    qmdp = build_quantized_mdp(model, rep, **kwargs)
    return rep, qmdp, value_iteration(qmdp, threshold)
