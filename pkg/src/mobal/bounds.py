"""Computable error bounds for quantized planning under a misspecified model.

``approximation_bound`` and ``misspecification_bound`` add up to the total
sub-optimality bound of the quantized strategy against the true optimum.
The exact optimal cost function is replaced by a fine-lattice solution
(``reference_cost_function``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .pomdp import PomdpModel, successor_table
from .quantize import (RepresentativeBeliefSet, SolvedPlan, build_quantized_mdp, enumerate_lattice,
                       quantize_many, value_iteration)

REFERENCE_MAX_STATES = 4
REFERENCE_THRESHOLD = 1e-6


@dataclass(frozen=True)
class BoundReport:
    alpha: float
    c_max: float
    epsilon: float
    gamma: float
    misspec_bound: float
    approx_bound: float
    total_bound: float
    probe_count: int = 0


def compute_c_max(model: PomdpModel) -> float:
    # belief cost is linear, so its max over the simplex sits at a vertex
    return float(model.cost.max())


def _successor_masses(model: PomdpModel, b: np.ndarray, a: int) -> dict:
    probs, posts = successor_table(model, b[None, :], a)
    out: dict = {}
    for o in np.flatnonzero(probs[0] > 0):
        key = np.round(posts[0, o], 12).tobytes()
        out[key] = out.get(key, 0.0) + probs[0, o]
    return out


def compute_alpha(model_true: PomdpModel, model_conj: PomdpModel, probes, match: str = "observation") -> float:
    """Largest L1 gap between the two belief-transition kernels over ``probes``.

    With ``match='observation'`` successors are paired by the observation
    that produced them; ``match='belief'`` pairs them by belief identity
    (to 1e-12), which is the literal kernel distance and is usually larger.
    The result is a lower estimate of the sup over the whole simplex.
    """
    if (model_true.n_states, model_true.n_actions, model_true.n_observations) != \
            (model_conj.n_states, model_conj.n_actions, model_conj.n_observations):
        raise ValueError("models must share state, action and observation spaces")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.size == 0:
        raise ValueError("need at least one probe belief")
    alpha = 0.0
    for a in range(model_true.n_actions):
        if match == "observation":
            p = probes @ model_true.transition[a] @ model_true.observation
            q = probes @ model_conj.transition[a] @ model_conj.observation
            alpha = max(alpha, float(np.abs(p - q).sum(axis=1).max()))
        elif match == "belief":
            for b in probes:
                mp, mq = _successor_masses(model_true, b, a), _successor_masses(model_conj, b, a)
                gap = sum(abs(mp.get(k, 0.0) - mq.get(k, 0.0)) for k in mp.keys() | mq.keys())
                alpha = max(alpha, gap)
        else:
            raise ValueError(f"unknown match mode {match!r}")
    return min(max(alpha, 0.0), 2.0)


@dataclass(frozen=True, eq=False)
class Reference:
    """A solved quantized model used as a stand-in for the exact cost function."""

    rep: RepresentativeBeliefSet
    plan: SolvedPlan

    def values(self, beliefs) -> np.ndarray:
        return self.plan.values[quantize_many(self.rep, np.atleast_2d(beliefs))]


def reference_cost_function(model: PomdpModel, r_ref: int = 200,
                            threshold: float = REFERENCE_THRESHOLD) -> Reference:
    if model.n_states > REFERENCE_MAX_STATES:
        raise CapacityError(f"reference solutions are limited to {REFERENCE_MAX_STATES} states")
    rep = enumerate_lattice(model.n_states, r_ref)
    plan = value_iteration(build_quantized_mdp(model, rep, mode="exact"), threshold)
    return Reference(rep, plan)


def _cell_samples(rep: RepresentativeBeliefSet, cell: int, count: int, rng, max_tries: int = 50):
    center = rep.points[cell]
    n, r = rep.n_states, rep.resolution
    found = []
    need = count
    for _ in range(max_tries):
        if need <= 0:
            break
        head = center[:-1] + rng.uniform(-1.0 / r, 1.0 / r, size=(4 * need, n - 1))
        cand = np.column_stack([head, 1.0 - head.sum(axis=1)])
        cand = cand[np.all(cand >= 0.0, axis=1)]
        if len(cand):
            cand = cand[quantize_many(rep, cand) == cell][:need]
            found.append(cand)
            need -= len(cand)
    return np.vstack(found) if found else np.empty((0, n))


def compute_epsilon(reference: Reference, rep: RepresentativeBeliefSet, samples_per_cell: int = 64,
                    rng: np.random.Generator | None = None) -> float:
    """Largest spread of the reference cost function within one quantization cell.

    Cell members are the reference lattice points plus ``samples_per_cell``
    uniform draws from each cell.
    """
    if reference.rep.resolution < rep.resolution:
        raise ValueError("reference resolution must be at least the evaluated resolution")
    rng = rng or np.random.default_rng(0)
    K = len(rep)
    lo = np.full(K, np.inf)
    hi = np.full(K, -np.inf)
    cells = quantize_many(rep, reference.rep.points)
    np.minimum.at(lo, cells, reference.plan.values)
    np.maximum.at(hi, cells, reference.plan.values)
    if samples_per_cell > 0:
        for cell in range(K):
            pts = _cell_samples(rep, cell, samples_per_cell, rng)
            if len(pts):
                v = reference.values(pts)
                lo[cell] = min(lo[cell], v.min())
                hi[cell] = max(hi[cell], v.max())
    spread = np.where(np.isfinite(lo), hi - lo, 0.0)
    return float(spread.max())


def misspecification_bound(alpha: float, c_max: float, gamma: float) -> float:
    return gamma * alpha * c_max / (1.0 - gamma) ** 2


def approximation_bound(epsilon: float, gamma: float) -> float:
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return epsilon / (1.0 - gamma)


def suboptimality_bound(alpha: float, c_max: float, epsilon: float, gamma: float,
                        probe_count: int = 0) -> BoundReport:
    mis = misspecification_bound(alpha, c_max, gamma)
    app = approximation_bound(epsilon, gamma)
    return BoundReport(alpha, c_max, epsilon, gamma, mis, app, app + mis, probe_count)


def grid_beliefs(points: int = 101) -> np.ndarray:
    """Two-state beliefs with b(1) on an even grid over [0, 1]."""
    b1 = np.linspace(0.0, 1.0, points)
    return np.column_stack([1.0 - b1, b1])


def sup_grid_gap(values_a: np.ndarray, values_b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(values_a) - np.asarray(values_b))))
