"""Clique-selection policies and the perfect random-coding baseline.

Every IDNC policy works in two stages: pick a clique in the primary layer,
then extend it with a clique of the secondary vertices adjacent to all of it.
The result is always a maximal clique of the whole graph.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._search import SearchBudgetExceeded, max_weight_clique
from .graph import Clique, GraphError, IdncGraph, secondary_candidates
from .model import FrameState, ModelError, weighted_wants

VARIANTS = ("rnd", "mc", "mc-heur", "mwcs", "mwvs", "rnc")
GREEDY_RTOL = 1e-12


class EmptyGraphError(GraphError):
    pass


@dataclass(frozen=True)
class PolicyKind:
    variant: str
    n: int = 1

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown policy {self.variant!r}")
        if self.n < 1:
            raise ValueError("norm exponent must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "PolicyKind":
        text = text.strip().lower()
        m = re.fullmatch(r"(mwcs|mwvs):n=(\d+)", text)
        if m:
            return cls(m.group(1), int(m.group(2)))
        if text in ("rnd", "mc", "mc-heur", "rnc"):
            return cls(text)
        raise ValueError(f"cannot parse policy {text!r}; expected rnd, mc, mc-heur, rnc, mwcs:n=<k> or mwvs:n=<k>")

    @property
    def weighted(self) -> bool:
        return self.variant in ("mwcs", "mwvs")

    def __str__(self) -> str:
        return f"{self.variant}:n={self.n}" if self.weighted else self.variant


def _require_primary(graph: IdncGraph) -> np.ndarray:
    prim = graph.primary_indices
    if len(prim) == 0:
        raise EmptyGraphError("the primary layer is empty")
    return prim


def _assemble(graph: IdncGraph, chosen: list[int]) -> Clique:
    return graph.clique(chosen)


def _two_stage(graph: IdncGraph, stage: Callable[[np.ndarray, bool], list[int]]) -> Clique:
    chosen = stage(_require_primary(graph), True)
    chosen += stage(secondary_candidates(graph, chosen), False)
    return _assemble(graph, chosen)


# ------------------------------------------------------------------ random


def select_random(graph: IdncGraph, rng: np.random.Generator) -> Clique:
    def grow(cand: np.ndarray, _primary: bool) -> list[int]:
        chosen = []
        while len(cand):
            v = int(cand[rng.integers(len(cand))])
            chosen.append(v)
            cand = cand[graph.adj[v, cand]]
        return chosen

    return _two_stage(graph, grow)


# ------------------------------------------------------------------ greedy


def _greedy_stage(adj: np.ndarray, cand: np.ndarray, value: np.ndarray) -> list[int]:
    """Grow a clique by repeatedly adding the vertex maximising value * weighted degree.

    Weighted degrees are recomputed inside the shrinking candidate set; ties
    (relative 1e-12) go to the earliest vertex.
    """
    chosen = []
    cand = np.asarray(cand, dtype=np.int64)
    while len(cand):
        vals = value[cand]
        wdeg = adj[np.ix_(cand, cand)] @ vals
        score = vals * wdeg
        top = score.max()
        k = int(np.flatnonzero(score >= top - GREEDY_RTOL * max(1.0, abs(top)))[0])
        v = int(cand[k])
        chosen.append(v)
        cand = cand[adj[v, cand]]
    return chosen


def _receiver_weights(graph: IdncGraph, per_receiver: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(per_receiver, dtype=float)[graph.receivers] ** n


def select_mwvs(
    graph: IdncGraph,
    psi_tilde: np.ndarray,
    n: int,
    secondary_weights: np.ndarray | None = None,
) -> Clique:
    """Greedy maximum-weight vertex search."""
    base = _receiver_weights(graph, psi_tilde, n)
    sec = base if secondary_weights is None else _receiver_weights(graph, secondary_weights, n)
    return _two_stage(graph, lambda cand, primary: _greedy_stage(graph.adj, cand, base if primary else sec))


def layer_degrees(graph: IdncGraph) -> np.ndarray:
    """Degree of each vertex inside its own layer."""
    same_layer = graph.primary[:, None] == graph.primary[None, :]
    return (graph.adj & same_layer).sum(axis=1).astype(float)


def select_mc_heuristic(graph: IdncGraph) -> Clique:
    """The greedy vertex search with each vertex valued by its degree in its layer."""
    value = layer_degrees(graph)
    return _two_stage(graph, lambda cand, _primary: _greedy_stage(graph.adj, cand, value))


# ------------------------------------------------------------------ exact


@dataclass(frozen=True)
class SearchLimits:
    vertex_budget: int = 200
    node_budget: int = 10_000_000
    fallback: bool = True


def _exact_stage(
    graph: IdncGraph, cand: np.ndarray, weights: np.ndarray, limits: SearchLimits, heuristic_value: np.ndarray
) -> list[int]:
    cand = np.asarray(cand, dtype=np.int64)
    if len(cand) == 0:
        return []
    try:
        if len(cand) > limits.vertex_budget:
            raise SearchBudgetExceeded(f"{len(cand)} candidates exceed the vertex budget {limits.vertex_budget}")
        sub = graph.adj[np.ix_(cand, cand)]
        return [int(cand[k]) for k in max_weight_clique(sub, weights[cand], limits.node_budget)]
    except SearchBudgetExceeded:
        if not limits.fallback:
            raise
        return _greedy_stage(graph.adj, cand, heuristic_value)


def select_max_clique(graph: IdncGraph, limits: SearchLimits = SearchLimits()) -> Clique:
    """Maximum-cardinality primary clique, then maximum secondary extension."""
    ones = np.ones(len(graph))
    value = layer_degrees(graph)
    return _two_stage(graph, lambda cand, _primary: _exact_stage(graph, cand, ones, limits, value))


def select_mwcs(
    graph: IdncGraph,
    psi_tilde: np.ndarray,
    n: int,
    secondary_weights: np.ndarray | None = None,
    limits: SearchLimits = SearchLimits(),
) -> Clique:
    """Maximum-weight primary clique under weights psi_tilde**n, then the same on the secondary layer."""
    base = _receiver_weights(graph, psi_tilde, n)
    sec = base if secondary_weights is None else _receiver_weights(graph, secondary_weights, n)

    def stage(cand, primary):
        w = base if primary else sec
        return _exact_stage(graph, cand, w, limits, w)

    return _two_stage(graph, stage)


# ------------------------------------------------------------------ RNC


def rnc_completion_delay(state: FrameState, rng: np.random.Generator) -> int:
    """Slots until every receiver has collected as many coded packets as it lacks."""
    if any(len(p.primary_packets) != state.N for p in state.profiles):
        raise ModelError("the random-coding baseline is defined for broadcast frames only")
    q = state.success_probs
    if np.any(q <= 0.0):
        raise ModelError("random-coding baseline needs q > 0")
    need = state.lacks_sizes
    if not need.any():
        return 0
    lacking = need > 0
    failures = rng.negative_binomial(need[lacking], q[lacking])
    return int((need[lacking] + failures).max())


# ------------------------------------------------------------------ dispatch

Selector = Callable[[IdncGraph, FrameState, np.random.Generator], Clique]


def make_selector(kind: PolicyKind, secondary_weight: str = "psi-tilde", limits: SearchLimits = SearchLimits()) -> Selector:
    """Bind a policy to a uniform (graph, state, rng) -> Clique interface."""
    if secondary_weight not in ("psi-tilde", "q-psi"):
        raise ValueError("secondary weight must be 'psi-tilde' or 'q-psi'")

    def secondary(state: FrameState) -> np.ndarray | None:
        if secondary_weight == "psi-tilde":
            return None
        w = state.success_probs * state.wants_sizes
        return np.where(w > 0, w, 1.0)

    v = kind.variant
    if v == "rnd":
        return lambda g, s, rng: select_random(g, rng)
    if v == "mc":
        return lambda g, s, rng: select_max_clique(g, limits)
    if v == "mc-heur":
        return lambda g, s, rng: select_mc_heuristic(g)
    if v == "mwcs":
        return lambda g, s, rng: select_mwcs(g, weighted_wants(s), kind.n, secondary(s), limits)
    if v == "mwvs":
        return lambda g, s, rng: select_mwvs(g, weighted_wants(s), kind.n, secondary(s))
    raise ValueError(f"policy {kind} does not select cliques")
