"""Exact minimum expected completion delay for tiny instances.

The recovery process is a stochastic shortest path problem with unit cost
per transmission. A state is the set of initially missing (receiver, packet)
pairs received so far, so it is a bitmask over those pairs and every
non-trivial transition sets at least one more bit. Values are therefore
computed exactly by memoised recursion over successors, with the self-loop
(every targeted receiver erases) folded into a geometric factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .graph import Clique, IdncGraph, all_clique_indices, build_graph, maximal_clique_indices
from .model import HAS, WANTS, FrameState
from .sim import simulate_recovery

VALUE_RTOL = 1e-12


class StateSpaceTooLarge(ValueError):
    pass


class SspProblem:
    """Fixed frame data: which (receiver, packet) pairs were missing at the start."""

    def __init__(self, initial: FrameState):
        self.initial = initial
        rs, ps = np.nonzero(initial.sfm != HAS)
        self.bits: list[tuple[int, int]] = list(zip(rs.tolist(), ps.tolist()))
        self.bit_of = {pair: b for b, pair in enumerate(self.bits)}
        self.wanted = np.array([initial.sfm[r, p] == WANTS for r, p in self.bits], dtype=bool)
        self.wanted_mask = sum(1 << b for b in np.flatnonzero(self.wanted).tolist())
        self.q = initial.success_probs
        if np.any(self.q <= 0.0):
            raise ValueError("every receiver needs q > 0 for the oracle")

    @property
    def n_bits(self) -> int:
        return len(self.bits)

    def state(self, mask: int) -> FrameState:
        sfm = self.initial.sfm.copy()
        for b, (r, p) in enumerate(self.bits):
            if (mask >> b) & 1:
                sfm[r, p] = HAS
        return FrameState._trusted(sfm, self.initial.profiles)

    def mask_of(self, state: FrameState) -> int:
        mask = 0
        for b, (r, p) in enumerate(self.bits):
            if state.sfm[r, p] == HAS:
                mask |= 1 << b
        return mask

    def is_absorbing(self, mask: int) -> bool:
        return mask & self.wanted_mask == self.wanted_mask

    def psi_tilde(self, mask: int) -> np.ndarray:
        psi = np.zeros(self.initial.M)
        for b, (r, _) in enumerate(self.bits):
            if self.wanted[b] and not (mask >> b) & 1:
                psi[r] += 1
        return psi / self.q


@dataclass(frozen=True)
class SspState:
    received_mask: int
    problem: SspProblem = field(compare=False, repr=False)

    @property
    def absorbing(self) -> bool:
        return self.problem.is_absorbing(self.received_mask)


def transition_distribution(problem: SspProblem, mask: int, clique: Clique) -> list[tuple[int, float]]:
    """Successor masks with probabilities, one per subset of targeted receivers that heard the slot.

    Outcomes of probability zero (a lossless receiver missing the slot) are left out.
    """
    if len(clique) == 0:
        raise ValueError("an empty clique is not a transmission")
    bits = []
    for r, p in clique.targets.items():
        b = problem.bit_of.get((r, p))
        if b is None or (mask >> b) & 1:
            raise ValueError(f"receiver {r} does not lack packet {p}")
        bits.append((b, float(problem.q[r])))
    out = []
    for heard in product((True, False), repeat=len(bits)):
        m, prob = mask, 1.0
        for (b, q), h in zip(bits, heard):
            if h:
                m |= 1 << b
                prob *= q
            else:
                prob *= 1.0 - q
        if prob > 0.0:
            out.append((m, prob))
    return out


@dataclass
class ValueTable:
    problem: SspProblem
    values: dict[int, float]
    policy: dict[int, Clique]

    @property
    def initial_value(self) -> float:
        return self.values[0]

    def action(self, state: FrameState) -> Clique:
        return self.policy[self.problem.mask_of(state)]


def _graph_actions(graph: IdncGraph, mode: str, max_vertices: int) -> list[Clique]:
    if mode == "maximal":
        idx = maximal_clique_indices(graph, max_vertices)
    elif mode == "all":
        idx = all_clique_indices(graph, max_vertices)
    else:
        raise ValueError("action mode must be 'maximal' or 'all'")
    vs = graph.vertices
    return [Clique(tuple(vs[k] for k in c)) for c in idx]


def solve(initial: FrameState, size_bound: int = 16, actions: str = "maximal", max_vertices: int = 24) -> ValueTable:
    """Optimal values and actions over all states reachable from ``initial``.

    Among actions whose expected delay ties within a relative 1e-12, the
    lexicographically smallest clique (sorted (receiver, packet) pairs) wins.
    """
    problem = SspProblem(initial)
    if problem.n_bits > size_bound:
        raise StateSpaceTooLarge(f"{problem.n_bits} lacking bits exceed the bound {size_bound}")
    values: dict[int, float] = {}
    policy: dict[int, Clique] = {}

    def value(mask: int) -> float:
        if mask in values:
            return values[mask]
        if problem.is_absorbing(mask):
            values[mask] = 0.0
            return 0.0
        acts = _graph_actions(build_graph(problem.state(mask)), actions, max_vertices)
        assert acts, "a state with outstanding wants always has a singleton clique"
        best, best_clique = math.inf, None
        for clique in sorted(acts, key=Clique.sort_key):
            stay, acc = 0.0, 1.0
            for succ, prob in transition_distribution(problem, mask, clique):
                if succ == mask:
                    stay += prob
                else:
                    acc += prob * value(succ)
            j = acc / (1.0 - stay)
            if best_clique is None or j < best - VALUE_RTOL * max(1.0, abs(best)):
                best, best_clique = j, clique
        values[mask] = best
        policy[mask] = best_clique
        return best

    value(0)
    return ValueTable(problem, values, policy)


def check_table(table: ValueTable, tol: float = 1e-9) -> list[str]:
    """Bound and monotonicity violations over every solved state (empty when all hold)."""
    problem = table.problem
    bad = []
    for mask, v in table.values.items():
        pt = problem.psi_tilde(mask)
        lo, hi = pt.max(initial=0.0), pt.sum()
        if v < lo - tol * max(1.0, lo):
            bad.append(f"state {mask:#x}: V={v:.9g} below max psi_tilde {lo:.9g}")
        if v > hi + tol * max(1.0, hi):
            bad.append(f"state {mask:#x}: V={v:.9g} above sum psi_tilde {hi:.9g}")
        if mask in table.policy:
            for succ, prob in transition_distribution(problem, mask, table.policy[mask]):
                if succ != mask and prob > 0 and table.values[succ] > v + tol * max(1.0, v):
                    bad.append(f"state {mask:#x}: successor {succ:#x} has larger value")
        if v < 0 or (problem.is_absorbing(mask) and v != 0.0):
            bad.append(f"state {mask:#x}: invalid value {v}")
    return bad


class OraclePolicy:
    """Selector replaying a solved table inside the simulator."""

    def __init__(self, table: ValueTable):
        self.table = table

    def __call__(self, graph: IdncGraph, state: FrameState, rng: np.random.Generator) -> Clique:
        return self.table.action(state)


def replay(table: ValueTable, trials: int, rng: np.random.Generator, max_slots: int = 100_000) -> tuple[float, float]:
    """Vectorised Monte Carlo of the optimal policy straight from the table; returns (mean, stderr)."""
    problem = table.problem
    masks = sorted(table.values)
    ids = {m: k for k, m in enumerate(masks)}
    m_max = problem.initial.M
    tgt_bits = np.zeros((len(masks), m_max), dtype=np.int64)
    tgt_q = np.zeros((len(masks), m_max))
    done = np.zeros(len(masks), dtype=bool)
    for k, m in enumerate(masks):
        if m not in table.policy:
            done[k] = True
            continue
        for c, (r, p) in enumerate(table.policy[m].targets.items()):
            tgt_bits[k, c] = 1 << problem.bit_of[(r, p)]
            tgt_q[k, c] = problem.q[r]
    lookup = np.full(1 << problem.n_bits, -1, dtype=np.int64)
    lookup[masks] = np.arange(len(masks))
    state = np.zeros(trials, dtype=np.int64)
    cur = np.full(trials, ids[0], dtype=np.int64)
    delay = np.zeros(trials, dtype=np.int64)
    active = ~done[cur]
    slots = 0
    while active.any():
        if slots >= max_slots:
            raise RuntimeError("replay did not terminate")
        a = np.flatnonzero(active)
        k = cur[a]
        heard = rng.random((len(a), m_max)) < tgt_q[k]
        state[a] |= np.bitwise_or.reduce(np.where(heard, tgt_bits[k], 0), axis=1)
        cur[a] = lookup[state[a]]
        delay[a] += 1
        active[a] = ~done[cur[a]]
        slots += 1
    if np.any(cur < 0):
        raise RuntimeError("replay reached a state missing from the table")
    return float(delay.mean()), float(delay.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0


def simulate_policy(
    initial: FrameState,
    select: Callable,
    trials: int,
    seed: int,
    max_slots: int = 10_000,
) -> tuple[float, float, int]:
    """Mean delay and stderr of a selector from a fixed initial state; third value counts truncations."""
    delays = []
    truncated = 0
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        rec = simulate_recovery(initial, select, rng, max_slots, record=False)
        truncated += rec.truncated
        if not rec.truncated:
            delays.append(rec.completion_delay)
    d = np.asarray(delays, dtype=float)
    se = float(d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0
    return float(d.mean()), se, truncated


@dataclass(frozen=True)
class GapReport:
    gaps: np.ndarray
    gap_stderr: np.ndarray
    relative_gaps: np.ndarray
    optimal_values: np.ndarray

    @property
    def mean_relative_gap(self) -> float:
        return float(self.relative_gaps.mean())

    @property
    def max_relative_gap(self) -> float:
        return float(self.relative_gaps.max())

    @property
    def mean_relative_gap_stderr(self) -> float:
        rel_se = self.gap_stderr / self.optimal_values
        return float(np.sqrt(np.sum(rel_se**2)) / len(rel_se))


def policy_gap(select: Callable, instances: Sequence[FrameState], trials: int, seed: int) -> GapReport:
    """Monte Carlo delay of ``select`` minus the optimal value, per instance."""
    gaps, ses, vals = [], [], []
    for k, inst in enumerate(instances):
        v = solve(inst).initial_value
        mean, se, _ = simulate_policy(inst, select, trials, seed + k)
        gaps.append(mean - v)
        ses.append(se)
        vals.append(v)
    gaps, ses, vals = map(np.asarray, (gaps, ses, vals))
    rel = np.where(vals > 0, gaps / np.where(vals > 0, vals, 1.0), 0.0)
    return GapReport(gaps, ses, rel, np.where(vals > 0, vals, 1.0))
