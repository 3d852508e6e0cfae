"""Monte Carlo recovery-phase simulator.

Seeding contract: trial ``t`` of an experiment with master seed ``s`` uses
``SeedSequence([s, t])`` spawned into two children. The first drives the
receiver profiles and the initial uncoded phase, the second everything in
the recovery phase (reception outcomes, random clique choices). Policies run
with the same master seed therefore see identical frames, which gives common
random numbers across policies and across sweep cells.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .graph import Clique, build_graph, check_decodable
from .model import FrameState, ModelError, ReceiverProfile, apply_reception, init_frame, is_complete, primary_set_size
from .policies import PolicyKind, SearchLimits, Selector, make_selector, rnc_completion_delay

P_CLIP = (0.01, 0.99)
MU_FLOOR = 1e-6
AXES = {"mu": "mean_demand", "M": "M", "N": "N", "p": "mean_erasure"}


@dataclass(frozen=True)
class SimConfig:
    M: int
    N: int
    mean_erasure: float
    mean_demand: float
    policy: PolicyKind
    trials: int
    master_seed: int
    erasure_spread: float = 0.5
    demand_spread: float = 0.5
    max_slots: int | None = None
    include_initial: bool = False
    secondary_weight: str = "psi-tilde"

    def __post_init__(self) -> None:
        if isinstance(self.policy, str):
            object.__setattr__(self, "policy", PolicyKind.parse(self.policy))
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be >= 1")
        if not P_CLIP[0] <= self.mean_erasure <= P_CLIP[1]:
            raise ValueError(f"mean erasure must lie in [{P_CLIP[0]}, {P_CLIP[1]}]")
        if not 0.0 < self.mean_demand <= 1.0:
            raise ValueError("mean demand ratio must lie in (0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master seed must be a 64-bit unsigned integer")
        if not (0.0 <= self.erasure_spread < 1.0 and 0.0 <= self.demand_spread < 1.0):
            raise ValueError("spread factors must lie in [0, 1)")
        if self.max_slots is not None and self.max_slots < 1:
            raise ValueError("max_slots must be >= 1")
        if self.secondary_weight not in ("psi-tilde", "q-psi"):
            raise ValueError("secondary weight must be 'psi-tilde' or 'q-psi'")

    @property
    def slot_cap(self) -> int:
        if self.max_slots is not None:
            return self.max_slots
        worst_p = min(P_CLIP[1], (1.0 + self.erasure_spread) * self.mean_erasure)
        return int(math.ceil(max(50 * self.N / (1.0 - self.mean_erasure), self.N * self.M / (1.0 - worst_p))))

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class SlotRecord:
    packets: tuple[int, ...]
    targets: tuple[tuple[int, int], ...]
    primary_receivers: tuple[int, ...]
    secondary_receivers: tuple[int, ...]
    outcomes: tuple[bool, ...]


@dataclass(frozen=True)
class CompletionRecord:
    completion_delay: int
    transcript: tuple[SlotRecord, ...] = field(repr=False)
    truncated: bool = False


def _recentred(x: np.ndarray, target: float, lo: float, hi: float) -> np.ndarray:
    """Shift then clip ``x`` until its mean equals ``target``; bracketed root-find if passes run out."""
    y = x.copy()
    for _ in range(3):
        y = np.clip(y + (target - y.mean()), lo, hi)
        if abs(y.mean() - target) <= 1e-12:
            return y
    shift = brentq(lambda c: np.clip(x + c, lo, hi).mean() - target, lo - x.max(), hi - x.min(), xtol=1e-15)
    return np.clip(x + shift, lo, hi)


def draw_profiles(
    M: int,
    N: int,
    mean_erasure: float,
    mean_demand: float,
    rng: np.random.Generator,
    erasure_spread: float = 0.5,
    demand_spread: float = 0.5,
) -> list[ReceiverProfile]:
    """Heterogeneous receivers: uniform +-spread around the means, clipped, recentred to the exact mean."""
    if not P_CLIP[0] <= mean_erasure <= P_CLIP[1]:
        raise ModelError(f"mean erasure {mean_erasure} cannot be met inside {P_CLIP}")
    if not 0.0 < mean_demand <= 1.0:
        raise ModelError(f"mean demand {mean_demand} outside (0, 1]")
    u_p = rng.uniform(1.0 - erasure_spread, 1.0 + erasure_spread, M)
    u_mu = rng.uniform(1.0 - demand_spread, 1.0 + demand_spread, M)
    if erasure_spread == 0.0:
        p = np.full(M, float(mean_erasure))
    else:
        p = _recentred(np.clip(u_p * mean_erasure, *P_CLIP), mean_erasure, *P_CLIP)
    if mean_demand == 1.0 or demand_spread == 0.0:
        mu = np.full(M, float(mean_demand))
    else:
        mu = _recentred(np.clip(u_mu * mean_demand, MU_FLOOR, 1.0), mean_demand, MU_FLOOR, 1.0)
    profiles = []
    for i in range(M):
        k = primary_set_size(mu[i], N)
        prim = range(N) if k == N else rng.choice(N, size=k, replace=False)
        profiles.append(ReceiverProfile(float(p[i]), float(mu[i]), frozenset(int(j) for j in prim)))
    return profiles


def _trial_rngs(master_seed: int, trial_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    frame_ss, recovery_ss = np.random.SeedSequence([master_seed, trial_index]).spawn(2)
    return np.random.default_rng(frame_ss), np.random.default_rng(recovery_ss)


def simulate_recovery(
    state: FrameState,
    select: Selector,
    rng: np.random.Generator,
    max_slots: int,
    record: bool = True,
) -> CompletionRecord:
    """Run coded transmissions until every Wants set is empty or ``max_slots`` is hit."""
    q = state.success_probs
    slots: list[SlotRecord] = []
    delay = 0
    while not is_complete(state):
        if delay >= max_slots:
            return CompletionRecord(delay, tuple(slots), truncated=True)
        graph = build_graph(state)
        clique: Clique = select(graph, state, rng)
        check_decodable(clique, graph.has)
        targets = clique.targets
        receivers = sorted(targets)
        heard = rng.random(len(receivers)) < q[receivers]
        outcomes = dict(zip(receivers, heard.tolist()))
        state = apply_reception(state, targets, outcomes)
        delay += 1
        if record:
            slots.append(
                SlotRecord(
                    tuple(sorted(clique.packet_set)),
                    tuple((r, targets[r]) for r in receivers),
                    tuple(sorted(clique.targeted_primary)),
                    tuple(sorted(clique.targeted_secondary)),
                    tuple(outcomes[r] for r in receivers),
                )
            )
    return CompletionRecord(delay, tuple(slots), truncated=False)


def run_trial(config: SimConfig, trial_index: int, record: bool = True) -> CompletionRecord:
    frame_rng, recovery_rng = _trial_rngs(config.master_seed, trial_index)
    profiles = draw_profiles(
        config.M,
        config.N,
        config.mean_erasure,
        config.mean_demand,
        frame_rng,
        config.erasure_spread,
        config.demand_spread,
    )
    state = init_frame(profiles, config.N, frame_rng)
    if config.policy.variant == "rnc":
        rec = CompletionRecord(rnc_completion_delay(state, recovery_rng), ())
    else:
        select = make_selector(config.policy, config.secondary_weight, SearchLimits())
        rec = simulate_recovery(state, select, recovery_rng, config.slot_cap, record)
    if config.include_initial:
        rec = dataclasses.replace(rec, completion_delay=rec.completion_delay + config.N)
    return rec


@dataclass(frozen=True)
class ExperimentSummary:
    mean_delay: float
    stderr: float
    trials: int
    truncated: int
    delays: np.ndarray = field(repr=False, compare=False)

    @property
    def completed(self) -> int:
        return self.trials - self.truncated


def _run_chunk(config: SimConfig, indices: Sequence[int]) -> list[tuple[int, int, bool]]:
    out = []
    for t in indices:
        rec = run_trial(config, t, record=False)
        out.append((t, rec.completion_delay, rec.truncated))
    return out


def summarise(delays: np.ndarray, truncated: np.ndarray) -> ExperimentSummary:
    """Statistics over completed trials; truncated trials are counted, never averaged."""
    done = delays[~truncated].astype(float)
    n = len(done)
    if n == 0:
        mean, se = float("nan"), float("nan")
    else:
        mean = math.fsum(done) / n
        se = math.sqrt(math.fsum((done - mean) ** 2) / (n - 1) / n) if n > 1 else 0.0
    return ExperimentSummary(mean, se, len(delays), int(truncated.sum()), delays)


def run_experiment(config: SimConfig, workers: int = 1, progress: Callable[[int], None] | None = None) -> ExperimentSummary:
    """Run all trials; the result does not depend on ``workers``."""
    delays = np.zeros(config.trials, dtype=np.int64)
    truncated = np.zeros(config.trials, dtype=bool)
    if workers <= 1:
        chunks = [_run_chunk(config, range(config.trials))]
    else:
        idx = np.array_split(np.arange(config.trials), workers * 4)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, [config] * len(idx), [c.tolist() for c in idx]))
    for chunk in chunks:
        for t, d, tr in chunk:
            delays[t] = d
            truncated[t] = tr
        if progress is not None:
            progress(len(chunk))
    return summarise(delays, truncated)


@dataclass(frozen=True)
class ResultRow:
    axis: str
    value: float
    policy: str
    mean_delay: float
    stderr: float
    trials: int
    truncated: int
    seed: int


def run_sweep(
    base: SimConfig,
    axis: str,
    values: Sequence[float],
    policies: Sequence[PolicyKind | str],
    workers: int = 1,
) -> list[ResultRow]:
    """Cross product of axis values and policies; every cell reuses the master seed."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {sorted(AXES)}")
    kinds = [PolicyKind.parse(p) if isinstance(p, str) else p for p in policies]
    cells = []
    for value in values:
        cast = int(value) if axis in ("M", "N") else float(value)
        if axis in ("M", "N") and cast != value:
            raise ValueError(f"axis {axis} needs integer values, got {value}")
        for kind in kinds:
            cfg = base.replace(**{AXES[axis]: cast, "policy": kind})
            if kind.variant == "rnc" and cfg.mean_demand != 1.0:
                raise ValueError("policy rnc needs a broadcast frame (mean demand 1)")
            cells.append((cast, kind, cfg))
    rows = []
    for cast, kind, cfg in cells:
        s = run_experiment(cfg, workers)
        rows.append(ResultRow(axis, cast, str(kind), s.mean_delay, s.stderr, s.trials, s.truncated, base.master_seed))
    return rows
