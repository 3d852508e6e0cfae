"""Closed-form expectations for the primary IDNC graph and their oracles.

Expectations are over the uniform placement ensemble: given the cardinalities,
each receiver's Has set is a uniformly random subset of the frame of the right
size and its Wants set a uniformly random subset of the complement,
independently across receivers.

Two independent routes check every formula: a Monte Carlo sampler that builds
graphs from random placements, and an exhaustive enumerator that exploits the
fact that edge counts decompose over receiver pairs.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

import numpy as np

from .model import FrameState


class AnalyticsError(ValueError):
    pass


@dataclass(frozen=True)
class CardinalityProfile:
    has_sizes: np.ndarray
    lacks_sizes: np.ndarray
    wants_sizes: np.ndarray
    success_probs: np.ndarray
    N: int

    def __post_init__(self) -> None:
        for name in ("has_sizes", "lacks_sizes", "wants_sizes"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        object.__setattr__(self, "success_probs", np.asarray(self.success_probs, dtype=float))
        rho, phi, psi, q = self.has_sizes, self.lacks_sizes, self.wants_sizes, self.success_probs
        if not (len(rho) == len(phi) == len(psi) == len(q)):
            raise AnalyticsError("cardinality vectors must share one length")
        if np.any(rho + phi != self.N) or np.any(rho < 0) or np.any(phi < 0):
            raise AnalyticsError("Has and Lacks sizes must be non-negative and sum to N")
        if np.any(psi < 0) or np.any(psi > phi):
            raise AnalyticsError("Wants sizes must satisfy 0 <= psi <= phi")
        if np.any(q <= 0.0) or np.any(q > 1.0):
            raise AnalyticsError("success probabilities must lie in (0, 1]")

    @classmethod
    def build(cls, has_sizes, wants_sizes, success_probs, N: int) -> "CardinalityProfile":
        rho = np.asarray(has_sizes, dtype=np.int64)
        return cls(rho, N - rho, np.asarray(wants_sizes, dtype=np.int64), np.asarray(success_probs, float), int(N))

    @classmethod
    def from_state(cls, state: FrameState) -> "CardinalityProfile":
        return cls(state.has_sizes, state.lacks_sizes, state.wants_sizes, state.success_probs, state.N)

    @property
    def M(self) -> int:
        return len(self.has_sizes)


def _need_pairs(profile: CardinalityProfile) -> None:
    if profile.N < 2:
        raise AnalyticsError("closed forms need N >= 2")


def expected_degrees(profile: CardinalityProfile) -> np.ndarray:
    """Expected primary degree of a vertex of each receiver."""
    _need_pairs(profile)
    n = profile.N
    rho = profile.has_sizes.astype(float)
    psi = profile.wants_sizes.astype(float)
    # per-k terms psi_k/N * (1 + rho_k rho_i/(N-1)), summed over k != i
    terms = (psi[None, :] / n) * (1.0 + np.outer(rho, rho) / (n - 1))
    np.fill_diagonal(terms, 0.0)
    return terms.sum(axis=1)


def expected_degree(profile: CardinalityProfile, i: int) -> float:
    return float(expected_degrees(profile)[i])


def expected_edge_count(profile: CardinalityProfile) -> float:
    return float(0.5 * np.dot(profile.wants_sizes, expected_degrees(profile)))


def xi(profile: CardinalityProfile) -> np.ndarray:
    _need_pairs(profile)
    n = profile.N
    return profile.wants_sizes * profile.has_sizes / (n * (n - 1.0))


def phi_kernel(profile: CardinalityProfile, i: int, k: int, x: float) -> float:
    """Expected loss in the degree of receiver i's vertices when primary target k is served."""
    _need_pairs(profile)
    n = profile.N
    q_k, rho_k, psi_k = profile.success_probs[k], profile.has_sizes[k], profile.wants_sizes[k]
    return float(q_k / n * (1.0 + (rho_k - psi_k + 1) * (profile.has_sizes[i] + x) / (n - 1)))


def lambda_kernel(profile: CardinalityProfile, i: int, k: int, x: float) -> float:
    """Expected gain in the degree of receiver i's vertices when secondary target k is served."""
    _need_pairs(profile)
    n = profile.N
    q_k, psi_k = profile.success_probs[k], profile.wants_sizes[k]
    return float(q_k * psi_k * (profile.has_sizes[i] + x) / (n * (n - 1.0)))


@dataclass(frozen=True)
class EvolutionCoefficients:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    profile: CardinalityProfile

    def phi(self, i: int, k: int, x: float) -> float:
        return phi_kernel(self.profile, i, k, x)

    def lam(self, i: int, k: int, x: float) -> float:
        return lambda_kernel(self.profile, i, k, x)


def _check_targets(profile: CardinalityProfile, t_rho, t_sigma) -> tuple[frozenset, frozenset]:
    t_rho, t_sigma = frozenset(int(k) for k in t_rho), frozenset(int(k) for k in t_sigma)
    if t_rho & t_sigma:
        raise AnalyticsError("primary and secondary target sets must be disjoint")
    if any(not 0 <= k < profile.M for k in t_rho | t_sigma):
        raise AnalyticsError("target receiver out of range")
    return t_rho, t_sigma


def evolution_coefficients(profile: CardinalityProfile, t_rho: Iterable[int], t_sigma: Iterable[int]) -> EvolutionCoefficients:
    _need_pairs(profile)
    t_rho, t_sigma = _check_targets(profile, t_rho, t_sigma)
    m = profile.M
    q = profile.success_probs
    xis = xi(profile)
    alpha, beta, gamma = np.zeros(m), np.zeros(m), np.zeros(m)
    for i in range(m):
        xi_others = xis.sum() - xis[i]

        def shift(x: float) -> float:
            lost = sum(phi_kernel(profile, i, k, x) for k in t_rho if k != i)
            gained = sum(lambda_kernel(profile, i, k, x) for k in t_sigma if k != i)
            return gained - lost

        alpha[i] = q[i] * xi_others + shift(q[i])
        beta[i] = shift(0.0)
        gamma[i] = xi_others + shift(1.0)
    return EvolutionCoefficients(alpha, beta, gamma, xis, profile)


def expected_degree_evolution(
    profile: CardinalityProfile,
    t_rho: Iterable[int],
    t_sigma: Iterable[int],
    i: int,
    expected_degree_now: float | None = None,
) -> float:
    """One-step expected degree of receiver i's vertices after a transmission."""
    t_rho, t_sigma = _check_targets(profile, t_rho, t_sigma)
    if profile.M == 1:
        return 0.0
    co = evolution_coefficients(profile, t_rho, t_sigma)
    d = expected_degree(profile, i) if expected_degree_now is None else expected_degree_now
    return float(d + (co.alpha[i] if i in t_rho | t_sigma else co.beta[i]))


def expected_edge_evolution(
    profile: CardinalityProfile,
    t_rho: Iterable[int],
    t_sigma: Iterable[int],
    expected_degrees_now: np.ndarray | None = None,
    expected_edges_now: float | None = None,
) -> float:
    """One-step expected primary edge count after a transmission targeting ``t_rho`` and ``t_sigma``."""
    t_rho, t_sigma = _check_targets(profile, t_rho, t_sigma)
    co = evolution_coefficients(profile, t_rho, t_sigma)
    deg = expected_degrees(profile) if expected_degrees_now is None else np.asarray(expected_degrees_now, float)
    edges = expected_edge_count(profile) if expected_edges_now is None else float(expected_edges_now)
    psi, q = profile.wants_sizes, profile.success_probs
    targeted = t_rho | t_sigma
    out = edges
    for i in range(profile.M):
        if i in t_rho:
            out -= 0.5 * q[i] * (deg[i] + co.gamma[i])
        out += 0.5 * psi[i] * (co.alpha[i] if i in targeted else co.beta[i])
    return float(out)


def degree_dominance_check(profile: CardinalityProfile, i: int, h: int) -> bool:
    """For psi_i > psi_h and rho_i < rho_h, report whether E[deg h] > E[deg i]."""
    psi, rho = profile.wants_sizes, profile.has_sizes
    if not (psi[i] > psi[h] and rho[i] < rho[h]):
        raise AnalyticsError("dominance check needs psi_i > psi_h and rho_i < rho_h")
    d = expected_degrees(profile)
    return bool(d[h] > d[i])


# ---------------------------------------------------------------- Monte Carlo


def _sample_ranks(profile: CardinalityProfile, trials: int, rng: np.random.Generator) -> np.ndarray:
    # independent uniform permutation of the frame per (trial, receiver)
    base = np.broadcast_to(np.arange(profile.N, dtype=np.int16), (trials, profile.M, profile.N))
    return rng.permuted(base, axis=2)


def _edge_counts(has: np.ndarray, wants: np.ndarray) -> np.ndarray:
    w = wants.astype(np.float64)
    h = has.astype(np.float64)
    ww = np.einsum("tij,tkj->tik", w, w)
    wh = np.einsum("tij,tkj->tik", w, h)  # |W_i & H_k|
    pair = ww + wh * np.swapaxes(wh, 1, 2)
    m = has.shape[1]
    iu = np.triu_indices(m, 1)
    return pair[:, iu[0], iu[1]].sum(axis=1)


def _degree_of(has: np.ndarray, wants: np.ndarray, i: int, pkt: np.ndarray) -> np.ndarray:
    """Degree of vertex (i, pkt[t]) in each sampled graph."""
    t = np.arange(has.shape[0])
    same = wants[t, :, pkt]  # C1: packet wanted by k
    held = has[t, :, pkt]  # packet in H_k
    cross = np.einsum("tkj,tj->tk", wants.astype(np.int64), has[:, i, :].astype(np.int64))
    deg = same + held * cross
    deg[:, i] = 0
    return deg.sum(axis=1)


def _uniform_member(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    keys = np.where(mask, rng.random(mask.shape), -1.0)
    return keys.argmax(axis=1)


def _batched(trials: int, batch: int):
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        yield b
        done += b


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _placements(profile: CardinalityProfile, trials: int, rng: np.random.Generator):
    rank = _sample_ranks(profile, trials, rng)
    rho = profile.has_sizes[None, :, None]
    psi = profile.wants_sizes[None, :, None]
    return rank, rank < rho, (rank >= rho) & (rank < rho + psi)


def mc_oracle_edge_count(
    profile: CardinalityProfile, trials: int, rng: np.random.Generator, batch: int = 20_000
) -> tuple[float, float]:
    """Mean and standard error of the primary edge count over random placements."""
    if trials < 1:
        raise AnalyticsError("trials must be >= 1")
    counts = []
    for b in _batched(trials, batch):
        _, has, wants = _placements(profile, b, rng)
        counts.append(_edge_counts(has, wants))
    return _mean_se(np.concatenate(counts))


def mc_oracle_degree(
    profile: CardinalityProfile, i: int, trials: int, rng: np.random.Generator, batch: int = 20_000
) -> tuple[float, float]:
    """Mean and standard error of the degree of a uniformly chosen vertex of receiver i."""
    if trials < 1:
        raise AnalyticsError("trials must be >= 1")
    if profile.lacks_sizes[i] == 0:
        raise AnalyticsError(f"receiver {i} has no vertices")
    out = []
    for b in _batched(trials, batch):
        _, has, wants = _placements(profile, b, rng)
        pkt = _uniform_member(~has[:, i, :], rng)
        out.append(_degree_of(has, wants, i, pkt))
    return _mean_se(np.concatenate(out))


def _validate_step_targets(profile: CardinalityProfile, t_rho, t_sigma) -> tuple[frozenset, frozenset]:
    t_rho, t_sigma = _check_targets(profile, t_rho, t_sigma)
    for k in t_rho:
        if profile.wants_sizes[k] < 1:
            raise AnalyticsError(f"primary target {k} wants nothing")
    for k in t_sigma:
        if profile.lacks_sizes[k] - profile.wants_sizes[k] < 1:
            raise AnalyticsError(f"secondary target {k} lacks no unwanted packet")
    return t_rho, t_sigma


def mc_oracle_step(
    profile: CardinalityProfile,
    t_rho: Iterable[int],
    t_sigma: Iterable[int],
    trials: int,
    rng: np.random.Generator,
    degree_of: int | None = None,
    batch: int = 20_000,
) -> dict[str, tuple[float, float]]:
    """Simulate one transmission from random placements and measure the next graph.

    Each primary target is served a uniformly chosen packet of its Wants set,
    each secondary target a uniformly chosen missing unwanted packet, and
    receives it with its success probability. Mutual decodability of the
    served packets is not imposed, matching the analysis ensemble.
    Returns ``{"edges": (mean, se)}`` plus ``"degree"`` when ``degree_of`` is set.
    """
    t_rho, t_sigma = _validate_step_targets(profile, t_rho, t_sigma)
    m = profile.M
    in_rho = np.zeros(m, bool)
    in_rho[list(t_rho)] = True
    in_sigma = np.zeros(m, bool)
    in_sigma[list(t_sigma)] = True
    rho = profile.has_sizes[None, :, None]
    psi = profile.wants_sizes[None, :, None]
    edges, degs = [], []
    for b in _batched(trials, batch):
        rank, has, wants = _placements(profile, b, rng)
        served = (in_rho[None, :, None] & (rank == rho)) | (in_sigma[None, :, None] & (rank == rho + psi))
        heard = rng.random((b, m)) < profile.success_probs[None, :]
        got = served & heard[:, :, None]
        has = has | got
        wants = wants & ~got
        edges.append(_edge_counts(has, wants))
        if degree_of is not None:
            lacking = ~has[:, degree_of, :]
            ok = lacking.any(axis=1)
            pkt = _uniform_member(lacking, rng)
            degs.append(_degree_of(has[ok], wants[ok], degree_of, pkt[ok]))
    out = {"edges": _mean_se(np.concatenate(edges))}
    if degree_of is not None:
        out["degree"] = _mean_se(np.concatenate(degs))
    return out


# ---------------------------------------------------------------- enumeration


def _receiver_outcomes(n: int, rho: int, psi: int, q: float, serve: str | None):
    """Exact distribution over (Has mask, Wants mask) of one receiver after one slot."""
    hs, ws, ps = [], [], []
    frame = range(n)
    for h in combinations(frame, rho):
        rest = [j for j in frame if j not in h]
        hm = sum(1 << j for j in h)
        for w in combinations(rest, psi):
            wm = sum(1 << j for j in w)
            if serve is None:
                hs.append(hm), ws.append(wm), ps.append(1.0)
                continue
            pool = list(w) if serve == "primary" else [j for j in rest if j not in w]
            for j in pool:
                share = 1.0 / len(pool)
                hs += [hm | (1 << j), hm]
                ws += [wm & ~(1 << j), wm]
                ps += [q * share, (1.0 - q) * share]
    ps = np.asarray(ps)
    return np.asarray(hs, np.int64), np.asarray(ws, np.int64), ps / ps.sum()


def _receiver_tables(profile: CardinalityProfile, t_rho=(), t_sigma=()):
    tabs = []
    for i in range(profile.M):
        serve = "primary" if i in t_rho else "secondary" if i in t_sigma else None
        tabs.append(
            _receiver_outcomes(
                profile.N, int(profile.has_sizes[i]), int(profile.wants_sizes[i]), float(profile.success_probs[i]), serve
            )
        )
    return tabs


def _popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x).astype(np.int64)


def enumerate_edge_count(profile: CardinalityProfile, t_rho: Iterable[int] = (), t_sigma: Iterable[int] = ()) -> float:
    """Exact expected edge count, optionally after one slot serving ``t_rho``/``t_sigma``."""
    t_rho, t_sigma = _validate_step_targets(profile, t_rho, t_sigma)
    tabs = _receiver_tables(profile, t_rho, t_sigma)
    total = 0.0
    for i, k in combinations(range(profile.M), 2):
        hi, wi, pi = tabs[i]
        hk, wk, pk = tabs[k]
        pair = _popcount(wi[:, None] & wk[None, :]) + _popcount(wi[:, None] & hk[None, :]) * _popcount(
            wk[None, :] & hi[:, None]
        )
        total += float(pi @ pair @ pk)
    return total


def enumerate_degree(
    profile: CardinalityProfile, i: int, t_rho: Iterable[int] = (), t_sigma: Iterable[int] = ()
) -> float:
    """Exact expected degree of a uniformly chosen vertex of receiver i (after one slot if targets given).

    Outcomes in which receiver i lacks nothing are dropped and the rest renormalised.
    """
    t_rho, t_sigma = _validate_step_targets(profile, t_rho, t_sigma)
    tabs = _receiver_tables(profile, t_rho, t_sigma)
    full = (1 << profile.N) - 1
    hi, _, pi = tabs[i]
    total, mass = 0.0, 0.0
    for hm, p in zip(hi, pi):
        lacking = [j for j in range(profile.N) if not (hm >> j) & 1]
        if not lacking:
            continue
        mass += p
        for j in lacking:
            d = 0.0
            for k in range(profile.M):
                if k == i:
                    continue
                hk, wk, pk = tabs[k]
                contrib = ((wk >> j) & 1) + ((hk >> j) & 1) * _popcount(wk & (hm & full))
                d += float(pk @ contrib)
            total += p * d / len(lacking)
    if mass == 0.0:
        raise AnalyticsError(f"receiver {i} never lacks a packet")
    return total / mass
