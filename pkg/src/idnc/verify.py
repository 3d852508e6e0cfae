"""Self-check suites: closed forms against oracles, the exact solver, exact search."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import analytics as an
from .graph import IdncGraph, build_graph
from .model import FrameState, init_frame, weighted_wants
from .policies import SearchLimits, select_max_clique, select_mwcs
from .sim import draw_profiles
from .ssp import check_table, replay, simulate_policy, solve, OraclePolicy

FAULTS = ("edge-count", "degree", "alpha", "ssp-value", "mwcs")
EXACT_ATOL = 1e-9


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  {self.detail}".rstrip()


def _within(est: float, se: float, exact: float, k: float = 3.0) -> tuple[bool, str]:
    tol = max(k * se, EXACT_ATOL)
    return abs(est - exact) <= tol, f"mc={est:.6g} se={se:.3g} formula={exact:.6g} |diff|={abs(est - exact):.3g} tol={tol:.3g}"


def random_profile(rng: np.random.Generator, max_m: int, max_n: int, min_m: int = 1) -> an.CardinalityProfile:
    m = int(rng.integers(min_m, max_m + 1))
    n = int(rng.integers(2, max_n + 1))
    rho = rng.integers(0, n + 1, m)
    psi = np.array([rng.integers(0, n - r + 1) for r in rho])
    q = rng.uniform(0.05, 1.0, m)
    return an.CardinalityProfile.build(rho, psi, q, n)


def random_targets(profile: an.CardinalityProfile, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Disjoint primary/secondary target sets realisable by a transmission."""
    t_rho, t_sigma = [], []
    for k in range(profile.M):
        u = rng.random()
        if u < 0.45 and profile.wants_sizes[k] > 0:
            t_rho.append(k)
        elif u < 0.75 and profile.lacks_sizes[k] > profile.wants_sizes[k]:
            t_sigma.append(k)
    return t_rho, t_sigma


# ---------------------------------------------------------------- formulas


def _formulas(fault: str | None) -> dict[str, Callable]:
    f = {
        "edge_count": an.expected_edge_count,
        "degree": an.expected_degree,
        "edge_evolution": an.expected_edge_evolution,
        "coefficients": an.evolution_coefficients,
    }
    if fault == "edge-count":
        f["edge_count"] = lambda p: an.expected_edge_count(p) * 1.05 + 0.05
    elif fault == "degree":
        f["degree"] = lambda p, i: an.expected_degree(p, i) + 0.1
    elif fault == "alpha":

        def broken(p, tr, ts):
            co = an.evolution_coefficients(p, tr, ts)
            return an.EvolutionCoefficients(co.beta - 0.01, co.beta, co.gamma, co.xi, co.profile)

        f["coefficients"] = broken
        f["edge_evolution"] = lambda p, tr, ts: an.expected_edge_evolution(p, tr, ts) + 0.05
    return f


def static_formula_checks(
    n_profiles: int, trials: int, rng: np.random.Generator, max_m: int = 6, max_n: int = 6, fault: str | None = None
) -> Iterator[Check]:
    """Edge count and degree formulas against the exhaustive and Monte Carlo oracles."""
    f = _formulas(fault)
    for c in range(n_profiles):
        prof = random_profile(rng, max_m, max_n, min_m=2)
        tag = f"profile{c:02d}(M={prof.M},N={prof.N})"
        e = f["edge_count"](prof)
        exact = an.enumerate_edge_count(prof)
        yield Check(f"edge-count-exact/{tag}", abs(e - exact) <= EXACT_ATOL, f"formula={e:.9g} enumeration={exact:.9g}")
        mean, se = an.mc_oracle_edge_count(prof, trials, rng)
        ok, detail = _within(mean, se, e)
        yield Check(f"edge-count-mc/{tag}", ok, detail)
        worst = 0.0
        for i in range(prof.M):
            if prof.lacks_sizes[i] > 0:
                worst = max(worst, abs(f["degree"](prof, i) - an.enumerate_degree(prof, i)))
        yield Check(f"degree-exact/{tag}", worst <= EXACT_ATOL, f"max |formula-enumeration|={worst:.3g}")
        i = int(np.argmax(np.where(prof.lacks_sizes > 0, prof.wants_sizes, -1)))
        if prof.lacks_sizes[i] > 0:
            mean, se = an.mc_oracle_degree(prof, i, trials, rng)
            ok, detail = _within(mean, se, f["degree"](prof, i))
            yield Check(f"degree-mc/{tag}/r{i}", ok, detail)


def evolution_checks(
    n_cases: int, trials: int, rng: np.random.Generator, max_m: int = 5, max_n: int = 5, fault: str | None = None
) -> Iterator[Check]:
    """One-step expected edge count against exhaustive and simulated transmissions."""
    f = _formulas(fault)
    made = 0
    while made < n_cases:
        prof = random_profile(rng, max_m, max_n, min_m=2)
        t_rho, t_sigma = random_targets(prof, rng)
        if not t_rho and not t_sigma:
            continue
        tag = f"step{made:02d}(M={prof.M},N={prof.N},primary_targets={t_rho},secondary_targets={t_sigma})"
        made += 1
        pred = f["edge_evolution"](prof, t_rho, t_sigma)
        exact = an.enumerate_edge_count(prof, t_rho, t_sigma)
        yield Check(f"evolution-exact/{tag}", abs(pred - exact) <= EXACT_ATOL, f"formula={pred:.9g} enumeration={exact:.9g}")
        mean, se = an.mc_oracle_step(prof, t_rho, t_sigma, trials, rng)["edges"]
        ok, detail = _within(mean, se, pred)
        yield Check(f"evolution-mc/{tag}", ok, detail)


def dominance_sweep(count: int, rng: np.random.Generator, fault: str | None = None) -> Check:
    """Vertices of a receiver with more wants and fewer packets have strictly smaller expected degree."""
    f = _formulas(fault)
    violations, done = 0, 0
    first = ""
    while done < count:
        prof = random_profile(rng, 8, 12, min_m=2)
        i, h = rng.choice(prof.M, 2, replace=False)
        psi, rho = prof.wants_sizes, prof.has_sizes
        if not (psi[i] > psi[h] and rho[i] < rho[h]):
            continue
        done += 1
        if not f["degree"](prof, int(h)) > f["degree"](prof, int(i)):
            violations += 1
            first = first or f"first violation: rho={rho.tolist()} psi={psi.tolist()} i={i} h={h}"
    return Check("degree-dominance-sweep", violations == 0, f"{done} inputs, {violations} violations {first}".rstrip())


def targeting_sweep(count: int, rng: np.random.Generator, fault: str | None = None) -> Check:
    """Targeting a receiver never lowers its expected degree change: alpha >= beta."""
    f = _formulas(fault)
    violations = 0
    first = ""
    for _ in range(count):
        prof = random_profile(rng, 8, 12, min_m=2)
        t_rho, t_sigma = random_targets(prof, rng)
        co = f["coefficients"](prof, t_rho, t_sigma)
        bad = co.alpha < co.beta - 1e-12
        if bad.any():
            violations += 1
            first = first or f"first violation: rho={prof.has_sizes.tolist()} psi={prof.wants_sizes.tolist()}"
    return Check("alpha-beta-sweep", violations == 0, f"{count} inputs, {violations} violations {first}".rstrip())


def formula_suite(
    trials: int = 100_000,
    seed: int = 0,
    n_profiles: int = 20,
    n_steps: int = 10,
    sweep: int = 10_000,
    fault: str | None = None,
) -> list[Check]:
    root = np.random.SeedSequence(seed)
    r1, r2, r3, r4 = (np.random.default_rng(s) for s in root.spawn(4))
    checks = list(static_formula_checks(n_profiles, trials, r1, fault=fault))
    checks += list(evolution_checks(n_steps, trials, r2, fault=fault))
    checks.append(dominance_sweep(sweep, r3, fault))
    checks.append(targeting_sweep(sweep, r4, fault))
    return checks


# ---------------------------------------------------------------- oracle


def random_instances(
    count: int, rng: np.random.Generator, max_bits: int = 12, min_bits: int = 1, max_m: int = 5, max_n: int = 5
) -> list[FrameState]:
    """Small random frames (mixed broadcast and multicast) after their initial phase."""
    out = []
    while len(out) < count:
        m = int(rng.integers(2, max_m + 1))
        n = int(rng.integers(2, max_n + 1))
        mu = 1.0 if rng.random() < 0.4 else float(rng.uniform(0.3, 0.9))
        profiles = draw_profiles(m, n, float(rng.uniform(0.1, 0.6)), mu, rng)
        state = init_frame(profiles, n, rng)
        bits = int(np.count_nonzero(state.sfm))
        if min_bits <= bits <= max_bits and state.wants_sizes.any():
            out.append(state)
    return out


def ssp_suite(
    max_bits: int = 8,
    n_instances: int = 50,
    trials: int = 100_000,
    seed: int = 0,
    sim_trials: int = 0,
    compare_all_cliques: bool = True,
    fault: str | None = None,
) -> list[Check]:
    """Bounds, monotonicity and replay of the optimal policy on random small instances.

    ``sim_trials > 0`` additionally replays every optimal table through the
    full simulator and tests the pooled standardised gap.
    """
    root = np.random.SeedSequence(seed)
    inst_rng, replay_rng = (np.random.default_rng(s) for s in root.spawn(2))
    instances = random_instances(n_instances, inst_rng, max_bits=max_bits)
    checks = []
    pooled_num, pooled_var = 0.0, 0.0
    for k, state in enumerate(instances):
        tag = f"instance{k:02d}(M={state.M},N={state.N},bits={np.count_nonzero(state.sfm)})"
        table = solve(state, size_bound=max(16, max_bits))
        if fault == "ssp-value":
            table.values[0] *= 1.1
        bad = check_table(table)
        checks.append(Check(f"ssp-bounds/{tag}", not bad, f"{len(table.values)} states" + (f"; {bad[0]}" if bad else "")))
        mean, se = replay(table, trials, replay_rng)
        ok, detail = _within(mean, se, table.initial_value)
        checks.append(Check(f"ssp-replay/{tag}", ok, detail.replace("formula", "V")))
        if compare_all_cliques and np.count_nonzero(state.sfm) <= 8:
            v_all = solve(state, size_bound=16, actions="all").initial_value
            same = abs(v_all - table.initial_value) <= EXACT_ATOL * max(1.0, v_all)
            checks.append(
                Check(f"ssp-maximal-suffices/{tag}", same, f"maximal={table.initial_value:.9g} all={v_all:.9g}")
            )
        if sim_trials:
            m2, se2, _ = simulate_policy(state, OraclePolicy(table), sim_trials, seed * 1000 + k)
            pooled_num += m2 - table.initial_value
            pooled_var += se2**2
    if sim_trials:
        z = pooled_num / math.sqrt(pooled_var) if pooled_var > 0 else 0.0
        checks.append(Check("ssp-simulator-replay-pooled", abs(z) <= 3.0, f"pooled z={z:.3f} over {len(instances)} instances"))
    return checks


# ---------------------------------------------------------------- exact search


def brute_force_clique(adj: np.ndarray, weights: np.ndarray, rtol: float = 1e-9) -> list[int]:
    """Best clique by exhaustive subset scan: weight, then size, then lexicographic."""
    n = len(weights)
    if n == 0:
        return []
    masks = np.arange(1, 1 << n, dtype=np.int64)
    closed = [sum(1 << u for u in range(n) if adj[v, u] or u == v) for v in range(n)]
    ok = np.ones(len(masks), dtype=bool)
    total = np.zeros(len(masks))
    for v in range(n):
        member = ((masks >> v) & 1).astype(bool)
        ok &= ~member | ((masks & ~closed[v]) == 0)
        total += member * weights[v]
    size = np.bitwise_count(masks)
    cm, cw, cs = masks[ok], total[ok], size[ok]
    top = cw.max()
    near = cw >= top - rtol * max(1.0, abs(top))
    cm, cs = cm[near], cs[near]
    cm = cm[cs == cs.max()]
    return min([v for v in range(n) if (int(m) >> v) & 1] for m in cm)


def _random_idnc_graph(rng: np.random.Generator, max_vertices: int) -> tuple[IdncGraph, FrameState]:
    while True:
        m = int(rng.integers(2, 9))
        n = int(rng.integers(2, 7))
        mu = 1.0 if rng.random() < 0.5 else float(rng.uniform(0.3, 0.9))
        state = init_frame(draw_profiles(m, n, float(rng.uniform(0.1, 0.5)), mu, rng), n, rng)
        g = build_graph(state)
        if 1 <= len(g.primary_indices) and len(g) <= max_vertices:
            return g, state


def search_suite(n_graphs: int = 100, max_vertices: int = 18, seed: int = 0, fault: str | None = None) -> list[Check]:
    """Exact primary-stage search against exhaustive subset scan."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    limits = SearchLimits(fallback=False)
    checks = []
    for k in range(n_graphs):
        if k % 2 == 0:
            g, state = _random_idnc_graph(rng, max_vertices)
            weights_r = weighted_wants(state)
            kind = "idnc"
        else:
            nv = int(rng.integers(1, max_vertices + 1))
            upper = np.triu(rng.random((nv, nv)) < rng.uniform(0.2, 0.9), 1)
            g = IdncGraph.from_adjacency(upper | upper.T)
            weights_r = rng.choice([1.0, 2.0, 3.0], nv) if rng.random() < 0.5 else rng.uniform(0.1, 5.0, nv)
            kind = "random"
        prim = g.primary_indices
        sub = g.adj[np.ix_(prim, prim)]
        nexp = int(rng.choice([1, 2, 3, 5]))
        w = np.asarray(weights_r, float)[g.receivers[prim]] ** nexp
        got = [int(np.searchsorted(prim, g.index_of(v))) for v in select_mwcs(g, weights_r, nexp, limits=limits).vertices if v.layer == "primary"]
        if fault == "mwcs" and len(got) > 1:
            got = got[:-1]
        want = brute_force_clique(sub, w)
        checks.append(Check(f"mwcs-stage1/{kind}{k:03d}(V={len(prim)},n={nexp})", got == want, f"search={got} brute={want}"))
        got_mc = [int(np.searchsorted(prim, g.index_of(v))) for v in select_max_clique(g, limits).vertices if v.layer == "primary"]
        want_mc = brute_force_clique(sub, np.ones(len(prim)))
        checks.append(Check(f"max-clique/{kind}{k:03d}(V={len(prim)})", got_mc == want_mc, f"search={got_mc} brute={want_mc}"))
    return checks
