import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idnc.graph import PRIMARY, Clique, DecodabilityError, Vertex
from idnc.model import FrameState, init_frame
from idnc.policies import PolicyKind, make_selector
from idnc.sim import (
    SimConfig,
    _trial_rngs,
    draw_profiles,
    run_experiment,
    run_sweep,
    run_trial,
    simulate_recovery,
)

ALL = ["mwcs:n=3", "mwvs:n=3", "mc", "mc-heur", "rnd"]


def cfg(**kw):
    base = dict(M=5, N=5, mean_erasure=0.15, mean_demand=1.0, policy="mwcs:n=3", trials=50, master_seed=7)
    base.update(kw)
    return SimConfig(**base)


def test_profiles_hit_the_requested_means():
    rng = np.random.default_rng(0)
    prof = draw_profiles(60, 10, 0.15, 0.5, rng)
    p = np.array([x.erasure_prob for x in prof])
    mu = np.array([x.demand_ratio for x in prof])
    assert abs(p.mean() - 0.15) <= 1e-9 and abs(mu.mean() - 0.5) <= 1e-9
    assert p.min() >= 0.01 and p.max() <= 0.99 and mu.max() <= 1.0
    assert len(set(p.tolist())) > 1


def test_clipping_heavy_profiles_still_hit_the_mean():
    prof = draw_profiles(40, 10, 0.02, 0.05, np.random.default_rng(3), erasure_spread=0.9, demand_spread=0.9)
    assert abs(np.mean([x.erasure_prob for x in prof]) - 0.02) <= 1e-9
    assert abs(np.mean([x.demand_ratio for x in prof]) - 0.05) <= 1e-9


def test_broadcast_and_zero_spread():
    prof = draw_profiles(8, 6, 0.3, 1.0, np.random.default_rng(1), erasure_spread=0.0)
    assert all(x.erasure_prob == 0.3 and x.primary_packets == frozenset(range(6)) for x in prof)
    with pytest.raises(ValueError):
        draw_profiles(3, 3, 0.995, 1.0, np.random.default_rng(0))


def test_forced_xor_state_finishes_in_one_slot():
    s = FrameState.from_sfm([[0, 1], [1, 0]], [1.0, 1.0])
    for pol in ALL:
        rec = simulate_recovery(s, make_selector(PolicyKind.parse(pol)), np.random.default_rng(0), 100)
        assert rec.completion_delay == 1 and not rec.truncated
        assert rec.transcript[0].packets == (0, 1)


def test_complete_state_has_zero_delay():
    s = FrameState.from_sfm([[0, -1], [0, 0]], [0.5, 0.5], primary_packets=[{0}, {0, 1}])
    rec = simulate_recovery(s, make_selector(PolicyKind.parse("mc")), np.random.default_rng(0), 10)
    assert rec.completion_delay == 0 and rec.transcript == ()


def test_lost_slots_count_towards_the_delay():
    s = FrameState.from_sfm([[1, 1]], [0.3])
    rec = simulate_recovery(s, make_selector(PolicyKind.parse("mc")), np.random.default_rng(4), 1000)
    assert rec.completion_delay == len(rec.transcript)
    assert sum(o for r in rec.transcript for o in r.outcomes) == 2
    assert any(not r.outcomes[0] for r in rec.transcript)


def test_non_decodable_choice_is_caught():
    s = FrameState.from_sfm([[1, 1], [1, 0]], [1.0, 1.0])

    def bad(graph, state, rng):
        return Clique((Vertex(0, 0, PRIMARY), Vertex(1, 1, PRIMARY)))

    with pytest.raises(DecodabilityError):
        simulate_recovery(s, bad, np.random.default_rng(0), 10)


def test_transcripts_are_reproducible():
    c = cfg(policy="mwvs:n=3", mean_demand=0.6)
    a, b = run_trial(c, 3), run_trial(c, 3)
    assert a == b and repr(a.transcript).encode() == repr(b.transcript).encode()
    assert len(a.transcript) == a.completion_delay


def test_policies_share_profiles_and_initial_phase():
    c = cfg(mean_demand=0.7)
    states = []
    for pol in ("mwcs:n=3", "rnd"):
        frame_rng, _ = _trial_rngs(c.master_seed, 11)
        prof = draw_profiles(c.M, c.N, c.mean_erasure, c.mean_demand, frame_rng)
        states.append(init_frame(prof, c.N, frame_rng))
    assert states[0] == states[1]


def test_worker_count_does_not_change_results():
    c = cfg(trials=40, policy="rnd")
    a, b = run_experiment(c, 1), run_experiment(c, 3)
    assert np.array_equal(a.delays, b.delays) and (a.mean_delay, a.stderr) == (b.mean_delay, b.stderr)


def test_single_trial_has_zero_stderr():
    assert run_experiment(cfg(trials=1)).stderr == 0.0


def test_lossy_single_receiver_mean():
    # half of the frames already hold the packet, the rest wait a geometric time with mean 2
    s = run_experiment(SimConfig(1, 1, 0.5, 1.0, "mwcs:n=3", 20_000, 1, erasure_spread=0.0))
    assert abs(s.mean_delay - 1.0) <= 3 * s.stderr


def test_rnc_mean_on_two_receivers():
    # (both lose) * 8/3 + (exactly one loses) * 2
    s = run_experiment(SimConfig(2, 1, 0.5, 1.0, "rnc", 20_000, 1, erasure_spread=0.0))
    assert abs(s.mean_delay - 5 / 3) <= 3 * s.stderr


def test_truncation_is_flagged_and_excluded():
    c = cfg(M=6, N=6, mean_erasure=0.3, trials=30, policy="rnd")
    capped, free = run_experiment(c.replace(max_slots=6)), run_experiment(c)
    assert 0 < capped.truncated < 30 and capped.completed == 30 - capped.truncated
    # same frames either way: completed trials keep their delay, the rest hit the cap
    done = free.delays <= 6
    assert done.sum() == capped.completed
    assert np.array_equal(capped.delays[done], free.delays[done])
    assert capped.mean_delay == pytest.approx(free.delays[done].mean(), rel=1e-12)
    nothing = run_experiment(c.replace(max_slots=1))
    assert nothing.truncated == 30 and np.isnan(nothing.mean_delay)


def test_include_initial_adds_the_frame_length():
    a = run_trial(cfg(), 2)
    b = run_trial(cfg(include_initial=True), 2)
    assert b.completion_delay == a.completion_delay + 5


def test_default_slot_cap():
    assert cfg().slot_cap >= 50 * 5 / 0.85
    assert cfg(max_slots=9).slot_cap == 9


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1), st.sampled_from(ALL))
def test_lossless_delay_is_at_least_the_largest_want(m, n, seed, pol):
    rng = np.random.default_rng(seed)
    sfm = rng.choice([-1, 0, 1], size=(m, n), p=[0.2, 0.4, 0.4])
    prim = [set(np.flatnonzero(r != -1).tolist()) | {0} for r in sfm]
    sfm[:, 0] = np.where(sfm[:, 0] == -1, 1, sfm[:, 0])
    s = FrameState.from_sfm(sfm, np.ones(m), primary_packets=prim)
    rec = simulate_recovery(s, make_selector(PolicyKind.parse(pol)), rng, 1000)
    assert not rec.truncated
    assert rec.completion_delay >= s.wants_sizes.max(initial=0)
    assert rec.completion_delay <= s.wants_sizes.sum()


def test_sweep_structure_and_mu_one_matches_broadcast():
    base = cfg(trials=30)
    rows = run_sweep(base, "mu", [0.5, 1.0], ["mc", "rnd"])
    assert [(r.value, r.policy) for r in rows] == [(0.5, "mc"), (0.5, "rnd"), (1.0, "mc"), (1.0, "rnd")]
    assert all(r.seed == 7 and r.trials == 30 for r in rows)
    direct = run_experiment(base.replace(policy=PolicyKind.parse("mc")))
    assert rows[2].mean_delay == direct.mean_delay
    with pytest.raises(ValueError):
        run_sweep(base, "M", [2.5], ["mc"])
    with pytest.raises(ValueError):
        run_sweep(base, "q", [1], ["mc"])
    with pytest.raises(ValueError):
        run_sweep(base, "mu", [1.0, 0.5], ["rnc"])


def test_delay_grows_with_erasure():
    rows = run_sweep(cfg(trials=300), "p", [0.05, 0.15, 0.3], ["mwcs:n=3", "mc", "rnd"])
    by = {}
    for r in rows:
        by.setdefault(r.policy, []).append(r)
    for pol, rs in by.items():
        for a, b in zip(rs, rs[1:]):
            assert b.mean_delay - a.mean_delay >= -2 * np.hypot(a.stderr, b.stderr), pol
        assert rs[-1].mean_delay > rs[0].mean_delay
