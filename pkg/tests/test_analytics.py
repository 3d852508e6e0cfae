from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idnc import analytics as an


def prof(rho, psi, q, n):
    return an.CardinalityProfile.build(rho, psi, q, n)


def placements(n, rho, psi):
    for h in combinations(range(n), rho):
        rest = [j for j in range(n) if j not in h]
        for w in combinations(rest, psi):
            yield set(h), set(w)


def brute_edges(n, rhos, psis):
    """Average edge count over every joint placement (tiny cases only)."""
    per = [list(placements(n, r, p)) for r, p in zip(rhos, psis)]
    total, count = 0.0, 0

    def rec(i, chosen):
        nonlocal total, count
        if i == len(per):
            e = 0
            for a, b in combinations(range(len(chosen)), 2):
                (ha, wa), (hb, wb) = chosen[a], chosen[b]
                e += len(wa & wb) + len(wa & hb) * len(wb & ha)
            total += e
            count += 1
            return
        for pl in per[i]:
            rec(i + 1, chosen + [pl])

    rec(0, [])
    return total / count


def test_worked_degree_and_edge_examples():
    p = prof([1, 1], [1, 1], [1, 1], 2)
    assert an.expected_degree(p, 0) == pytest.approx(1.0)
    assert an.expected_edge_count(p) == pytest.approx(1.0)
    assert brute_edges(2, [1, 1], [1, 1]) == pytest.approx(1.0)
    p3 = prof([2, 2, 2], [1, 1, 1], [1, 1, 1], 3)
    assert an.expected_degree(p3, 0) == pytest.approx(2.0)
    assert an.expected_edge_count(p3) == pytest.approx(3.0)
    assert brute_edges(3, [2, 2, 2], [1, 1, 1]) == pytest.approx(3.0)
    assert an.expected_degree(prof([1, 2], [1, 0], [1, 1], 3), 0) == 0.0
    assert an.expected_edge_count(prof([1, 2], [0, 0], [1, 1], 3)) == 0.0


def test_formulas_need_two_packets():
    with pytest.raises(an.AnalyticsError):
        an.expected_degree(prof([0], [1], [1], 1), 0)


def test_profile_validation():
    with pytest.raises(an.AnalyticsError):
        prof([1], [2], [1], 2)
    with pytest.raises(an.AnalyticsError):
        prof([1], [0], [0.0], 2)


def test_enumerator_agrees_with_joint_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(12):
        m, n = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        rho = rng.integers(0, n + 1, m)
        psi = [int(rng.integers(0, n - r + 1)) for r in rho]
        p = prof(rho, psi, np.ones(m), n)
        assert an.enumerate_edge_count(p) == pytest.approx(brute_edges(n, rho, psi), abs=1e-12)


def test_kernel_substitutions():
    p = prof([1, 1], [1, 1], [0.5, 0.5], 2)
    assert an.xi(p)[1] == pytest.approx(0.5)
    assert an.phi_kernel(p, 0, 1, 0.0) == pytest.approx(0.5)
    assert an.lambda_kernel(p, 0, 1, 1.0) == pytest.approx(0.5 * 1 * 2 / 2)
    co = an.evolution_coefficients(p, [], [])
    assert np.all(co.beta == 0.0)


def test_broadcast_two_by_two_step():
    # both receivers served their only wanted packet with certainty: the graph empties
    p = prof([1, 1], [1, 1], [1.0, 1.0], 2)
    co = an.evolution_coefficients(p, [0, 1], [])
    assert co.alpha.tolist() == pytest.approx([-1.0, -1.0])
    assert co.gamma.tolist() == pytest.approx([-1.0, -1.0])
    assert an.expected_edge_evolution(p, [0, 1], []) == pytest.approx(0.0)
    assert an.enumerate_edge_count(p, [0, 1], []) == pytest.approx(0.0)


def test_empty_targets_leave_expectations_unchanged():
    p = prof([2, 1, 3], [1, 2, 1], [0.4, 0.9, 0.7], 5)
    assert an.expected_edge_evolution(p, [], []) == pytest.approx(an.expected_edge_count(p))
    assert an.expected_degree_evolution(p, [], [], 1) == pytest.approx(an.expected_degree(p, 1))
    assert an.expected_degree_evolution(prof([1], [1], [0.5], 3), [0], [], 0) == 0.0


def test_lossless_secondary_only_uses_unit_kernels():
    p = prof([1, 2, 0], [1, 1, 2], [1.0, 1.0, 1.0], 4)
    co = an.evolution_coefficients(p, [], [1])
    # receiver 0: beta = Lambda_01(0); alpha would use x = q_0 = 1
    assert co.beta[0] == pytest.approx(an.lambda_kernel(p, 0, 1, 0.0))
    assert co.alpha[1] == pytest.approx(an.xi(p)[[0, 2]].sum())
    assert an.expected_edge_evolution(p, [], [1]) == pytest.approx(an.enumerate_edge_count(p, [], [1]))


def test_target_validation():
    p = prof([1, 1], [1, 0], [0.5, 0.5], 3)
    with pytest.raises(an.AnalyticsError):
        an.evolution_coefficients(p, [0], [0])
    with pytest.raises(an.AnalyticsError):
        an.mc_oracle_step(p, [1], [], 10, np.random.default_rng(0))


def test_degree_dominance_examples():
    assert an.degree_dominance_check(prof([0, 1], [2, 1], [1, 1], 3), 0, 1)
    assert an.degree_dominance_check(prof([0, 2, 1], [3, 1, 2], [1, 1, 1], 4), 0, 1)
    with pytest.raises(an.AnalyticsError):
        an.degree_dominance_check(prof([0, 1], [1, 1], [1, 1], 3), 0, 1)


def test_mc_oracle_degenerate_cases():
    rng = np.random.default_rng(0)
    mean, se = an.mc_oracle_edge_count(prof([1, 1], [1, 1], [1, 1], 2), 100_000, rng)
    assert (mean, se) == (1.0, 0.0)
    assert an.mc_oracle_edge_count(prof([1, 0], [0, 0], [1, 1], 3), 100, rng) == (0.0, 0.0)


def test_mc_one_step_degree_on_two_by_two():
    p = prof([1, 0], [1, 2], [0.5, 0.8], 2)
    rng = np.random.default_rng(12)
    for t_rho, t_sigma in (([1], []), ([0, 1], []), ([], [])):
        est = an.mc_oracle_step(p, t_rho, t_sigma, 100_000, rng, degree_of=1)
        pred = an.expected_degree_evolution(p, t_rho, t_sigma, 1)
        assert abs(est["degree"][0] - pred) <= max(3 * est["degree"][1], 1e-9)
        assert abs(est["edges"][0] - an.expected_edge_evolution(p, t_rho, t_sigma)) <= max(3 * est["edges"][1], 1e-9)


def test_mc_oracles_against_formulas_on_three_by_four():
    rng = np.random.default_rng(21)
    p = prof([1, 2, 0], [2, 1, 3], [0.6, 0.3, 0.9], 4)
    mean, se = an.mc_oracle_edge_count(p, 100_000, rng)
    assert abs(mean - an.expected_edge_count(p)) <= 3 * se
    for i in range(3):
        mean, se = an.mc_oracle_degree(p, i, 50_000, rng)
        assert abs(mean - an.expected_degree(p, i)) <= 3 * se


@st.composite
def profiles_with_targets(draw):
    m = draw(st.integers(2, 5))
    n = draw(st.integers(2, 5))
    rho = draw(st.lists(st.integers(0, n), min_size=m, max_size=m))
    psi = [draw(st.integers(0, n - r)) for r in rho]
    q = draw(st.lists(st.floats(0.05, 1.0), min_size=m, max_size=m))
    p = prof(rho, psi, q, n)
    roles = draw(st.lists(st.sampled_from(["rho", "sigma", None]), min_size=m, max_size=m))
    t_rho = [k for k, r in enumerate(roles) if r == "rho" and psi[k] > 0]
    t_sigma = [k for k, r in enumerate(roles) if r == "sigma" and n - rho[k] > psi[k]]
    return p, t_rho, t_sigma


@settings(max_examples=60, deadline=None)
@given(profiles_with_targets())
def test_closed_forms_equal_exhaustive_enumeration(args):
    p, t_rho, t_sigma = args
    assert an.expected_edge_count(p) == pytest.approx(an.enumerate_edge_count(p), abs=1e-9)
    assert an.expected_edge_count(p) == pytest.approx(0.5 * np.dot(p.wants_sizes, an.expected_degrees(p)), abs=1e-12)
    assert an.expected_edge_evolution(p, t_rho, t_sigma) == pytest.approx(an.enumerate_edge_count(p, t_rho, t_sigma), abs=1e-9)
    targeted = set(t_rho) | set(t_sigma)
    for i in range(p.M):
        if p.lacks_sizes[i] > 0:
            assert an.expected_degree(p, i) == pytest.approx(an.enumerate_degree(p, i), abs=1e-9)
        if p.lacks_sizes[i] >= 2 or (i not in targeted and p.lacks_sizes[i] > 0):
            assert an.expected_degree_evolution(p, t_rho, t_sigma, i) == pytest.approx(
                an.enumerate_degree(p, i, t_rho, t_sigma), abs=1e-9
            )


@settings(max_examples=300, deadline=None)
@given(profiles_with_targets())
def test_targeting_never_loses_to_not_targeting(args):
    p, t_rho, t_sigma = args
    co = an.evolution_coefficients(p, t_rho, t_sigma)
    assert np.all(co.alpha >= co.beta - 1e-12)
    assert np.all(co.xi >= 0)
    for i in range(p.M):
        for k in range(p.M):
            for x in (0.0, p.success_probs[i], 1.0):
                assert an.lambda_kernel(p, i, k, x) >= 0
                if p.wants_sizes[k] <= p.has_sizes[k] + 1:
                    assert an.phi_kernel(p, i, k, x) >= 0


def test_serving_a_packet_poor_receiver_can_raise_degrees():
    # receiver 1 holds nothing and wants both packets; once it receives one,
    # new C2 edges to receiver 0 outweigh the lost C1 edge, so the kernel is negative
    p = prof([1, 0], [1, 2], [1.0, 1.0], 2)
    assert an.phi_kernel(p, 0, 1, 0.0) == pytest.approx(0.0)
    assert an.phi_kernel(p, 0, 1, 1.0) < 0
    before = an.enumerate_degree(p, 0)
    after = an.enumerate_degree(p, 0, [1], [])
    assert after == pytest.approx(an.expected_degree_evolution(p, [1], [], 0))
    assert after >= before


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 8), st.integers(2, 12), st.data())
def test_more_wants_fewer_packets_means_lower_degree(m, n, data):
    rho = data.draw(st.lists(st.integers(0, n), min_size=m, max_size=m))
    psi = [data.draw(st.integers(0, n - r)) for r in rho]
    pairs = [(i, h) for i in range(m) for h in range(m) if psi[i] > psi[h] and rho[i] < rho[h]]
    p = prof(rho, psi, np.ones(m), n)
    for i, h in pairs:
        assert an.degree_dominance_check(p, i, h)
