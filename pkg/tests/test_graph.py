from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idnc.graph import (
    PRIMARY,
    SECONDARY,
    CliqueBoundExceeded,
    Clique,
    DecodabilityError,
    GraphError,
    IdncGraph,
    Vertex,
    adjacent,
    all_clique_indices,
    build_graph,
    check_decodable,
    coded_packet,
    dump_graph,
    enumerate_maximal_cliques,
    secondary_subgraph,
)
from idnc.model import FrameState, apply_reception


def random_state(rng, m, n):
    sfm = rng.choice([-1, 0, 1], size=(m, n), p=[0.25, 0.45, 0.30])
    q = rng.uniform(0.2, 1.0, m)
    return FrameState.from_sfm(sfm, q, primary_packets=[set(np.flatnonzero(r != -1).tolist()) | {0} for r in sfm])


def slow_graph(state):
    """Adjacency straight from the two coding conditions, vertex by vertex."""
    sfm = state.sfm
    vs = [(i, j) for i in range(state.M) if (sfm[i] == 1).any() for j in range(state.N) if sfm[i, j] != 0]
    adj = np.zeros((len(vs), len(vs)), bool)
    for a, (i, j) in enumerate(vs):
        for b, (k, l) in enumerate(vs):
            if i != k and (j == l or (sfm[k, j] == 0 and sfm[i, l] == 0)):
                adj[a, b] = True
    return vs, adj


def test_xor_pair_is_joined_by_c2():
    g = build_graph(FrameState.from_sfm([[0, 1], [1, 0]], [1, 1]))
    assert g.vertices == [Vertex(0, 1, PRIMARY), Vertex(1, 0, PRIMARY)]
    assert g.adj.tolist() == [[False, True], [True, False]]


def test_same_packet_is_joined_by_c1():
    g = build_graph(FrameState.from_sfm([[1], [1]], [1, 1]))
    assert adjacent(g, (0, 0), (1, 0))
    g = build_graph(FrameState.from_sfm([[0, 1], [0, 1]], [1, 1]))
    assert len(g) == 2 and adjacent(g, (0, 1), (1, 1))


def test_adjacent_examples():
    # receiver 1 lacks packet 2, so C2 fails between (0, 2) and (1, 3)
    s = FrameState.from_sfm([[0, 0, 1, 1], [0, 0, 1, 1]], [1, 1])
    g = build_graph(s)
    assert adjacent(g, (0, 2), (1, 2))
    assert not adjacent(g, (0, 2), (0, 3))
    assert not adjacent(g, (0, 2), (1, 3))
    assert not adjacent(g, (0, 2), (0, 2))


def test_completed_receivers_induce_no_vertices():
    g = build_graph(FrameState.from_sfm([[0, -1], [1, 0]], [1, 1], primary_packets=[{0}, {0, 1}]))
    assert g.vertices == [Vertex(1, 0, PRIMARY)]


def test_secondary_subgraph_examples():
    s = FrameState.from_sfm([[0, 1], [-1, 1], [1, -1]], [1, 1, 1], primary_packets=[{0, 1}, {1}, {0}])
    g = build_graph(s)
    everything = g.clique([])  # empty clique: all secondary vertices qualify
    assert secondary_subgraph(g, everything).vertices == [v for v in g.vertices if v.layer == SECONDARY]
    full = build_graph(FrameState.from_sfm([[0, 1], [1, 0]], [1, 1]))
    assert len(secondary_subgraph(full, full.clique(range(len(full))))) == 0


def test_secondary_subgraph_follows_adjacency():
    # (0,1)-(1,0) is a C2 edge exactly when packet 0 is in H_0 (packet 1 is in H_1 throughout)
    prim = [{0, 1, 2}, {2}]
    g = build_graph(FrameState.from_sfm([[0, 1, 0], [-1, 0, 1]], [1, 1], primary_packets=prim))
    sub = secondary_subgraph(g, Clique((Vertex(0, 1, PRIMARY),)))
    assert adjacent(g, (0, 1), (1, 0))
    assert [(v.receiver, v.packet) for v in sub.vertices] == [(1, 0)]
    g2 = build_graph(FrameState.from_sfm([[1, 1, 0], [-1, 0, 1]], [1, 1], primary_packets=prim))
    sub2 = secondary_subgraph(g2, Clique((Vertex(0, 1, PRIMARY),)))
    assert not adjacent(g2, (0, 1), (1, 0))
    assert len(sub2) == 0


def brute_maximal(adj):
    n = len(adj)
    cl = [set(c) for r in range(1, n + 1) for c in combinations(range(n), r) if all(adj[a, b] for a, b in combinations(c, 2))]
    return sorted(sorted(c) for c in cl if not any(c < d for d in cl))


def test_maximal_clique_small_examples():
    g = IdncGraph.from_adjacency(np.array([[0, 1], [1, 0]], bool))
    assert [c.sort_key() for c in enumerate_maximal_cliques(g)] == [((0, 0), (1, 1))]
    g = IdncGraph.from_adjacency(np.zeros((2, 2), bool))
    assert len(enumerate_maximal_cliques(g)) == 2
    adj = np.zeros((4, 4), bool)
    for a, b in [(0, 1), (1, 2), (0, 2), (2, 3)]:
        adj[a, b] = adj[b, a] = True
    got = [[v.receiver for v in c.vertices] for c in enumerate_maximal_cliques(IdncGraph.from_adjacency(adj))]
    assert got == brute_maximal(adj) == [[0, 1, 2], [2, 3]]


def test_maximal_cliques_match_brute_force_on_random_graphs():
    rng = np.random.default_rng(8)
    for _ in range(40):
        n = int(rng.integers(1, 11))
        up = np.triu(rng.random((n, n)) < rng.uniform(0.1, 0.9), 1)
        adj = up | up.T
        got = [[v.receiver for v in c.vertices] for c in enumerate_maximal_cliques(IdncGraph.from_adjacency(adj))]
        assert got == brute_maximal(adj)
        every = all_clique_indices(IdncGraph.from_adjacency(adj))
        brute = sorted(list(c) for r in range(1, n + 1) for c in combinations(range(n), r) if all(adj[a, b] for a, b in combinations(c, 2)))
        assert every == brute


def test_enumeration_bound():
    g = IdncGraph.from_adjacency(np.zeros((30, 30), bool))
    with pytest.raises(CliqueBoundExceeded):
        enumerate_maximal_cliques(g)


def test_coded_packet_examples():
    assert coded_packet(Clique((Vertex(1, 2, PRIMARY), Vertex(2, 2, PRIMARY)))) == {2}
    assert coded_packet(Clique((Vertex(1, 2, PRIMARY), Vertex(2, 0, PRIMARY)))) == {0, 2}
    assert coded_packet(Clique(())) == frozenset()


def test_clique_one_vertex_per_receiver():
    with pytest.raises(GraphError):
        Clique((Vertex(0, 1, PRIMARY), Vertex(0, 2, SECONDARY)))


def test_check_decodable_rejects_two_unknowns():
    s = FrameState.from_sfm([[1, 1], [1, 0]], [1, 1])
    bad = Clique((Vertex(0, 0, PRIMARY), Vertex(1, 1, PRIMARY)))  # not a clique: receiver 0 lacks both
    with pytest.raises(DecodabilityError):
        check_decodable(bad, s.sfm == 0)


def test_broadcast_has_no_secondary_layer():
    rng = np.random.default_rng(1)
    for _ in range(20):
        sfm = rng.choice([0, 1], size=(4, 5))
        g = build_graph(FrameState.from_sfm(sfm, np.full(4, 0.5)))
        assert g.primary.all()


def test_dump_format():
    g = build_graph(FrameState.from_sfm([[0, 1], [1, 0], [1, 1]], [1, 1, 1]))
    assert dump_graph(g).splitlines() == [
        "r0:p1:primary -> r1:p0, r2:p1",
        "r1:p0:primary -> r0:p1, r2:p0",
        "r2:p0:primary -> r1:p0",
        "r2:p1:primary -> r0:p1",
    ]


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_graph_matches_coding_conditions(m, n, seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, m, n)
    g = build_graph(s)
    vs, adj = slow_graph(s)
    assert [(v.receiver, v.packet) for v in g.vertices] == vs
    assert np.array_equal(g.adj, adj)
    assert np.array_equal(g.adj, g.adj.T) and not np.diag(g.adj).any()
    assert len(g) == int(sum(s.lacks_sizes[i] for i in range(m) if s.wants_sizes[i] > 0))
    for v in g.vertices:
        assert (v.layer == PRIMARY) == (s.sfm[v.receiver, v.packet] == 1)
    if len(g) <= 14:
        for c in enumerate_maximal_cliques(g):
            check_decodable(c, s.sfm == 0)
            assert len({v.receiver for v in c.vertices}) == len(c)
            assert c.targeted_primary | c.targeted_secondary == set(c.targets)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_rebuild_along_random_trajectories(m, n, seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, m, n)
    for _ in range(10):
        g = build_graph(s)
        if len(g) == 0:
            break
        cliques = enumerate_maximal_cliques(g, max_vertices=30)
        c = cliques[int(rng.integers(len(cliques)))]
        check_decodable(c, g.has)
        s = apply_reception(s, c.targets, {r: bool(rng.random() < 0.7) for r in c.targets})
        vs, adj = slow_graph(s)
        g2 = build_graph(s)
        assert [(v.receiver, v.packet) for v in g2.vertices] == vs
        assert np.array_equal(g2.adj, adj)
