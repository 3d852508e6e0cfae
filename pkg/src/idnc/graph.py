"""Two-layer IDNC graph: vertices, adjacency, cliques and coded packets.

A vertex ``(i, j)`` exists for every packet ``j`` missing at receiver ``i``;
it sits in the primary layer when ``i`` wants ``j`` and in the secondary layer
otherwise. Two vertices of different receivers are adjacent when they name
the same packet, or when each vertex's packet is held by the other receiver.
Receivers whose Wants set is empty contribute no vertices at all.

Vertices are stored sorted by (receiver, packet); that order is the global
tie-break order used by every selection routine.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .model import HAS, WANTS, FrameState

PRIMARY = "primary"
SECONDARY = "secondary"


class GraphError(ValueError):
    pass


class CliqueBoundExceeded(GraphError):
    pass


class DecodabilityError(AssertionError):
    pass


class Vertex(NamedTuple):
    receiver: int
    packet: int
    layer: str

    def label(self) -> str:
        return f"r{self.receiver}:p{self.packet}:{self.layer}"


def _bitset(row: np.ndarray) -> int:
    return int.from_bytes(np.packbits(row, bitorder="little").tobytes(), "little")


class IdncGraph:
    """Immutable IDNC graph over a fixed vertex list.

    ``origin`` maps each vertex to its index in the graph it was extracted
    from (identity for a freshly built graph).
    """

    def __init__(
        self,
        receivers: np.ndarray,
        packets: np.ndarray,
        primary: np.ndarray,
        adj: np.ndarray,
        has: np.ndarray | None,
        n_receivers: int,
        n_packets: int,
        origin: np.ndarray | None = None,
    ):
        self.receivers = np.asarray(receivers, dtype=np.int64)
        self.packets = np.asarray(packets, dtype=np.int64)
        self.primary = np.asarray(primary, dtype=bool)
        self.adj = np.asarray(adj, dtype=bool)
        self.has = has
        self.M = n_receivers
        self.N = n_packets
        n = len(self.receivers)
        self.origin = np.arange(n) if origin is None else np.asarray(origin, dtype=np.int64)
        for arr in (self.receivers, self.packets, self.primary, self.adj, self.origin):
            arr.setflags(write=False)
        self._index = {(int(r), int(p)): k for k, (r, p) in enumerate(zip(self.receivers, self.packets))}

    @classmethod
    def from_adjacency(
        cls,
        adj: np.ndarray,
        receivers: Sequence[int] | None = None,
        packets: Sequence[int] | None = None,
        primary: Sequence[bool] | None = None,
    ) -> "IdncGraph":
        """Wrap an arbitrary symmetric adjacency matrix (fixtures and oracles).

        By default vertex ``k`` belongs to receiver ``k``, names packet ``k`` and is primary.
        Receiver-major sorted order of the labels is required.
        """
        a = np.array(adj, dtype=bool)
        n = a.shape[0]
        if a.shape != (n, n) or np.any(a != a.T) or np.any(np.diag(a)):
            raise GraphError("adjacency must be square, symmetric and loop-free")
        r = np.arange(n) if receivers is None else np.asarray(receivers, dtype=np.int64)
        p = np.arange(n) if packets is None else np.asarray(packets, dtype=np.int64)
        prim = np.ones(n, bool) if primary is None else np.asarray(primary, dtype=bool)
        keys = list(zip(r.tolist(), p.tolist()))
        if keys != sorted(set(keys)):
            raise GraphError("vertex labels must be distinct and sorted by (receiver, packet)")
        if np.any(a & (r[:, None] == r[None, :])):
            raise GraphError("vertices of the same receiver cannot be adjacent")
        m = int(r.max()) + 1 if n else 0
        npk = int(p.max()) + 1 if n else 0
        return cls(r, p, prim, a, None, m, npk)

    def __len__(self) -> int:
        return len(self.receivers)

    @cached_property
    def vertices(self) -> list[Vertex]:
        return [
            Vertex(int(r), int(p), PRIMARY if f else SECONDARY)
            for r, p, f in zip(self.receivers, self.packets, self.primary)
        ]

    @cached_property
    def bitsets(self) -> list[int]:
        return [_bitset(row) for row in self.adj]

    @property
    def primary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.primary)

    @property
    def secondary_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.primary)

    def vertices_of_receiver(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.receivers == i)

    def vertices_of_packet(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.packets == j)

    def index_of(self, v: Vertex | tuple[int, int] | int) -> int:
        if isinstance(v, (int, np.integer)):
            if not 0 <= v < len(self):
                raise GraphError(f"vertex index {v} out of range")
            return int(v)
        key = (int(v[0]), int(v[1]))
        try:
            return self._index[key]
        except KeyError:
            raise GraphError(f"no vertex for receiver {key[0]}, packet {key[1]}") from None

    def induced(self, idx: Iterable[int]) -> "IdncGraph":
        idx = np.asarray(sorted(int(k) for k in idx), dtype=np.int64)
        return IdncGraph(
            self.receivers[idx],
            self.packets[idx],
            self.primary[idx],
            self.adj[np.ix_(idx, idx)],
            self.has,
            self.M,
            self.N,
            origin=self.origin[idx],
        )

    def is_clique(self, idx: Sequence[int]) -> bool:
        idx = np.asarray(idx, dtype=np.int64)
        if len(idx) < 2:
            return True
        sub = self.adj[np.ix_(idx, idx)]
        return bool(np.all(sub | np.eye(len(idx), dtype=bool)))

    def clique(self, idx: Iterable[int]) -> "Clique":
        idx = sorted(int(k) for k in idx)
        if not self.is_clique(idx):
            raise GraphError("vertex set is not a clique")
        vs = self.vertices
        return Clique(tuple(vs[k] for k in idx))

    def common_neighbours(self, idx: Sequence[int]) -> np.ndarray:
        """Boolean mask of vertices adjacent to every vertex in ``idx``."""
        mask = np.ones(len(self), dtype=bool)
        for k in idx:
            mask &= self.adj[k]
        return mask


@dataclass(frozen=True)
class Clique:
    """Vertex set of one coded transmission, sorted by (receiver, packet)."""

    vertices: tuple[Vertex, ...]

    def __post_init__(self) -> None:
        vs = tuple(sorted(Vertex(int(v[0]), int(v[1]), v[2]) for v in self.vertices))
        object.__setattr__(self, "vertices", vs)
        rs = [v.receiver for v in vs]
        if len(set(rs)) != len(rs):
            raise GraphError("a clique holds at most one vertex per receiver")

    def __len__(self) -> int:
        return len(self.vertices)

    @cached_property
    def targeted_primary(self) -> frozenset[int]:
        return frozenset(v.receiver for v in self.vertices if v.layer == PRIMARY)

    @cached_property
    def targeted_secondary(self) -> frozenset[int]:
        return frozenset(v.receiver for v in self.vertices if v.layer == SECONDARY)

    @cached_property
    def packet_set(self) -> frozenset[int]:
        return frozenset(v.packet for v in self.vertices)

    @cached_property
    def targets(self) -> dict[int, int]:
        return {v.receiver: v.packet for v in self.vertices}

    def sort_key(self) -> tuple[tuple[int, int], ...]:
        return tuple((v.receiver, v.packet) for v in self.vertices)


def build_graph(state: FrameState) -> IdncGraph:
    sfm = state.sfm
    active = state.wants_sizes > 0
    lacking = (sfm != HAS) & active[:, None]
    r, p = np.nonzero(lacking)
    has = sfm == HAS
    # C1: same packet; C2: each packet held by the other receiver
    adj = (p[:, None] == p[None, :]) | (has[r[None, :], p[:, None]] & has[r[:, None], p[None, :]])
    adj &= r[:, None] != r[None, :]
    return IdncGraph(r, p, sfm[r, p] == WANTS, adj, has, state.M, state.N)


def adjacent(graph: IdncGraph, u, v) -> bool:
    a, b = graph.index_of(u), graph.index_of(v)
    return bool(graph.adj[a, b])


def secondary_candidates(graph: IdncGraph, chosen: Sequence[int]) -> np.ndarray:
    """Indices of secondary vertices adjacent to all of ``chosen`` and owned by other receivers."""
    mask = graph.common_neighbours(chosen) & ~graph.primary
    if len(chosen):
        mask &= ~np.isin(graph.receivers, graph.receivers[np.asarray(chosen)])
    return np.flatnonzero(mask)


def secondary_subgraph(graph: IdncGraph, clique: Clique | Sequence[int]) -> IdncGraph:
    idx = _clique_indices(graph, clique)
    return graph.induced(secondary_candidates(graph, idx))


def _clique_indices(graph: IdncGraph, clique: Clique | Sequence[int]) -> list[int]:
    if isinstance(clique, Clique):
        return [graph.index_of(v) for v in clique.vertices]
    return [int(k) for k in clique]


def _bk_pivot(bits: list[int], r: int, p: int, x: int, out: list[int]) -> None:
    if not p and not x:
        out.append(r)
        return
    px = p | x
    best, pivot = -1, 0
    while px:
        low = px & -px
        u = low.bit_length() - 1
        c = (p & bits[u]).bit_count()
        if c > best:
            best, pivot = c, u
        px ^= low
    cand = p & ~bits[pivot]
    while cand:
        low = cand & -cand
        v = low.bit_length() - 1
        _bk_pivot(bits, r | low, p & bits[v], x & bits[v], out)
        p &= ~low
        x |= low
        cand ^= low


def _masks_to_index_lists(masks: Iterable[int]) -> list[list[int]]:
    lists = []
    for m in masks:
        idx = []
        while m:
            low = m & -m
            idx.append(low.bit_length() - 1)
            m ^= low
        lists.append(idx)
    lists.sort()
    return lists


def maximal_clique_indices(graph: IdncGraph, max_vertices: int = 24) -> list[list[int]]:
    n = len(graph)
    if n > max_vertices:
        raise CliqueBoundExceeded(f"{n} vertices exceeds the enumeration bound {max_vertices}")
    if n == 0:
        return []
    out: list[int] = []
    _bk_pivot(graph.bitsets, 0, (1 << n) - 1, 0, out)
    return _masks_to_index_lists(out)


def enumerate_maximal_cliques(graph: IdncGraph, max_vertices: int = 24) -> list[Clique]:
    """Every maximal clique exactly once (Bron-Kerbosch with pivoting), in lexicographic order."""
    vs = graph.vertices
    return [Clique(tuple(vs[k] for k in idx)) for idx in maximal_clique_indices(graph, max_vertices)]


def all_clique_indices(graph: IdncGraph, max_vertices: int = 16) -> list[list[int]]:
    """Every nonempty clique, maximal or not."""
    n = len(graph)
    if n > max_vertices:
        raise CliqueBoundExceeded(f"{n} vertices exceeds the enumeration bound {max_vertices}")
    bits = graph.bitsets
    out: list[int] = []

    def grow(r: int, cand: int) -> None:
        while cand:
            low = cand & -cand
            v = low.bit_length() - 1
            cand ^= low
            out.append(r | low)
            grow(r | low, cand & bits[v])

    grow(0, (1 << n) - 1)
    return _masks_to_index_lists(out)


def coded_packet(clique: Clique) -> frozenset[int]:
    return clique.packet_set


def check_decodable(clique: Clique, has: np.ndarray) -> None:
    """Raise unless every targeted receiver misses exactly its own packet of the XOR."""
    pkts = sorted(clique.packet_set)
    for v in clique.vertices:
        unknown = [j for j in pkts if not has[v.receiver, j]]
        if unknown != [v.packet]:
            raise DecodabilityError(
                f"receiver {v.receiver} cannot decode packet {v.packet}: unknown packets {unknown}"
            )


def dump_graph(graph: IdncGraph) -> str:
    """One line per vertex: ``r<i>:p<j>:<layer> -> r<k>:p<l>, ...``."""
    vs = graph.vertices
    lines = []
    for k, v in enumerate(vs):
        nbrs = ", ".join(f"r{vs[u].receiver}:p{vs[u].packet}" for u in np.flatnonzero(graph.adj[k]))
        lines.append(f"{v.label()} -> {nbrs}")
    return "\n".join(lines) + ("\n" if lines else "")
