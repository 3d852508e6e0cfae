"""Exact maximum-weight clique search (numba kernel).

Staged branch and bound over vertices in index order: stage ``i`` searches
the cliques whose smallest vertex is ``i``, bounded by the best weight found
in the suffix ``i+1..n-1``. Depth-first search in increasing index order
visits cliques lexicographically, which gives the tie-break rule for free:
the first clique reaching the optimal (weight, size) key is the
lexicographically smallest one.
"""
from __future__ import annotations

import numpy as np
from numba import njit

WEIGHT_RTOL = 1e-9


class SearchBudgetExceeded(RuntimeError):
    pass


@njit(cache=True)
def _kernel(adj, w, node_budget):
    n = w.shape[0]
    best = np.empty(n, np.int64)
    best_len = 0
    best_w = -1.0
    best_s = 0
    suffix_best = np.zeros(n + 1)
    cand = np.empty((n + 1, n), np.int64)
    clen = np.zeros(n + 1, np.int64)
    ptr = np.zeros(n + 1, np.int64)
    sufw = np.zeros((n + 1, n + 1))
    sufmin = np.zeros((n + 1, n + 1))
    chosen = np.empty(n + 1, np.int64)
    wr = np.zeros(n + 2)
    nodes = 0

    for i in range(n - 1, -1, -1):
        tie_ok = True
        chosen[0] = i
        wr[1] = w[i]
        length = 0
        for j in range(i + 1, n):
            if adj[i, j]:
                cand[1, length] = j
                length += 1
        leaf_w = w[i]
        leaf_s = 1
        if length == 0:
            eps = WEIGHT_RTOL * max(1.0, abs(best_w))
            if leaf_w > best_w + eps or (leaf_w >= best_w - eps and leaf_s > best_s) or (
                tie_ok and leaf_w >= best_w - eps and leaf_s == best_s
            ):
                best[0] = i
                best_len = 1
                best_w = leaf_w
                best_s = 1
                tie_ok = False
            suffix_best[i] = best_w
            continue
        clen[1] = length
        ptr[1] = 0
        acc = 0.0
        mn = np.inf
        for t in range(length - 1, -1, -1):
            acc += w[cand[1, t]]
            mn = min(mn, w[cand[1, t]])
            sufw[1, t] = acc
            sufmin[1, t] = mn

        d = 1
        while d >= 1:
            k = ptr[d]
            if k >= clen[d]:
                d -= 1
                continue
            v = cand[d, k]
            reach = min(suffix_best[v], sufw[d, k])
            bound_w = wr[d] + reach
            tail = clen[d] - k
            cap = tail
            if sufmin[d, k] > 0.0:
                by_weight = int(np.floor(reach / sufmin[d, k] * (1.0 + 1e-9) + 1e-9))
                if by_weight < cap:
                    cap = by_weight
            bound_s = d + cap
            eps = WEIGHT_RTOL * max(1.0, abs(best_w))
            if bound_w < best_w - eps:
                d -= 1
                continue
            if bound_w <= best_w + eps:
                if bound_s < best_s or (bound_s == best_s and not tie_ok):
                    d -= 1
                    continue
            ptr[d] = k + 1
            nodes += 1
            if nodes > node_budget:
                return best[:best_len], False
            chosen[d] = v
            wr[d + 1] = wr[d] + w[v]
            length = 0
            for t in range(k + 1, clen[d]):
                u = cand[d, t]
                if adj[v, u]:
                    cand[d + 1, length] = u
                    length += 1
            if length == 0:
                leaf_w = wr[d + 1]
                leaf_s = d + 1
                if leaf_w > best_w + eps or (leaf_w >= best_w - eps and leaf_s > best_s) or (
                    tie_ok and leaf_w >= best_w - eps and leaf_s == best_s
                ):
                    for t in range(leaf_s):
                        best[t] = chosen[t]
                    best_len = leaf_s
                    best_w = leaf_w
                    best_s = leaf_s
                    tie_ok = False
            else:
                clen[d + 1] = length
                ptr[d + 1] = 0
                acc = 0.0
                mn = np.inf
                for t in range(length - 1, -1, -1):
                    acc += w[cand[d + 1, t]]
                    mn = min(mn, w[cand[d + 1, t]])
                    sufw[d + 1, t] = acc
                    sufmin[d + 1, t] = mn
                d += 1
        suffix_best[i] = best_w
    return best[:best_len], True


def max_weight_clique(adj: np.ndarray, weights: np.ndarray, node_budget: int = 10_000_000) -> list[int]:
    """Maximum-weight clique of a graph with strictly positive vertex weights.

    Ties are broken toward larger cardinality, then toward the
    lexicographically smallest sorted vertex-index tuple. Weights within a
    relative 1e-9 of each other count as equal.
    """
    w = np.ascontiguousarray(weights, dtype=np.float64)
    n = w.shape[0]
    if n == 0:
        return []
    if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("clique weights must be finite and strictly positive")
    a = np.ascontiguousarray(adj, dtype=np.bool_)
    found, ok = _kernel(a, w, int(node_budget))
    if not ok:
        raise SearchBudgetExceeded(f"clique search exceeded {node_budget} nodes")
    return [int(v) for v in found]
