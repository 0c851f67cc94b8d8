"""Independent reference implementations used as test oracles.

Deliberately naive: dense matrices, Floyd-Warshall, unpruned recursion.
"""

import itertools

import numpy as np

from kgneeds.ranking import CC_PATH, CZ


def dense_adjacency(sub):
    order = list(sub.vertices)
    idx = {v: i for i, v in enumerate(order)}
    A = np.zeros((len(order), len(order)))
    for e in sub.edges:
        A[idx[e.head], idx[e.tail]] = 1.0
        A[idx[e.tail], idx[e.head]] = 1.0
    return order, A


def closeness_oracle(sub):
    """Floyd-Warshall all-pairs distances; |C| / sum of distances inside the component."""
    order, A = dense_adjacency(sub)
    n = len(order)
    D = np.where(A > 0, 1.0, np.inf)
    np.fill_diagonal(D, 0.0)
    for k in range(n):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    out = {}
    for i, v in enumerate(order):
        finite = D[i][np.isfinite(D[i])]
        total = finite.sum()
        out[v] = len(finite) / total if total > 0 else 0.0
    return out


def pagerank_oracle(sub, alpha=0.85, topic=None, iterations=3000):
    """Dense power iteration with column-normalised adjacency.

    Mass lost at isolated vertices is restored by renormalising each step.
    """
    order, A = dense_adjacency(sub)
    n = len(order)
    deg = A.sum(axis=0)
    M = np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)
    if topic is None:
        t = np.full(n, 1.0 / n)
    else:
        t = np.array([1.0 if v in set(topic) else 0.0 for v in order])
        t /= t.sum()
    r = t.copy()
    for _ in range(iterations):
        r = alpha * M @ r + (1 - alpha) * t
        r = r / r.sum()
    return dict(zip(order, r))


def all_simple_paths(sub, source, max_hops):
    """Every simple path from ``source`` with 1..max_hops hops, no pruning."""
    out = []

    def rec(path):
        if len(path) > 1:
            out.append(tuple(path))
        if len(path) - 1 == max_hops:
            return
        for w in sub.neighbors(path[-1]):
            if w not in path:
                rec(path + [w])

    rec([source])
    return out


def enumerate_oracle(sub, seeds, max_hops, path_types=(CZ, CC_PATH)):
    """Set of (concepts, path_type, endpoint) from brute-force enumeration."""
    text = {c for c in seeds.text_concepts if c in sub}
    needs = {c for c in seeds.need_concepts if c in sub}
    found = set()
    for s in text:
        for p in all_simple_paths(sub, s, max_hops):
            end = p[-1]
            if CZ in path_types and end in needs:
                found.add((p, CZ, end))
            if CC_PATH in path_types and end in text and end > s:
                found.add((p, CC_PATH, (s, end)))
    return found


def all_graphs(n):
    """Every labelled simple graph on ``n`` vertices, as edge lists."""
    slots = list(itertools.combinations(range(n), 2))
    for mask in range(1 << len(slots)):
        yield [slots[i] for i in range(len(slots)) if mask >> i & 1]
