"""Exact laws of the coagulation models on a handful of particles.

Clocks of rate ``1/n`` ring by time ``t`` independently with probability
``p = 1 - exp(-t/n)``; given the set of rung clocks every ordering is equally
likely. The threshold model is therefore solved exactly by a dynamic program
over subsets of rung pairs that counts, for each final configuration, the
orderings leading to it. Independent of the compiled simulator; used as its
oracle.
"""

from __future__ import annotations

import math
from collections import defaultdict
from itertools import combinations

from ._validation import ConfigError, check_count, check_time


def _pairs(n):
    return list(combinations(range(n), 2))


def _apply(state, pair, threshold):
    """One link in the threshold model on (blocks, large blocks, edges)."""
    blocks, large, edges = state
    u, v = pair
    bu = next(b for b in blocks if u in b)
    bv = next(b for b in blocks if v in b)
    if bu in large or bv in large:
        return state
    if bu == bv:
        return blocks, large, edges | {pair}
    merged = bu | bv
    blocks = (blocks - {bu, bv}) | {merged}
    if len(merged) >= threshold:
        large = large | {merged}
    return blocks, large, edges | {pair}


def threshold_model_law(n: int, threshold: int, t: float) -> dict:
    """Law of the final configuration ``(blocks, large blocks, created edges)``.

    Keys are frozensets; values are probabilities summing to one.
    """
    n = check_count(n, "n", minimum=1)
    if n > 6:
        raise ConfigError("n", "exhaustive orderings are limited to n <= 6")
    threshold = check_count(threshold, "threshold", minimum=1)
    p = -math.expm1(-check_time(t) / n)
    pairs = _pairs(n)
    m = len(pairs)
    start = (frozenset(frozenset([i]) for i in range(n)), frozenset(), frozenset())
    # ways[mask] maps configuration -> number of orderings of the pairs in mask
    ways: list[dict] = [dict() for _ in range(1 << m)]
    ways[0][start] = 1
    for mask in range(1, 1 << m):
        acc: dict = defaultdict(int)
        for j in range(m):
            if mask >> j & 1:
                for state, w in ways[mask ^ (1 << j)].items():
                    acc[_apply(state, pairs[j], threshold)] += w
        ways[mask] = dict(acc)
    law: dict = defaultdict(float)
    for mask in range(1 << m):
        k = bin(mask).count("1")
        weight = p**k * (1 - p) ** (m - k) / math.factorial(k)
        for state, w in ways[mask].items():
            law[state] += weight * w
    return dict(law)


def er_law(n: int, t: float) -> dict:
    """Law of the edge set of ER(n, 1 - exp(-t/n)) as frozenset -> probability."""
    n = check_count(n, "n", minimum=1)
    p = -math.expm1(-check_time(t) / n)
    pairs = _pairs(n)
    law = {}
    for mask in range(1 << len(pairs)):
        edges = frozenset(pairs[j] for j in range(len(pairs)) if mask >> j & 1)
        law[edges] = p ** len(edges) * (1 - p) ** (len(pairs) - len(edges))
    return law


def components(vertices, edges) -> list[frozenset]:
    parent = {v: v for v in vertices}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        parent[find(u)] = find(v)
    groups = defaultdict(set)
    for v in vertices:
        groups[find(v)].add(v)
    return [frozenset(g) for g in groups.values()]


def partition_law(n: int, threshold: int, t: float, mode: str = "smoluchowski") -> dict:
    """Law of ``(sorted in-solution sizes, sorted large sizes)``.

    In Flory mode every component of size ``>= threshold`` counts as large.
    """
    out: dict = defaultdict(float)
    if mode == "smoluchowski":
        for (blocks, large, _), prob in threshold_model_law(n, threshold, t).items():
            sol = tuple(sorted(len(b) for b in blocks if b not in large))
            big = tuple(sorted(len(b) for b in large))
            out[(sol, big)] += prob
    elif mode == "flory":
        for edges, prob in er_law(n, t).items():
            sizes = [len(c) for c in components(range(n), edges)]
            sol = tuple(sorted(s for s in sizes if s < threshold))
            big = tuple(sorted(s for s in sizes if s >= threshold))
            out[(sol, big)] += prob
    else:
        raise ConfigError("mode", f"unsupported mode {mode!r}")
    return dict(out)


def conditioned_er_law(vertices, p: float, threshold: int) -> dict:
    """ER graph on ``vertices`` conditioned on no component of size ``>= threshold``."""
    vertices = sorted(vertices)
    pairs = list(combinations(vertices, 2))
    law = {}
    for mask in range(1 << len(pairs)):
        edges = frozenset(pairs[j] for j in range(len(pairs)) if mask >> j & 1)
        if all(len(c) < threshold for c in components(vertices, edges)):
            law[edges] = p ** len(edges) * (1 - p) ** (len(pairs) - len(edges))
    total = sum(law.values())
    return {g: w / total for g, w in law.items()}


def solution_graph_given_set(n: int, threshold: int, t: float) -> dict:
    """Conditional law of the in-solution graph given the in-solution set.

    Returns ``{solution set: {edge set: probability}}``.
    """
    cond: dict = defaultdict(lambda: defaultdict(float))
    for (blocks, large, edges), prob in threshold_model_law(n, threshold, t).items():
        sol = frozenset().union(*[b for b in blocks if b not in large])
        inner = frozenset(e for e in edges if e[0] in sol and e[1] in sol)
        cond[sol][inner] += prob
    out = {}
    for s, law in cond.items():
        total = sum(law.values())
        out[s] = {g: w / total for g, w in law.items()}
    return out
