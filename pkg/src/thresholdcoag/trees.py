"""Rooted unlabeled trees: canonical codes, Poisson Galton-Watson laws, enumeration.

A rooted tree is identified by its AHU code: a node is ``"(" + children + ")"``
with the children's codes sorted, so two rooted trees share a code exactly
when they are isomorphic.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from ._validation import ConfigError, check_count, check_rng

MAX_ENUMERATION_SIZE = 12


@dataclass(frozen=True, order=True)
class RootedTree:
    code: str

    def __post_init__(self):
        depth = 0
        for i, ch in enumerate(self.code):
            if ch not in "()":
                raise ValueError(f"malformed tree code {self.code!r}")
            depth += 1 if ch == "(" else -1
            if depth <= 0 and i != len(self.code) - 1:
                raise ValueError(f"malformed tree code {self.code!r}")
        if depth != 0 or not self.code:
            raise ValueError(f"malformed tree code {self.code!r}")

    @property
    def size(self) -> int:
        return self.code.count("(")

    @property
    def children(self) -> tuple["RootedTree", ...]:
        return tuple(RootedTree(c) for c in _split_children(self.code))

    def __str__(self) -> str:
        return self.code


@lru_cache(maxsize=None)
def _split_children(code: str) -> tuple[str, ...]:
    out, depth, start = [], 0, 1
    for i in range(1, len(code) - 1):
        depth += 1 if code[i] == "(" else -1
        if depth == 0:
            out.append(code[start : i + 1])
            start = i + 1
    return tuple(out)


def _code_from_parents(parent) -> str:
    """Canonical code of a tree given parent pointers in BFS order (root first)."""
    n = len(parent)
    kids: list[list[str]] = [[] for _ in range(n)]
    codes = [""] * n
    for v in range(n - 1, -1, -1):
        codes[v] = "(" + "".join(sorted(kids[v])) + ")"
        if v:
            kids[parent[v]].append(codes[v])
    return codes[0]


def canonicalize(component, root: int | None = None) -> RootedTree | None:
    """Canonical rooted tree of a connected graph, or None if it has a cycle.

    ``component`` is either an object with ``vertices`` and ``edges``
    (positions into ``vertices``, root at position 0) such as
    :class:`~thresholdcoag.forest.Component`, or a pair ``(n_vertices, edges)``.
    ``root`` defaults to position 0.
    """
    if hasattr(component, "edges") and hasattr(component, "vertices"):
        n, edges = len(component.vertices), component.edges
    else:
        n, edges = component
    n = check_count(n, "n_vertices", minimum=1)
    root = 0 if root is None else root
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges.tolist():
        adj[u].append(v)
        adj[v].append(u)
    order, parent = [root], {root: -1}
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in parent:
                parent[y] = x
                order.append(y)
                queue.append(y)
    if len(order) != n:
        raise ValueError(f"graph is disconnected: reached {len(order)} of {n} vertices")
    if edges.shape[0] != n - 1:
        return None
    index = {v: i for i, v in enumerate(order)}
    return RootedTree(_code_from_parents([index[parent[v]] if i else -1 for i, v in enumerate(order)]))


def tree_from_code_edges(tree: RootedTree) -> tuple[int, np.ndarray]:
    """A labelled realization ``(n, edges)`` of ``tree`` with the root at 0."""
    edges, stack, counter = [], [(tree.code, -1)], 0
    while stack:
        code, par = stack.pop()
        me = counter
        counter += 1
        if par >= 0:
            edges.append((par, me))
        for child in reversed(_split_children(code)):
            stack.append((child, me))
    return counter, np.array(edges, dtype=np.int64).reshape(-1, 2)


@lru_cache(maxsize=65536)
def _log_gw(lam: float, code: str) -> float:
    kids = Counter(_split_children(code))
    c = sum(kids.values())
    if c and lam == 0.0:
        return -math.inf
    out = -lam + (c * math.log(lam) if c else 0.0)
    for child, mult in kids.items():
        out += mult * _log_gw(lam, child) - math.lgamma(mult + 1)
    return out


def gw_tree_prob(lam: float, tree: RootedTree | str) -> float:
    """Probability that a Poisson(``lam``) Galton-Watson tree equals ``tree``.

    Each node with ``c`` children whose isomorphism classes have
    multiplicities ``m_j`` contributes ``exp(-lam) lam**c / prod m_j!``
    times the children's own probabilities.
    """
    lam = float(lam)
    if lam < 0:
        raise ConfigError("lambda", f"must be >= 0, got {lam}")
    code = tree.code if isinstance(tree, RootedTree) else RootedTree(tree).code
    return math.exp(_log_gw(lam, code))


def enumerate_rooted_trees(max_size: int) -> dict[int, list[RootedTree]]:
    """All rooted unlabeled trees with ``1..max_size`` vertices, by size."""
    max_size = check_count(max_size, "max_size", minimum=1)
    if max_size > MAX_ENUMERATION_SIZE:
        raise ConfigError("max_size", f"at most {MAX_ENUMERATION_SIZE}, got {max_size}")
    by_size: dict[int, list[str]] = {1: ["()"]}
    flat: list[tuple[int, str]] = [(1, "()")]

    def forests(total, max_index):
        # multisets of trees (indices into ``flat``, nonincreasing) summing to ``total``
        if total == 0:
            yield []
            return
        for i in range(max_index, -1, -1):
            size, code = flat[i]
            if size <= total:
                for rest in forests(total - size, i):
                    yield [code] + rest

    for n in range(2, max_size + 1):
        codes = sorted({"(" + "".join(sorted(f)) + ")" for f in forests(n - 1, len(flat) - 1)})
        by_size[n] = codes
        flat.extend((n, c) for c in codes)
    return {n: [RootedTree(c) for c in codes] for n, codes in by_size.items()}


@numba.njit(cache=True)
def _gw_kernel(lam, size_cap, rng, parent):
    """Breadth-first Poisson GW tree; returns its size, or -1 past ``size_cap``."""
    size = 1
    head = 0
    parent[0] = -1
    while head < size:
        kids = rng.poisson(lam) if lam > 0 else 0
        if size + kids > size_cap:
            return -1
        for _ in range(kids):
            parent[size] = head
            size += 1
        head += 1
    return size


@numba.njit(cache=True)
def _gw_sizes_kernel(lam, size_cap, count, rng):
    parent = np.empty(size_cap + 1, dtype=np.int64)
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        out[i] = _gw_kernel(lam, size_cap, rng, parent)
    return out


@numba.njit(cache=True)
def _gw_batch_kernel(lam, size_cap, count, rng):
    parent = np.empty(size_cap + 1, dtype=np.int64)
    sizes = np.empty(count, dtype=np.int64)
    flat = []
    for i in range(count):
        s = _gw_kernel(lam, size_cap, rng, parent)
        sizes[i] = s
        for j in range(max(s, 0)):
            flat.append(parent[j])
    return sizes, np.array(flat, dtype=np.int64)


def sample_gw_tree(lam: float, size_cap: int, rng=None) -> RootedTree | None:
    """One Poisson(``lam``) GW tree, or None when it outgrows ``size_cap``."""
    out = sample_gw_trees(lam, size_cap, 1, rng)
    return out[0]


def sample_gw_trees(lam: float, size_cap: int, count: int, rng=None) -> list[RootedTree | None]:
    """``count`` independent trees (None marks an overflow)."""
    lam = float(lam)
    if lam < 0:
        raise ConfigError("lambda", f"must be >= 0, got {lam}")
    size_cap = check_count(size_cap, "size_cap", minimum=1)
    sizes, flat = _gw_batch_kernel(lam, size_cap, check_count(count, "count"), check_rng(rng))
    cache: dict[tuple, RootedTree] = {}
    out: list[RootedTree | None] = []
    pos = 0
    for s in sizes.tolist():
        if s < 0:
            out.append(None)
            continue
        key = tuple(flat[pos : pos + s].tolist())
        pos += s
        tree = cache.get(key)
        if tree is None:
            tree = cache[key] = RootedTree(_code_from_parents(key))
        out.append(tree)
    return out


def sample_gw_sizes(lam: float, size_cap: int, count: int, rng=None) -> np.ndarray:
    """Total progeny of ``count`` GW trees (-1 marks an overflow)."""
    size_cap = check_count(size_cap, "size_cap", minimum=1)
    return _gw_sizes_kernel(float(lam), size_cap, check_count(count, "count"), check_rng(rng))
