"""Exploration walk of Erdős–Rényi graphs and near-critical component sizes.

The walk explores one vertex per step. ``X_k`` counts the neutral vertices
discovered from the ``k``-th explored vertex and ``S_k = S_{k-1} + X_k - 1``.
Components are the stretches between successive new running minima of ``S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ._validation import ConfigError, check_count, check_probability, check_rng


@dataclass(frozen=True)
class ExplorationRecord:
    """Walk ``S_0 .. S_steps`` and the component (excursion) sizes it encodes.

    When the walk stops inside a component, its explored part is the last
    entry of ``excursion_sizes`` and ``truncated`` is set.
    """

    n: int
    p: float
    walk: np.ndarray
    excursion_sizes: np.ndarray
    truncated: bool = False

    @property
    def steps_taken(self) -> int:
        return int(self.walk.shape[0] - 1)

    @property
    def complete_excursions(self) -> np.ndarray:
        return self.excursion_sizes[:-1] if self.truncated else self.excursion_sizes


@numba.njit(cache=True)
def _explore_kernel(n, p, max_steps, rng):
    neutral = np.arange(n)
    n_neutral = n
    active = np.empty(n, dtype=np.int64)
    n_active = 0
    walk = np.empty(max_steps + 1, dtype=np.int64)
    walk[0] = 0
    sizes = np.empty(max_steps + 1, dtype=np.int64)
    n_sizes = 0
    s = 0
    low = 0
    cur = 0
    for k in range(1, max_steps + 1):
        if n_active == 0:
            n_neutral -= 1
            active[0] = neutral[n_neutral]
            n_active = 1
        n_active -= 1  # explore the most recently activated vertex
        x = 0
        if n_neutral > 0 and p > 0.0:
            x = rng.binomial(n_neutral, p)
        for _ in range(x):
            r = rng.integers(0, n_neutral)
            n_neutral -= 1
            active[n_active] = neutral[r]
            neutral[r] = neutral[n_neutral]
            n_active += 1
        s += x - 1
        walk[k] = s
        cur += 1
        if s < low:
            low = s
            sizes[n_sizes] = cur
            n_sizes += 1
            cur = 0
    truncated = cur > 0
    if truncated:
        sizes[n_sizes] = cur
        n_sizes += 1
    return walk, sizes[:n_sizes].copy(), truncated


def explore(n: int, p: float, max_steps: int | None = None, rng=None) -> ExplorationRecord:
    """Explore a fresh ER(n, p) graph for ``max_steps`` steps (default ``n``).

    Each step draws the number of new neutral neighbours of the explored
    vertex as ``Bin(#neutral, p)`` and activates a uniform subset of that
    size, so the same run realizes both the walk and the components.
    """
    n = check_count(n, "n", minimum=1)
    p = check_probability(p)
    max_steps = n if max_steps is None else check_count(max_steps, "max_steps")
    if max_steps > n:
        raise ConfigError("max_steps", f"at most n={n}, got {max_steps}")
    walk, sizes, truncated = _explore_kernel(n, p, max_steps, check_rng(rng))
    return ExplorationRecord(n, p, walk, sizes, bool(truncated))


def explore_graph(n: int, edges) -> ExplorationRecord:
    """Deterministic exploration of a given graph on ``0 .. n-1``.

    New components start from the smallest neutral vertex and neighbours are
    explored in increasing order (depth-first, like :func:`explore`).
    """
    n = check_count(n, "n", minimum=1)
    adj = [set() for _ in range(n)]
    for u, v in edges:
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    neutral = set(range(n))
    stack: list[int] = []
    walk = [0]
    sizes = []
    s = low = cur = 0
    for _ in range(n):
        if not stack:
            start = min(neutral)
            neutral.remove(start)
            stack.append(start)
        x = stack.pop()
        found = sorted(adj[x] & neutral, reverse=True)
        neutral.difference_update(found)
        stack.extend(found)
        s += len(found) - 1
        walk.append(s)
        cur += 1
        if s < low:
            low = s
            sizes.append(cur)
            cur = 0
    return ExplorationRecord(n, float("nan"), np.array(walk), np.array(sizes, dtype=np.int64))


def binomial_walk(n: int, p: float, steps: int | None = None, rng=None) -> np.ndarray:
    """Walk driven only by the binomial recursion (no graph is built).

    The number of neutral vertices before step ``k`` is
    ``n - k - (S_{k-1} - min_{j<k} S_j)``: explored vertices and currently
    active ones are excluded, the running minimum accounting for finished
    components.
    """
    n = check_count(n, "n", minimum=1)
    p = check_probability(p)
    steps = n if steps is None else check_count(steps, "steps")
    if steps > n:
        raise ConfigError("steps", f"at most n={n}, got {steps}")
    return _binomial_walk_kernel(n, p, steps, check_rng(rng))


@numba.njit(cache=True)
def _binomial_walk_kernel(n, p, steps, rng):
    walk = np.empty(steps + 1, dtype=np.int64)
    walk[0] = 0
    s = 0
    low = 0
    for k in range(1, steps + 1):
        trials = n - k - (s - low)
        x = rng.binomial(trials, p) if trials > 0 else 0
        s += x - 1
        if s < low:
            low = s
        walk[k] = s
    return walk


def excursion_sizes(walk) -> np.ndarray:
    """Lengths between successive new running minima of a walk started at 0."""
    walk = np.asarray(walk)
    low = np.minimum.accumulate(walk)
    ends = np.flatnonzero(np.diff(low) < 0) + 1
    return np.diff(np.concatenate([[0], ends]))


def tube_deviation(record: ExplorationRecord | np.ndarray, gamma: float, eps: float,
                   n: int | None = None) -> float:
    """Largest distance between the walk and the parabola ``k(gamma*eps - k/2n)``.

    Taken over ``0 <= k <= 3*n*eps`` and scaled by ``n * eps**2``.
    """
    if isinstance(record, ExplorationRecord):
        walk, n = record.walk, record.n
    else:
        walk = np.asarray(record)
        if n is None:
            raise ConfigError("n", "required when passing a bare walk")
    if not eps > 0:
        raise ConfigError("eps", f"must be positive, got {eps}")
    k_max = int(math.floor(3 * n * eps))
    if walk.shape[0] <= k_max:
        raise ValueError(f"walk has {walk.shape[0] - 1} steps, need {k_max}")
    k = np.arange(k_max + 1, dtype=float)
    centre = k * (gamma * eps - k / (2.0 * n))
    return float(np.max(np.abs(walk[: k_max + 1] - centre)) / (n * eps * eps))


def largest_two_components(n: int, p: float, rng=None) -> tuple[int, int]:
    """Sizes of the two largest components of one ER(n, p) draw (second is 0 if absent)."""
    sizes = explore(n, p, rng=rng).excursion_sizes
    top = np.sort(sizes)[::-1]
    return int(top[0]), int(top[1]) if top.shape[0] > 1 else 0


def gelation_window_bounds(n: int, big_n: int, alpha: float, delta: float):
    """Bounds ``(sigma_minus, sigma_plus, varsigma_minus, varsigma_plus)``.

    ``sigma_pm`` bracket the first time a dynamic graph on ``n`` particles
    (clocks of rate ``1/big_n``) holds a component of size ``alpha``;
    ``varsigma_pm`` bracket the same time in terms of the particles left in
    solution afterwards.
    """
    n = check_count(n, "n", minimum=1)
    big_n = check_count(big_n, "N", minimum=1)
    if not 0 < delta < 1:
        raise ConfigError("delta", f"must lie in (0, 1), got {delta}")
    if not 0 <= alpha < n <= big_n:
        raise ConfigError("alpha", f"need alpha < n <= N, got {alpha}, {n}, {big_n}")
    r = alpha / n

    def bound(q):
        if not 0 < q < 1:
            raise ValueError(f"log argument out of range for n={n}, alpha={alpha}")
        return -big_n * math.log1p(-q)

    return (
        bound((1 + 0.5 * (1 - delta) * r) / n),
        bound((1 + 0.5 * (1 + delta) * r) / n),
        bound((1 - 0.5 * (1 + delta) * r) / n),
        bound((1 - 0.5 * (1 - delta) * r) / n),
    )
