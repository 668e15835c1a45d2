"""Union-find partition of particles into clusters, with inert (gel) clusters.

The forest stores, for each root, the cluster size, whether the cluster is
large (frozen into the gel), and how many created edges it carries. Created
edges are kept append-only so that components can be re-extracted with their
full edge structure, surplus edges included.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from ._validation import check_count, check_particle


class LinkKind(enum.Enum):
    REJECTED = K.REJECTED
    INTRA_CLUSTER = K.INTRA
    MERGED = K.MERGED
    MERGED_AND_FELL = K.FELL
    ABSORBED = K.ABSORBED


@dataclass(frozen=True)
class LinkOutcome:
    """Result of offering one link to the forest.

    ``size`` is the size of the cluster holding both endpoints afterwards
    (0 for a rejected link).
    """

    kind: LinkKind
    size: int = 0


@dataclass(frozen=True)
class Component:
    """A connected component in created edges.

    ``vertices[0]`` is the root (the particle the component was extracted
    from); ``edges`` holds pairs of positions into ``vertices``.
    """

    vertices: np.ndarray
    edges: np.ndarray

    @property
    def size(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def surplus(self) -> int:
        return self.n_edges - self.size + 1


class ClusterForest:
    """Partition of ``n`` particles, all starting as singletons.

    Parameters
    ----------
    n : int
        Number of particles, at least 1.
    track_edges : bool, default=True
        Keep the list of created edges. Without it the partition, sizes and
        gel flags are still exact but components cannot be extracted.

    Notes
    -----
    ``touched`` flags particles one of whose clocks has rung, including
    refused links. The simulation loop maintains it; :meth:`try_link` does
    not, so a refused link changes nothing here.
    """

    def __init__(self, n: int, track_edges: bool = True):
        n = check_count(n, "n", minimum=1)
        self.n_particles = n
        self.track_edges = bool(track_edges)
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.frozen = np.zeros(n, dtype=np.bool_)
        self.edge_count = np.zeros(n, dtype=np.int64)
        self.touched = np.zeros(n, dtype=np.bool_)
        self.counters = np.zeros(K.N_FOREST_SLOTS, dtype=np.int64)
        self.counters[K.F_SOLUTION] = n
        cap = 16 if track_edges else 0
        self._eu = np.empty(cap, dtype=np.int64)
        self._ev = np.empty(cap, dtype=np.int64)
        self._csr = None
        self._csr_edges = -1

    # counters -----------------------------------------------------------

    @property
    def n_in_solution(self) -> int:
        return int(self.counters[K.F_SOLUTION])

    @property
    def gel_mass(self) -> int:
        return int(self.counters[K.F_GEL])

    @property
    def n_edges(self) -> int:
        return int(self.counters[K.F_EDGES])

    @property
    def n_merges(self) -> int:
        return int(self.counters[K.F_MERGES])

    @property
    def created_edges(self) -> np.ndarray:
        """View of created edges as an ``(E, 2)`` array, in creation order."""
        e = self.n_edges
        return np.stack([self._eu[:e], self._ev[:e]], axis=1)

    def _ensure_edge_capacity(self, extra: int = 1) -> None:
        need = self.n_edges + extra
        if need <= self._eu.shape[0]:
            return
        cap = max(need, 2 * self._eu.shape[0], 16)
        for name in ("_eu", "_ev"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=np.int64)
            new[: old.shape[0]] = old
            setattr(self, name, new)

    # operations ---------------------------------------------------------

    def find_root(self, v: int) -> int:
        v = check_particle(v, self.n_particles)
        return int(K.find(self.parent, v))

    def cluster_size(self, v: int) -> int:
        return int(self.size[self.find_root(v)])

    def is_frozen(self, v: int) -> bool:
        return bool(self.frozen[self.find_root(v)])

    def try_link(self, u: int, v: int, threshold: int, inert: bool = True) -> LinkOutcome:
        """Offer the link ``u``-``v`` under the size threshold.

        With ``inert`` (the default) any link touching a frozen cluster is
        refused and leaves the forest unchanged. A merge reaching
        ``threshold`` is performed and the merged cluster then falls into
        the gel. With ``inert=False`` every link is created; clusters
        crossing the threshold are still flagged large and counted as gel
        mass, but keep linking.
        """
        u = check_particle(u, self.n_particles)
        v = check_particle(v, self.n_particles)
        if u == v:
            raise ValueError(f"self-loop {u}-{v}: links join distinct particles")
        threshold = check_count(threshold, "threshold", minimum=1)
        if self.track_edges:
            self._ensure_edge_capacity()
        code, size, _ = K.apply_link(
            self.parent, self.size, self.frozen, self.edge_count, self.counters,
            self._eu, self._ev, u, v, threshold, bool(inert), self.track_edges,
        )
        return LinkOutcome(LinkKind(int(code)), int(size))

    def _adjacency(self):
        if not self.track_edges:
            raise RuntimeError("forest built with track_edges=False has no edge list")
        if self._csr_edges != self.n_edges:
            self._csr = K.build_csr(self.n_particles, self._eu, self._ev, self.n_edges)
            self._csr_edges = self.n_edges
            self._mark = np.full(self.n_particles, -1, dtype=np.int64)
            self._stamp = 0
        return self._csr

    def extract_component(self, v: int) -> Component:
        """Component of ``v`` under created edges, surplus edges included."""
        v = check_particle(v, self.n_particles)
        indptr, nbr, eid = self._adjacency()
        self._stamp += 1
        verts, edge_ids = K.bfs_component(indptr, nbr, eid, v, self._mark, self._stamp)
        local = {int(x): i for i, x in enumerate(verts)}
        if edge_ids.size:
            pairs = np.array(
                [[local[int(self._eu[e])], local[int(self._ev[e])]] for e in edge_ids],
                dtype=np.int64,
            )
        else:
            pairs = np.empty((0, 2), dtype=np.int64)
        return Component(verts, pairs)

    def solution_cluster_sizes(self) -> np.ndarray:
        """Sizes of all non-frozen clusters (one entry per cluster)."""
        return K.root_sizes(self.parent, self.size, self.frozen)

    def component_size_histogram(self) -> dict[int, int]:
        """Map size -> number of non-frozen clusters of that size."""
        sizes = self.solution_cluster_sizes()
        return dict(sorted(Counter(sizes.tolist()).items()))

    def partition(self) -> list[tuple[int, ...]]:
        """Blocks of the partition as sorted tuples, sorted. Test helper; O(n)."""
        roots = np.array([K.find(self.parent, i) for i in range(self.n_particles)])
        blocks: dict[int, list[int]] = {}
        for i, r in enumerate(roots.tolist()):
            blocks.setdefault(r, []).append(i)
        return sorted(tuple(b) for b in blocks.values())


def new_forest(n: int, track_edges: bool = True) -> ClusterForest:
    return ClusterForest(n, track_edges=track_edges)
