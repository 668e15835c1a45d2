"""Compiled inner loops shared by the forest, the activation stream and the engine.

Everything here operates on plain numpy arrays so the same kernels serve the
single-call Python API (``ClusterForest.try_link``, ``ActivationStream``) and
the bulk event loop in :func:`advance`.
"""

from __future__ import annotations

import numba
import numpy as np

# link outcome codes
REJECTED = 0
INTRA = 1
MERGED = 2
FELL = 3
ABSORBED = 4  # non-inert mode only: merge into an already-large cluster

# forest counter slots
F_EDGES = 0
F_SOLUTION = 1
F_GEL = 2
F_MERGES = 3
F_TOUCHED = 4
F_EVENTS = 5
F_Z_SET = 6
F_Z_SURPLUS = 7
F_Z_SIZE = 8
N_FOREST_SLOTS = 9

# stream integer slots
S_K = 0
S_FILL = 1
S_PENDING = 2
S_PU = 3
S_PV = 4
N_STREAM_ISLOTS = 5

# stream float slots
S_CLOCK = 0
S_PENDING_T = 1
S_Z_TIME = 2
N_STREAM_FSLOTS = 3

# advance() return codes
DONE = 0
EXHAUSTED = 1
GROW_EDGES = 2
GROW_EVENTS = 3
GROW_TABLE = 4
STOPPED_LARGE = 5

EMPTY_KEY = -1


@numba.njit(cache=True)
def find(parent, v):
    root = v
    while parent[root] != root:
        root = parent[root]
    while parent[v] != root:
        nxt = parent[v]
        parent[v] = root
        v = nxt
    return root


@numba.njit(cache=True)
def apply_link(parent, size, large, edge_count, counters, eu, ev,
               u, v, threshold, inert, track_edges):
    """Offer the link ``u``-``v``; returns ``(code, size, root)``.

    Caller guarantees edge capacity when ``track_edges`` is set.
    """
    ru = find(parent, u)
    rv = find(parent, v)
    if inert and (large[ru] or large[rv]):
        return REJECTED, 0, ru
    if track_edges:
        e = counters[F_EDGES]
        eu[e] = u
        ev[e] = v
        counters[F_EDGES] = e + 1
    if ru == rv:
        edge_count[ru] += 1
        return INTRA, size[ru], ru
    if size[ru] < size[rv]:
        ru, rv = rv, ru
    small_u = 0 if large[ru] else size[ru]
    small_v = 0 if large[rv] else size[rv]
    already_large = large[ru] or large[rv]
    parent[rv] = ru
    size[ru] += size[rv]
    edge_count[ru] += edge_count[rv] + 1
    counters[F_MERGES] += 1
    if already_large:
        # only reachable when not inert
        moved = small_u + small_v
        counters[F_GEL] += moved
        counters[F_SOLUTION] -= moved
        return ABSORBED, size[ru], ru
    if size[ru] >= threshold:
        large[ru] = True
        counters[F_GEL] += size[ru]
        counters[F_SOLUTION] -= size[ru]
        return FELL, size[ru], ru
    return MERGED, size[ru], ru


@numba.njit(cache=True)
def _mix(key):
    x = np.uint64(key)
    x ^= x >> np.uint64(33)
    x *= np.uint64(0xFF51AFD7ED558CCD)
    x ^= x >> np.uint64(33)
    x *= np.uint64(0xC4CEB9FE1A85EC53)
    x ^= x >> np.uint64(33)
    return x


@numba.njit(cache=True)
def table_insert(table, key):
    """Insert ``key``; returns False if it was already present."""
    mask = np.uint64(table.shape[0] - 1)
    i = np.int64(_mix(key) & mask)
    while True:
        k = table[i]
        if k == EMPTY_KEY:
            table[i] = key
            return True
        if k == key:
            return False
        i = (i + 1) & (table.shape[0] - 1)


@numba.njit(cache=True)
def table_rehash(old, new):
    for i in range(old.shape[0]):
        if old[i] != EMPTY_KEY:
            table_insert(new, old[i])


@numba.njit(cache=True)
def draw_activation(table, sint, sflt, rng, n, rate_scale, exact):
    """Draw the next activation into the pending slot.

    ``exact`` samples without replacement against ``table`` (each unordered
    pair at most once, gap rate (M - k) / rate_scale). Otherwise pairs are
    drawn with replacement at constant rate M / rate_scale, which leaves the
    partition dynamics unchanged because a pair joining two distinct
    clusters can never have been activated before.
    Returns False when the stream is exhausted.
    """
    m_total = n * (n - 1) // 2
    k = sint[S_K]
    if exact:
        remaining = m_total - k
    else:
        remaining = m_total
    if remaining <= 0:
        return False
    gap = rng.standard_exponential() * rate_scale / remaining
    while True:
        u = rng.integers(0, n)
        v = rng.integers(0, n - 1)
        if v >= u:
            v += 1
        if not exact:
            break
        lo = min(u, v)
        hi = max(u, v)
        if table_insert(table, lo * n + hi):
            sint[S_FILL] += 1
            break
    sint[S_K] = k + 1
    sint[S_PENDING] = 1
    sint[S_PU] = u
    sint[S_PV] = v
    sflt[S_PENDING_T] = sflt[S_CLOCK] + gap
    return True


@numba.njit(cache=True)
def advance(parent, size, large, edge_count, touched, counters, eu, ev,
            table, sint, sflt, ev_t, ev_size, ev_after,
            rng, t_stop, n, rate_scale, threshold,
            inert, track_edges, stop_on_large):
    """Consume activations with time <= ``t_stop``.

    Returns one of the ``DONE``/``EXHAUSTED``/``GROW_*``/``STOPPED_LARGE``
    codes. On a ``GROW_*`` code nothing has been consumed past the last
    applied event; the caller enlarges the buffer and calls again.
    """
    while True:
        if sint[S_PENDING] == 0:
            if track_edges and 2 * (sint[S_FILL] + 1) > table.shape[0]:
                return GROW_TABLE
            if not draw_activation(table, sint, sflt, rng, n, rate_scale, track_edges):
                return EXHAUSTED
        t = sflt[S_PENDING_T]
        if t > t_stop:
            return DONE
        if track_edges and counters[F_EDGES] >= eu.shape[0]:
            return GROW_EDGES
        if counters[F_EVENTS] >= ev_t.shape[0]:
            return GROW_EVENTS
        u = sint[S_PU]
        v = sint[S_PV]
        sint[S_PENDING] = 0
        sflt[S_CLOCK] = t
        if not touched[u]:
            touched[u] = True
            counters[F_TOUCHED] += 1
        if not touched[v]:
            touched[v] = True
            counters[F_TOUCHED] += 1
        code, sz, root = apply_link(parent, size, large, edge_count, counters,
                                    eu, ev, u, v, threshold, inert, track_edges)
        if code == FELL:
            i = counters[F_EVENTS]
            ev_t[i] = t
            ev_size[i] = sz
            ev_after[i] = counters[F_SOLUTION]
            counters[F_EVENTS] = i + 1
            if inert and counters[F_Z_SET] == 0 and find(parent, 0) == root:
                counters[F_Z_SET] = 1
                counters[F_Z_SIZE] = sz
                counters[F_Z_SURPLUS] = edge_count[root] - sz + 1
                sflt[S_Z_TIME] = t
            if stop_on_large:
                return STOPPED_LARGE


@numba.njit(cache=True)
def build_csr(n, eu, ev, n_edges):
    """Adjacency of the first ``n_edges`` edges as (indptr, neighbours, edge ids)."""
    deg = np.zeros(n + 1, dtype=np.int64)
    for e in range(n_edges):
        deg[eu[e] + 1] += 1
        deg[ev[e] + 1] += 1
    for i in range(n):
        deg[i + 1] += deg[i]
    fill = deg[:-1].copy()
    nbr = np.empty(2 * n_edges, dtype=np.int64)
    eid = np.empty(2 * n_edges, dtype=np.int64)
    for e in range(n_edges):
        a = eu[e]
        b = ev[e]
        nbr[fill[a]] = b
        eid[fill[a]] = e
        fill[a] += 1
        nbr[fill[b]] = a
        eid[fill[b]] = e
        fill[b] += 1
    return deg, nbr, eid


@numba.njit(cache=True)
def bfs_component(indptr, nbr, eid, start, mark, stamp):
    """Vertices (BFS order) and edge ids of the component of ``start``.

    ``mark`` is a per-vertex stamp array reused across calls.
    """
    order = [start]
    mark[start] = stamp
    edges = []
    head = 0
    while head < len(order):
        x = order[head]
        head += 1
        for j in range(indptr[x], indptr[x + 1]):
            y = nbr[j]
            if y > x:
                edges.append(eid[j])
            if mark[y] != stamp:
                mark[y] = stamp
                order.append(y)
    return np.array(order, dtype=np.int64), np.array(edges, dtype=np.int64)


@numba.njit(cache=True)
def root_sizes(parent, size, large):
    """Sizes of clusters whose root is not flagged large."""
    out = []
    for i in range(parent.shape[0]):
        if parent[i] == i and not large[i]:
            out.append(size[i])
    return np.array(out, dtype=np.int64)


@numba.njit(cache=True)
def sample_solution_particles(parent, large, rng, count, n_solution):
    """Uniform particles among those not in a large cluster (rejection)."""
    out = np.empty(count, dtype=np.int64)
    if n_solution == 0:
        return out[:0]
    n = parent.shape[0]
    for i in range(count):
        while True:
            v = rng.integers(0, n)
            if not large[find(parent, v)]:
                out[i] = v
                break
    return out


@numba.njit(cache=True)
def advance_solution(parent, size, large, edge_count, counters, nxt, sol, pos,
                     sint, sflt, ev_t, ev_size, ev_after,
                     rng, t_stop, rate_scale, threshold, stop_on_large):
    """Inert-mode event loop drawing pairs among in-solution particles only.

    Links touching the gel are always refused, so dropping them is exact for
    the partition. ``sol[:n_solution]`` lists in-solution particles, ``pos``
    is its inverse and ``nxt`` threads each cluster into a cycle so a falling
    cluster can be removed in time proportional to its size.
    """
    dummy = np.empty(0, dtype=np.int64)
    while True:
        ns = counters[F_SOLUTION]
        if sint[S_PENDING] == 0:
            if ns < 2:
                return EXHAUSTED
            # same draw order as draw_activation, so both streams agree
            # until the first cluster falls
            gap = rng.standard_exponential() * rate_scale / (ns * (ns - 1) // 2)
            a = rng.integers(0, ns)
            b = rng.integers(0, ns - 1)
            if b >= a:
                b += 1
            sint[S_PU] = sol[a]
            sint[S_PV] = sol[b]
            sint[S_K] += 1
            sint[S_PENDING] = 1
            sflt[S_PENDING_T] = sflt[S_CLOCK] + gap
        t = sflt[S_PENDING_T]
        if t > t_stop:
            return DONE
        if counters[F_EVENTS] >= ev_t.shape[0]:
            return GROW_EVENTS
        u = sint[S_PU]
        v = sint[S_PV]
        sint[S_PENDING] = 0
        sflt[S_CLOCK] = t
        ru = find(parent, u)
        rv = find(parent, v)
        code, sz, root = apply_link(parent, size, large, edge_count, counters,
                                    dummy, dummy, u, v, threshold, True, False)
        if code == MERGED or code == FELL:
            tmp = nxt[ru]
            nxt[ru] = nxt[rv]
            nxt[rv] = tmp
        if code == FELL:
            x = root
            while True:
                # swap-remove x from the solution list
                last = ns - 1
                p = pos[x]
                y = sol[last]
                sol[p] = y
                pos[y] = p
                sol[last] = x
                pos[x] = last
                ns -= 1
                x = nxt[x]
                if x == root:
                    break
            i = counters[F_EVENTS]
            ev_t[i] = t
            ev_size[i] = sz
            ev_after[i] = counters[F_SOLUTION]
            counters[F_EVENTS] = i + 1
            if counters[F_Z_SET] == 0 and find(parent, 0) == root:
                counters[F_Z_SET] = 1
                counters[F_Z_SIZE] = sz
                counters[F_Z_SURPLUS] = edge_count[root] - sz + 1
                sflt[S_Z_TIME] = t
            if stop_on_large:
                return STOPPED_LARGE


@numba.njit(cache=True)
def cluster_members(nxt, root):
    out = [root]
    x = nxt[root]
    while x != root:
        out.append(x)
        x = nxt[x]
    return np.array(out, dtype=np.int64)


@numba.njit(cache=True)
def small_batch(n, threshold, t, inert, exact, count, rng):
    """Final states of ``count`` independent replicas on ``n`` particles.

    Runs the same event loops as full simulations (``advance_solution`` when
    ``inert and not exact``, ``advance`` otherwise) and encodes each final
    partition in base ``n + 1``: digit ``m - 1`` counts in-solution clusters
    of size ``m`` and digit ``n + m - 1`` counts large ones.
    """
    m_total = n * (n - 1) // 2
    parent = np.empty(n, dtype=np.int64)
    size = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.bool_)
    edge_count = np.empty(n, dtype=np.int64)
    touched = np.empty(n, dtype=np.bool_)
    counters = np.empty(N_FOREST_SLOTS, dtype=np.int64)
    eu = np.empty(m_total + 1, dtype=np.int64)
    ev = np.empty(m_total + 1, dtype=np.int64)
    cap = 4
    while cap < 2 * (m_total + 2):
        cap *= 2
    table = np.empty(cap, dtype=np.int64)
    sint = np.empty(N_STREAM_ISLOTS, dtype=np.int64)
    sflt = np.empty(N_STREAM_FSLOTS, dtype=np.float64)
    nxt = np.empty(n, dtype=np.int64)
    sol = np.empty(n, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    ev_t = np.empty(n + 1, dtype=np.float64)
    ev_size = np.empty(n + 1, dtype=np.int64)
    ev_after = np.empty(n + 1, dtype=np.int64)
    out = np.empty(count, dtype=np.int64)
    thinned = inert and not exact
    for r in range(count):
        for i in range(n):
            parent[i] = i
            size[i] = 1
            large[i] = False
            edge_count[i] = 0
            touched[i] = False
            nxt[i] = i
            sol[i] = i
            pos[i] = i
        counters[:] = 0
        counters[F_SOLUTION] = n
        table[:] = EMPTY_KEY
        sint[:] = 0
        sflt[:] = 0.0
        if thinned:
            advance_solution(parent, size, large, edge_count, counters, nxt, sol, pos,
                             sint, sflt, ev_t, ev_size, ev_after, rng, t, float(n),
                             threshold, False)
        else:
            advance(parent, size, large, edge_count, touched, counters, eu, ev,
                    table, sint, sflt, ev_t, ev_size, ev_after, rng, t, n, float(n),
                    threshold, inert, exact, False)
        code = 0
        for i in range(n):
            if parent[i] == i:
                d = size[i] - 1 + (n if large[i] else 0)
                code += (n + 1) ** d
        out[r] = code
    return out


@numba.njit(cache=True)
def small_batch_graphs(n, threshold, t, count, rng):
    """In-solution graphs of ``count`` threshold-model replicas on ``n`` particles.

    Exact stream with tracked edges. Returns the bitmask of in-solution
    particles and the bitmask of created edges joining two of them; pair
    ``(i, j)`` with ``i < j`` owns bit ``i*n + j``.
    """
    m_total = n * (n - 1) // 2
    parent = np.empty(n, dtype=np.int64)
    size = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.bool_)
    edge_count = np.empty(n, dtype=np.int64)
    touched = np.empty(n, dtype=np.bool_)
    counters = np.empty(N_FOREST_SLOTS, dtype=np.int64)
    eu = np.empty(m_total + 1, dtype=np.int64)
    ev = np.empty(m_total + 1, dtype=np.int64)
    cap = 4
    while cap < 2 * (m_total + 2):
        cap *= 2
    table = np.empty(cap, dtype=np.int64)
    sint = np.empty(N_STREAM_ISLOTS, dtype=np.int64)
    sflt = np.empty(N_STREAM_FSLOTS, dtype=np.float64)
    ev_t = np.empty(n + 1, dtype=np.float64)
    ev_size = np.empty(n + 1, dtype=np.int64)
    ev_after = np.empty(n + 1, dtype=np.int64)
    sets = np.empty(count, dtype=np.int64)
    graphs = np.empty(count, dtype=np.int64)
    for r in range(count):
        for i in range(n):
            parent[i] = i
            size[i] = 1
            large[i] = False
            edge_count[i] = 0
            touched[i] = False
        counters[:] = 0
        counters[F_SOLUTION] = n
        table[:] = EMPTY_KEY
        sint[:] = 0
        sflt[:] = 0.0
        advance(parent, size, large, edge_count, touched, counters, eu, ev,
                table, sint, sflt, ev_t, ev_size, ev_after, rng, t, n, float(n),
                threshold, True, True, False)
        smask = 0
        for i in range(n):
            if not large[find(parent, i)]:
                smask |= 1 << i
        gmask = 0
        for e in range(counters[F_EDGES]):
            a, b = min(eu[e], ev[e]), max(eu[e], ev[e])
            if (smask >> a) & 1 and (smask >> b) & 1:
                gmask |= 1 << (a * n + b)
        sets[r] = smask
        graphs[r] = gmask
    return sets, graphs
