"""Event-driven simulation of threshold coagulation and its Flory and coupled variants.

Every unordered pair of particles carries an exponential clock of rate
``1/N``. In the threshold (Smoluchowski) model a ringing clock creates its
link unless an endpoint already sits in a large cluster; a merge reaching the
threshold is performed and the merged cluster falls into the gel. In Flory
mode every link is created.

Two streams drive the dynamics:

* the exact stream samples unordered pairs without replacement and is used
  whenever created edges are tracked;
* the thinned stream draws pairs among in-solution particles only (or with
  replacement in Flory mode). Any link joining two distinct in-solution
  clusters has never been offered before, so the partition has exactly the
  same law; only duplicated surplus edges differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from . import _kernels as K
from ._validation import ConfigError, check_count, check_rng, check_time
from .forest import ClusterForest, Component

MODES = ("smoluchowski", "flory", "alternative")


class StreamExhausted(Exception):
    """Raised once every unordered pair has been activated."""


def threshold_from_rule(n: int, a: float = 0.75, g: float = 0.0) -> int:
    """``round(n**a * log(n)**g)``, clipped below at 1."""
    log_n = math.log(n) if n > 1 else 0.0
    scale = log_n**g if g != 0 else 1.0
    return max(1, int(round(n**a * scale)))


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulated replica.

    ``threshold`` wins over ``threshold_rule`` when both are given.
    ``track_edges=None`` tracks edges only when typical clusters are sampled.
    """

    n_particles: int
    threshold: int | None = None
    threshold_rule: tuple[float, float] = (0.75, 0.0)
    t_max: float = 4.0
    mode: str = "smoluchowski"
    seed: int | None = 0
    replica: int = 0
    sample_times: tuple[float, ...] = ()
    m_cap: int = 100
    typical_samples_per_time: int = 0
    track_edges: bool | None = None

    def __post_init__(self):
        n = check_count(self.n_particles, "n_particles", minimum=1)
        object.__setattr__(self, "n_particles", n)
        if self.mode not in MODES:
            raise ConfigError("mode", f"expected one of {MODES}, got {self.mode!r}")
        t_max = check_time(self.t_max, "t_max")
        object.__setattr__(self, "t_max", t_max)
        if self.threshold is not None:
            th = check_count(self.threshold, "threshold", minimum=1)
            object.__setattr__(self, "threshold", th)
        else:
            a, g = (float(x) for x in self.threshold_rule)
            object.__setattr__(self, "threshold_rule", (a, g))
        if self.alpha > n:
            raise ConfigError("threshold", f"{self.alpha} exceeds n_particles={n}")
        times = tuple(float(check_time(s, "sample_times")) for s in self.sample_times)
        if list(times) != sorted(times):
            raise ConfigError("sample_times", "must be sorted")
        if times and times[-1] > t_max:
            raise ConfigError("sample_times", f"{times[-1]} lies beyond t_max={t_max}")
        object.__setattr__(self, "sample_times", times)
        object.__setattr__(self, "m_cap", check_count(self.m_cap, "m_cap", minimum=1))
        object.__setattr__(
            self, "typical_samples_per_time",
            check_count(self.typical_samples_per_time, "typical_samples_per_time"),
        )
        object.__setattr__(self, "replica", check_count(self.replica, "replica"))
        if self.track_edges is False and self.typical_samples_per_time > 0:
            raise ConfigError("track_edges", "typical clusters need tracked edges")
        if self.mode == "alternative" and self.typical_samples_per_time > 0:
            raise ConfigError("typical_samples_per_time",
                              "typical clusters are not sampled in alternative mode")

    @property
    def alpha(self) -> int:
        if self.threshold is not None:
            return self.threshold
        return threshold_from_rule(self.n_particles, *self.threshold_rule)

    @property
    def tracks_edges(self) -> bool:
        if self.track_edges is None:
            return self.typical_samples_per_time > 0
        return bool(self.track_edges)

    def seed_sequence(self) -> np.random.SeedSequence:
        """Replica-local seed derived from ``(seed, replica)``."""
        return np.random.SeedSequence(self.seed, spawn_key=(self.replica,))


@dataclass(frozen=True)
class GelationEvent:
    time: float
    fallen_size: int
    n_after: int


@dataclass
class Snapshot:
    """State at a sample time.

    ``histogram[m]`` counts in-solution clusters of size ``m`` for
    ``1 <= m <= m_cap``; larger in-solution clusters only contribute to
    ``mass_above_cap``.
    """

    time: float
    n_in_solution: int
    gel_mass: int
    histogram: np.ndarray
    mass_above_cap: int
    events_so_far: int


@dataclass(frozen=True)
class CouplingReport:
    """Rejection indices of the coupled construction.

    ``first_rejection`` is the first step ``i`` with ``K(i) != 1`` (None if
    none occurred before the run stopped) and ``coupled`` tells whether that
    step's start time lies beyond the horizon.
    """

    first_rejection: int | None
    first_rejection_time: float
    coupled: bool
    k_values: tuple[int, ...]
    horizon: float


@dataclass
class SimResult:
    config: SimConfig
    trajectory: list[Snapshot] = field(default_factory=list)
    gelation_events: list[GelationEvent] = field(default_factory=list)
    typical_clusters: list[tuple[float, list[Component]]] = field(default_factory=list)
    z_particle_one: float = math.inf
    z_fallen_size: int = 0
    z_surplus: int = -1
    coupling: CouplingReport | None = None
    final: dict = field(default_factory=dict)

    @property
    def tau(self) -> np.ndarray:
        return np.array([e.time for e in self.gelation_events], dtype=float)

    def snapshot_at(self, t: float) -> Snapshot:
        for s in self.trajectory:
            if s.time == t:
                return s
        raise KeyError(f"no snapshot recorded at t={t}")


# ---------------------------------------------------------------------------
# activation stream


class ActivationStream:
    """Pair activations of ``n`` particles, each unordered pair at most once.

    The ``k``-th gap is exponential with rate ``(M - k + 1) / rate_scale``
    where ``M = n(n-1)/2``; ``rate_scale`` is ``N`` (each clock has rate
    ``1/N``).
    """

    def __init__(self, n: int, rate_scale: float | None = None):
        self.n = check_count(n, "n", minimum=1)
        self.rate_scale = float(self.n if rate_scale is None else rate_scale)
        self.table = np.full(64, K.EMPTY_KEY, dtype=np.int64)
        self.sint = np.zeros(K.N_STREAM_ISLOTS, dtype=np.int64)
        self.sflt = np.zeros(K.N_STREAM_FSLOTS, dtype=np.float64)

    @property
    def k(self) -> int:
        return int(self.sint[K.S_K])

    @property
    def clock(self) -> float:
        return float(self.sflt[K.S_CLOCK])

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    def _grow_table(self) -> None:
        new = np.full(2 * self.table.shape[0], K.EMPTY_KEY, dtype=np.int64)
        K.table_rehash(self.table, new)
        self.table = new

    def next_activation(self, rng) -> tuple[float, tuple[int, int]]:
        if 2 * (self.sint[K.S_FILL] + 1) > self.table.shape[0]:
            self._grow_table()
        ok = K.draw_activation(self.table, self.sint, self.sflt, rng, self.n,
                               self.rate_scale, True)
        if not ok:
            raise StreamExhausted(f"all {self.n_pairs} pairs activated")
        self.sint[K.S_PENDING] = 0
        t = float(self.sflt[K.S_PENDING_T])
        self.sflt[K.S_CLOCK] = t
        u, v = int(self.sint[K.S_PU]), int(self.sint[K.S_PV])
        return t, (min(u, v), max(u, v))


# ---------------------------------------------------------------------------
# replica state


class _Process:
    """One dynamic graph on ``n`` particles, advanced in time by the kernels."""

    def __init__(self, n, rate_scale, threshold, inert, track_edges, rng):
        self.n = n
        self.rate_scale = float(rate_scale)
        self.threshold = int(threshold)
        self.inert = bool(inert)
        self.track_edges = bool(track_edges)
        # solution-only sampling needs the gel to be inert
        self.thinned = self.inert and not self.track_edges
        self.rng = rng
        self.forest = ClusterForest(n, track_edges=track_edges)
        if self.track_edges:
            self.forest._ensure_edge_capacity(1024)
            self.table = np.full(2048, K.EMPTY_KEY, dtype=np.int64)
        else:
            self.table = np.full(1, K.EMPTY_KEY, dtype=np.int64)
        if self.thinned:
            self.nxt = np.arange(n, dtype=np.int64)
            self.sol = np.arange(n, dtype=np.int64)
            self.pos = np.arange(n, dtype=np.int64)
        self.sint = np.zeros(K.N_STREAM_ISLOTS, dtype=np.int64)
        self.sflt = np.zeros(K.N_STREAM_FSLOTS, dtype=np.float64)
        cap = n // max(threshold, 1) + 2
        self.ev_t = np.empty(cap, dtype=np.float64)
        self.ev_size = np.empty(cap, dtype=np.int64)
        self.ev_after = np.empty(cap, dtype=np.int64)

    @property
    def counters(self):
        return self.forest.counters

    @property
    def n_events(self) -> int:
        return int(self.counters[K.F_EVENTS])

    def advance(self, t_stop: float, stop_on_large: bool = False) -> int:
        f = self.forest
        while True:
            if self.thinned:
                code = K.advance_solution(
                    f.parent, f.size, f.frozen, f.edge_count, f.counters,
                    self.nxt, self.sol, self.pos, self.sint, self.sflt,
                    self.ev_t, self.ev_size, self.ev_after, self.rng,
                    t_stop, self.rate_scale, self.threshold, stop_on_large,
                )
            else:
                code = K.advance(
                    f.parent, f.size, f.frozen, f.edge_count, f.touched, f.counters,
                    f._eu, f._ev, self.table, self.sint, self.sflt,
                    self.ev_t, self.ev_size, self.ev_after, self.rng,
                    t_stop, self.n, self.rate_scale, self.threshold,
                    self.inert, self.track_edges, stop_on_large,
                )
            if code == K.GROW_TABLE:
                new = np.full(2 * self.table.shape[0], K.EMPTY_KEY, dtype=np.int64)
                K.table_rehash(self.table, new)
                self.table = new
            elif code == K.GROW_EDGES:
                f._ensure_edge_capacity(f._eu.shape[0])
            elif code == K.GROW_EVENTS:
                for name in ("ev_t", "ev_size", "ev_after"):
                    old = getattr(self, name)
                    new = np.empty(2 * old.shape[0], dtype=old.dtype)
                    new[: old.shape[0]] = old
                    setattr(self, name, new)
            else:
                return code

    def events(self, start: int = 0) -> list[GelationEvent]:
        return [
            GelationEvent(float(self.ev_t[i]), int(self.ev_size[i]), int(self.ev_after[i]))
            for i in range(start, self.n_events)
        ]


def _histogram(sizes: np.ndarray, m_cap: int) -> tuple[np.ndarray, int]:
    small = sizes[sizes <= m_cap]
    hist = np.bincount(small, minlength=m_cap + 1).astype(np.int64)
    return hist, int(sizes[sizes > m_cap].sum())


def _snapshot(t, forest, m_cap, events_so_far, gel_offset=0) -> Snapshot:
    hist, above = _histogram(forest.solution_cluster_sizes(), m_cap)
    return Snapshot(
        time=float(t),
        n_in_solution=forest.n_in_solution,
        gel_mass=forest.gel_mass + gel_offset,
        histogram=hist,
        mass_above_cap=above,
        events_so_far=int(events_so_far),
    )


def sample_typical_cluster(forest: ClusterForest, rng=None, size: int | None = None):
    """Component of a uniformly chosen in-solution particle, rooted there.

    Returns one :class:`Component`, or a list of ``size`` independent ones.
    """
    rng = check_rng(rng)
    if forest.n_in_solution < 1:
        raise ValueError("no particle in solution to sample")
    count = 1 if size is None else check_count(size, "size")
    picks = K.sample_solution_particles(forest.parent, forest.frozen, rng, count,
                                        forest.n_in_solution)
    comps = [forest.extract_component(int(v)) for v in picks]
    return comps[0] if size is None else comps


def coagulation_rate(histogram, n_in_solution: int, n_particles: int, threshold: int) -> float:
    """Total rate of coagulation events for an in-solution size histogram.

    ``histogram`` maps size to cluster count. Each cluster of size ``m`` below
    the threshold has ``m * (n_in_solution - m)`` relevant links, each ringing
    at rate ``1/N``; every merge is counted from both sides, hence the 1/2.
    """
    items = histogram.items() if isinstance(histogram, dict) else enumerate(histogram)
    total_mass = 0
    acc = 0
    for m, c in items:
        m, c = int(m), int(c)
        if c < 0 or (m < 1 and c):
            raise ValueError(f"invalid histogram entry {m}: {c}")
        total_mass += m * c
        if m < threshold:
            acc += c * m * (n_in_solution - m)
    if total_mass != n_in_solution:
        raise ValueError(
            f"histogram mass {total_mass} does not match n_in_solution={n_in_solution}"
        )
    return acc / (2.0 * n_particles)


# ---------------------------------------------------------------------------
# drivers


def run_sim(config: SimConfig) -> SimResult:
    """Simulate one replica in ``smoluchowski`` or ``flory`` mode up to ``t_max``."""
    if config.mode not in ("smoluchowski", "flory"):
        raise ConfigError("mode", f"run_sim handles smoluchowski or flory, got {config.mode!r}")
    dyn_ss, obs_ss = config.seed_sequence().spawn(2)
    rng = np.random.default_rng(dyn_ss)
    obs_rng = np.random.default_rng(obs_ss)
    n = config.n_particles
    inert = config.mode == "smoluchowski"
    proc = _Process(n, n, config.alpha, inert, config.tracks_edges, rng)
    result = SimResult(config=config)
    for s in config.sample_times:
        proc.advance(s)
        result.trajectory.append(_snapshot(s, proc.forest, config.m_cap, proc.n_events))
        if config.typical_samples_per_time:
            comps = (
                sample_typical_cluster(proc.forest, obs_rng, config.typical_samples_per_time)
                if proc.forest.n_in_solution else []
            )
            result.typical_clusters.append((s, comps))
    proc.advance(config.t_max)
    result.gelation_events = proc.events()
    c = proc.counters
    if inert and c[K.F_Z_SET]:
        result.z_particle_one = float(proc.sflt[K.S_Z_TIME])
        result.z_fallen_size = int(c[K.F_Z_SIZE])
        result.z_surplus = int(c[K.F_Z_SURPLUS])
    result.final = {
        "n_in_solution": int(c[K.F_SOLUTION]),
        "gel_mass": int(c[K.F_GEL]),
        "activations": int(proc.sint[K.S_K]) - int(proc.sint[K.S_PENDING]),
        "edges": int(c[K.F_EDGES]) if config.tracks_edges else None,
        "merges": int(c[K.F_MERGES]),
        "touched": int(c[K.F_TOUCHED]) if not proc.thinned else None,
        "stream": "thinned" if not config.tracks_edges else "exact",
    }
    return result


class _GraphFamily:
    """Lazily instantiated independent dynamic graphs ``G(n, k)``.

    Each graph lives on ``n`` particles with clocks of rate ``1/N`` and is
    run until its first large component. The graph indexed ``(n, k)`` is
    seeded from ``(seed, replica, n, k)``, so two constructions reading the
    same index see the same graph.
    """

    def __init__(self, config: SimConfig):
        self.config = config
        self.big_n = config.n_particles
        self.alpha = config.alpha
        self._seed = config.seed_sequence().entropy
        self._cache: dict[tuple[int, int], _Process] = {}

    def get(self, n: int, k: int) -> _Process:
        key = (n, k)
        proc = self._cache.get(key)
        if proc is None:
            ss = np.random.SeedSequence(self._seed, spawn_key=(self.config.replica, n, k))
            proc = _Process(n, self.big_n, self.alpha, True, False, np.random.default_rng(ss))
            self._cache[key] = proc
        return proc

    def discard(self, n: int, k: int) -> None:
        self._cache.pop((n, k), None)

    @staticmethod
    def has_large(proc: _Process) -> bool:
        return proc.n_events > 0


def _empty_snapshot(t, big_n, m_cap, events_so_far) -> Snapshot:
    return Snapshot(float(t), 0, big_n, np.zeros(m_cap + 1, dtype=np.int64), 0, events_so_far)


def run_alternative(config: SimConfig, always_first: bool = False,
                    stop_on_rejection: bool = False) -> SimResult:
    """Coupled construction from independent dynamic graphs.

    Step 0 runs ``G(N, 1)`` until its first large component at ``t_1``.
    Step ``i`` inspects ``G(N_i, k)`` for ``k = 1, 2, ...``, keeps the first
    one with no large component at ``t_i`` and runs it on until its own first
    large component. With ``always_first`` the first graph is always kept and
    the next time is ``max(sigma(N_i), t_i)`` (the simpler comparison
    process). ``stop_on_rejection`` ends the run as soon as ``K(i) != 1``
    occurs before the horizon, which is all the coupling check needs.

    The coupling horizon is ``t_max``.
    """
    if config.mode != "alternative":
        config = replace(config, mode="alternative")
    fam = _GraphFamily(config)
    big_n, t_max, m_cap = config.n_particles, config.t_max, config.m_cap
    samples = config.sample_times
    result = SimResult(config=config)
    events: list[GelationEvent] = []
    k_values: list[int] = []
    first_rej, first_rej_t = None, math.inf
    n_i, t_i, i, si = big_n, 0.0, 0, 0
    while t_i <= t_max:
        if n_i == 0:
            while si < len(samples):
                result.trajectory.append(_empty_snapshot(samples[si], big_n, m_cap, len(events)))
                si += 1
            break
        k = 1
        proc = fam.get(n_i, 1)
        if i > 0:
            proc.advance(t_i, stop_on_large=True)
            if not always_first:
                while fam.has_large(proc):
                    fam.discard(n_i, k)
                    k += 1
                    proc = fam.get(n_i, k)
                    proc.advance(t_i, stop_on_large=True)
        k_values.append(k)
        if k != 1 and first_rej is None:
            first_rej, first_rej_t = i, t_i
            if stop_on_rejection:
                break
        stopped = fam.has_large(proc)
        while not stopped and si < len(samples):
            s = samples[si]
            if proc.advance(s, stop_on_large=True) == K.STOPPED_LARGE:
                stopped = True
                break
            result.trajectory.append(_snapshot(s, proc.forest, m_cap, len(events), big_n - n_i))
            si += 1
        if not stopped:
            stopped = proc.advance(t_max, stop_on_large=True) == K.STOPPED_LARGE
        if not stopped:
            break
        ev = proc.events()[0]
        sigma = max(ev.time, t_i)
        fam.discard(n_i, k)
        n_i -= ev.fallen_size
        events.append(GelationEvent(sigma, ev.fallen_size, n_i))
        t_i, i = sigma, i + 1
    result.gelation_events = [e for e in events if e.time <= t_max]
    coupled = first_rej is None or first_rej_t > t_max
    result.coupling = CouplingReport(first_rej, first_rej_t, coupled, tuple(k_values), t_max)
    result.final = {"n_in_solution": n_i, "gel_mass": big_n - n_i, "steps": i}
    return result


def simulate(config: SimConfig) -> SimResult:
    """Dispatch on ``config.mode``."""
    if config.mode == "alternative":
        return run_alternative(config)
    return run_sim(config)


def run_ensemble(config: SimConfig, replicas: int, n_jobs: int = 1) -> list[SimResult]:
    """Independent replicas ``0 .. replicas-1`` of ``config`` (order preserved)."""
    replicas = check_count(replicas, "replicas", minimum=1)
    configs = [replace(config, replica=r) for r in range(replicas)]
    if n_jobs == 1:
        return [simulate(c) for c in configs]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(simulate)(c) for c in configs)


class CoagulationModel(BaseEstimator):
    """Estimator-style wrapper around :func:`run_ensemble`.

    Parameters mirror :class:`SimConfig`; ``fit`` runs the replicas and
    stores them in ``results_``.

    Examples
    --------
    >>> model = CoagulationModel(n_particles=1000, t_max=2.0, sample_times=(1.0, 2.0))
    >>> model.fit().results_[0].trajectory[-1].time
    2.0
    """

    def __init__(self, n_particles=10_000, threshold=None, threshold_rule=(0.75, 0.0),
                 t_max=4.0, mode="smoluchowski", seed=0, sample_times=(), m_cap=100,
                 typical_samples_per_time=0, track_edges=None, replicas=1, n_jobs=1):
        self.n_particles = n_particles
        self.threshold = threshold
        self.threshold_rule = threshold_rule
        self.t_max = t_max
        self.mode = mode
        self.seed = seed
        self.sample_times = sample_times
        self.m_cap = m_cap
        self.typical_samples_per_time = typical_samples_per_time
        self.track_edges = track_edges
        self.replicas = replicas
        self.n_jobs = n_jobs

    def _config(self) -> SimConfig:
        return SimConfig(
            n_particles=self.n_particles, threshold=self.threshold,
            threshold_rule=tuple(self.threshold_rule), t_max=self.t_max, mode=self.mode,
            seed=self.seed, sample_times=tuple(self.sample_times), m_cap=self.m_cap,
            typical_samples_per_time=self.typical_samples_per_time,
            track_edges=self.track_edges,
        )

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        self.results_ = run_ensemble(self.config_, self.replicas, self.n_jobs)
        return self


def small_system_states(n: int, threshold: int, t: float, mode: str = "smoluchowski",
                        stream: str = "exact", count: int = 1000, seed=None) -> np.ndarray:
    """Encoded final partitions of many tiny replicas (see :func:`decode_state`).

    Uses the compiled event loops directly so that ``10**6`` replicas of a
    handful of particles take seconds.
    """
    n = check_count(n, "n", minimum=2)
    if n > 8:
        raise ConfigError("n", "state codes are meant for n <= 8")
    if mode not in ("smoluchowski", "flory"):
        raise ConfigError("mode", f"unsupported mode {mode!r}")
    if stream not in ("exact", "thinned"):
        raise ConfigError("stream", f"expected 'exact' or 'thinned', got {stream!r}")
    return K.small_batch(n, check_count(threshold, "threshold", minimum=1), check_time(t),
                         mode == "smoluchowski", stream == "exact",
                         check_count(count, "count"), check_rng(seed))


def encode_state(n: int, solution_sizes, large_sizes=()) -> int:
    """Integer code of a partition given in-solution and large cluster sizes."""
    code = 0
    for s in solution_sizes:
        code += (n + 1) ** (s - 1)
    for s in large_sizes:
        code += (n + 1) ** (n + s - 1)
    return code


def decode_state(n: int, code: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Inverse of :func:`encode_state`: sorted (in-solution sizes, large sizes)."""
    digits = []
    for _ in range(2 * n):
        code, d = divmod(code, n + 1)
        digits.append(d)
    sol = tuple(sorted(s + 1 for s in range(n) for _ in range(digits[s])))
    big = tuple(sorted(s + 1 for s in range(n) for _ in range(digits[n + s])))
    return sol, big


def small_solution_graphs(n: int, threshold: int, t: float, count: int = 1000,
                          seed=None) -> tuple[np.ndarray, np.ndarray]:
    """In-solution sets and in-solution edge sets of many tiny threshold-model replicas.

    Both come back as bitmasks: particle ``i`` is bit ``i`` of the set mask,
    pair ``(i, j)`` with ``i < j`` is bit ``i*n + j`` of the edge mask.
    """
    n = check_count(n, "n", minimum=2)
    if n > 7:
        raise ConfigError("n", "edge bitmasks are limited to n <= 7")
    return K.small_batch_graphs(n, check_count(threshold, "threshold", minimum=1),
                                check_time(t), check_count(count, "count"), check_rng(seed))
