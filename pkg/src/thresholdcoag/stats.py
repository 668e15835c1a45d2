"""Ensemble observables with Monte Carlo uncertainty and comparison helpers."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from ._validation import ConfigError
from .engine import SimConfig, SimResult
from .exploration import gelation_window_bounds
from .trees import canonicalize

NOT_A_TREE = "cycle"


@dataclass
class ReplicaEnsemble:
    """Replicas of one configuration (they differ only by replica index)."""

    config: SimConfig
    results: list[SimResult]

    def __post_init__(self):
        if not self.results:
            raise ValueError("empty ensemble")

    @property
    def replica_count(self) -> int:
        return len(self.results)

    @property
    def n_particles(self) -> int:
        return self.config.n_particles

    @property
    def alpha(self) -> int:
        return self.config.alpha

    def head(self, k: int) -> "ReplicaEnsemble":
        return ReplicaEnsemble(self.config, self.results[:k])

    def snapshots(self, t: float):
        try:
            return [r.snapshot_at(t) for r in self.results]
        except KeyError:
            raise ConfigError("t", f"time {t} was not a sample time") from None


@dataclass
class ComparisonReport:
    """One empirical-vs-theory check.

    Passes when the deviation is within ``band`` or within
    ``k_sigma * stderr`` (``combine="or"``), or within their sum
    (``combine="sum"``). The deviation is ``|empirical - theoretical|``, or
    only its excess above (``sided="upper"``) or below (``sided="lower"``)
    the theoretical value.
    """

    name: str
    empirical: float
    stderr: float
    theoretical: float
    band: float = 0.0
    k_sigma: float = 3.0
    combine: str = "or"
    sided: str = "two"
    details: dict = field(default_factory=dict)

    @property
    def deviation(self) -> float:
        diff = self.empirical - self.theoretical
        if self.sided == "upper":
            return max(diff, 0.0)
        if self.sided == "lower":
            return max(-diff, 0.0)
        return abs(diff)

    @property
    def passed(self) -> bool:
        if not (math.isfinite(self.empirical) and math.isfinite(self.theoretical)):
            return False
        noise = self.k_sigma * (self.stderr if math.isfinite(self.stderr) else 0.0)
        if self.combine == "sum":
            return self.deviation <= self.band + noise
        return self.deviation <= self.band or self.deviation <= noise

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "empirical": self.empirical,
            "stderr": self.stderr,
            "theoretical": self.theoretical,
            "band": self.band,
            "k_sigma": self.k_sigma,
            "combine": self.combine,
            "sided": self.sided,
            "passed": self.passed,
            "details": self.details,
        }


def mean_stderr(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), se


def estimate_concentrations(ensemble: ReplicaEnsemble, t: float, m_range) -> dict[int, tuple[float, float]]:
    """Mean and standard error of ``count(m) / N`` at sample time ``t``."""
    snaps = ensemble.snapshots(t)
    n = ensemble.n_particles
    out = {}
    for m in m_range:
        if not 1 <= m <= ensemble.config.m_cap:
            raise ConfigError("m", f"size {m} outside the tabulated range 1..{ensemble.config.m_cap}")
        out[int(m)] = mean_stderr([s.histogram[m] / n for s in snaps])
    return out


def mass_curve(ensemble: ReplicaEnsemble, t: float) -> tuple[float, float]:
    """Mean and standard error of the in-solution fraction at ``t``."""
    n = ensemble.n_particles
    return mean_stderr([s.n_in_solution / n for s in ensemble.snapshots(t)])


@dataclass
class TauSummary:
    mean: float
    stderr: float
    taus: np.ndarray
    fallen_sizes: np.ndarray
    in_window: np.ndarray
    bounds: tuple[float, float, float, float]


def tau_statistics(ensemble: ReplicaEnsemble, delta: float = 0.9) -> TauSummary:
    """First gelation times, first fallen sizes and their bracketing windows."""
    firsts = []
    for r in ensemble.results:
        if not r.gelation_events:
            raise ValueError(f"replica {r.config.replica} has no gelation event")
        firsts.append(r.gelation_events[0])
    taus = np.array([e.time for e in firsts])
    sizes = np.array([e.fallen_size for e in firsts])
    n = ensemble.n_particles
    bounds = gelation_window_bounds(n, n, ensemble.alpha, delta)
    in_window = (taus >= bounds[0]) & (taus <= bounds[1])
    mean, se = mean_stderr(taus)
    return TauSummary(mean, se, taus, sizes, in_window, bounds)


@dataclass
class GapSummary:
    gaps: np.ndarray
    drops: np.ndarray
    times: np.ndarray

    def fraction_within(self, gap_range, drop_range) -> tuple[float, float]:
        g = np.mean((self.gaps >= gap_range[0]) & (self.gaps <= gap_range[1]))
        d = np.mean((self.drops >= drop_range[0]) & (self.drops <= drop_range[1]))
        return float(g), float(d)


def gap_statistics(ensemble: ReplicaEnsemble, window=(1.5, 2.5)) -> GapSummary:
    """Normalized gaps ``(tau_{i+1}-tau_i) N n_i**2 / alpha`` and drops ``(n_i - n_{i+1}) N / alpha``.

    ``n_i`` is the in-solution fraction right after event ``i``; only events
    with ``tau_i`` inside ``window`` and a recorded successor count.
    """
    n, alpha = ensemble.n_particles, ensemble.alpha
    gaps, drops, times = [], [], []
    for r in ensemble.results:
        ev = r.gelation_events
        for a, b in zip(ev, ev[1:]):
            if window[0] <= a.time <= window[1]:
                frac = a.n_after / n
                gaps.append((b.time - a.time) * n * frac**2 / alpha)
                drops.append((a.n_after - b.n_after) / alpha)
                times.append(a.time)
    if len(gaps) < 2:
        raise ValueError(f"only {len(gaps)} events in window {window}")
    return GapSummary(np.array(gaps), np.array(drops), np.array(times))


@dataclass
class TypicalDistribution:
    frequencies: dict[str, float]
    cycle_frequency: float
    samples: int
    size_counts: dict[int, int]


def typical_cluster_distribution(ensemble: ReplicaEnsemble, t: float) -> TypicalDistribution:
    """Pooled frequencies of canonical codes of sampled typical clusters at ``t``."""
    codes: Counter = Counter()
    sizes: Counter = Counter()
    total = 0
    for r in ensemble.results:
        for time, comps in r.typical_clusters:
            if time != t:
                continue
            for comp in comps:
                tree = canonicalize(comp)
                codes[tree.code if tree is not None else NOT_A_TREE] += 1
                sizes[comp.size] += 1
                total += 1
    if total == 0:
        raise ValueError(f"no typical clusters sampled at t={t}")
    freqs = {k: v / total for k, v in codes.items()}
    return TypicalDistribution(freqs, freqs.get(NOT_A_TREE, 0.0), total, dict(sizes))


def z_survival_curve(ensemble: ReplicaEnsemble, t_grid) -> dict[float, tuple[float, float]]:
    """Fraction of replicas whose particle 1 is still in solution at each ``t``."""
    z = np.array([r.z_particle_one for r in ensemble.results])
    out = {}
    for t in t_grid:
        p = float(np.mean(z > t))
        out[float(t)] = (p, math.sqrt(p * (1 - p) / z.size))
    return out


@dataclass
class SurplusBin:
    z_low: float
    z_high: float
    z_mean: float
    statistic: float
    stderr: float
    expected: float
    count: int


def surplus_statistic(ensemble: ReplicaEnsemble, n_bins: int = 4,
                      min_per_bin: int = 50, z_range=None) -> list[SurplusBin]:
    """``(N**2 / alpha**3) * surplus`` of particle 1's fallen cluster, in equal-count ``Z`` bins.

    ``expected`` is the bin average of ``Z**2 / 12``. ``z_range`` keeps only
    replicas whose ``Z`` lies in the closed interval before binning.
    """
    n, alpha = ensemble.n_particles, ensemble.alpha
    lo, hi = (-math.inf, math.inf) if z_range is None else z_range
    rows = [(r.z_particle_one, r.z_surplus) for r in ensemble.results
            if math.isfinite(r.z_particle_one) and r.z_surplus >= 0
            and lo <= r.z_particle_one <= hi]
    if len(rows) < n_bins * min_per_bin:
        raise ValueError(f"{len(rows)} fallen replicas for {n_bins} bins of {min_per_bin}")
    rows.sort()
    z = np.array([a for a, _ in rows])
    s = np.array([b for _, b in rows], dtype=float) * n**2 / alpha**3
    out = []
    for idx in np.array_split(np.arange(z.size), n_bins):
        mean, se = mean_stderr(s[idx])
        out.append(SurplusBin(float(z[idx[0]]), float(z[idx[-1]]), float(z[idx].mean()),
                              mean, se, float(np.mean(z[idx] ** 2) / 12), int(idx.size)))
    return out


def tail_mass_empirical(ensemble: ReplicaEnsemble, t: float, k_list) -> dict[int, tuple[float, float]]:
    """Mean and standard error of ``sum_{m>=k} m c_t(m)`` for each ``k``."""
    k_list = [int(k) for k in k_list]
    if max(k_list) > ensemble.config.m_cap:
        raise ConfigError("m_cap", f"m_cap={ensemble.config.m_cap} below k={max(k_list)}")
    n = ensemble.n_particles
    snaps = ensemble.snapshots(t)
    out = {}
    for k in k_list:
        sizes = np.arange(k)
        vals = [(s.n_in_solution - int(sizes @ s.histogram[:k])) / n for s in snaps]
        out[k] = mean_stderr(vals)
    return out


def tv_distance(empirical: dict, exact: dict, support=None) -> float:
    """Total variation distance between two distributions.

    Both are probability laws, possibly listed only in part: whatever mass
    lies outside ``support`` (listed or not) forms one remainder bucket.
    Without ``support`` the union of keys is used.
    """
    if support is None:
        support = set(empirical) | set(exact)
    support = list(dict.fromkeys(support))
    p = np.array([empirical.get(k, 0.0) for k in support])
    q = np.array([exact.get(k, 0.0) for k in support])
    rest_p = max(1.0 - p.sum(), 0.0)
    rest_q = max(1.0 - q.sum(), 0.0)
    return float(0.5 * (np.abs(p - q).sum() + abs(rest_p - rest_q)))


@dataclass
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float


def chi_square_gof(observed: dict, expected_probs: dict, min_expected: float = 5.0) -> ChiSquareResult:
    """Pearson goodness of fit, pooling outcomes with expected count below ``min_expected``.

    Observed outcomes absent from ``expected_probs`` make the test fail
    outright (p-value 0).
    """
    total = sum(observed.values())
    if total == 0:
        raise ValueError("no observations")
    if set(observed) - set(expected_probs):
        return ChiSquareResult(math.inf, 0, 0.0)
    keys = sorted(expected_probs, key=lambda k: expected_probs[k], reverse=True)
    obs, exp = [], []
    pool_o = pool_e = 0.0
    for k in keys:
        e = expected_probs[k] * total
        if e >= min_expected:
            obs.append(observed.get(k, 0))
            exp.append(e)
        else:
            pool_o += observed.get(k, 0)
            pool_e += e
    if pool_e > 0:
        obs.append(pool_o)
        exp.append(pool_e)
    obs, exp = np.array(obs, float), np.array(exp, float)
    exp *= obs.sum() / exp.sum()
    if obs.size < 2:
        return ChiSquareResult(0.0, 0, 1.0)
    stat, p = sps.chisquare(obs, exp)
    return ChiSquareResult(float(stat), int(obs.size - 1), float(p))


def chi_square_two_sample(a: dict, b: dict, min_expected: float = 5.0) -> ChiSquareResult:
    """Homogeneity test of two count tables, pooling sparse outcomes."""
    keys = sorted(set(a) | set(b), key=lambda k: a.get(k, 0) + b.get(k, 0), reverse=True)
    na, nb = sum(a.values()), sum(b.values())
    rows, pool = [], [0, 0]
    for k in keys:
        x, y = a.get(k, 0), b.get(k, 0)
        if min(na, nb) * (x + y) / (na + nb) >= min_expected:
            rows.append([x, y])
        else:
            pool[0] += x
            pool[1] += y
    if sum(pool):
        rows.append(pool)
    if len(rows) < 2:
        return ChiSquareResult(0.0, 0, 1.0)
    stat, p, dof, _ = sps.chi2_contingency(np.array(rows).T, correction=False)
    return ChiSquareResult(float(stat), int(dof), float(p))
