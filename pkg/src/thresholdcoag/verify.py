"""Acceptance checks at desk scale, shared by the command line and the test suite.

Each ``criterion_*`` function returns a :class:`CriterionResult` holding one
or more :class:`~thresholdcoag.stats.ComparisonReport`. Simulation ensembles
are cached on a :class:`VerifyContext` so criteria reading the same runs do
not repeat them.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import engine, exploration, kinetics, small_exact, stats, trees
from .engine import SimConfig, run_ensemble

GROUPED_TIMES = (0.5, 1.0, 1.5, 2.0, 3.0, 4.0)


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    error: str | None = None
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.checks) and all(c.passed for c in self.checks)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = "; ".join(
            f"{c.name}: {c.empirical:.6g} vs {c.theoretical:.6g}" for c in self.checks if not c.passed
        )
        tail = f" ({self.error})" if self.error else (f" [{worst}]" if worst else "")
        return f"criterion {self.number:2d} {status}: {self.title}{tail}"

    def to_dict(self) -> dict:
        return {
            "criterion": self.number,
            "title": self.title,
            "passed": self.passed,
            "error": self.error,
            "seconds": round(self.seconds, 3),
            "checks": [c.to_dict() for c in self.checks],
        }


def derive_seed(seed: int, tag: int) -> int:
    """Independent 63-bit seed for ensemble ``tag``."""
    state = np.random.SeedSequence([int(seed), int(tag)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 ^ int(state[1])


@dataclass
class VerifyContext:
    """Scale and seeds of an acceptance run.

    ``quick`` drops ``N`` to ``1e5``, divides replica counts by five (at
    least 20) and doubles every tolerance band.
    """

    n: int = 10**6
    seed: int = 0
    quick: bool = False
    n_jobs: int = 1
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.quick:
            self.n = min(self.n, 10**5)

    @property
    def widen(self) -> float:
        return 2.0 if self.quick else 1.0

    def replicas(self, count: int) -> int:
        return max(20, count // 5) if self.quick else count

    def _ensemble(self, key, config: SimConfig, replicas: int) -> stats.ReplicaEnsemble:
        if key not in self._cache:
            results = run_ensemble(config, replicas, self.n_jobs)
            self._cache[key] = stats.ReplicaEnsemble(config, results)
        return self._cache[key]

    def mass_ensemble(self) -> stats.ReplicaEnsemble:
        """Partition-level runs to ``t = 4`` (500 replicas; criteria 1-4, 6-8)."""
        cfg = SimConfig(self.n, threshold_rule=(0.75, 0.0), t_max=4.0,
                        seed=derive_seed(self.seed, 1), sample_times=GROUPED_TIMES,
                        m_cap=100, track_edges=False)
        return self._ensemble("mass", cfg, self.replicas(500))

    def default_ensemble(self) -> stats.ReplicaEnsemble:
        """First 100 replicas of the mass ensemble (the default replica count)."""
        return self.mass_ensemble().head(self.replicas(100))

    def typical_ensemble(self) -> stats.ReplicaEnsemble:
        cfg = SimConfig(self.n, threshold_rule=(0.75, 0.0), t_max=2.0,
                        seed=derive_seed(self.seed, 2), sample_times=(2.0,), m_cap=10,
                        typical_samples_per_time=100, track_edges=True)
        return self._ensemble("typical", cfg, self.replicas(100))


def _fraction_check(name, hits, target, widen):
    frac = float(np.mean(hits)) if len(hits) else math.nan
    return stats.ComparisonReport(name, frac, math.nan, target, band=(1 - target) * (widen - 1),
                                  k_sigma=0.0, sided="lower", details={"count": int(len(hits))})


def criterion_1(ctx: VerifyContext) -> CriterionResult:
    ens = ctx.default_ensemble()
    n, alpha = ens.n_particles, ens.alpha
    summ = stats.tau_statistics(ens, delta=0.9)
    scale = alpha / (2 * n)
    mean_check = stats.ComparisonReport(
        "mean(tau_1) - 1", summ.mean - 1, summ.stderr, scale, band=0.5 * scale * ctx.widen,
        k_sigma=0.0, details={"alpha": alpha, "N": n, "replicas": ens.replica_count},
    )
    window = _fraction_check("tau_1 within [sigma_-, sigma_+] (delta 0.9)", summ.in_window, 0.95, ctx.widen)
    window.details.update(sigma_minus=summ.bounds[0], sigma_plus=summ.bounds[1])
    return CriterionResult(1, "first gelation time", [mean_check, window])


def criterion_2(ctx: VerifyContext) -> CriterionResult:
    ens = ctx.default_ensemble()
    a = ens.alpha
    sizes = stats.tau_statistics(ens).fallen_sizes
    hits = (sizes >= a) & (sizes <= 1.5 * a)
    return CriterionResult(2, "first fallen size", [_fraction_check("fallen size in [alpha, 1.5 alpha]", hits, 0.95, ctx.widen)])


def criterion_3(ctx: VerifyContext) -> CriterionResult:
    ens = ctx.default_ensemble()
    band = 2 * ens.alpha / ens.n_particles * ctx.widen
    checks = []
    for t in (0.5, 1.5, 2.0, 3.0):
        mean, se = stats.mass_curve(ens, t)
        checks.append(stats.ComparisonReport(f"n_t at t={t}", mean, se, kinetics.mass_in_solution(t),
                                             band=band, k_sigma=3.0, combine="sum"))
    return CriterionResult(3, "mass in solution", checks)


def criterion_4(ctx: VerifyContext) -> CriterionResult:
    ens = ctx.default_ensemble()
    checks = []
    for t in (0.5, 2.0):
        est = stats.estimate_concentrations(ens, t, (1, 2, 3, 5))
        for m, (mean, se) in est.items():
            theo = kinetics.smoluchowski_exact_mono(t, m)
            checks.append(stats.ComparisonReport(f"c_t(m) at t={t}, m={m}", mean, se, theo,
                                                 band=0.05 * theo * ctx.widen, k_sigma=3.0))
    return CriterionResult(4, "cluster concentrations", checks)


def criterion_5(ctx: VerifyContext) -> CriterionResult:
    ens = ctx.typical_ensemble()
    dist = stats.typical_cluster_distribution(ens, 2.0)
    small = [tr.code for size, group in trees.enumerate_rooted_trees(3).items() for tr in group]
    exact = {code: trees.gw_tree_prob(1.0, code) for code in small}
    tv = stats.tv_distance(dist.frequencies, exact, support=small)
    return CriterionResult(5, "typical cluster law", [
        stats.ComparisonReport("TV to critical GW (sizes <= 3)", tv, math.nan, 0.0,
                               band=0.02 * ctx.widen, k_sigma=0.0, sided="upper",
                               details={"samples": dist.samples,
                                        "empirical": {k: dist.frequencies.get(k, 0.0) for k in small},
                                        "exact": exact}),
        stats.ComparisonReport("cycle-bin frequency", dist.cycle_frequency, math.nan, 0.0,
                               band=0.005 * ctx.widen, k_sigma=0.0, sided="upper"),
    ])


def criterion_6(ctx: VerifyContext) -> CriterionResult:
    ens = ctx.default_ensemble()
    emp = stats.tail_mass_empirical(ens, 2.0, (50, 100))
    checks = []
    for k, (mean, se) in emp.items():
        exact, _ = kinetics.tail_mass(2.0, k)
        checks.append(stats.ComparisonReport(f"tail mass at t=2, k={k}", mean, se, exact,
                                             band=0.0, k_sigma=3.0 * ctx.widen))
    exact, asym = kinetics.tail_mass(2.0, 100)
    checks.append(stats.ComparisonReport("exact/asymptote at k=100", exact / asym, math.nan, 1.0,
                                         band=0.03, k_sigma=0.0))
    return CriterionResult(6, "tail mass", checks)


def criterion_7(ctx: VerifyContext) -> CriterionResult:
    ens = ctx.default_ensemble()
    gaps = stats.gap_statistics(ens, (1.5, 2.5))
    g_hits = (gaps.gaps >= 0.5) & (gaps.gaps <= 1.5)
    d_hits = (gaps.drops >= 1.0) & (gaps.drops <= 1.5)
    return CriterionResult(7, "gaps and mass drops", [
        _fraction_check("normalized gap in [0.5, 1.5]", g_hits, 0.95, ctx.widen),
        _fraction_check("normalized drop in [1, 1.5]", d_hits, 0.95, ctx.widen),
    ])


def criterion_8(ctx: VerifyContext) -> CriterionResult:
    ens = ctx.mass_ensemble()
    curve = stats.z_survival_curve(ens, (1.5, 2.0, 4.0))
    checks = [
        stats.ComparisonReport(f"P(Z > {t})", p, se, 1.0 / t, band=0.03 * ctx.widen,
                               k_sigma=3.0, combine="sum", details={"replicas": ens.replica_count})
        for t, (p, se) in curve.items()
    ]
    return CriterionResult(8, "law of particle 1's gel time", checks)


def coupling_failures(n: int, exponent: float, horizon: float, replicas: int, seed: int,
                      n_jobs: int = 1) -> np.ndarray:
    """Per-replica flags: did the coupled construction reject before ``horizon``?"""
    cfg = SimConfig(n, threshold_rule=(exponent, 0.0), t_max=horizon, mode="alternative", seed=seed)

    def one(r):
        from dataclasses import replace

        res = engine.run_alternative(replace(cfg, replica=r), stop_on_rejection=True)
        return not res.coupling.coupled

    if n_jobs == 1:
        flags = [one(r) for r in range(replicas)]
    else:
        from joblib import Parallel, delayed

        flags = Parallel(n_jobs=n_jobs)(delayed(one)(r) for r in range(replicas))
    return np.array(flags, dtype=bool)


def criterion_9(ctx: VerifyContext) -> CriterionResult:
    reps = ctx.replicas(200)
    hi = coupling_failures(ctx.n, 0.85, 3.0, reps, derive_seed(ctx.seed, 9), ctx.n_jobs)
    lo = coupling_failures(ctx.n, 0.70, 3.0, reps, derive_seed(ctx.seed, 10), ctx.n_jobs)
    f_hi, f_lo = float(hi.mean()), float(lo.mean())
    return CriterionResult(9, "coupling event", [
        stats.ComparisonReport("failure frequency at alpha=N^0.85", f_hi, math.nan, 0.0,
                               band=0.1 * ctx.widen, k_sigma=0.0, sided="upper",
                               details={"replicas": reps}),
        stats.ComparisonReport("failure(N^0.85) - failure(N^0.70)", f_hi - f_lo, math.nan, 0.0,
                               band=0.0, k_sigma=0.0, sided="upper",
                               details={"failure_085": f_hi, "failure_070": f_lo}),
    ])


def criterion_10(ctx: VerifyContext) -> CriterionResult:
    n = 10**6
    rng = np.random.default_rng(derive_seed(ctx.seed, 11))
    runs = ctx.replicas(100)
    eps = 0.03
    sizes = np.array([exploration.largest_two_components(n, (1 + eps) / n, rng) for _ in range(runs)])
    c1_ok = (sizes[:, 0] >= 1.8 * eps * n) & (sizes[:, 0] <= 2.2 * eps * n)
    c2_ok = sizes[:, 1] <= 0.2 * eps * n
    eps_t = n ** -0.25
    steps = int(math.floor(3 * n * eps_t)) + 1
    dev = np.array([
        exploration.tube_deviation(exploration.explore(n, (1 + eps_t) / n, steps, rng), 1.0, eps_t)
        for _ in range(runs)
    ])
    joint = _fraction_check("|C1| in [1.8, 2.2] eps n and |C2| <= 0.2 eps n", c1_ok & c2_ok, 0.95, ctx.widen)
    joint.details.update(
        c1_fraction=float(c1_ok.mean()), c2_fraction=float(c2_ok.mean()),
        c1_mean=float(sizes[:, 0].mean()), c1_sd=float(sizes[:, 0].std(ddof=1)),
    )
    tube = _fraction_check("tube deviation < 0.2", dev < 0.2, 0.95, ctx.widen)
    tube.details.update(mean_deviation=float(dev.mean()))
    return CriterionResult(10, "near-critical random graph", [joint, tube])


def criterion_11(ctx: VerifyContext) -> CriterionResult:
    grid = np.linspace(0.0, 0.9, 19)
    ode = kinetics.solve_smoluchowski_ode(kinetics.monodisperse(), 2000, grid)
    exact = kinetics.explicit_table(grid, 50)
    err = float(np.max(np.abs(ode.values[:, :50] - exact.values)))
    flory = kinetics.solve_flory_ode(kinetics.monodisperse(), 2000, [0.0, 2.0])
    mass = float(flory.mass[-1])
    target = kinetics.flory_mass(2.0)
    return CriterionResult(11, "kinetic equations", [
        stats.ComparisonReport("sup |ODE - explicit|, t <= 0.9, m <= 50", err, math.nan, 0.0,
                               band=1e-6, k_sigma=0.0, sided="upper"),
        stats.ComparisonReport("Flory mass at t=2", mass, math.nan, target, band=0.01 * target,
                               k_sigma=0.0),
    ])


SMALL_CASES = (
    # (n, threshold, t, mode, stream)
    (5, 3, 1.0, "smoluchowski", "exact"),
    (5, 3, 1.0, "smoluchowski", "thinned"),
    (4, 2, 0.8, "smoluchowski", "exact"),
    (5, 3, 1.0, "flory", "exact"),
    (5, 3, 1.5, "flory", "thinned"),
)


def small_case_check(n, threshold, t, mode, stream, count, seed) -> stats.ComparisonReport:
    codes = engine.small_system_states(n, threshold, t, mode, stream, count, seed)
    observed = Counter(engine.decode_state(n, c) for c in codes.tolist())
    law = small_exact.partition_law(n, threshold, t, mode)
    chi = stats.chi_square_gof(observed, law)
    return stats.ComparisonReport(
        f"{mode}/{stream} n={n} alpha={threshold} t={t}: chi-square p-value", chi.p_value,
        math.nan, 1e-3, k_sigma=0.0, sided="lower",
        details={"statistic": chi.statistic, "dof": chi.dof, "replicas": count},
    )


def criterion_12(ctx: VerifyContext) -> CriterionResult:
    count = 200_000 if ctx.quick else 10**6
    checks = [
        small_case_check(*case, count, derive_seed(ctx.seed, 100 + i))
        for i, case in enumerate(SMALL_CASES)
    ]
    rng = np.random.default_rng(derive_seed(ctx.seed, 12))
    mismatches = 0
    trials = 2000
    for _ in range(trials):
        n = int(rng.integers(1, 13))
        p = float(rng.random())
        edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
        walk_sizes = sorted(exploration.explore_graph(n, edges).excursion_sizes.tolist())
        comp_sizes = sorted(len(c) for c in small_exact.components(range(n), edges))
        mismatches += walk_sizes != comp_sizes
    checks.append(stats.ComparisonReport("excursion vs component size mismatches", mismatches,
                                         math.nan, 0.0, k_sigma=0.0, details={"graphs": trials}))
    gap = 0.0
    enum = trees.enumerate_rooted_trees(6)
    for lam in (0.5, 1.0):
        for m, group in enum.items():
            total = sum(trees.gw_tree_prob(lam, tr) for tr in group)
            gap = max(gap, abs(total - kinetics.borel_pmf(lam, m)))
    checks.append(stats.ComparisonReport("max |sum GW tree prob - Borel|, sizes <= 6", gap,
                                         math.nan, 0.0, band=1e-10, k_sigma=0.0, sided="upper"))
    return CriterionResult(12, "small-system exactness", checks)


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}


def run_criterion(number: int, ctx: VerifyContext) -> CriterionResult:
    """Run one criterion, turning exceptions into a failed result."""
    start = time.perf_counter()
    func = CRITERIA[number]
    try:
        res = func(ctx)
    except (MemoryError, ValueError, RuntimeError) as exc:
        res = CriterionResult(number, func.__name__, error=f"{type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - start
    return res


def run_all(ctx: VerifyContext, numbers=None, log=None) -> list[CriterionResult]:
    out = []
    for i in numbers or CRITERIA:
        res = run_criterion(i, ctx)
        if log is not None:
            log(res.summary())
        out.append(res)
    return out
