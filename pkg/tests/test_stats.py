from __future__ import annotations

import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from thresholdcoag import kinetics, stats, trees
from thresholdcoag._validation import ConfigError
from thresholdcoag.engine import GelationEvent, SimConfig, SimResult, run_ensemble
from thresholdcoag.stats import ComparisonReport, ReplicaEnsemble

N = 20_000


@pytest.fixture(scope="module")
def ensemble():
    cfg = SimConfig(N, t_max=4.0, seed=12, sample_times=(0.0, 0.5, 1.0, 2.0, 4.0), m_cap=N)
    return ReplicaEnsemble(cfg, run_ensemble(cfg, 200))


@pytest.fixture(scope="module")
def typical():
    cfg = SimConfig(N, t_max=2.0, seed=13, sample_times=(0.0, 0.5, 2.0),
                    typical_samples_per_time=100, m_cap=N)
    return ReplicaEnsemble(cfg, run_ensemble(cfg, 100))


def test_comparison_report_rules():
    assert ComparisonReport("a", 1.04, 0.1, 1.0, band=0.05).passed
    assert ComparisonReport("a", 1.2, 0.1, 1.0, band=0.05, k_sigma=3).passed
    assert not ComparisonReport("a", 1.2, 0.01, 1.0, band=0.05, k_sigma=3).passed
    assert ComparisonReport("a", 1.2, 0.05, 1.0, band=0.1, k_sigma=3, combine="sum").passed
    assert not ComparisonReport("a", 1.2, 0.02, 1.0, band=0.1, k_sigma=3, combine="sum").passed
    assert ComparisonReport("a", 0.99, math.nan, 0.95, k_sigma=0, sided="lower").passed
    assert not ComparisonReport("a", 0.9, math.nan, 0.95, k_sigma=0, sided="lower").passed
    assert not ComparisonReport("a", math.nan, 0.1, 1.0, band=1).passed
    assert ComparisonReport("a", 0.5, 0.1, 1.0).to_dict()["passed"] is False


def test_concentrations_at_time_zero(ensemble):
    est = stats.estimate_concentrations(ensemble, 0.0, [1, 2])
    assert est[1] == (1.0, 0.0)
    assert est[2][0] == 0.0


def test_concentrations_track_explicit_solution(ensemble):
    for t, m in [(2.0, 1), (0.5, 2), (0.5, 1), (2.0, 3)]:
        mean, se = stats.estimate_concentrations(ensemble, t, [m])[m]
        exact = kinetics.smoluchowski_exact_mono(t, m)
        assert abs(mean - exact) < 0.02 * exact + 4 * se, (t, m)


def test_unsampled_time_rejected(ensemble):
    with pytest.raises(ConfigError):
        stats.estimate_concentrations(ensemble, 0.7, [1])
    with pytest.raises(ConfigError):
        stats.estimate_concentrations(ensemble, 0.5, [N + 1])


def test_mass_partition_per_replica(ensemble):
    for r in ensemble.results:
        for s in r.trajectory:
            assert int(np.arange(N + 1) @ s.histogram) + s.mass_above_cap + s.gel_mass == N


def test_tau_statistics_and_models_agree(ensemble):
    summ = stats.tau_statistics(ensemble)
    assert summ.taus.size == 200
    scale = ensemble.alpha / (2 * N)
    assert abs(summ.mean - 1 - scale) < 0.5 * scale + 3 * summ.stderr
    flory_cfg = replace(ensemble.config, mode="flory")
    flory = ReplicaEnsemble(flory_cfg, run_ensemble(flory_cfg, 20))
    np.testing.assert_array_equal(stats.tau_statistics(flory).taus, summ.taus[:20])


def test_tau_statistics_needs_events():
    cfg = SimConfig(100, t_max=0.1)
    with pytest.raises(ValueError):
        stats.tau_statistics(ReplicaEnsemble(cfg, [SimResult(config=cfg)]))


def test_gap_statistics(ensemble):
    gaps = stats.gap_statistics(ensemble, (1.5, 2.5))
    assert gaps.gaps.size == gaps.drops.size > 50
    # at this small N the fluctuations are wide; the bulk still sits near one
    assert 0.7 < np.median(gaps.gaps) < 1.3
    assert np.all(gaps.drops >= 1.0)
    with pytest.raises(ValueError):
        stats.gap_statistics(ensemble, (0.0, 0.9))


def test_no_events_before_one(ensemble):
    early = [r.gelation_events[0].time > 0.95 for r in ensemble.results]
    assert np.mean(early) >= 0.95


def test_typical_distribution_time_zero(typical):
    dist = stats.typical_cluster_distribution(typical, 0.0)
    assert dist.frequencies == {"()": 1.0}


def test_typical_distribution_subcritical(typical):
    dist = stats.typical_cluster_distribution(typical, 0.5)
    small = [t.code for g in trees.enumerate_rooted_trees(3).values() for t in g]
    exact = {c: trees.gw_tree_prob(0.5, c) for c in small}
    assert stats.tv_distance(dist.frequencies, exact, support=small) < 0.02


def test_typical_sizes_are_size_biased(typical):
    observed, law = Counter(), Counter()
    for r in typical.results:
        for (t, comps), snap in zip(r.typical_clusters, r.trajectory):
            if t != 2.0:
                continue
            observed.update(c.size for c in comps)
            for m, c in enumerate(snap.histogram):
                if c:
                    law[m] += len(comps) * m * c / snap.n_in_solution
    total = sum(law.values())
    assert stats.chi_square_gof(observed, {m: v / total for m, v in law.items()}).p_value > 1e-3


def test_typical_distribution_needs_samples(ensemble):
    with pytest.raises(ValueError):
        stats.typical_cluster_distribution(ensemble, 2.0)


def test_z_survival(ensemble):
    curve = stats.z_survival_curve(ensemble, (0.5, 2.0, 4.0))
    assert curve[0.5][0] == 1.0
    for t in (2.0, 4.0):
        p, se = curve[t]
        mass, _ = stats.mass_curve(ensemble, t)
        assert abs(p - mass) < 4 * math.sqrt(mass * (1 - mass) / ensemble.replica_count)
        assert abs(p - 1 / t) < 0.05 + 3 * se


def _fake(cfg, z, surplus):
    return SimResult(config=cfg, gelation_events=[GelationEvent(1.0, cfg.alpha, 0)],
                     z_particle_one=z, z_surplus=surplus)


def test_surplus_statistic_synthetic():
    cfg = SimConfig(1000, threshold=100)
    ens = ReplicaEnsemble(cfg, [_fake(cfg, 1 + i / 400, 0) for i in range(400)])
    bins = stats.surplus_statistic(ens, n_bins=4)
    assert [b.count for b in bins] == [100] * 4
    assert all(b.statistic == 0 for b in bins)
    with pytest.raises(ValueError):
        stats.surplus_statistic(ens, n_bins=10)


def test_surplus_nonnegative(ensemble):
    assert all(r.z_surplus >= 0 for r in ensemble.results if math.isfinite(r.z_particle_one))


@pytest.mark.slow
def test_surplus_of_fallen_cluster_scaling():
    cfg = SimConfig(10**6, threshold_rule=(0.85, 0.0), t_max=1.2, seed=1)
    ens = ReplicaEnsemble(cfg, run_ensemble(cfg, 200))
    b = stats.surplus_statistic(ens, n_bins=1, min_per_bin=20, z_range=(1.0, 1.2))[0]
    assert b.statistic == pytest.approx(b.expected, rel=0.3)


def test_tail_mass_empirical(ensemble):
    emp = stats.tail_mass_empirical(ensemble, 2.0, [1, 50])
    assert emp[1][0] == pytest.approx(stats.mass_curve(ensemble, 2.0)[0])
    mean, se = emp[50]
    assert abs(mean - kinetics.tail_mass(2.0, 50)[0]) < 4 * se + 2 * ensemble.alpha / N
    short = ReplicaEnsemble(replace(ensemble.config, m_cap=10), ensemble.results)
    with pytest.raises(ConfigError):
        stats.tail_mass_empirical(short, 2.0, [50])


def test_tv_distance_examples():
    assert stats.tv_distance({"a": 0.5, "b": 0.5}, {"a": 0.5, "b": 0.5}) == 0
    assert stats.tv_distance({"a": 1.0}, {"b": 1.0}) == 1
    assert stats.tv_distance({"a": 0.6, "b": 0.4}, {"a": 0.5, "b": 0.5}) == pytest.approx(0.1)
    # partially listed law: the unlisted mass forms the remainder bucket
    assert stats.tv_distance({"a": 0.5, "c": 0.5}, {"a": 0.6}, support=["a"]) == pytest.approx(0.1)


def test_chi_square_helpers():
    rng = np.random.default_rng(0)
    law = {"x": 0.2, "y": 0.5, "z": 0.3}
    draws = Counter(rng.choice(list(law), 20_000, p=list(law.values())).tolist())
    assert stats.chi_square_gof(draws, law).p_value > 1e-3
    assert stats.chi_square_gof({"x": 10, "w": 1}, law).p_value == 0.0
    skew = {"x": 0.3, "y": 0.4, "z": 0.3}
    assert stats.chi_square_gof(draws, skew).p_value < 1e-6
    other = Counter(rng.choice(list(law), 20_000, p=list(law.values())).tolist())
    assert stats.chi_square_two_sample(draws, other).p_value > 1e-3
