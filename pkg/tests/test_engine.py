from __future__ import annotations

import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from thresholdcoag import engine, kinetics, small_exact
from thresholdcoag._validation import ConfigError
from thresholdcoag.engine import (
    ActivationStream,
    CoagulationModel,
    SimConfig,
    StreamExhausted,
    coagulation_rate,
    run_alternative,
    run_sim,
    sample_typical_cluster,
)
from thresholdcoag.forest import new_forest
from thresholdcoag.stats import chi_square_gof, chi_square_two_sample

# --- configuration ------------------------------------------------------------


@pytest.mark.parametrize("kwargs, field", [
    (dict(n_particles=10, threshold=11), "threshold"),
    (dict(n_particles=10, sample_times=(2.0, 1.0)), "sample_times"),
    (dict(n_particles=10, t_max=1.0, sample_times=(2.0,)), "sample_times"),
    (dict(n_particles=10, t_max=math.inf), "t_max"),
    (dict(n_particles=10, typical_samples_per_time=3, track_edges=False), "track_edges"),
    (dict(n_particles=10, mode="alternative", typical_samples_per_time=3),
     "typical_samples_per_time"),
    (dict(n_particles=10, mode="gel"), "mode"),
    (dict(n_particles=0), "n_particles"),
])
def test_invalid_config(kwargs, field):
    with pytest.raises(ConfigError) as info:
        SimConfig(**kwargs)
    assert info.value.field == field


def test_threshold_rule():
    assert engine.threshold_from_rule(10**6, 0.75) == 31623
    assert SimConfig(10**4, threshold_rule=(0.5, 1.0)).alpha == round(100 * math.log(10**4))
    assert SimConfig(10, threshold=4, threshold_rule=(0.9, 0)).alpha == 4


def test_edges_tracked_only_for_typical_samples():
    assert not SimConfig(100).tracks_edges
    assert SimConfig(100, sample_times=(1.0,), typical_samples_per_time=2).tracks_edges


# --- activation stream --------------------------------------------------------


def test_two_particles_single_pair_then_exhausted():
    rng = np.random.default_rng(0)
    s = ActivationStream(2)
    t, pair = s.next_activation(rng)
    assert pair == (0, 1) and t > 0
    with pytest.raises(StreamExhausted):
        s.next_activation(rng)


def test_two_particles_mean_time_is_n():
    rng = np.random.default_rng(1)
    times = np.array([ActivationStream(2).next_activation(rng)[0] for _ in range(100_000)])
    assert abs(times.mean() - 2.0) < 3 * 2.0 / math.sqrt(times.size)


def test_three_particles_first_time_exponential_one():
    rng = np.random.default_rng(2)
    times = np.array([ActivationStream(3).next_activation(rng)[0] for _ in range(100_000)])
    assert abs(times.mean() - 1.0) < 3 / math.sqrt(times.size)
    assert sps.kstest(times, "expon").pvalue > 1e-3


def test_gap_law_exhaustive():
    # n=4: M=6 clocks, the k-th gap has mean N/(M-k+1)
    rng = np.random.default_rng(3)
    reps = 20_000
    gaps = np.empty((reps, 6))
    for r in range(reps):
        s, last = ActivationStream(4), 0.0
        for k in range(6):
            t, _ = s.next_activation(rng)
            gaps[r, k] = t - last
            last = t
    expected = 4.0 / (6 - np.arange(6))
    se = expected / math.sqrt(reps)
    assert np.all(np.abs(gaps.mean(axis=0) - expected) < 4 * se)


@given(st.integers(2, 9), st.integers(0, 2**32 - 1))
def test_stream_emits_each_pair_once_with_increasing_times(n, seed):
    rng = np.random.default_rng(seed)
    s = ActivationStream(n)
    seen, last = set(), 0.0
    for _ in range(n * (n - 1) // 2):
        t, pair = s.next_activation(rng)
        assert t > last and pair not in seen and pair[0] < pair[1]
        seen.add(pair)
        last = t
    with pytest.raises(StreamExhausted):
        s.next_activation(rng)


def test_activation_count_by_time_one():
    n = 10**4
    rng = np.random.default_rng(4)
    s = ActivationStream(n)
    count = 0
    while s.next_activation(rng)[0] <= 1.0:
        count += 1
    m = n * (n - 1) // 2
    p = -math.expm1(-1.0 / n)
    assert abs(count - m * p) < 3 * math.sqrt(m * p * (1 - p))


# --- run_sim -------------------------------------------------------------------


def test_run_sim_is_deterministic():
    cfg = SimConfig(5000, t_max=3.0, seed=11, sample_times=(1.0, 2.0, 3.0),
                    typical_samples_per_time=5)
    a, b = run_sim(cfg), run_sim(cfg)
    assert [e for e in a.gelation_events] == [e for e in b.gelation_events]
    for sa, sb in zip(a.trajectory, b.trajectory):
        np.testing.assert_array_equal(sa.histogram, sb.histogram)
    assert a.z_particle_one == b.z_particle_one
    for (ta, ca), (tb, cb) in zip(a.typical_clusters, b.typical_clusters):
        assert ta == tb
        for x, y in zip(ca, cb):
            np.testing.assert_array_equal(x.vertices, y.vertices)


@pytest.mark.parametrize("track", [False, True])
def test_models_coincide_before_first_gelation(track):
    times = tuple(np.round(np.linspace(0.1, 1.5, 15), 2))
    base = SimConfig(20_000, t_max=1.5, seed=5, sample_times=times, track_edges=track)
    smol = run_sim(base)
    flory = run_sim(replace(base, mode="flory"))
    tau = smol.gelation_events[0].time
    assert flory.gelation_events[0].time == tau
    assert flory.gelation_events[0].fallen_size == smol.gelation_events[0].fallen_size
    before = [i for i, t in enumerate(times) if t < tau]
    assert before
    for i in before:
        np.testing.assert_array_equal(smol.trajectory[i].histogram, flory.trajectory[i].histogram)


def test_flory_mass_outside_large_components():
    n = 10**5
    res = run_sim(SimConfig(n, t_max=2.0, mode="flory", seed=3, sample_times=(2.0,)))
    frac = res.trajectory[0].n_in_solution / n
    assert abs(frac - kinetics.flory_mass(2.0)) < 0.01


def test_smoluchowski_mass_at_two():
    n = 10**5
    cfg = SimConfig(n, t_max=2.0, seed=8, sample_times=(2.0,))
    fracs = [run_sim(replace(cfg, replica=r)).trajectory[0].n_in_solution / n for r in range(10)]
    assert abs(np.mean(fracs) - 0.5) < 2 * cfg.alpha / n + 3 * np.std(fracs, ddof=1) / math.sqrt(10)


@given(st.integers(20, 400), st.floats(0.2, 0.9), st.integers(0, 10**6),
       st.sampled_from(["smoluchowski", "flory"]))
def test_result_invariants(n, exponent, seed, mode):
    cfg = SimConfig(n, threshold_rule=(exponent, 0.0), t_max=4.0, mode=mode, seed=seed,
                    sample_times=(0.5, 1.0, 2.0, 3.0, 4.0), m_cap=n)
    res = run_sim(cfg)
    times = res.tau
    assert np.all(np.diff(times) >= 0)
    assert all(e.fallen_size >= cfg.alpha for e in res.gelation_events)
    sol = [s.n_in_solution for s in res.trajectory]
    for s in res.trajectory:
        assert s.n_in_solution + s.gel_mass == n
        assert int(np.arange(n + 1) @ s.histogram) + s.mass_above_cap == s.n_in_solution
    if mode == "smoluchowski":
        assert all(a >= b for a, b in zip(sol, sol[1:]))


def test_isolated_vertex_fraction():
    n = 10**4
    for t in (1.0, 2.0):
        cfg = SimConfig(n, t_max=t, seed=21, track_edges=True)
        fr = np.array([1 - run_sim(replace(cfg, replica=r)).final["touched"] / n
                       for r in range(100)])
        expect = math.exp(-t * (n - 1) / n)
        assert abs(fr.mean() - expect) < 4 * fr.std(ddof=1) / math.sqrt(fr.size)


@pytest.mark.parametrize("t", [0.5, 1.5])
def test_event_rate_matches_coagulation_rate(t):
    n, delta, reps = 10**4, 0.005, 1000
    cfg = SimConfig(n, t_max=t + delta, seed=31, sample_times=(t, t + delta), m_cap=n)
    observed = expected = 0.0
    for r in range(reps):
        a, b = run_sim(replace(cfg, replica=r)).trajectory
        clusters_a = int(a.histogram.sum()) + a.events_so_far
        clusters_b = int(b.histogram.sum()) + b.events_so_far
        observed += clusters_a - clusters_b
        hist = {m: int(c) for m, c in enumerate(a.histogram) if c}
        expected += coagulation_rate(hist, a.n_in_solution, n, cfg.alpha) * delta
    assert abs(observed - expected) < 3 * math.sqrt(expected)


def test_coagulation_rate_examples():
    n = 7
    assert coagulation_rate({1: n}, n, n, 3) == pytest.approx((n - 1) / 2)
    assert coagulation_rate({1: 2, 2: 1}, 4, 4, 4) == pytest.approx(5 / 4)
    assert coagulation_rate({}, 0, 10, 3) == 0.0
    with pytest.raises(ValueError):
        coagulation_rate({1: 3}, 4, 4, 4)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=8))
def test_coagulation_rate_counts_intercluster_pairs(sizes):
    n = sum(sizes)
    hist = Counter(sizes)
    pairs = sum(a * b for i, a in enumerate(sizes) for b in sizes[i + 1:])
    assert coagulation_rate(dict(hist), n, n, 10**6) == pytest.approx(pairs / n)


# --- typical clusters ----------------------------------------------------------


def test_typical_cluster_at_time_zero():
    f = new_forest(50)
    comps = sample_typical_cluster(f, np.random.default_rng(0), size=20)
    assert all(c.size == 1 and c.n_edges == 0 for c in comps)


def test_typical_cluster_is_size_biased():
    f = new_forest(40)
    rng = np.random.default_rng(1)
    for _ in range(30):
        u, v = rng.choice(40, 2, replace=False)
        f.try_link(int(u), int(v), 8)
    hist = f.component_size_histogram()
    sizes = Counter(c.size for c in sample_typical_cluster(f, rng, size=50_000))
    law = {m: m * c / f.n_in_solution for m, c in hist.items()}
    assert chi_square_gof(sizes, law).p_value > 1e-3


def test_typical_cluster_empty_solution():
    f = new_forest(3)
    f.try_link(0, 1, 3)
    f.try_link(1, 2, 3)
    with pytest.raises(ValueError):
        sample_typical_cluster(f)


def test_typical_single_vertex_frequency():
    n = 10**5
    cfg = SimConfig(n, t_max=2.0, seed=4, sample_times=(2.0,), typical_samples_per_time=500)
    sizes = [c.size for r in range(6)
             for c in run_sim(replace(cfg, replica=r)).typical_clusters[0][1]]
    p = np.mean(np.array(sizes) == 1)
    assert abs(p - math.exp(-1)) < 3 * math.sqrt(0.25 / len(sizes))


# --- exactness at tiny scale ---------------------------------------------------


@pytest.mark.parametrize("mode, stream", [
    ("smoluchowski", "exact"), ("smoluchowski", "thinned"), ("flory", "exact"), ("flory", "thinned"),
])
@pytest.mark.parametrize("n, threshold, t", [(5, 3, 1.0), (4, 2, 2.0), (3, 2, 0.7)])
def test_small_system_law(mode, stream, n, threshold, t):
    codes = engine.small_system_states(n, threshold, t, mode, stream, 200_000, 7)
    observed = Counter(engine.decode_state(n, c) for c in codes.tolist())
    law = small_exact.partition_law(n, threshold, t, mode)
    assert chi_square_gof(observed, law).p_value > 1e-3


def test_solution_graph_given_solution_set():
    n, threshold, t = 5, 3, 1.0
    sets, graphs = engine.small_solution_graphs(n, threshold, t, 10**6, 17)
    p = -math.expm1(-t / n)
    by_size: dict[int, Counter] = {}
    for smask, gmask in zip(sets.tolist(), graphs.tolist()):
        members = [i for i in range(n) if smask >> i & 1]
        relabel = {v: i for i, v in enumerate(members)}
        edges = frozenset((relabel[a], relabel[b]) for a in members for b in members
                          if a < b and gmask >> (a * n + b) & 1)
        by_size.setdefault(len(members), Counter())[edges] += 1
    tested = 0
    for k, counts in by_size.items():
        if k < 2 or sum(counts.values()) < 1000:
            continue
        law = small_exact.conditioned_er_law(range(k), p, threshold)
        assert chi_square_gof(counts, law).p_value > 1e-3, k
        tested += 1
    assert tested >= 2


@pytest.mark.slow
def test_alternative_matches_original_in_law():
    base = SimConfig(6, threshold=3, t_max=1.0, mode="alternative", seed=9)
    reps = 100_000
    alt = Counter(run_alternative(replace(base, replica=r)).final["n_in_solution"]
                  for r in range(reps))
    orig_cfg = replace(base, mode="smoluchowski", seed=10)
    orig = Counter(run_sim(replace(orig_cfg, replica=r)).final["n_in_solution"]
                   for r in range(reps))
    assert chi_square_two_sample(alt, orig).p_value > 1e-3


def test_alternative_with_coupling_equals_first_graph_process():
    base = SimConfig(10**4, t_max=3.0, mode="alternative", seed=2)
    checked = 0
    for r in range(6):
        cfg = replace(base, replica=r)
        b = run_alternative(cfg)
        d = run_alternative(cfg, always_first=True)
        if b.coupling.coupled:
            assert b.gelation_events == d.gelation_events
            checked += 1
    assert checked


def test_alternative_trajectory_consistency():
    cfg = SimConfig(10**4, t_max=3.0, mode="alternative", seed=3, sample_times=(0.5, 1.5, 3.0))
    res = run_alternative(cfg)
    assert [s.time for s in res.trajectory] == [0.5, 1.5, 3.0]
    for s in res.trajectory:
        assert s.n_in_solution + s.gel_mass == cfg.n_particles
    assert all(e.fallen_size >= cfg.alpha for e in res.gelation_events)
    assert math.isinf(res.z_particle_one)


@given(st.integers(2, 7), st.data())
def test_state_code_roundtrip(n, data):
    sizes = []
    left = n
    while left:
        s = data.draw(st.integers(1, left))
        sizes.append(s)
        left -= s
    flags = data.draw(st.lists(st.booleans(), min_size=len(sizes), max_size=len(sizes)))
    sol = tuple(sorted(s for s, f in zip(sizes, flags) if not f))
    big = tuple(sorted(s for s, f in zip(sizes, flags) if f))
    assert engine.decode_state(n, engine.encode_state(n, sol, big)) == (sol, big)


def test_estimator_wrapper():
    model = CoagulationModel(n_particles=2000, t_max=2.0, sample_times=(1.0, 2.0), replicas=2)
    assert model.get_params()["replicas"] == 2
    model.fit()
    assert len(model.results_) == 2
    assert model.config_.alpha == engine.threshold_from_rule(2000)
