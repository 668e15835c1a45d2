from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thresholdcoag._validation import ConfigError
from thresholdcoag.forest import LinkKind, new_forest


def test_new_forest_singletons():
    f = new_forest(3)
    assert f.component_size_histogram() == {1: 3}
    assert f.n_in_solution == 3 and f.gel_mass == 0


def test_new_forest_one_particle():
    f = new_forest(1)
    assert f.n_in_solution == 1
    assert f.partition() == [(0,)]


def test_new_forest_empty_rejected():
    with pytest.raises(ConfigError):
        new_forest(0)


def test_find_root_fresh_and_after_merges():
    f = new_forest(4)
    assert f.find_root(2) == 2
    f.try_link(0, 1, 10)
    assert f.find_root(0) == f.find_root(1)
    f.try_link(1, 2, 10)
    assert f.find_root(2) == f.find_root(0)


def test_find_root_out_of_range():
    with pytest.raises(IndexError):
        new_forest(3).find_root(3)


def test_link_sequence_with_fall_and_rejection():
    f = new_forest(4)
    assert f.try_link(0, 1, 3).kind is LinkKind.MERGED
    out = f.try_link(0, 2, 3)
    assert out.kind is LinkKind.MERGED_AND_FELL and out.size == 3
    assert f.gel_mass == 3 and f.n_in_solution == 1
    assert f.try_link(0, 3, 3).kind is LinkKind.REJECTED


def test_self_loop_rejected():
    with pytest.raises(ValueError):
        new_forest(3).try_link(1, 1, 2)


def test_extract_component_examples():
    f = new_forest(4)
    single = f.extract_component(3)
    assert single.size == 1 and single.n_edges == 0
    f.try_link(0, 1, 10)
    assert (f.extract_component(0).size, f.extract_component(0).n_edges) == (2, 1)
    f.try_link(1, 2, 10)
    f.try_link(0, 2, 10)
    tri = f.extract_component(1)
    assert (tri.size, tri.n_edges, tri.surplus) == (3, 3, 1)
    assert tri.vertices[0] == 1


def test_histogram_examples():
    f = new_forest(5)
    assert f.component_size_histogram() == {1: 5}
    f.try_link(0, 1, 3)
    assert f.component_size_histogram() == {1: 3, 2: 1}
    f.try_link(1, 2, 3)
    assert f.component_size_histogram() == {1: 2}


def test_flory_mode_absorbs_into_large():
    f = new_forest(5)
    f.try_link(0, 1, 2, inert=False)
    assert f.gel_mass == 2
    out = f.try_link(1, 3, 2, inert=False)
    assert out.kind is LinkKind.ABSORBED
    assert f.gel_mass == 3 and f.n_in_solution == 2


pairs = st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)).filter(lambda p: p[0] != p[1]),
                 max_size=60)


def _snapshot(f):
    return (f.parent.copy(), f.size.copy(), f.frozen.copy(), f.edge_count.copy(),
            f.counters.copy(), f.n_edges)


@given(pairs, st.integers(1, 12))
def test_invariants_under_random_links(links, threshold):
    f = new_forest(12)
    fell_sizes = {}
    for u, v in links:
        frozen_before = f.is_frozen(u) or f.is_frozen(v)
        before = _snapshot(f)
        out = f.try_link(u, v, threshold)
        if frozen_before:
            # rejection leaves every field untouched
            assert out.kind is LinkKind.REJECTED
            after = _snapshot(f)
            for a, b in zip(before[:5], after[:5]):
                np.testing.assert_array_equal(a, b)
            assert before[5] == after[5]
        if out.kind is LinkKind.MERGED_AND_FELL:
            fell_sizes[f.find_root(u)] = out.size
        assert f.n_in_solution + f.gel_mass == 12
        roots = [r for r in range(12) if f.find_root(r) == r]
        assert sum(f.cluster_size(r) for r in roots if not f.is_frozen(r)) == f.n_in_solution
    for root, s in fell_sizes.items():
        assert f.is_frozen(root) and s >= threshold
    for u, v in f.created_edges.tolist():
        assert f.find_root(u) == f.find_root(v)
    for block in f.partition():
        comp = f.extract_component(block[0])
        assert sorted(comp.vertices.tolist()) == sorted(block)
        assert comp.surplus >= 0


@given(pairs, st.integers(2, 12), st.randoms(use_true_random=False))
def test_partition_depends_only_on_accepted_links(links, threshold, rnd):
    f = new_forest(12)
    accepted = [(u, v) for u, v in links if f.try_link(u, v, threshold).kind is not LinkKind.REJECTED]
    # replaying the accepted links in another order (without the threshold) gives the same blocks
    g = new_forest(12)
    shuffled = accepted[:]
    rnd.shuffle(shuffled)
    for u, v in shuffled:
        g.try_link(u, v, 10**6)
    assert sorted(f.partition()) == sorted(g.partition())
