from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbspart import sampling as sa
from gibbspart import species as sp
from gibbspart import structures as S
from gibbspart.errors import PreconditionError, SpecError

from corpus import CORPUS


def path3():
    return S.Graph.make(3, [(1, 2), (2, 3)])


def test_graph_normalises_edges():
    g = S.Graph.make(3, [(3, 2), (2, 1), (1, 2)])
    assert g.edges == ((1, 2), (2, 3))


def test_outdegree_validity():
    assert S.is_valid_outdegree_sequence([0])
    assert S.is_valid_outdegree_sequence([2, 0, 1, 0])
    assert not S.is_valid_outdegree_sequence([0, 1])
    assert not S.is_valid_outdegree_sequence([1, 0, 0])
    assert not S.is_valid_outdegree_sequence([2, 0])


@given(st.lists(st.integers(0, 4), min_size=1, max_size=12))
def test_outdegree_validity_matches_prefix_rule(seq):
    n = len(seq)
    prefix_ok = all(sum(seq[: i + 1]) >= i + 1 for i in range(n - 1))
    assert S.is_valid_outdegree_sequence(seq) == (sum(seq) == n - 1 and prefix_ok)


def test_make_composite_orders_slots_by_smallest_label():
    g2 = S.Graph.make(2, [(1, 2)])
    c = S.make_composite(S.SetObj(2), [[4, 2], [1, 3]], [g2, S.Graph.make(2, [])])
    assert c.blocks == ((1, 3), (2, 4))
    assert c.components[1] == g2
    with pytest.raises(PreconditionError):
        S.make_composite(S.SetObj(1), [[1]], [])


def test_relabel_identity_and_composition():
    g = path3()
    assert S.relabel(g, [1, 2, 3]) == g
    s1, s2 = [2, 3, 1], [3, 1, 2]
    once = S.relabel(S.relabel(g, s1), s2)
    composed = [s2[s1[i] - 1] for i in range(3)]
    assert once == S.relabel(g, composed)


def test_type_key_sees_through_labels():
    g = path3()
    keys = {S.type_key(S.relabel(g, p)) for p in itertools.permutations([1, 2, 3])}
    assert len(keys) == 1
    star = S.Graph.make(4, [(1, 2), (1, 3), (1, 4)])
    path = S.Graph.make(4, [(1, 2), (2, 3), (3, 4)])
    assert S.type_key(star) != S.type_key(path)


def test_rooted_types_distinguish_root_position():
    leaf_root = S.Graph.make(3, [(1, 2), (2, 3)], root=1)
    mid_root = S.Graph.make(3, [(1, 2), (2, 3)], root=2)
    assert S.type_key(leaf_root) != S.type_key(mid_root)
    assert S.type_key(leaf_root) == S.type_key(S.Graph.make(3, [(1, 2), (2, 3)], root=3))


def test_derived_keeps_star_fixed():
    d = S.Derived(S.Graph.make(3, [(1, 3), (2, 3)]))
    assert d.size == 2
    r = S.relabel(d, [2, 1])
    assert r == d


@pytest.mark.parametrize("name", ["forest", "cactus_forest", "derived_forest", "tree_pairs", "rooted_tree"])
def test_json_round_trip_on_enumerated_structures(name):
    for s, _ in sa.enumerate_structures(CORPUS[name], 4):
        assert S.from_json(S.to_json(s)) == s


def test_from_json_rejects_garbage():
    with pytest.raises(SpecError):
        S.from_json({"type": "hypergraph"})
    with pytest.raises(SpecError):
        S.from_json([1, 2])


@pytest.mark.parametrize("name", sorted(k for k, e in CORPUS.items() if isinstance(e, sp.Compose)))
def test_blocks_partition_labels(name):
    for n in range(1, 6):
        for s, _ in sa.enumerate_structures(CORPUS[name], n):
            labels = sorted(x for b in s.blocks for x in b)
            assert labels == list(range(1, n + 1))
            assert sum(s.component_sizes()) == n == S.size_of(s)
            assert all(S.size_of(c) == len(b) for c, b in zip(s.components, s.blocks))


def test_component_count():
    s = S.make_composite(S.SetObj(2), [[1], [2]], [S.Graph.make(1, []), S.Graph.make(1, [])])
    assert S.component_count(s) == 2
    with pytest.raises(TypeError):
        S.component_count(path3())
