"""Species expressions shared by the property and invariance tests."""

from __future__ import annotations

from fractions import Fraction

from gibbspart import species as sp
from gibbspart.powerseries import Series

tree = sp.NAMED("tree")
cactus = sp.NAMED("triangle_cactus")
forest = sp.COMPOSE(sp.SET, tree)
# non-empty urns: SET o (e^z - 1), known far enough for every small-n test
urns = sp.ATOM(Series([0] + list(Series.exponential(16).coeffs[1:])), finite=False, name="urn")

CORPUS = {
    "set": sp.SET,
    "set_even": sp.SET_RESTRICTED(0, 2),
    "set_odd": sp.SET_RESTRICTED(1, 2),
    "tree": tree,
    "rooted_tree": sp.NAMED("rooted_tree"),
    "cactus": cactus,
    "forest": forest,
    "rooted_forest": sp.COMPOSE(sp.SET, sp.NAMED("rooted_tree")),
    "cactus_forest": sp.COMPOSE(sp.SET, cactus),
    "cactus_forest_odd": sp.COMPOSE(sp.SET_RESTRICTED(1, 2), cactus),
    "derived_forest": sp.DERIVE(forest),
    "derived_tree": sp.DERIVE(tree),
    "set_partitions": sp.COMPOSE(sp.SET, urns),
    "tree_pairs": sp.COMPOSE(sp.ATOM([0, 0, Fraction(1, 2)]), tree),
    "clique4_graphs": sp.COMPOSE(sp.SET, sp.NAMED("connected:clique:4")),
    "edge_triangle_graphs": sp.COMPOSE(sp.SET, sp.NAMED("connected:blocks:2=1,3=1")),
}
