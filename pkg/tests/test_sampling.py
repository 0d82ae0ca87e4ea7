from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction

import mpmath
import pytest
from scipy import stats

from gibbspart import graphclass as gc
from gibbspart import powerseries as ps
from gibbspart import sampling as sa
from gibbspart import species as sp
from gibbspart import structures as S
from gibbspart.errors import PreconditionError, ResourceCapError, SamplingExhausted
from gibbspart.powerseries import Series
from gibbspart.rng import RngState

import oracles
from corpus import CORPUS

F = Fraction
P_MIN = 1e-4  # fixed seeds: a chi-square p-value below this means a real bias


def chi2_p(counts: Counter, probs: dict) -> float:
    keys = sorted(probs, key=repr)
    m = sum(counts.values())
    assert set(counts) <= set(keys), set(counts) - set(keys)
    obs = [counts.get(k, 0) for k in keys]
    exp = [float(probs[k]) * m for k in keys]
    # pool cells with small expectation into one
    big = [i for i, e in enumerate(exp) if e >= 5]
    small = [i for i, e in enumerate(exp) if e < 5]
    o = [obs[i] for i in big]
    e = [exp[i] for i in big]
    if small:
        o.append(sum(obs[i] for i in small))
        e.append(sum(exp[i] for i in small))
    scale = sum(o) / sum(e)
    return stats.chisquare(o, [x * scale for x in e]).pvalue


def poisson_law(lam, kmax):
    p = {k: oracles.poisson(k, lam) for k in range(kmax)}
    p[kmax] = 1 - sum(p.values())
    return p


def capped(counter, kmax):
    out = Counter()
    for k, v in counter.items():
        out[min(k, kmax)] += v
    return out


# -- Boltzmann samplers


def test_boltzmann_set_is_poisson():
    rng = RngState(1)
    sizes = Counter(sa.boltzmann_sample(sp.SET, 1, rng).size for _ in range(20000))
    assert abs(sizes[0] / 20000 - math.exp(-1)) < 4 * math.sqrt(0.25 / 20000)
    assert chi2_p(capped(sizes, 6), poisson_law(1.0, 6)) > P_MIN


def test_boltzmann_forest_component_count_is_poisson_half():
    rho = sp.resolve_named("tree").radius()
    rng = RngState(2)
    ks = Counter(sa.boltzmann_sample(CORPUS["forest"], rho, rng).k for _ in range(20000))
    assert chi2_p(capped(ks, 4), poisson_law(0.5, 4)) > P_MIN


def test_boltzmann_size_law_matches_exact_law():
    rho = sp.resolve_named("tree").radius()
    e = CORPUS["forest"]
    law = sp.size_law(e, rho, 40)
    probs = {n: float(law.probs[n]) for n in range(8)}
    probs[8] = 1 - sum(probs.values())
    rng = RngState(3)
    sizes = Counter(min(sa.boltzmann_sample(e, rho, rng, render=False).size, 8) for _ in range(20000))
    assert chi2_p(sizes, probs) > P_MIN


def test_boltzmann_degenerate_atom():
    rng = RngState(4)
    e = sp.ATOM([0, 1])
    assert all(sa.boltzmann_sample(e, 0.7, rng) == S.AtomObj(1) for _ in range(50))


def test_boltzmann_sampler_is_deterministic_per_seed():
    rho = sp.resolve_named("tree").radius()
    a = [sa.boltzmann_sample(CORPUS["forest"], rho, RngState(9, 3)) for _ in range(20)]
    b = [sa.boltzmann_sample(CORPUS["forest"], rho, RngState(9, 3)) for _ in range(20)]
    assert a == b


def test_boltzmann_beyond_radius_rejected():
    rho = sp.resolve_named("tree").radius()
    with pytest.raises(PreconditionError):
        sa.boltzmann_sample(CORPUS["forest"], rho * 1.1, RngState(0))


# -- relabelling


def test_relabel_uniform_trivial_cases():
    rng = RngState(5)
    g1 = S.Graph.make(1, [])
    assert sa.relabel_uniform(g1, rng) == g1
    assert sa.relabel_uniform(S.SetObj(0), rng) == S.SetObj(0)


def test_relabel_uniform_on_rooted_path_is_uniform():
    # rooted at an end the path has no automorphism, so all 6 relabellings differ
    g = S.Graph.make(3, [(1, 2), (2, 3)], root=1)
    outs = {S.relabel(g, p) for p in itertools.permutations([1, 2, 3])}
    assert len(outs) == 6
    rng = RngState(6)
    counts = Counter(sa.relabel_uniform(g, rng) for _ in range(12000))
    assert chi2_p(counts, {o: F(1, 6) for o in outs}) > P_MIN


# -- Galton-Watson trees


def test_gw_poisson_tree_sizes_are_borel():
    rng = RngState(7)
    phi = Series.exponential(40)
    m = 20000
    sizes = Counter()
    for _ in range(m):
        t = sa.gw_tree_sample(phi, 1, rng, max_size=7)
        sizes[8 if t is None else t.size] += 1
    law = {n: oracles.borel(n) for n in range(1, 8)}
    law[8] = 1 - sum(law.values())
    assert abs(sizes[1] / m - math.exp(-1)) < 0.015
    assert chi2_p(sizes, law) > P_MIN


def test_gw_subcritical_tilt_gives_borel_with_smaller_mean():
    rng = RngState(27)
    phi = Series.exponential(40)
    m = 20000
    sizes = Counter(min(sa.gw_tree_sample(phi, F(1, 2), rng).size, 8) for _ in range(m))
    law = {n: oracles.borel(n, 0.5) for n in range(1, 8)}
    law[8] = 1 - sum(law.values())
    assert chi2_p(sizes, law) > P_MIN


def test_gw_leaf_only():
    rng = RngState(8)
    assert all(sa.gw_tree_sample(Series([1]), 1, rng).outdegrees == (0,) for _ in range(20))


def test_gw_even_offspring_gives_odd_sizes():
    phi = ps.exp_series(Series.monomial(2, 40, F(1, 2)))
    rng = RngState(9)
    for _ in range(500):
        t = sa.gw_tree_sample(phi, 1, rng, max_size=400)
        if t is None:
            continue
        assert t.size % 2 == 1
        assert all(d % 2 == 0 for d in t.outdegrees)
        assert S.is_valid_outdegree_sequence(t.outdegrees)


def test_gw_preconditions_and_cap():
    with pytest.raises(PreconditionError):
        sa.gw_tree_sample(Series.exponential(20), 2, RngState(0))
    with pytest.raises(PreconditionError):
        sa.gw_tree_sample(Series([0, 1, 1]), F(1, 2), RngState(0))
    # critical trees are a.s. finite but heavy tailed; a tiny cap is hit quickly
    rng = RngState(10)
    with pytest.raises(ResourceCapError):
        for _ in range(200):
            sa.gw_tree_sample(Series.exponential(40), 1, rng, node_cap=50)


def test_gw_forest_examples():
    phi = Series.exponential(40)
    rng = RngState(11)
    f = sa.gw_forest_sample(Series([0, 1]), phi, 1, rng)
    assert len(f.trees) == 1
    m = 20000
    two = sum(sa.gw_forest_sample(Series([0, 0, 1]), phi, F(1, 2), rng).size == 2 for _ in range(m))
    p = oracles.borel(1, 0.5) ** 2
    assert abs(two / m - p) < 4 * math.sqrt(p * (1 - p) / m)
    empty = sum(sa.gw_forest_sample(Series([F(1, 2), F(1, 2)]), phi, F(1, 2), rng).size == 0 for _ in range(m))
    assert abs(empty / m - 0.5) < 4 * math.sqrt(0.25 / m)
    with pytest.raises(PreconditionError):
        sa.gw_forest_sample(Series([F(1, 2), F(1, 3)]), phi, 1, rng)


def test_cycle_lemma_identities_exact():
    for phi in (Series.exponential(20), Series([1, 1, 1], 20), Series([F(1, 3), 0, F(2, 3)], 20)):
        for n in range(1, 13):
            ids = sa.cycle_lemma_identities(phi, n)
            assert ids["single"]["lhs"] == ids["single"]["rhs"]
            assert ids["pair"]["lhs"] == ids["pair"]["rhs"]


# -- size-conditioned samplers


def test_conditioned_preconditions():
    rho = sp.resolve_named("tree").radius()
    with pytest.raises(PreconditionError):
        sa.conditioned_sample(CORPUS["tree_pairs"], 1, rho, RngState(0))
    with pytest.raises(PreconditionError):
        sa.conditioned_sample(CORPUS["cactus"], 2, rho, RngState(0))
    with pytest.raises(SamplingExhausted) as info:
        sa.conditioned_sample(CORPUS["forest"], 80, rho, RngState(0), max_attempts=5)
    assert info.value.attempts == 5 and info.value.acceptance_rate == 0


def test_conditioned_forest_two_types_at_size_two():
    rho = sp.resolve_named("tree").radius()
    rng = RngState(12)
    m = 2000
    one_comp = sum(sa.conditioned_sample(CORPUS["forest"], 2, rho, rng)[0].k == 1 for _ in range(m))
    assert abs(one_comp / m - 0.5) < 4 * math.sqrt(0.25 / m)
    s, _ = sa.conditioned_sample(CORPUS["forest"], 1, rho, rng)
    assert s.k == 1 and s.size == 1


def test_exact_forest_profiles_match_enumeration():
    law = oracles.forest_law(3)
    assert law == {(3,): F(3, 7), (2, 1): F(3, 7), (1, 1, 1): F(1, 7)}
    rng = RngState(13)
    counts = Counter(tuple(sorted(sa.exact_sample_small(CORPUS["forest"], 3, rng).component_sizes(),
                                  reverse=True)) for _ in range(14000))
    assert chi2_p(counts, law) > P_MIN
    law5 = oracles.forest_law(5)
    counts = Counter(tuple(sorted(sa.exact_sample_small(CORPUS["forest"], 5, rng).component_sizes(),
                                  reverse=True)) for _ in range(20000))
    assert chi2_p(counts, law5) > P_MIN


UNIFORM_CASES = [("forest", 4), ("tree", 4), ("rooted_tree", 4), ("cactus", 5), ("cactus_forest", 5),
                 ("cactus_forest_odd", 5), ("rooted_forest", 3), ("derived_tree", 3),
                 ("derived_forest", 3), ("set_partitions", 4), ("tree_pairs", 4),
                 ("clique4_graphs", 5), ("edge_triangle_graphs", 4)]


@pytest.mark.parametrize("name,n", UNIFORM_CASES)
def test_exact_sampler_law_over_labelled_structures(name, n):
    """Sampled labelled objects follow weight / total, checked against full enumeration."""
    e = CORPUS[name]
    objs = sa.enumerate_structures(e, n)
    total = sum(w for _, w in objs)
    law = {}
    for s, w in objs:
        key = S.labelled_key(s)
        law[key] = law.get(key, 0) + w / total
    m = max(4000, 40 * len(law))
    rng = RngState(14, name)
    counts = Counter(S.labelled_key(sa.exact_sample_small(e, n, rng)) for _ in range(m))
    assert chi2_p(counts, law) > P_MIN


@pytest.mark.parametrize("name,n,trunc", [("forest", 3, 256), ("cactus_forest", 3, 256), ("set_partitions", 4, 16)])
def test_conditioned_sampler_law_over_labelled_structures(name, n, trunc):
    e = CORPUS[name]
    inner = e.inner
    y = sp.resolve_named(inner.id).radius() if isinstance(inner, sp.Named) else 1
    objs = sa.enumerate_structures(e, n)
    total = sum(w for _, w in objs)
    law = {S.labelled_key(s): w / total for s, w in objs}
    rng = RngState(15, name)
    m = 30 * len(law)
    counts = Counter(S.labelled_key(sa.conditioned_sample(e, n, y, rng, truncation=trunc)[0])
                     for _ in range(m))
    assert chi2_p(counts, law) > P_MIN


def test_exact_sampler_large_forest_is_fast_and_valid():
    rng = RngState(16)
    for _ in range(20):
        s = sa.exact_sample_small(CORPUS["forest"], 200, rng)
        assert s.size == 200
        for c, b in zip(s.components, s.blocks):
            assert c.n == len(b) and len(c.edges) == c.n - 1 and gc.is_connected(c.n, c.edges)


def test_exact_sampler_size_zero_and_bounds():
    rng = RngState(17)
    assert sa.exact_sample_small(CORPUS["forest"], 0, rng).k == 0
    with pytest.raises(PreconditionError):
        sa.exact_sample_small(CORPUS["cactus"], 4, rng)
    with pytest.raises(PreconditionError):
        sa.exact_sample_small(CORPUS["tree_pairs"], 70, rng, bound=60)


# -- fragments


def test_fragment_examples():
    rng = RngState(18)
    g = S.Graph.make
    single = S.make_composite(S.SetObj(1), [[1, 2, 3]], [g(3, [(1, 2), (2, 3)])])
    rest, removed = sa.fragment(single, rng)
    assert removed == 3 and rest.size == 0 and rest.k == 0
    three_one = S.make_composite(S.SetObj(2), [[1, 2, 4], [3]], [g(3, [(1, 2), (1, 3)]), g(1, [])])
    for _ in range(20):
        rest, removed = sa.fragment(three_one, rng)
        assert (rest.size, removed) == (1, 3)
        assert rest.blocks == ((1,),)
    two_two = S.make_composite(S.SetObj(2), [[1, 3], [2, 4]], [g(2, [(1, 2)]), g(2, [(1, 2)])])
    kept = Counter(sa.fragment(two_two, rng)[0].components[0] for _ in range(4000))
    assert len(kept) == 1  # both components are the same graph after relabelling
    firsts = Counter()
    for _ in range(4000):
        rest, removed = sa.fragment(two_two, rng)
        assert rest.size == 2 and removed == 2
        firsts[rest.blocks] += 1
    assert set(firsts) == {((1, 2),)}
    with pytest.raises(PreconditionError):
        sa.fragment(S.make_composite(S.SetObj(0), [], []), rng)


def test_fragment_tie_break_is_fair():
    # distinguishable components of equal size: which one survives is a fair coin
    g = S.Graph.make
    s = S.make_composite(S.SetObj(2), [[1, 2], [3, 4]], [g(2, [(1, 2)]), g(2, [])])
    rng = RngState(19)
    m = 4000
    kept_edge = sum(len(sa.fragment(s, rng)[0].components[0].edges) for _ in range(m))
    assert abs(kept_edge / m - 0.5) < 4 * math.sqrt(0.25 / m)


def test_fragment_of_non_set_outer_is_derived():
    rng = RngState(20)
    s = sa.exact_sample_small(CORPUS["tree_pairs"], 5, rng)
    rest, removed = sa.fragment(s, rng)
    assert isinstance(rest.outer, S.Derived) and rest.size == 5 - removed


def test_limit_fragment_empty_mass_and_component_count():
    rho = sp.resolve_named("tree").radius()
    rng = RngState(21)
    m = 20000
    ks = Counter(sa.limit_fragment_sample(sp.SET, CORPUS["tree"], rho, rng, render=False).k for _ in range(m))
    p0 = math.exp(-0.5)
    assert abs(ks[0] / m - p0) < 4 * math.sqrt(p0 * (1 - p0) / m)
    assert chi2_p(capped(ks, 4), poisson_law(0.5, 4)) > P_MIN


def test_limit_fragment_cactus_residues_have_disjoint_count_parities():
    info = sp.resolve_named("triangle_cactus")
    rho = info.radius()
    rng = RngState(22)
    parities = {}
    for a in (0, 1):
        ks = {sa.limit_fragment_sample(sp.SET, CORPUS["cactus"], rho, rng, residue=a, D=2, render=False).k % 2
              for _ in range(300)}
        parities[a] = ks
    assert parities[0] == {1} and parities[1] == {0}
    with pytest.raises(PreconditionError):
        sa.limit_fragment_sample(sp.SET, CORPUS["cactus"], rho, rng, residue=1)


# -- graph-class Boltzmann graphs


def test_boltzmann_graph_forest_count_is_plain_poisson():
    model = gc.model_for(gc.BlockWeights.parse("edge"), 256)
    rng = RngState(23)
    ks = Counter(gc.boltzmann_graph_sample(model, 1, rng, render=False).k for _ in range(20000))
    assert chi2_p(capped(ks, 4), poisson_law(0.5, 4)) > P_MIN


def test_boltzmann_graph_cactus_parities_and_empty_graph():
    model = gc.model_for(gc.BlockWeights.parse("triangle"), 256)
    rng = RngState(24)
    k0 = {gc.boltzmann_graph_sample(model, 0, rng).k % 2 for _ in range(300)}
    k1 = [gc.boltzmann_graph_sample(model, 1, rng) for _ in range(300)]
    assert k0 == {1}
    assert {s.k % 2 for s in k1} == {0}
    empty = next(s for s in k1 if s.k == 0)
    assert empty.size == 0 and empty.blocks == ()
    for s in k1:
        for c in s.components:
            assert c.n % 2 == 1 and len(c.edges) == 3 * (c.n - 1) // 2


def test_set_outer_component_law_matches_lattice_weights():
    # K for SET_{a} o cactus restricted to exact size: compare with enumeration at n = 5
    e = CORPUS["cactus_forest_odd"]
    objs = sa.enumerate_structures(e, 5)
    total = sum(w for _, w in objs)
    law = Counter()
    for s, w in objs:
        law[s.k] += w / total
    rng = RngState(25)
    counts = Counter(sa.exact_sample_small(e, 5, rng).k for _ in range(6000))
    assert set(counts) <= {1, 3, 5}
    assert chi2_p(counts, dict(law)) > P_MIN


def test_enumeration_totals_match_series():
    for name, e in CORPUS.items():
        s = sp.egf(e, 5)
        for n in range(5):
            assert sum(w for _, w in sa.enumerate_structures(e, n)) == s[n] * math.factorial(n), (name, n)


def test_restricted_poisson_support():
    rng = RngState(26)
    draws = [sa._restricted_poisson(mpmath.mpf(2), 1, 3, rng) for _ in range(500)]
    assert all(k % 3 == 1 for k in draws)
