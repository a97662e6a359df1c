import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestlab.expander import cluster_from_graph
from congestlab.generators import bipartite, bridged_cliques, complete, glued_cliques, gnp, wheel
from congestlab.graph import ContractViolation, Graph, brute_force_cliques, norm_edge
from congestlab.listing import (
    ClusterInput,
    ListingParams,
    compute_bad_sets,
    depth_bound,
    exhaustive_two_hop,
    full_ebar,
    import_external_edges,
    import_for_cluster,
    list_cliques,
    list_kp,
    list_kp_in_cluster,
    list_triangles,
    list_triangles_in_cluster,
    local_cliques,
    sentdeg_table,
    weighted_chain,
)

from .conftest import connected, graphs


def star(leaves: int) -> Graph:
    return Graph(leaves + 1, [(1, v) for v in range(2, leaves + 2)])


# --- local listing -------------------------------------------------------------------


def test_local_cliques_matches_oracle_on_k6():
    g = complete(6)
    for p in (3, 4, 5):
        assert sorted(local_cliques(g.edges, p)) == brute_force_cliques(g, p)


def test_local_cliques_containing():
    g = wheel(5)
    through_hub = local_cliques(g.edges, 3, containing=1)
    assert len(through_hub) == 5 and all(1 in t for t in through_hub)
    assert local_cliques(g.edges, 3, containing=99) == set()


def test_depth_bound():
    assert depth_bound(1) == 1
    assert depth_bound(8) == 4
    assert depth_bound(9) == 5


# --- exhaustive two-hop search ----------------------------------------------------------


def test_two_hop_star_has_no_triangles():
    assert exhaustive_two_hop(star(4), 4, 3).cliques == set()


def test_two_hop_k4():
    res = exhaustive_two_hop(complete(4), 3, 3)
    assert sorted(res.cliques) == brute_force_cliques(complete(4), 3)
    assert len(res.cliques) == 4


def test_two_hop_wheel_rim_finds_all():
    g = wheel(5)
    res = exhaustive_two_hop(g, 3, 3)
    assert res.searchers == (2, 3, 4, 5, 6)
    assert sorted(res.cliques) == brute_force_cliques(g, 3)


def test_two_hop_alpha_positive():
    with pytest.raises(ContractViolation):
        exhaustive_two_hop(complete(3), 0, 3)


@given(g=graphs(min_n=3, max_n=14, density=0.5), alpha=st.integers(1, 8), p=st.integers(3, 5))
def test_two_hop_finds_exactly_searcher_cliques(g, alpha, p):
    res = exhaustive_two_hop(g, alpha, p)
    low = {v for v in g.vertices if g.degree(v) <= alpha}
    want = {q for q in brute_force_cliques(g, p) if low & set(q)}
    assert res.cliques == want


# --- in-cluster triangles ----------------------------------------------------------------


def test_in_cluster_k27():
    res = list_triangles_in_cluster(cluster_from_graph(complete(27)))
    assert len(res.cliques) == 2925 == math.comb(27, 3)


def test_in_cluster_bipartite():
    assert list_triangles_in_cluster(cluster_from_graph(bipartite(3, 3))).cliques == set()


def test_in_cluster_gnp30():
    g = gnp(30, Fraction(1, 2), 3)
    res = list_triangles_in_cluster(cluster_from_graph(g))
    assert sorted(res.cliques) == brute_force_cliques(g, 3)


# --- triangle wrapper ----------------------------------------------------------------


def test_bridged_k5_triangles():
    res = list_triangles(bridged_cliques(5, 2))
    assert len(res.cliques) == 20
    assert not any({5, 6} <= set(q) for q in res.cliques)


def test_bipartite_no_triangles():
    assert list_triangles(bipartite(4, 5)).cliques == []


def test_gnp60_triangles():
    g = gnp(60, Fraction(3, 10), 11)
    assert list_triangles(g).cliques == brute_force_cliques(g, 3)


def test_list_cliques_alias():
    g = complete(5)
    assert list_cliques(g, 3).cliques == list_kp(g, 3).cliques


def test_p_below_three_rejected():
    with pytest.raises(ValueError):
        list_kp(complete(4), 2)


# --- K_p wrappers ------------------------------------------------------------------


def test_k6_k4s():
    res = list_kp(complete(6), 4)
    assert len(res.cliques) == 15


def test_glued_k6_k4s():
    g = glued_cliques(6, 3)
    res = list_kp(g, 4)
    assert res.cliques == brute_force_cliques(g, 4)
    assert any(set(q) & {1, 2, 3} for q in res.cliques)


def test_gnp50_k5s():
    g = gnp(50, Fraction(2, 5), 5)
    assert list_kp(g, 5).cliques == brute_force_cliques(g, 5)


def test_params_defaults():
    assert ListingParams.defaults(3).epsilon == Fraction(1, 6)
    p4 = ListingParams.defaults(4)
    assert (p4.epsilon, p4.gamma) == (Fraction(1, 12), 4)
    p5 = ListingParams.defaults(6)
    assert (p5.epsilon, p5.beta, p5.gamma) == (Fraction(1, 18), 24, 12)
    assert ListingParams.defaults(4, gamma=None).gamma == 4
    assert ListingParams.defaults(4, scale=0.125).scale == Fraction(1, 8)


def test_slack_from_environment(monkeypatch):
    monkeypatch.setenv("CONGESTLAB_SLACK", "3")
    assert ListingParams.defaults(5).slack_value == 3.0
    assert ListingParams.defaults(5, slack=2.0).slack_value == 2.0


# --- bad sets --------------------------------------------------------------------


def cluster_k4_in(n: int, extra) -> tuple[Graph, object]:
    inner = list(complete(4).edges)
    g = Graph(n, inner + list(extra))
    return g, cluster_from_graph(Graph(n, inner))


def test_bad_sets_closed_cluster():
    g, c = cluster_k4_in(16, [])
    bad = compute_bad_sets(g, c, 4)
    assert bad.S_star == frozenset() and bad.S == frozenset()


def test_bad_sets_outside_heavy_vertex():
    # n = 16, p = 4: threshold n^(1/2) = 4; u = 5 has 1 edge in, 5 out
    g, c = cluster_k4_in(16, [(1, 5)] + [(5, w) for w in range(6, 11)])
    assert compute_bad_sets(g, c, 4).S_star == frozenset({5})
    g, c = cluster_k4_in(16, [(1, 5)] + [(5, w) for w in range(6, 10)])
    assert compute_bad_sets(g, c, 4).S_star == frozenset()


def test_bad_sets_inside_heavy_vertex():
    extra = [(1, u) for u in range(5, 10)] + [(u, w) for u in range(5, 10) for w in range(10, 16)]
    g, c = cluster_k4_in(16, extra)
    bad = compute_bad_sets(g, c, 4)
    assert bad.S_star == frozenset(range(5, 10))
    assert bad.S == frozenset({1})


def test_bad_sets_all_external_tied_in():
    extra = [(v, u) for u in range(5, 9) for v in range(1, 5)] + [(5, 6)]
    g, c = cluster_k4_in(8, extra)
    assert compute_bad_sets(g, c, 5).S_star == frozenset()


def test_bad_sets_need_p4():
    g, c = cluster_k4_in(8, [])
    with pytest.raises(ContractViolation):
        compute_bad_sets(g, c, 3)


@given(g=graphs(min_n=5, max_n=16, density=0.4), k=st.integers(2, 6), p=st.integers(4, 6),
       scale=st.sampled_from([Fraction(1), Fraction(1, 2), Fraction(1, 4)]))
def test_bad_sets_recount(g, k, p, scale):
    vl = set(range(1, min(k, g.n) + 1))
    inner = [e for e in g.edges if e[0] in vl and e[1] in vl]
    c = cluster_from_graph(Graph(g.n, inner, vertices=vl), v_list=vl)
    bad = compute_bad_sets(g, c, p, scale)
    # integer form of d_in < d_out / (scale * n^(1-2/p)) and |N(v) & S*| > scale * n^(1-2/p)
    sn, sd = scale.numerator, scale.denominator
    star = set()
    for u in set(g.vertices) - vl:
        d_in = len(g.neighbors(u) & vl)
        d_out = len(g.neighbors(u) - vl)
        if d_in >= 1 and (d_in * sn) ** p * g.n ** (p - 2) < (d_out * sd) ** p:
            star.add(u)
    assert bad.S_star == star
    assert bad.S == {v for v in vl if (len(g.neighbors(v) & star) * sd) ** p > sn ** p * g.n ** (p - 2)}


# --- imports and sentdeg ----------------------------------------------------------------


def test_import_closed_cluster_is_empty():
    g, c = cluster_k4_in(8, [])
    res = import_for_cluster(g, c, compute_bad_sets(g, c, 5))
    assert res.inputs.ebar == frozenset() and res.inputs.eprime == {}
    assert sentdeg_table(g, c, res.inputs) == {}


def test_sentdeg_single_external_vertex():
    g, c = cluster_k4_in(8, [(5, 1), (5, 2), (5, 3)])
    res = import_for_cluster(g, c, compute_bad_sets(g, c, 5))
    table = sentdeg_table(g, c, res.inputs)
    assert table == {5: (1, 3)}


def test_sentdeg_two_clusters_independent():
    a = [(u, v) for u, v in itertools.combinations(range(1, 5), 2)]
    b = [(u, v) for u, v in itertools.combinations(range(6, 10), 2)]
    g = Graph(9, a + b + [(5, 1), (5, 2), (5, 6)])
    c1 = cluster_from_graph(Graph(9, a))
    c2 = cluster_from_graph(Graph(9, b))
    r1, r2 = import_external_edges(g, [c1, c2], 5)
    # each cluster sees all three edges of 5: two crossing plus one imported, or vice versa
    assert sentdeg_table(g, c1, r1.inputs)[5] == (1, 3)
    assert sentdeg_table(g, c2, r2.inputs)[5] == (6, 3)


def test_import_chunks_outside_edges():
    # u = 5 has two V_list neighbours and four outside edges; chunk size ceil(8^(3/5)) = 4
    g, c = cluster_k4_in(8, [(5, 1), (5, 2)] + [(5, w) for w in range(6, 9)] + [(6, 7)])
    res = import_for_cluster(g, c, compute_bad_sets(g, c, 5))
    held = {v: {norm_edge(*cp) for cp in cps} for v, cps in res.inputs.eprime.items()}
    assert set().union(*held.values()) == {(5, 6), (5, 7), (5, 8)}
    assert res.volume_ok


def test_weighted_chain_is_contiguous():
    sigma = weighted_chain((1, 2, 3), {1: 1, 2: 1, 3: 2}, list(range(4, 12)), {u: 1 for u in range(4, 12)})
    flat = [u for v in (1, 2, 3) for u in sigma[v]]
    assert flat == list(range(4, 12))


# --- in-cluster K_p ----------------------------------------------------------------------


def test_in_cluster_k12_k4s():
    g = complete(12)
    res = list_kp_in_cluster(cluster_from_graph(g), 4, g)
    assert len(res.cliques) == 495


def test_in_cluster_k2_gadget():
    g = complete(4)
    c = cluster_from_graph(Graph(4, [(1, 2)]))
    inp = ClusterInput(ebar=full_ebar(g, [1, 2]), eprime={1: {(3, 4), (4, 3)}})
    res = list_kp_in_cluster(c, 4, g, inp, p_primes=[2])
    assert res.cliques == {(1, 2, 3, 4)}


@settings(max_examples=25)
@given(g=graphs(min_n=6, max_n=16, density=0.6), k=st.integers(3, 8), p=st.integers(4, 5))
def test_in_cluster_structural_union(g, k, p):
    vl = set(range(1, min(k, g.n) + 1))
    inner = Graph(g.n, [e for e in g.edges if e[0] in vl and e[1] in vl], vertices=vl)
    if not connected(inner):
        return
    c = cluster_from_graph(inner, v_list=vl)
    outside = {e for e in g.edges if e[0] not in vl and e[1] not in vl}
    holder = min(vl)
    inp = ClusterInput(ebar=full_ebar(g, vl), eprime={holder: {cp for a, b in outside for cp in ((a, b), (b, a))}})
    res = list_kp_in_cluster(c, p, g, inp)
    want = {q for q in brute_force_cliques(g, p) if len(vl & set(q)) >= 2}
    assert res.cliques == want


# --- wrappers under scaled thresholds ---------------------------------------------------


@settings(max_examples=20)
@given(n=st.integers(8, 40), q=st.sampled_from([Fraction(1, 5), Fraction(2, 5), Fraction(3, 5)]),
       seed=st.integers(0, 1000), p=st.integers(3, 5),
       scale=st.sampled_from([Fraction(1), Fraction(1, 4), Fraction(1, 8)]))
def test_wrapper_matches_oracle(n, q, seed, p, scale):
    g = gnp(n, q, seed)
    res = list_kp(g, p, ListingParams.defaults(p, scale=scale))
    assert res.cliques == brute_force_cliques(g, p)
    assert sorted(res.attribution) == res.cliques
    assert res.depth <= depth_bound(max(1, g.m))
    assert not res.failures
    assert not res.accountant.trace.violations(res.accountant.B)


def test_block_graph_uses_bad_sets():
    # dense blocks tied together sparsely: small thresholds make outside vertices bad
    blocks = [list(range(1 + 8 * i, 9 + 8 * i)) for i in range(4)]
    edges = [e for blk in blocks for e in itertools.combinations(blk, 2)]
    edges += [(blocks[i][0], blocks[(i + 1) % 4][j]) for i in range(4) for j in range(3)]
    g = Graph(32, edges)
    res = list_kp(g, 5, ListingParams.defaults(5, scale=Fraction(1, 8)))
    assert res.cliques == brute_force_cliques(g, 5)
