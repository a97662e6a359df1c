import itertools
from fractions import Fraction
from math import comb

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from congestlab.generators import bipartite, complete, petersen
from congestlab.graph import (
    ContractViolation,
    Graph,
    GraphError,
    ParseError,
    SplitGraph,
    brute_force_cliques,
    conductance,
    cut_metrics,
    degree_into,
    dump_graph,
    format_cliques,
    induced_by_edges,
    load_graph,
    parse_cliques,
    relabel,
)

from .conftest import connected, graphs

C4 = Graph(4, [(1, 2), (2, 3), (3, 4), (1, 4)])


def nx_cliques(g: Graph, p: int) -> list[tuple[int, ...]]:
    """Independent oracle route: networkx clique enumeration."""
    h = nx.Graph()
    h.add_nodes_from(g.vertices)
    h.add_edges_from(g.edges)
    out = set()
    for c in nx.enumerate_all_cliques(h):
        if len(c) == p:
            out.add(tuple(sorted(c)))
        if len(c) > p:
            break
    return sorted(out)


class TestLoad:
    def test_triangle(self):
        g = load_graph("3 3\n1 2\n2 3\n1 3\n")
        assert (g.n, g.m) == (3, 3)

    def test_edgeless(self):
        g = load_graph("2 0\n")
        assert (g.n, g.m) == (2, 0)

    def test_k4(self):
        text = "4 6\n" + "".join(f"{u} {v}\n" for u, v in itertools.combinations(range(1, 5), 2))
        assert load_graph(text) == complete(4)

    def test_comments_and_blank_lines(self):
        g = load_graph("# header follows\n3 2\n\n1 2 # first\n2 3\n")
        assert g.edges == {(1, 2), (2, 3)}

    def test_duplicates_collapse(self):
        g = load_graph("3 3\n1 2\n2 1\n2 3\n")
        assert g.m == 2

    def test_malformed_line_reports_number(self):
        with pytest.raises(ParseError) as err:
            load_graph("3 1\n1 x\n")
        assert "line 2" in str(err.value)

    def test_self_loop_rejected(self):
        with pytest.raises(ParseError):
            load_graph("3 1\n2 2\n")

    def test_out_of_range(self):
        with pytest.raises(ParseError):
            load_graph("3 1\n1 4\n")

    def test_graph_rejects_self_loop(self):
        with pytest.raises(GraphError):
            Graph(3, [(1, 1)])

    @given(graphs())
    def test_dump_round_trip(self, g):
        assert load_graph(dump_graph(g)) == g

    @given(graphs(min_n=2, max_n=8), st.randoms(use_true_random=False))
    def test_order_independent(self, g, rnd):
        lines = [f"{u} {v}" for u, v in g.edges]
        rnd.shuffle(lines)
        assert load_graph(f"{g.n} {g.m}\n" + "\n".join(lines) + "\n") == g


class TestConductance:
    def test_triangle(self):
        res = conductance(complete(3))
        assert res.value == 1 and res.mode == "exact"

    def test_c4(self):
        assert conductance(C4).value == Fraction(1, 2)

    def test_single_edge(self):
        assert conductance(Graph(2, [(1, 2)])).value == 1

    def test_disconnected_has_zero_and_witness(self):
        res = conductance(Graph(4, [(1, 2), (3, 4)]))
        assert res.value == 0 and res.mode == "disconnected"
        assert cut_metrics(Graph(4, [(1, 2), (3, 4)]), res.witness).boundary == 0

    def test_spectral_mode_is_a_lower_bound(self):
        g = complete(24)
        res = conductance(g)
        assert res.mode == "spectral"
        assert res.value <= res.upper
        assert res.value <= cut_metrics(g, range(1, 13)).conductance

    @given(graphs(min_n=2, max_n=9))
    def test_cut_identity(self, g):
        if g.m == 0:
            return
        for r in range(1, len(g.vertices)):
            S = sorted(g.vertices)[:r]
            cm = cut_metrics(g, S)
            if min(cm.volume, cm.complement_volume):
                assert cm.conductance * min(cm.volume, cm.complement_volume) == cm.boundary

    @given(graphs(min_n=2, max_n=9))
    def test_minimum_over_enumerated_cuts(self, g):
        if g.m == 0 or not connected(g):
            return
        res = conductance(g)
        vs = sorted(g.vertices)
        best = None
        for r in range(1, len(vs)):
            for S in itertools.combinations(vs, r):
                cm = cut_metrics(g, S)
                if min(cm.volume, cm.complement_volume):
                    phi = cm.conductance
                    assert res.value <= phi
                    best = phi if best is None else min(best, phi)
        assert res.value == best
        assert cut_metrics(g, res.witness).conductance == res.value


class TestHelpers:
    def test_degree_into(self):
        assert degree_into(complete(4), 1, {2, 3}) == 2
        assert degree_into(complete(4), 1, set()) == 0
        assert degree_into(C4, 1, {2, 3}) == 1

    def test_induced_by_edges(self):
        h = induced_by_edges(complete(4), [(1, 2)])
        assert h.vertices == {1, 2} and h.m == 1
        g = Graph(4, [(1, 2), (2, 3), (1, 3), (3, 4)])
        tri = induced_by_edges(g, [(1, 2), (2, 3), (1, 3)])
        assert tri.vertices == {1, 2, 3} and tri.m == 3

    def test_induced_by_all_edges(self):
        g = Graph(5, [(1, 2), (2, 3)])
        h = induced_by_edges(g, g.edges)
        assert h.edges == g.edges and h.vertices == {1, 2, 3}

    def test_induced_by_foreign_edge(self):
        with pytest.raises(ContractViolation):
            induced_by_edges(C4, [(1, 3)])


class TestOracle:
    def test_k5_p4(self):
        assert len(brute_force_cliques(complete(5), 4)) == 5

    def test_petersen_triangle_free(self):
        assert brute_force_cliques(petersen(), 3) == []

    def test_k33_triangle_free(self):
        assert brute_force_cliques(bipartite(3, 3), 3) == []

    @pytest.mark.parametrize("n", range(3, 13))
    def test_binomial_counts(self, n):
        for p in range(3, n + 1):
            assert len(brute_force_cliques(complete(n), p)) == comb(n, p)

    @given(graphs(max_n=11), st.integers(3, 5))
    def test_matches_networkx(self, g, p):
        assert brute_force_cliques(g, p) == nx_cliques(g, p)

    @given(graphs(max_n=10), st.integers(3, 4), st.randoms(use_true_random=False))
    def test_relabel_invariance(self, g, p, rnd):
        perm_list = list(range(1, g.n + 1))
        rnd.shuffle(perm_list)
        perm = dict(zip(range(1, g.n + 1), perm_list))
        inv = {b: a for a, b in perm.items()}
        back = sorted(tuple(sorted(inv[v] for v in q)) for q in brute_force_cliques(relabel(g, perm), p))
        assert back == brute_force_cliques(g, p)

    @given(graphs(max_n=10))
    def test_canonical_order(self, g):
        out = brute_force_cliques(g, 3)
        assert out == sorted(out) and all(list(q) == sorted(q) for q in out)
        assert parse_cliques(format_cliques(out)) == out


class TestSplitGraph:
    def test_from_graph_classes(self):
        sg = SplitGraph.from_graph(complete(4), {1, 2})
        assert (sg.k, sg.m1, sg.m2, sg.m12) == (2, 1, 1, 4)
        assert sg.edge_class(1, 3) == "E12" and sg.edge_class(3, 4) == "E2"

    @given(graphs(max_n=10), st.data())
    def test_partition_of_edges(self, g, data):
        V1 = data.draw(st.sets(st.sampled_from(sorted(g.vertices)))) if g.vertices else set()
        sg = SplitGraph.from_graph(g, V1)
        assert sg.E1 | sg.E2 | sg.E12 == g.edges
        assert sg.m1 + sg.m2 + sg.m12 == g.m
        for u, v in sg.E1:
            assert u in sg.V1 and v in sg.V1
        for u, v in sg.E2:
            assert u in sg.V2 and v in sg.V2

    def test_rejects_misplaced_edge(self):
        with pytest.raises(GraphError):
            SplitGraph.from_sets(4, {1, 2}, E1=[(1, 3)], E12=[], E2=[])
