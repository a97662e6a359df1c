from fractions import Fraction

import pytest

from congestlab.generators import (
    KINDS,
    SplitMix64,
    bipartite,
    complete,
    corpus,
    generate,
    glued_cliques,
    gnp,
    parse_gen,
    petersen,
    wheel,
)
from congestlab.graph import GraphError, brute_force_cliques


def test_splitmix_reference_values():
    # first outputs for seed 0, as published with the generator
    rng = SplitMix64(0)
    assert [rng.next() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_complete_and_bipartite_sizes():
    assert complete(5).m == 10
    assert bipartite(3, 3).m == 9
    assert brute_force_cliques(bipartite(3, 3), 3) == []


def test_petersen_is_cubic_and_triangle_free():
    g = petersen()
    assert g.m == 15 and all(g.degree(v) == 3 for v in g.vertices)
    assert brute_force_cliques(g, 3) == []


def test_wheel_hub_is_vertex_one():
    g = wheel(5)
    assert g.degree(1) == 5 and g.m == 10
    assert len(brute_force_cliques(g, 3)) == 5


def test_wheel_needs_rim_three():
    with pytest.raises(GraphError):
        wheel(2)


def test_glued_cliques_share_vertices():
    g = glued_cliques(6, 3)
    assert g.n == 9 and g.m == 2 * 15 - 3
    assert len(brute_force_cliques(g, 6)) == 2


def test_gnp_is_deterministic_and_seeded():
    a = gnp(30, Fraction(1, 2), 4)
    assert a.edges == gnp(30, Fraction(1, 2), 4).edges
    assert a.edges != gnp(30, Fraction(1, 2), 5).edges
    assert gnp(10, 0, 1).m == 0 and gnp(10, 1, 1).m == 45


def test_gnp_rejects_bad_probability():
    with pytest.raises(GraphError):
        gnp(5, Fraction(3, 2))


def test_generate_dispatch_and_errors():
    assert generate("complete", n=4).m == 6
    assert generate("bridged-cliques").m == 21
    with pytest.raises(GraphError, match="needs parameter"):
        generate("gnp", n=5)
    with pytest.raises(GraphError, match="unknown generator"):
        generate("torus")
    assert "wheel" in KINDS


def test_parse_gen():
    kind, params = parse_gen("gnp:n=30,p=1/2")
    assert kind == "gnp" and params == {"n": "30", "p": Fraction(1, 2)}
    assert parse_gen("petersen") == ("petersen", {})
    with pytest.raises(GraphError):
        parse_gen("gnp:n")


def test_corpus_layout():
    names = [name for name, _ in corpus()]
    assert len(names) == 8 + 2 + 5 + 2 + 30
    assert names[0] == "K5" and names[7] == "K12"
    gnps = [g for name, g in corpus() if name.startswith("gnp")]
    assert sorted({g.n for g in gnps}) == [8 * (s + 1) for s in range(10)]
