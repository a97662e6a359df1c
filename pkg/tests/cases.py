"""Random admissible inputs for the three streamed algorithms.

Each builder returns a `StreamingInputCluster` hosting one or more
algorithm instances plus a simulation parameter lambda. Constants are
drawn small so that layers really split into several parts.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from congestlab.graph import Graph, SplitGraph
from congestlab.partition_tree import (
    IntervalAssignment,
    K3Constraints,
    K3LayerAlgorithm,
    SplitConstraints,
    SplitLayerAlgorithm,
)
from congestlab.skipstream import StreamInput, StreamingInputCluster


@dataclass
class FidelityCase:
    cluster: StreamingInputCluster
    lam: int
    label: str


def random_connected(rng: random.Random, vertices: list[int], n: int, density: float) -> Graph:
    order = vertices[:]
    rng.shuffle(order)
    edges = {tuple(sorted((order[i], order[rng.randrange(i)]))) for i in range(1, len(order))}
    for i, u in enumerate(vertices):
        for v in vertices[i + 1:]:
            if rng.random() < density:
                edges.add((u, v))
    return Graph(n, edges, vertices=set(vertices))


def _random_intervals(rng: random.Random, universe: list[int]) -> list[set[int]]:
    """A random contiguous partition of a sorted universe."""
    cuts = sorted(rng.sample(range(1, len(universe)), min(len(universe) - 1, rng.randrange(0, 3))))
    bounds = [0] + cuts + [len(universe)]
    return [set(universe[a:b]) for a, b in zip(bounds, bounds[1:])]


def k3_case(seed: int) -> FidelityCase:
    rng = random.Random(seed)
    n = rng.randrange(6, 30)
    k = rng.randrange(2, min(n, 16) + 1)
    v_list = sorted(rng.sample(range(1, n + 1), k))
    g = random_connected(rng, v_list, n, rng.choice([0.2, 0.5, 0.8]))
    standard = rng.random() < 0.3
    cons = K3Constraints(k, g.m) if standard else K3Constraints(k, g.m, c1=rng.randrange(1, 4), c2=rng.randrange(0, 6),
                                                              c3=rng.randrange(1, 3))
    inputs = []
    for _ in range(rng.randrange(1, 4)):
        depth = rng.randrange(0, 3)
        anc = [rng.choice(_random_intervals(rng, v_list)) for _ in range(depth)]
        h = {v: [((v, g.degree(v)) + tuple(len(g.neighbors(v) & W) for W in anc), ())] for v in v_list}
        alg = K3LayerAlgorithm(n, depth, cons, n_out=None if standard else k)
        inputs.append(StreamInput(alg, h))
    lam = rng.randrange(1, k // len(inputs) + 1) if k >= len(inputs) else 1
    return FidelityCase(StreamingInputCluster(g, tuple(v_list), inputs, n), lam, f"k3 seed={seed}")


def interval_case(seed: int) -> FidelityCase:
    rng = random.Random(seed)
    n = rng.randrange(4, 40)
    k = rng.randrange(2, min(n, 20) + 1)
    v_list = sorted(rng.sample(range(1, n + 1), k))
    g = random_connected(rng, v_list, n, rng.choice([0.1, 0.3, 0.7]))
    M = rng.randrange(0, 3 * k)
    alg = IntervalAssignment(n, k, M, 2 * g.m)
    h = {v: [((v, g.degree(v)), ())] for v in v_list}
    lam = rng.randrange(1, k + 1)
    return FidelityCase(StreamingInputCluster(g, tuple(v_list), [StreamInput(alg, h)], n), lam,
                        f"interval-assignment seed={seed}")


def split_case(seed: int) -> FidelityCase:
    rng = random.Random(seed)
    k = rng.randrange(2, 9)
    outside = rng.randrange(1, 16)
    n = k + outside + rng.randrange(0, 4)
    ids = rng.sample(range(1, n + 1), k + outside)
    v1, v2 = sorted(ids[:k]), sorted(ids[k:])
    g1 = random_connected(rng, v1, n, 0.5)
    dens = rng.choice([0.2, 0.5, 0.9])
    e2 = [(u, v) for i, u in enumerate(v2) for v in v2[i + 1:] if rng.random() < dens]
    e12 = [tuple(sorted((u, w))) for u in v1 for w in v2 if rng.random() < dens]
    sg = SplitGraph.from_sets(n, v1, g1.edges, e12, e2, V2=v2)
    p = rng.randrange(3, 6)
    p_prime = rng.randrange(1, p)
    a, b = rng.randrange(2, 5), rng.randrange(2, 5)
    cons = SplitConstraints(n, k, sg.m1, sg.m2, sg.m12, p, p_prime, a, b,
                            c1=rng.randrange(1, 5), c2=rng.randrange(b, 9))
    # sigma: contiguous runs of V2, in V_list order, some owners empty
    cuts = sorted(rng.choices(range(len(v2) + 1), k=k - 1))
    bounds = [0] + cuts + [len(v2)]
    sigma = {owner: tuple(v2[s:e]) for owner, s, e in zip(v1, bounds, bounds[1:])}
    inputs = []
    V1s, V2s = set(v1), set(v2)
    for _ in range(rng.randrange(1, 3)):
        depth = rng.randrange(0, p)
        over_v2 = depth < cons.pi
        anc = [rng.choice(_random_intervals(rng, v2 if i < cons.pi else v1)) for i in range(depth)]

        def vals(v: int) -> tuple[int, ...]:
            nb = sg.neighbors(v)
            return (len(nb & V1s), len(nb & V2s)) + tuple(len(nb & W) for W in anc)

        h, n_mains = {}, 0
        for owner in v1:
            verts = sigma[owner] if over_v2 else (owner,)
            if not verts:
                continue
            aux = tuple((v,) + vals(v) for v in verts)
            agg = tuple(sum(x[i] for x in aux) for i in range(1, 3 + depth))
            h[owner] = [((verts[0], verts[-1], len(verts)) + agg, aux)]
            n_mains += 1
        universe = v2 if over_v2 else v1
        alg = SplitLayerAlgorithm(n, depth, n_mains, universe[-1], cons, n_out=len(universe))
        inputs.append(StreamInput(alg, h))
    lam = rng.randrange(1, k // len(inputs) + 1)
    return FidelityCase(StreamingInputCluster(g1, tuple(v1), inputs, n), lam, f"split seed={seed}")


BUILDERS = {"k3-layer": k3_case, "interval-assignment": interval_case, "split-layer": split_case}
