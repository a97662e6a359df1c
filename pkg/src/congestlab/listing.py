"""End-to-end clique listing: exhaustive two-hop search, in-cluster listing
over partition trees, and the recursive wrappers for p = 3, p = 4 and p > 4.

Every wrapper level decomposes the current edge set, lists what its clusters
are responsible for, removes the edges whose cliques are now fully listed and
recurses on the rest. Protocol traffic is accounted phase by phase; clusters
of one level are accounted one after another.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .congest import DEFAULT_CB, Accountant, Message, RoundTrace, bandwidth, exchange, id_width
from .expander import (
    DEFAULT_PHI,
    CommunicationCluster,
    build_communication_clusters,
    ceil_root,
    decompose,
    edge_accounting,
    k3_delta,
    kp_delta_rule,
    load_factor,
    route,
    verify_decomposition,
)
from .graph import ContractViolation, Edge, Graph, SplitGraph, norm_edge
from .partition_tree import (
    TreeBuild,
    TreeReport,
    broadcast_n_messages,
    build_k3_tree,
    build_split_tree,
    degree_balanced_distribute,
    k3_graph,
    verify_tree,
)

SLACK_ENV = "CONGESTLAB_SLACK"
DEFAULT_SLACK = 8.0


def slack_constant(default: float = DEFAULT_SLACK) -> float:
    raw = os.environ.get(SLACK_ENV)
    return float(raw) if raw else default


class ListingError(RuntimeError):
    pass


@dataclass
class ListingParams:
    """Wrapper constants. `scale` multiplies every n-dependent threshold and
    exists so small graphs exercise the high-degree branches; 1 keeps the
    defaults."""

    p: int
    epsilon: Fraction
    beta: Fraction = Fraction(24)
    gamma: Fraction = Fraction(12)
    scale: Fraction = Fraction(1)
    phi: Fraction = DEFAULT_PHI
    c_B: int = DEFAULT_CB
    slack: float | None = None
    verify: bool = True

    @classmethod
    def defaults(cls, p: int, **overrides) -> "ListingParams":
        if p == 3:
            base = cls(p, Fraction(1, 6))
        elif p == 4:
            base = cls(p, Fraction(1, 12), beta=Fraction(24), gamma=Fraction(4))
        elif p > 4:
            base = cls(p, Fraction(1, 18), beta=Fraction(24), gamma=Fraction(12))
        else:
            raise ValueError("p must be at least 3")
        for key, val in overrides.items():
            if val is None:
                continue
            if key in ("epsilon", "beta", "gamma", "scale", "phi"):
                val = Fraction(val).limit_denominator(10**6) if isinstance(val, float) else Fraction(val)
            setattr(base, key, val)
        return base

    @property
    def slack_value(self) -> float:
        return self.slack if self.slack is not None else slack_constant()


@dataclass
class ListingResult:
    p: int
    cliques: list[tuple[int, ...]]
    attribution: dict[tuple[int, ...], tuple[str, int]]
    depth: int
    accountant: Accountant
    audits: dict[str, list] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def attribution_counts(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for phase, _ in self.attribution.values():
            out[phase] += 1
        return dict(sorted(out.items()))


class _Collector:
    def __init__(self, n: int, c_B: int):
        self.acc = Accountant(n, c_B)
        self.attr: dict[tuple[int, ...], tuple[str, int]] = {}
        self.audits: dict[str, list] = defaultdict(list)
        self.failures: list[str] = []

    def record(self, cliques: Iterable[tuple[int, ...]], phase: str, level: int) -> None:
        for q in sorted(cliques):
            self.attr.setdefault(q, (phase, level))

    def absorb(self, name: str, trace: RoundTrace) -> None:
        if len(trace):
            self.acc.absorb(name, trace)

    def result(self, p: int, depth: int) -> ListingResult:
        return ListingResult(p, sorted(self.attr), dict(sorted(self.attr.items())), depth, self.acc,
                             dict(self.audits), self.failures)


def depth_bound(m: int) -> int:
    return math.ceil(math.log2(m)) + 1 if m > 1 else 1


# ---------------------------------------------------------------------------
# Local listing and exhaustive search


def local_cliques(edges: Iterable[Edge], p: int, containing: int | None = None) -> set[tuple[int, ...]]:
    """All p-cliques of an edge set, optionally only those through one vertex.

    Set-intersection extension over ascending vertex order; deliberately a
    different method from the bitset oracle in graph.py.
    """
    adj: dict[int, set[int]] = defaultdict(set)
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    out: set[tuple[int, ...]] = set()

    def extend(clique: list[int], cands: set[int]) -> None:
        if len(clique) == p:
            out.add(tuple(clique))
            return
        for w in sorted(cands):
            if len(clique) + 1 + sum(1 for z in cands if z > w) < p:
                break
            extend(clique + [w], {z for z in cands if z > w and z in adj[w]})

    if containing is not None:
        nb = sorted(adj.get(containing, ()))
        return {tuple(sorted(q + (containing,))) for q in _cliques_in(adj, nb, p - 1)}
    for v in sorted(adj):
        extend([v], {w for w in adj[v] if w > v})
    return out


def _cliques_in(adj: dict[int, set[int]], verts: Sequence[int], size: int) -> list[tuple[int, ...]]:
    if size == 0:
        return [()]
    vs = set(verts)
    res: list[tuple[int, ...]] = []

    def extend(clique: list[int], cands: set[int]) -> None:
        if len(clique) == size:
            res.append(tuple(clique))
            return
        for w in sorted(cands):
            extend(clique + [w], {z for z in cands if z > w and z in adj[w]})

    for v in sorted(vs):
        extend([v], {w for w in adj[v] if w > v and w in vs})
    return res


def ids_per_message(n: int, c_B: int = DEFAULT_CB) -> int:
    return max(1, (bandwidth(n, c_B) - 4) // (id_width(n) + 1))


def _pack(ids: Sequence[int], per: int, tag: int) -> list[Message]:
    return [Message(tag, tuple(ids[i:i + per])) for i in range(0, len(ids), per)] or [Message(tag, ())]


@dataclass
class TwoHopResult:
    cliques: set[tuple[int, ...]]
    trace: RoundTrace
    searchers: tuple[int, ...]


def exhaustive_two_hop(g: Graph, alpha: int, p: int, searchers: Iterable[int] | None = None,
                       c_B: int = DEFAULT_CB) -> TwoHopResult:
    """Every searcher v (default: deg <= alpha) learns the edges among its
    neighbours and lists the p-cliques through v."""
    if alpha < 1:
        raise ContractViolation("alpha must be at least 1")
    srch = tuple(sorted(searchers if searchers is not None else (v for v in g.vertices if g.degree(v) <= alpha)))
    trace = RoundTrace()
    found: set[tuple[int, ...]] = set()
    if not srch:
        return TwoHopResult(found, trace, srch)
    per = ids_per_message(g.n, c_B)
    ask = []
    for v in srch:
        nb = sorted(g.neighbors(v))
        for u in nb:
            ask += [(v, u, m) for m in _pack(nb, per, 1)]
    ex1 = exchange(g, ask, g.n, c_B)
    trace.extend(ex1.trace)
    reply = []
    for v in srch:
        nv = g.neighbors(v)
        for u in sorted(nv):
            common = sorted(g.neighbors(u) & nv)
            reply += [(u, v, m) for m in _pack(common, per, 2)]
    ex2 = exchange(g, reply, g.n, c_B)
    trace.extend(ex2.trace, trace.rounds)
    for v in srch:
        learned = {norm_edge(v, u) for u in g.neighbors(v)}
        for u, msg in ex2.received.get(v, []):
            learned.update(norm_edge(u, w) for w in msg.fields)
        found |= local_cliques(learned, p, containing=v)
    return TwoHopResult(found, trace, srch)


# ---------------------------------------------------------------------------
# Triangles


@dataclass
class InClusterResult:
    cliques: set[tuple[int, ...]]
    trace: RoundTrace
    builds: list[tuple[int, TreeBuild, object, TreeReport]] = field(default_factory=list)
    stats: dict[str, int] = field(default_factory=dict)


def _route(graph: Graph, demands, n: int, c_B: int, trace: RoundTrace) -> dict[int, list]:
    if not demands:
        return {}
    res = route(graph, demands, L=load_factor(graph, demands), n=n, c_B=c_B)
    trace.extend(res.trace, trace.rounds)
    return res.received


def list_triangles_in_cluster(c: CommunicationCluster, c_B: int = DEFAULT_CB, verify: bool = True) -> InClusterResult:
    trace = RoundTrace()
    found: set[tuple[int, ...]] = set()
    alpha = max(1, ceil_root(c.K, 3))
    low = sorted(c.nodes - c.v_list_set)
    two = exhaustive_two_hop(c.graph, alpha, 3, searchers=low, c_B=c_B)
    found |= two.cliques
    trace.extend(two.trace)
    if not c.v_list:
        return InClusterResult(found, trace, stats={"low": len(low)})
    build = build_k3_tree(c, c_B=c_B)
    trace.extend(build.trace, trace.rounds)
    gl = k3_graph(c)
    report = verify_tree(build.tree, gl, build.constraints) if verify else TreeReport(True, [], {})
    if not report.ok:
        raise ContractViolation(f"K3 tree failed verification: {report.violations[0]}")
    # Two-step edge learning: requests to every member of every leaf part,
    # replies carrying that member's edges into the leaf's other parts.
    requests, replies = [], []
    learned: dict[int, set[Edge]] = defaultdict(set)
    for v, leaves in sorted(build.leaf_holders.items()):
        for leaf in leaves:
            parts = build.tree.leaf_parts(leaf)
            members = build.tree.leaf_members(leaf)
            for i, mem in enumerate(members):
                others = [parts[j] for j in range(3) if j != i]
                other_sets = [set(members[j]) for j in range(3) if j != i]
                for u in mem:
                    if u != v:
                        requests.append((v, u, Message(4, tuple(x for iv in others for x in iv))))
                    for w in sorted(gl.neighbors(u)):
                        if any(w in s for s in other_sets):
                            learned[v].add(norm_edge(u, w))
                            if u != v:
                                replies.append((u, v, Message(5, (u, w))))
    _route(c.graph, requests, c.n, c_B, trace)
    _route(c.graph, replies, c.n, c_B, trace)
    for v, edges in learned.items():
        found |= local_cliques(edges, 3)
    return InClusterResult(found, trace, [(3, build, gl, report)], {"low": len(low), "requests": len(requests),
                                                                    "replies": len(replies)})


def _boundary_step(gc: Graph, clusters: Sequence[CommunicationCluster], c_B: int) -> tuple[set, RoundTrace]:
    """Each V^in endpoint of an E^- edge forwards its neighbours outside E^+;
    the other endpoint checks adjacency."""
    per = ids_per_message(gc.n, c_B)
    sends = []
    found: set[tuple[int, ...]] = set()
    for c in clusters:
        for u, w in sorted(c.e_minus):
            for a, b in ((u, w), (w, u)):
                ext = sorted(x for x in gc.neighbors(a) if norm_edge(a, x) not in c.edges)
                if not ext:
                    continue
                sends += [(a, b, m) for m in _pack(ext, per, 6)]
                for x in ext:
                    if gc.has_edge(b, x):
                        found.add(tuple(sorted((a, b, x))))
    ex = exchange(gc, sends, gc.n, c_B)
    return found, ex.trace


def list_triangles(g: Graph, params: ListingParams | None = None) -> ListingResult:
    params = params or ListingParams.defaults(3)
    col = _Collector(g.n, params.c_B)
    current = set(g.edges)
    bound = depth_bound(g.m)
    level = 0
    while current:
        level += 1
        if level > bound:
            raise ListingError(f"recursion depth {level} exceeds {bound}")
        gc = Graph(g.n, current)
        dec = decompose(gc, params.epsilon, params.phi)
        if params.verify:
            rep = verify_decomposition(gc, dec)
            col.audits["decomposition"].append((level, rep.ok, rep.failures))
            if not rep.ok:
                col.failures.append(f"level {level}: decomposition {rep.failures[0]}")
        clusters = build_communication_clusters(gc, dec, k3_delta, list_scope="all", level=level)
        ea = edge_accounting(gc, clusters, dec.epsilon)
        col.audits["edge_accounting"].append((level, ea))
        if not ea.ok:
            col.failures.append(f"level {level}: edge accounting {ea}")
        for c in clusters:
            res = list_triangles_in_cluster(c, params.c_B, params.verify)
            col.record(res.cliques, "in-cluster", level)
            col.absorb(f"L{level}:cluster{c.index}", res.trace)
            for _, build, gl, rep in res.builds:
                col.audits["trees"].append((level, c.index, "k3", rep.ok, rep.max_parts, build.constraints.x))
                _audit_sim(col, build)
        found, tr = _boundary_step(gc, clusters, params.c_B)
        col.record(found, "boundary", level)
        col.absorb(f"L{level}:boundary", tr)
        removed = set().union(*(c.e_minus for c in clusters)) if clusters else set()
        col.audits["elimination"].append((level, len(current), len(removed)))
        current -= removed
    col.audits["depth"].append((level, bound))
    return col.result(3, level)


def _audit_sim(col: _Collector, build: TreeBuild) -> None:
    for depth, stats in enumerate(build.layer_stats):
        for (alg, _, _), st in zip(build.algorithms[depth], stats):
            ok = st.auxes <= alg.q and st.max_writes_between <= alg.y
            col.audits["skipstream"].append((alg.name, depth, st.auxes, alg.q, st.max_writes_between, alg.y,
                                             st.handoffs))
            if not ok:
                col.failures.append(f"{alg.name} exceeded a budget")


# ---------------------------------------------------------------------------
# K_p: bad sets, imports and in-cluster listing


def _threshold_pow(n: int, p: int, scale: Fraction) -> Fraction:
    """t^p for t = n^(1 - 2/p) * scale."""
    return Fraction(n) ** (p - 2) * Fraction(scale) ** p


@dataclass
class BadSets:
    S_star: frozenset[int]
    S: frozenset[int]
    t_pow: Fraction
    p: int

    @property
    def t(self) -> float:
        return float(self.t_pow) ** (1.0 / self.p)


def compute_bad_sets(g: Graph, cluster: CommunicationCluster, p: int, scale: Fraction = Fraction(1)) -> BadSets:
    if p < 4:
        raise ContractViolation("bad sets are defined for p >= 4")
    vl = cluster.v_list_set
    T = _threshold_pow(g.n, p, scale)
    star = set()
    for u in sorted({w for v in vl for w in g.neighbors(v)} - vl):
        d_in = len(g.neighbors(u) & vl)
        d_out = len(g.neighbors(u) - vl)
        if d_in >= 1 and Fraction(d_in) ** p * T < Fraction(d_out) ** p:
            star.add(u)
    S = {v for v in vl if Fraction(len(g.neighbors(v) & star)) ** p > T}
    return BadSets(frozenset(star), frozenset(S), T, p)


@dataclass
class ClusterInput:
    """Edges a cluster works with beyond C[V_list]: the crossing edges Ebar
    (known at their V_list endpoints) and imported outside edges as directed
    copies (tail, head) per V_list holder."""

    ebar: frozenset[Edge] = frozenset()
    eprime: dict[int, set[tuple[int, int]]] = field(default_factory=dict)
    received: dict[int, int] = field(default_factory=dict)

    @property
    def eprime_edges(self) -> frozenset[Edge]:
        return frozenset(norm_edge(a, b) for cps in self.eprime.values() for a, b in cps)

    def merge(self, other: "ClusterInput") -> None:
        for v, cps in other.eprime.items():
            self.eprime.setdefault(v, set()).update(cps)
        for v, x in other.received.items():
            self.received[v] = self.received.get(v, 0) + x


def full_ebar(g: Graph, v_list: Iterable[int]) -> frozenset[Edge]:
    vl = set(v_list)
    return frozenset(norm_edge(v, u) for v in vl for u in g.neighbors(v) if u not in vl)


def _chunked_sends(g: Graph, sender: int, edges: Sequence[Edge], targets: Sequence[int], chunk: int,
                   per: int) -> list[tuple[int, int, Message, list[tuple[int, int]]]]:
    """Send `edges` as both directed copies, `chunk` edges per target."""
    out = []
    for i in range(0, len(edges), chunk):
        tgt = targets[i // chunk]
        copies = [c for a, b in edges[i:i + chunk] for c in ((a, b), (b, a))]
        flat = [x for cp in copies for x in cp]
        for j in range(0, len(flat), 2 * max(1, per // 2)):
            out.append((sender, tgt, Message(7, tuple(flat[j:j + 2 * max(1, per // 2)])), []))
        out[-1][3].extend(copies)
    return out


def _learn_pairs(g: Graph, learner: int, among: Sequence[int], per: int) -> tuple[list, list, set[tuple[int, int]]]:
    """Learner sends `among` to each vertex in it; each replies with its
    neighbours inside `among`. Returns (asks, replies, copies learned)."""
    asks, replies = [], []
    copies: set[tuple[int, int]] = set()
    among_set = set(among)
    for u in among:
        asks += [(learner, u, m) for m in _pack(list(among), per, 8)]
        common = sorted(g.neighbors(u) & among_set)
        replies += [(u, learner, m) for m in _pack(common, per, 9)]
        for w in common:
            copies.add((u, w))
            copies.add((w, u))
    return asks, replies, copies


@dataclass
class ImportResult:
    inputs: ClusterInput
    trace: RoundTrace
    volume_ok: bool
    volume_worst: float


def import_for_cluster(g: Graph, c: CommunicationCluster, bad: BadSets, c_B: int = DEFAULT_CB,
                       slack: float | None = None) -> ImportResult:
    """Edge import for the p > 4 wrapper."""
    slack = slack if slack is not None else slack_constant()
    vl = c.v_list_set
    per = ids_per_message(g.n, c_B)
    trace = RoundTrace()
    inp = ClusterInput(ebar=full_ebar(g, vl))
    asks, replies = [], []
    for v in c.v_list:
        if v in bad.S:
            continue
        among = sorted(g.neighbors(v) & bad.S_star)
        if not among:
            continue
        a, r, cps = _learn_pairs(g, v, among, per)
        asks += a
        replies += r
        inp.eprime.setdefault(v, set()).update(cps)
        inp.received[v] = inp.received.get(v, 0) + 2 * sum(1 for x, y in cps if x < y)
    chunk = max(1, ceil_root(bad.t_pow, bad.p))
    sends = []
    for u in sorted({w for v in vl for w in g.neighbors(v)} - vl - bad.S_star):
        targets = sorted(g.neighbors(u) & vl)
        edges = sorted(norm_edge(u, w) for w in g.neighbors(u) if w not in vl)
        if not edges:
            continue
        if -(-len(edges) // chunk) > len(targets):
            raise ContractViolation(f"vertex {u} lacks V_list neighbours for its chunks")
        for src, dst, msg, copies in _chunked_sends(g, u, edges, targets, chunk, per):
            sends.append((src, dst, msg))
            if copies:
                inp.eprime.setdefault(dst, set()).update(copies)
                inp.received[dst] = inp.received.get(dst, 0) + len(copies)
    for part in (asks, replies, sends):
        if part:
            trace.extend(exchange(g, part, g.n, c_B).trace, trace.rounds)
    _filter_outside(inp, vl)
    ok, worst = _volume_check(g.n, inp.received, c, bad.t, slack)
    return ImportResult(inp, trace, ok, worst)


def _filter_outside(inp: ClusterInput, vl: frozenset[int]) -> None:
    for v in list(inp.eprime):
        inp.eprime[v] = {cp for cp in inp.eprime[v] if cp[0] not in vl and cp[1] not in vl}
        if not inp.eprime[v]:
            del inp.eprime[v]


def _volume_check(n: int, received: dict[int, int], c: CommunicationCluster, t: float,
                  slack: float) -> tuple[bool, float]:
    log2n = max(1.0, math.log2(n))
    worst = 0.0
    for v, x in received.items():
        cap = slack * t * log2n * log2n * max(1, c.comdeg(v))
        worst = max(worst, x / cap)
    return worst <= 1.0, worst


def import_external_edges(g: Graph, clusters: Sequence[CommunicationCluster], p: int,
                          scale: Fraction = Fraction(1), c_B: int = DEFAULT_CB) -> list[ImportResult]:
    out = []
    for c in clusters:
        if not c.v_list:
            out.append(ImportResult(ClusterInput(), RoundTrace(), True, 0.0))
            continue
        out.append(import_for_cluster(g, c, compute_bad_sets(g, c, p, scale), c_B))
    return out


def sentdeg_table(g: Graph, c: CommunicationCluster, inp: ClusterInput) -> dict[int, tuple[int, int]]:
    """u -> (designated holder, sentdeg u). sentdeg counts the directed
    copies with tail u known to the cluster, crossing edges included; the
    holder is u's lowest V_list neighbour (or lowest copy holder)."""
    vl = c.v_list_set
    counts: dict[int, int] = defaultdict(int)
    holders: dict[int, set[int]] = defaultdict(set)
    for v, cps in inp.eprime.items():
        for a, _ in cps:
            counts[a] += 1
            holders[a].add(v)
    for a, b in inp.ebar:
        u, v = (a, b) if b in vl else (b, a)
        counts[u] += 1
        holders[u].add(v)
    out = {}
    for u in sorted(counts):
        nb = sorted(g.neighbors(u) & vl)
        out[u] = (nb[0] if nb else min(holders[u]), counts[u])
    return out


def weighted_chain(v_list: Sequence[int], degrees: dict[int, int], universe: Sequence[int],
                   weight: dict[int, int]) -> dict[int, tuple[int, ...]]:
    """Contiguous assignment of `universe` to V_list members with capacity
    2*ceil(W*deg_i/m) + w_max each."""
    W = sum(weight.get(u, 0) for u in universe)
    m = sum(degrees[v] for v in v_list) or 1
    wmax = max((weight.get(u, 0) for u in universe), default=0)
    caps = [2 * (-(-W * degrees[v] // m)) + wmax for v in v_list]
    out: dict[int, list[int]] = {v: [] for v in v_list}
    i, load = 0, 0
    for u in universe:
        w = weight.get(u, 0)
        while load and load + w > caps[i] and i + 1 < len(v_list):
            i, load = i + 1, 0
        out[v_list[i]].append(u)
        load += w
    return {v: tuple(us) for v, us in out.items()}


def list_kp_in_cluster(c: CommunicationCluster, p: int, g: Graph, inp: ClusterInput | None = None,
                       c_B: int = DEFAULT_CB, verify: bool = True, p_primes: Sequence[int] | None = None) -> InClusterResult:
    """List p-cliques with at least two vertices in V_list whose remaining
    edges lie in Ebar (crossing) and E' (outside)."""
    trace = RoundTrace()
    found: set[tuple[int, ...]] = set()
    v_list = tuple(sorted(c.v_list))
    k = len(v_list)
    if k == 0:
        return InClusterResult(found, trace)
    inp = inp or ClusterInput()
    vl = set(v_list)
    n = g.n
    per = ids_per_message(n, c_B)
    E1 = frozenset(e for e in g.edges if e[0] in vl and e[1] in vl)
    V2 = tuple(v for v in range(1, n + 1) if v not in vl)
    # Input reorganisation: sentdeg to its holder, broadcast, chain, re-route.
    table = sentdeg_table(g, c, inp)
    partial = []
    for v, cps in sorted(inp.eprime.items()):
        cnt: dict[int, int] = defaultdict(int)
        for a, _ in cps:
            cnt[a] += 1
        for u, x in sorted(cnt.items()):
            if table[u][0] != v:
                partial.append((v, table[u][0], Message(10, (u, x))))
    for a, b in sorted(inp.ebar):
        u, v = (a, b) if b in vl else (b, a)
        if table[u][0] != v:
            partial.append((v, table[u][0], Message(10, (u, 1))))
    _route(c.graph, partial, n, c_B, trace)
    items: dict[int, list[tuple[int, ...]]] = defaultdict(list)
    for u, (h, x) in table.items():
        items[h].append((u, x))
    bc = broadcast_n_messages(c, items, c_B)
    trace.extend(bc.trace, trace.rounds)
    weight = {u: x for u, (_, x) in table.items()}
    sigma = weighted_chain(v_list, {v: c.comdeg(v) for v in v_list}, V2, weight)
    owner = {u: v for v, us in sigma.items() for u in us}
    moves = []
    for v, cps in sorted(inp.eprime.items()):
        for a, b in sorted(cps):
            if owner[a] != v:
                moves.append((v, owner[a], Message(11, (a, b))))
    for a, b in sorted(inp.ebar):
        u, v = (a, b) if b in vl else (b, a)
        if owner[u] != v:
            moves.append((v, owner[u], Message(11, (u, v))))
    _route(c.graph, moves, n, c_B, trace)
    E2 = inp.eprime_edges
    sg = SplitGraph.from_sets(n, vl, E1, inp.ebar, E2, V2=V2)
    # E' rebalanced over V_hd in proportion to communication degree.
    hd = c.v_hd
    e2_sorted = sorted(E2)
    hd_total = sum(c.comdeg(v) for v in hd) or 1
    e2_holder: dict[Edge, int] = {}
    moves = []
    pos = 0
    for v in hd:
        quota = -(-len(e2_sorted) * c.comdeg(v) // hd_total)
        for e in e2_sorted[pos:pos + quota]:
            e2_holder[e] = v
            src = owner[e[0]]
            if src != v:
                moves.append((src, v, Message(12, e)))
        pos += quota
    count_items = {v: [(v, len(sigma[v]))] for v in v_list}
    trace.extend(broadcast_n_messages(c, count_items, c_B).trace, trace.rounds)
    _route(c.graph, moves, n, c_B, trace)
    builds = []
    for pp in (p_primes or range(2, p + 1)):
        build = build_split_tree(c, sg, p, pp, sigma, c_B=c_B)
        trace.extend(build.trace, trace.rounds)
        report = verify_tree(build.tree, sg, build.constraints) if verify else TreeReport(True, [], {})
        if not report.ok:
            raise ContractViolation(f"split tree (p'={pp}) failed verification: {report.violations[0]}")
        builds.append((pp, build, sg, report))
        leaves = build.tree.leaves()
        if not leaves:
            continue
        # Thin: leaf t is known to V_list[t mod k]; then balance over V_hd.
        leaf_items: dict[int, list[tuple[int, ...]]] = defaultdict(list)
        for t, leaf in enumerate(leaves):
            leaf_items[v_list[t % k]].append((t + 1,) + leaf)
        dist = degree_balanced_distribute(c, leaf_items, c_B)
        trace.extend(dist.trace, trace.rounds)
        tokens = {v: [(v, lo, hi)] for v, (lo, hi) in dist.intervals.items()}
        trace.extend(broadcast_n_messages(c, tokens, c_B).trace, trace.rounds)
        recipient: dict[tuple[int, ...], int] = {}
        for v, its in dist.held.items():
            for it in its:
                recipient[tuple(it[1:])] = v
        learned: dict[int, set[Edge]] = defaultdict(set)
        deliveries = []
        leaf_sets = [(leaf, [set(mm) for mm in build.tree.leaf_members(leaf)]) for leaf in leaves]
        for e in sorted(E1 | inp.ebar | E2):
            a, b = e
            if e in E1:
                sender = a
            elif e in inp.ebar:
                sender = a if a in vl else b
            else:
                sender = e2_holder[e]
            dests = set()
            for leaf, sets in leaf_sets:
                ia = [i for i, s in enumerate(sets) if a in s]
                ib = [i for i, s in enumerate(sets) if b in s]
                if any(i != j for i in ia for j in ib):
                    dests.add(recipient[leaf])
            for d in sorted(dests):
                learned[d].add(e)
                if d != sender:
                    deliveries.append((sender, d, Message(13, e)))
        _route(c.graph, deliveries, n, c_B, trace)
        # keep the cliques this tree is responsible for: exactly pp vertices in V_list
        for v, edges in learned.items():
            found |= {q for q in local_cliques(edges, p) if sum(u in vl for u in q) == pp}
    return InClusterResult(found, trace, builds, {"E2": len(E2), "Ebar": len(inp.ebar), "k": k})


# ---------------------------------------------------------------------------
# K_p wrappers


def list_kp(g: Graph, p: int, params: ListingParams | None = None) -> ListingResult:
    if p == 3:
        return list_triangles(g, params)
    if p < 3:
        raise ValueError("p must be at least 3")
    params = params or ListingParams.defaults(p)
    return _list_k4(g, params) if p == 4 else _list_kp_general(g, p, params)


def list_cliques(g: Graph, p: int, params: ListingParams | None = None) -> ListingResult:
    return list_kp(g, p, params)


def _tag_exchange(gc: Graph, c_B: int) -> RoundTrace:
    """Every vertex tells each neighbour the representative of its cluster."""
    sends = [(u, v, Message(14, (u, 0))) for u, v in sorted(gc.edges)]
    sends += [(v, u, Message(14, (v, 0))) for u, v in sorted(gc.edges)]
    return exchange(gc, sends, gc.n, c_B).trace


def _level_setup(col: _Collector, gc: Graph, params: ListingParams, level: int, eps: Fraction,
                 rule, sub: int = 0):
    dec = decompose(gc, eps, params.phi)
    if params.verify:
        rep = verify_decomposition(gc, dec)
        col.audits["decomposition"].append((level, rep.ok, rep.failures))
        if not rep.ok:
            col.failures.append(f"level {level}.{sub}: decomposition {rep.failures[0]}")
    clusters = build_communication_clusters(gc, dec, rule, list_scope="inner", level=sub)
    ea = edge_accounting(gc, clusters, dec.epsilon)
    col.audits["edge_accounting"].append((level, ea))
    if not ea.ok:
        col.failures.append(f"level {level}.{sub}: edge accounting {ea}")
    return dec, clusters


def _search(col: _Collector, gc: Graph, p: int, searchers: set[int], level: int, c_B: int) -> None:
    if not searchers:
        return
    alpha = max(1, max(gc.degree(v) for v in searchers))
    two = exhaustive_two_hop(gc, alpha, p, searchers=searchers, c_B=c_B)
    col.record(two.cliques, "exhaustive", level)
    col.absorb(f"L{level}:exhaustive", two.trace)


def _record_builds(col: _Collector, level: int, cidx: int, res: InClusterResult) -> None:
    for pp, build, _, rep in res.builds:
        col.audits["trees"].append((level, cidx, f"split{pp}", rep.ok, rep.max_parts, build.constraints.a))
        _audit_sim(col, build)


def _overloaded(c: CommunicationCluster, n: int, eprime_count: int, gamma: Fraction) -> bool:
    return gamma * n * c.comdeg_total <= Fraction(eprime_count * c.k)


def _list_kp_general(g: Graph, p: int, params: ListingParams) -> ListingResult:
    col = _Collector(g.n, params.c_B)
    rule = kp_delta_rule(g.n, p, params.beta, params.scale)
    current = set(g.edges)
    bound = depth_bound(g.m)
    level = 0
    while current:
        level += 1
        if level > bound:
            raise ListingError(f"recursion depth {level} exceeds {bound}")
        gc = Graph(g.n, current)
        _, clusters = _level_setup(col, gc, params, level, params.epsilon, rule)
        searchers = set().union(*(c.v_in - c.v_list_set for c in clusters)) if clusters else set()
        _search(col, gc, p, searchers, level, params.c_B)
        eliminated = {e for e in current if e[0] in searchers or e[1] in searchers}
        active = [c for c in clusters if c.v_list]
        if active:
            col.absorb(f"L{level}:tags", _tag_exchange(gc, params.c_B))
        deferred = 0
        sc2 = 0
        for c in active:
            bad = compute_bad_sets(gc, c, p, params.scale)
            sc2 += len(bad.S) ** 2
            imp = import_for_cluster(gc, c, bad, params.c_B, params.slack_value)
            col.absorb(f"L{level}:import{c.index}", imp.trace)
            col.audits["volume"].append((level, c.index, imp.volume_ok, imp.volume_worst))
            if not imp.volume_ok:
                col.failures.append(f"level {level}: import volume {imp.volume_worst:.2f}x over bound")
            if _overloaded(c, g.n, len(imp.inputs.eprime_edges), params.gamma):
                deferred += 1
                col.audits["overloaded"].append((level, c.index))
                continue
            res = list_kp_in_cluster(c, p, gc, imp.inputs, params.c_B, params.verify)
            col.record(res.cliques, "in-cluster", level)
            col.absorb(f"L{level}:cluster{c.index}", res.trace)
            _record_builds(col, level, c.index, res)
            eliminated |= {e for e in current if e[0] in c.v_list_set and e[1] in c.v_list_set
                           and not (e[0] in bad.S and e[1] in bad.S)}
        col.audits["sc2"].append((level, sc2))
        col.audits["elimination"].append((level, len(current), len(eliminated)))
        current -= eliminated
    col.audits["depth"].append((level, bound))
    return col.result(p, level)


def _cover(col: _Collector, gc: Graph, params: ListingParams, level: int, rule,
           top: list[CommunicationCluster]) -> list[CommunicationCluster]:
    """Recursive cover: decompose the edges outside every E(V^in, V^in) of
    the previous decomposition until none remain."""
    out = list(top)
    rem = set(gc.edges)
    for c in top:
        rem -= {e for e in gc.edges if e[0] in c.v_in and e[1] in c.v_in}
    sub = 0
    while rem:
        sub += 1
        if sub > depth_bound(gc.m) + 1:
            raise ListingError("cover recursion did not terminate")
        gs = Graph(gc.n, rem)
        _, cl = _level_setup(col, gs, params, level, params.epsilon, rule, sub=sub)
        out += cl
        for c in cl:
            rem -= {e for e in gs.edges if e[0] in c.v_in and e[1] in c.v_in}
    member: dict[Edge, int] = defaultdict(int)
    for c in out:
        for e in c.edges:
            member[e] += 1
    col.audits["cover_membership"].append((level, max(member.values(), default=0), sub + 1))
    if member and max(member.values()) > sub + 1:
        col.failures.append(f"level {level}: an edge lies in more cover clusters than decompositions")
    return out


def _list_k4(g: Graph, params: ListingParams) -> ListingResult:
    p = 4
    col = _Collector(g.n, params.c_B)
    rule = kp_delta_rule(g.n, 4, params.beta, params.scale)
    T = _threshold_pow(g.n, 4, params.scale)
    t = float(T) ** 0.25
    chunk = max(1, ceil_root(T, 4))
    slack = params.slack_value
    current = set(g.edges)
    bound = depth_bound(g.m)
    level = 0
    while current:
        level += 1
        if level > bound:
            raise ListingError(f"recursion depth {level} exceeds {bound}")
        gc = Graph(g.n, current)
        per = ids_per_message(g.n, params.c_B)
        _, top = _level_setup(col, gc, params, level, params.epsilon, rule)
        active = [c for c in top if c.v_list]
        cover = _cover(col, gc, params, level, rule, top) if active else list(top)
        searchers = set().union(*(c.v_in - c.v_list_set for c in cover)) if cover else set()
        _search(col, gc, p, searchers, level, params.c_B)
        eliminated = {e for e in current if e[0] in searchers or e[1] in searchers}
        if active:
            col.absorb(f"L{level}:tags", _tag_exchange(gc, params.c_B))
        stars = [c for c in cover if c.v_list]
        imports: dict[int, ClusterInput] = {id(c): ClusterInput(ebar=full_ebar(gc, c.v_list)) for c in active}
        part3: dict[int, ClusterInput] = {}
        for c in active:
            res = list_kp_in_cluster(c, 4, gc, None, params.c_B, params.verify)
            col.record(res.cliques, "whole-cluster", level)
            col.absorb(f"L{level}:whole{c.index}", res.trace)
            _record_builds(col, level, c.index, res)
        for c in active:
            vl = c.v_list_set
            for cs in stars:
                if cs is c:
                    continue
                vls = cs.v_list_set
                star = set()
                for u in cs.v_list:
                    d_c = len(gc.neighbors(u) & vl)
                    d_s = len(gc.neighbors(u) & vls)
                    if d_c >= 1 and Fraction(d_c) ** 4 * T < Fraction(d_s) ** 4:
                        star.add(u)
                S = {v for v in c.v_list if Fraction(len(gc.neighbors(v) & star)) ** 4 > T}
                sends, asks, replies = [], [], []
                # Part 1
                for u in cs.v_list:
                    if u in star:
                        continue
                    targets = sorted(gc.neighbors(u) & vl)
                    if not targets:
                        continue
                    edges = sorted(norm_edge(u, w) for w in gc.neighbors(u) & vls)
                    if -(-len(edges) // chunk) > len(targets):
                        raise ContractViolation(f"vertex {u} lacks neighbours for its chunks")
                    for src, dst, msg, copies in _chunked_sends(gc, u, edges, targets, chunk, per):
                        sends.append((src, dst, msg))
                        if copies:
                            imports[id(c)].eprime.setdefault(dst, set()).update(copies)
                            imports[id(c)].received[dst] = imports[id(c)].received.get(dst, 0) + len(copies)
                # Part 2
                for v in c.v_list:
                    if v in S:
                        continue
                    among = sorted(gc.neighbors(v) & star)
                    if not among:
                        continue
                    a, r, cps = _learn_pairs(gc, v, among, per)
                    asks += a
                    replies += r
                    imports[id(c)].eprime.setdefault(v, set()).update(cps)
                    imports[id(c)].received[v] = imports[id(c)].received.get(v, 0) + len(cps)
                # Part 3
                for v in sorted(S):
                    edges = sorted(norm_edge(v, x) for x in gc.neighbors(v) & S)
                    targets = sorted(gc.neighbors(v) & star)
                    if not edges or not targets:
                        continue
                    size = -(-len(edges) // len(targets))
                    inp3 = part3.setdefault(id(cs), ClusterInput(ebar=full_ebar(gc, cs.v_list)))
                    for src, dst, msg, copies in _chunked_sends(gc, v, edges, targets, size, per):
                        sends.append((src, dst, msg))
                        if copies:
                            inp3.eprime.setdefault(dst, set()).update(copies)
                            inp3.received[dst] = inp3.received.get(dst, 0) + len(copies)
                for part in (asks, replies, sends):
                    if part:
                        col.absorb(f"L{level}:pair{c.index}-{cs.level}.{cs.index}",
                                   exchange(gc, part, gc.n, params.c_B).trace)
        for c in active:
            inp = imports[id(c)]
            _filter_outside(inp, c.v_list_set)
            ok, worst = _volume_check(g.n, inp.received, c, t, slack)
            col.audits["volume"].append((level, c.index, ok, worst))
            if not ok:
                col.failures.append(f"level {level}: parts 1-2 volume {worst:.2f}x over bound")
            if _overloaded(c, g.n, len(inp.eprime_edges), params.gamma):
                col.audits["overloaded"].append((level, c.index))
                continue
            res = list_kp_in_cluster(c, 4, gc, inp, params.c_B, params.verify)
            col.record(res.cliques, "parts-1-2", level)
            col.absorb(f"L{level}:cluster{c.index}", res.trace)
            _record_builds(col, level, c.index, res)
            eliminated |= {e for e in current if e[0] in c.v_in and e[1] in c.v_in}
        for cs in stars:
            inp3 = part3.get(id(cs))
            if inp3 is None:
                continue
            _filter_outside(inp3, cs.v_list_set)
            ok, worst = _volume_check(g.n, inp3.received, cs, t, slack)
            col.audits["volume"].append((level, cs.index, ok, worst))
            if not ok:
                col.failures.append(f"level {level}: part 3 volume {worst:.2f}x over bound")
            res = list_kp_in_cluster(cs, 4, gc, inp3, params.c_B, params.verify)
            col.record(res.cliques, "part-3", level)
            col.absorb(f"L{level}:part3-{cs.level}.{cs.index}", res.trace)
            _record_builds(col, level, cs.index, res)
        col.audits["elimination"].append((level, len(current), len(eliminated)))
        current -= eliminated
    col.audits["depth"].append((level, bound))
    return col.result(4, level)
