"""Expander decomposition, communication clusters and in-cluster routing.

The decomposition is a reference implementation: recursive sparsest-cut
splitting with an edge budget. Correctness is carried by
`verify_decomposition`, which rechecks every postcondition from scratch.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .congest import DEFAULT_CB, Message, RoundTrace, bandwidth, fragment_sizes, message_bits, schedule_order
from .graph import (
    ContractViolation,
    Edge,
    Graph,
    components,
    conductance,
    induced_by_edges,
    norm_edge,
)

DEFAULT_PHI = Fraction(1, 8)


def ceil_root(x: Fraction | int, p: int) -> int:
    """Smallest integer d >= 0 with d**p >= x."""
    x = Fraction(x)
    if x <= 0:
        return 0
    d = max(0, int(float(x) ** (1.0 / p)) - 1)
    while d ** p < x:
        d += 1
    while d > 0 and (d - 1) ** p >= x:
        d -= 1
    return d


def floor_root(x: Fraction | int, p: int) -> int:
    """Largest integer d >= 0 with d**p <= x."""
    x = Fraction(x)
    d = ceil_root(x, p)
    return d if d ** p <= x else d - 1


@dataclass
class ExpanderDecomposition:
    parts: list[frozenset[Edge]]
    E_rem: frozenset[Edge]
    phi: Fraction
    epsilon: Fraction
    part_phi: list[Fraction] = field(default_factory=list)
    part_mode: list[str] = field(default_factory=list)

    def dump(self) -> str:
        lines = []
        for i, (part, ph) in enumerate(zip(self.parts, self.part_phi)):
            lines.append(f"part {i} {ph.numerator}/{ph.denominator}")
            lines += [f"{u} {v}" for u, v in sorted(part)]
        lines.append("rem")
        lines += [f"{u} {v}" for u, v in sorted(self.E_rem)]
        return "\n".join(lines) + "\n"


def decompose(g: Graph, epsilon: Fraction | float, phi_target: Fraction = DEFAULT_PHI) -> ExpanderDecomposition:
    eps = Fraction(epsilon).limit_denominator(10**6)
    if not (0 < eps < 1):
        raise ContractViolation("epsilon must lie in (0, 1)")
    budget = math.floor(eps * g.m)
    charged: set[Edge] = set()
    accepted: list[tuple[frozenset[Edge], Fraction, str]] = []
    work: deque[frozenset[Edge]] = deque(_edge_components(g.edges))
    while work:
        comp = work.popleft()
        if len(comp) == 1:
            accepted.append((comp, Fraction(1), "exact"))
            continue
        sub = induced_by_edges(g, comp)
        res = conductance(sub)
        if res.value >= phi_target:
            accepted.append((comp, res.value, res.mode))
            continue
        S = res.witness
        cut = {e for e in comp if (e[0] in S) != (e[1] in S)}
        if res.upper < phi_target and len(charged) + len(cut) <= budget:
            charged |= cut
            work.extend(_edge_components(comp - cut))
            continue
        accepted.append((comp, res.value, res.mode))
    accepted.sort(key=lambda t: min(t[0]))
    parts = [a[0] for a in accepted]
    phis = [a[1] for a in accepted]
    return ExpanderDecomposition(
        parts=parts,
        E_rem=frozenset(charged),
        phi=min(phis, default=Fraction(1)),
        epsilon=eps,
        part_phi=phis,
        part_mode=[a[2] for a in accepted],
    )


def _edge_components(edges: Iterable[Edge]) -> list[frozenset[Edge]]:
    edges = list(edges)
    if not edges:
        return []
    vs = {x for e in edges for x in e}
    h = Graph(max(vs), edges, vertices=vs)
    out = []
    for comp in components(h):
        cs = set(comp)
        out.append(frozenset(e for e in edges if e[0] in cs))
    return out


@dataclass
class DecompositionReport:
    ok: bool
    failures: list[str]
    certificates: list[tuple[int, str, Fraction]]


def verify_decomposition(g: Graph, d: ExpanderDecomposition) -> DecompositionReport:
    fails: list[str] = []
    certs: list[tuple[int, str, Fraction]] = []
    seen_e: dict[Edge, int] = {}
    owner_v: dict[int, int] = {}
    for i, part in enumerate(d.parts):
        for e in part:
            if e in seen_e:
                fails.append(f"edge {e} in parts {seen_e[e]} and {i}")
            seen_e[e] = i
            if e not in g.edges:
                fails.append(f"edge {e} of part {i} not in graph")
        for v in {x for e in part for x in e}:
            if v in owner_v and owner_v[v] != i:
                fails.append(f"vertex {v} shared by parts {owner_v[v]} and {i}")
            owner_v.setdefault(v, i)
    for e in d.E_rem:
        if e in seen_e:
            fails.append(f"edge {e} both in part {seen_e[e]} and remainder")
    covered = set(seen_e) | set(d.E_rem)
    if covered != set(g.edges):
        missing = sorted(set(g.edges) - covered)[:3]
        fails.append(f"edges not covered: {missing}")
    if Fraction(len(d.E_rem)) > d.epsilon * g.m:
        fails.append(f"remainder {len(d.E_rem)} exceeds epsilon*|E| = {d.epsilon * g.m}")
    for i, part in enumerate(d.parts):
        if not part:
            fails.append(f"part {i} empty")
            continue
        sub = induced_by_edges(g, part)
        if len(components(sub)) != 1:
            fails.append(f"part {i} disconnected")
            continue
        res = conductance(sub)
        certs.append((i, res.mode, res.value))
        if res.value < d.phi:
            fails.append(f"part {i} certified {res.value} below claimed {d.phi}")
    return DecompositionReport(not fails, fails, certs)


@dataclass
class CommunicationCluster:
    index: int
    level: int
    n: int
    part_edges: frozenset[Edge]
    edges: frozenset[Edge]
    nodes: frozenset[int]
    v_in: frozenset[int]
    e_minus: frozenset[Edge]
    v_list: tuple[int, ...]
    delta: int
    phi: Fraction = Fraction(1)
    graph: Graph = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.graph = Graph(self.n, self.edges, vertices=self.nodes)
        self._vl = frozenset(self.v_list)

    @property
    def K(self) -> int:
        return len(self.nodes)

    @property
    def k(self) -> int:
        return len(self.v_list)

    @property
    def v_list_set(self) -> frozenset[int]:
        return self._vl

    @property
    def search_only(self) -> bool:
        return not self.v_list

    def comdeg(self, v: int) -> int:
        return self.graph.degree(v)

    @property
    def comdeg_total(self) -> int:
        return sum(self.comdeg(v) for v in self.v_list)

    @property
    def mu(self) -> Fraction:
        return Fraction(self.comdeg_total, self.k) if self.k else Fraction(0)

    @property
    def v_hd(self) -> tuple[int, ...]:
        tot = self.comdeg_total
        return tuple(v for v in self.v_list if 2 * self.comdeg(v) * self.k >= tot)

    @property
    def representative(self) -> tuple[int, int]:
        return (min(self.v_list), self.level) if self.v_list else (0, self.level)

    def check(self) -> list[str]:
        bad = []
        for v in self.v_list:
            if self.comdeg(v) < self.delta:
                bad.append(f"vertex {v} has comdeg {self.comdeg(v)} < delta {self.delta}")
        if self.k:
            hd = [v for v in self.v_list if Fraction(self.comdeg(v)) >= self.mu / 2]
            if tuple(hd) != self.v_hd:
                bad.append("V_hd mismatch")
        return bad


def k3_delta(K: int) -> int:
    return ceil_root(K, 3)


def kp_delta_rule(n: int, p: int, beta: int | Fraction, scale: Fraction = Fraction(1)) -> Callable[[int], int]:
    """Smallest integer degree reaching beta * n^(1-2/p) * scale."""
    x = (Fraction(beta) * scale) ** p * n ** (p - 2)

    def rule(_K: int) -> int:
        return ceil_root(x, p)

    return rule


def build_communication_clusters(
    g: Graph,
    d: ExpanderDecomposition,
    delta_rule: Callable[[int], int],
    list_scope: str = "inner",
    level: int = 0,
) -> list[CommunicationCluster]:
    """`list_scope='inner'` draws V_list from V^in; 'all' draws it from all of V_C."""
    out = []
    for i, part in enumerate(d.parts):
        deg_in: dict[int, int] = defaultdict(int)
        for u, v in part:
            deg_in[u] += 1
            deg_in[v] += 1
        v_in = frozenset(v for v, di in deg_in.items() if di >= g.degree(v) - di)
        e_minus = frozenset(e for e in part if e[0] in v_in and e[1] in v_in)
        extra = {e for e in g.edges if e[0] in v_in and e[1] in v_in}
        e_plus = frozenset(part | extra)
        nodes = frozenset(deg_in)
        cg = Graph(g.n, e_plus, vertices=nodes)
        delta = delta_rule(len(nodes))
        scope = v_in if list_scope == "inner" else nodes
        v_list = tuple(sorted(v for v in scope if cg.degree(v) >= delta))
        phi = d.part_phi[i] if i < len(d.part_phi) else d.phi
        out.append(CommunicationCluster(i, level, g.n, part, e_plus, nodes, v_in, e_minus, v_list, delta, phi))
    return out


@dataclass
class EdgeAccounting:
    outside_minus_sum: int
    outside_all_minus: int
    max_plus_membership: int
    bound_two_eps: Fraction
    bound_three_eps: Fraction

    @property
    def ok(self) -> bool:
        return (self.outside_minus_sum <= self.bound_two_eps
                and self.outside_all_minus <= self.bound_three_eps
                and self.max_plus_membership <= 2)


def edge_accounting(g: Graph, clusters: Sequence[CommunicationCluster], epsilon: Fraction) -> EdgeAccounting:
    s = sum(len(c.part_edges - c.e_minus) for c in clusters)
    minus = set().union(*(c.e_minus for c in clusters)) if clusters else set()
    member: dict[Edge, int] = defaultdict(int)
    for c in clusters:
        for e in c.edges:
            member[e] += 1
    return EdgeAccounting(
        outside_minus_sum=s,
        outside_all_minus=g.m - len(minus),
        max_plus_membership=max(member.values(), default=0),
        bound_two_eps=2 * epsilon * g.m,
        bound_three_eps=3 * epsilon * g.m,
    )


class RoutingTree:
    """BFS spanning tree rooted at the smallest vertex id."""

    def __init__(self, g: Graph):
        vs = g.sorted_vertices()
        if not vs:
            raise ContractViolation("cannot route in an empty graph")
        root = vs[0]
        self.parent: dict[int, int | None] = {root: None}
        self.depth = {root: 0}
        q = deque([root])
        while q:
            x = q.popleft()
            for y in sorted(g.neighbors(x)):
                if y not in self.parent:
                    self.parent[y] = x
                    self.depth[y] = self.depth[x] + 1
                    q.append(y)
        if len(self.parent) != len(vs):
            raise ContractViolation("routing graph is disconnected")
        self.root = root
        self._path: dict[int, list[int]] = {}

    def root_path(self, v: int) -> list[int]:
        p = self._path.get(v)
        if p is None:
            par = self.parent[v]
            p = [v] if par is None else self.root_path(par) + [v]
            self._path[v] = p
        return p

    def next_hop(self, x: int, dst: int) -> int:
        path = self.root_path(dst)
        dx = self.depth[x]
        if dx < len(path) and path[dx] == x:
            return path[dx + 1]
        par = self.parent[x]
        assert par is not None
        return par

    @property
    def height(self) -> int:
        return max(self.depth.values())


_TREES: dict[tuple[frozenset[int], frozenset[Edge]], RoutingTree] = {}


def routing_tree(g: Graph) -> RoutingTree:
    key = (g.vertices, g.edges)
    t = _TREES.get(key)
    if t is None:
        if len(_TREES) > 512:
            _TREES.clear()
        t = _TREES[key] = RoutingTree(g)
    return t


@dataclass
class RouteResult:
    received: dict[int, list[tuple[int, Message]]]
    trace: RoundTrace
    delivered: int


def load_factor(g: Graph, demands: Sequence[tuple[int, int, Message]], c: int = 1) -> int:
    """Smallest L for which the demands meet the per-vertex load precondition."""
    load: dict[int, int] = defaultdict(int)
    for s, t, _ in demands:
        load[s] += 1
        load[t] += 1
    L = 1
    for v, x in load.items():
        deg = g.degree(v)
        if deg == 0:
            if x and any(s != t for s, t, _ in demands if v in (s, t)):
                raise ContractViolation(f"vertex {v} has no cluster edges")
            continue
        L = max(L, -(-x // (c * deg)))
    return L


def route(g: Graph, demands: Sequence[tuple[int, int, Message]], L: int, c: int = 1,
          n: int | None = None, c_B: int = DEFAULT_CB) -> RouteResult:
    """Deliver (src, dst, payload) demands over a BFS tree of `g` with per-edge
    FIFO store-and-forward. Payloads gain a (src, dst) routing header."""
    n = n or g.n
    load: dict[int, int] = defaultdict(int)
    for s, t, _ in demands:
        if s not in g.vertices or t not in g.vertices:
            raise ContractViolation(f"demand {s}->{t} leaves the cluster")
        load[s] += 1
        load[t] += 1
    for v, x in load.items():
        if x > c * L * g.degree(v) and any(s != t for s, t, _ in demands if v in (s, t)):
            raise ContractViolation(f"vertex {v} load {x} exceeds {c}*{L}*deg {g.degree(v)}")
    trace = RoundTrace()
    received: dict[int, list[tuple[int, Message]]] = defaultdict(list)
    if not demands:
        return RouteResult({}, trace, 0)
    B = bandwidth(n, c_B)
    tree = routing_tree(g) if len(g.vertices) > 1 else None
    frags: list[list[int]] = []
    queues: dict[tuple[int, int], deque] = {}
    local: list[tuple[int, int, int]] = []
    for pid, (s, t, msg) in enumerate(demands):
        frags.append(fragment_sizes(message_bits(Message(msg.tag, (s, t) + tuple(msg.fields)), n), B))
        if s == t:
            local.append((0, t, pid))
            continue
        assert tree is not None
        queues.setdefault((s, tree.next_hop(s, t)), deque()).append([pid, 0])
    delivered: list[tuple[int, int, int]] = list(local)
    arrivals: dict[int, list[tuple[int, int]]] = defaultdict(list)
    active = {e for e, q in queues.items() if q}
    r = 0
    while active or arrivals:
        r += 1
        forwarded: dict[tuple[int, int], list[int]] = defaultdict(list)
        for node, pid in schedule_order(arrivals.pop(r, [])):
            t = demands[pid][1]
            if node == t:
                delivered.append((r, t, pid))
            else:
                forwarded[(node, tree.next_hop(node, t))].append(pid)
        for e, pids in forwarded.items():
            queues.setdefault(e, deque()).extend([pid, 0] for pid in sorted(pids))
            active.add(e)
        done_edges = []
        for e in schedule_order(active):
            q = queues[e]
            head = q[0]
            pid = head[0]
            trace.add(r, e[0], e[1], frags[pid][head[1]])
            head[1] += 1
            if head[1] == len(frags[pid]):
                q.popleft()
                arrivals[r + 1].append((e[1], pid))
                if not q:
                    done_edges.append(e)
        for e in done_edges:
            active.discard(e)
    delivered.sort()
    for _, t, pid in delivered:
        s, _, msg = demands[pid]
        received[t].append((s, msg))
    return RouteResult(dict(received), trace, len(delivered))


def cluster_from_graph(g: Graph, v_list: Iterable[int] | None = None, delta: int = 0) -> CommunicationCluster:
    """Treat all of `g` as one cluster (tests and direct in-cluster runs)."""
    vs = frozenset(v for e in g.edges for v in e) | (frozenset(v_list) if v_list is not None else frozenset())
    vl = tuple(sorted(v_list)) if v_list is not None else tuple(sorted(vs))
    return CommunicationCluster(0, 0, g.n, g.edges, g.edges, vs, vs, g.edges, vl, delta)


def tree_aggregate(g: Graph, n: int | None = None, c_B: int = DEFAULT_CB) -> RoundTrace:
    """Cost of one convergecast plus one broadcast of a single word over the
    routing tree: every tree edge carries one message each way."""
    trace = RoundTrace()
    if len(g.vertices) < 2:
        return trace
    n = n or g.n
    tree = routing_tree(g)
    h = tree.height
    bits = message_bits(Message(0, (n * n,)), n)
    B = bandwidth(n, c_B)
    for v, par in tree.parent.items():
        if par is None:
            continue
        d = tree.depth[v]
        for i, fb in enumerate(fragment_sizes(bits, B)):
            trace.add((h - d) * 2 + 1 + i, v, par, fb)
            trace.add(2 * h + 2 * d - 1 + i, par, v, fb)
    return trace
