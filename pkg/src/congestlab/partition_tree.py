"""Partition trees for clique listing.

Every layer of a tree partitions one vertex universe into id intervals. A
node is addressed by its path (the part indices chosen at the layers above
it); a leaf is a path of full length. Two families are built here:

* K3 trees over the graph induced by V_list, with degree, upward-degree and
  size constraints;
* split trees over a split graph, whose top layers partition the outside
  vertices V2 and whose bottom layers partition V_list = V1.

Both are built by streaming layer algorithms run through the in-cluster
simulator, and both can be rebuilt sequentially for differential checks.
"""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .congest import DEFAULT_CB, Message, RoundTrace
from .expander import ceil_root, load_factor, route, tree_aggregate
from .graph import ContractViolation, Graph, SplitGraph
from .skipstream import (
    AUX,
    HALT,
    READ,
    SkipStreamAlgorithm,
    StreamingInputCluster,
    StreamInput,
    TokenStream,
    UsageStats,
    default_lambda,
    run_sequential,
    simulate_in_cluster,
    token_limit,
    write,
)

Interval = tuple[int, int]
Path = tuple[int, ...]


# ---------------------------------------------------------------------------
# Constraints


@dataclass(frozen=True)
class K3Constraints:
    k: int
    m: int
    c1: int = 9
    c2: int = 36
    c3: int = 4
    p: int = 3

    @property
    def x(self) -> int:
        return ceil_root(self.k, self.p)

    @property
    def m_tilde(self) -> int:
        return max(self.m, self.k * self.x)

    def deg_bound(self) -> Fraction:
        return Fraction(self.c1 * self.m_tilde, self.x)

    def up_bound(self, depth: int) -> Fraction:
        x = self.x
        return Fraction(self.c2 * depth * self.m_tilde, x * x) + Fraction(self.c3 * self.p * self.k, x)

    def size_bound(self) -> Fraction:
        return Fraction(self.c3 * self.k, self.x)


@dataclass(frozen=True)
class SplitConstraints:
    n: int
    k: int
    m1: int
    m2: int
    m12: int
    p: int
    p_prime: int
    a: int
    b: int
    c1: int = 8
    c2: int = 36

    @property
    def pi(self) -> int:
        return self.p - self.p_prime

    @property
    def m1_tilde(self) -> int:
        return max(self.m1, self.k * self.a)

    @property
    def m2_tilde(self) -> int:
        return max(self.m2, self.n * self.b)

    @property
    def m12_tilde(self) -> int:
        return max(self.m12, self.n * self.a)

    def branching(self, depth: int) -> int:
        return self.b if depth < self.pi else self.a

    def bounds(self, depth: int) -> dict[str, Fraction]:
        c1, c2, a, b, n, k, pi = self.c1, self.c2, self.a, self.b, self.n, self.k, self.pi
        if depth < pi:
            return {
                "Consdegbb": Fraction(c1 * self.m2, b) + n,
                "Consupdegbb": Fraction(c2 * depth * self.m2_tilde, b * b) + n,
                "Consdegba": Fraction(c1 * self.m12, b) + n,
            }
        return {
            "Consdegaa": Fraction(c1 * self.m1, a) + k,
            "Consupdegaa": Fraction(c2 * (depth - pi) * self.m1_tilde, a * a) + k,
            "Consupdegab": Fraction(c2 * pi * self.m12_tilde, a * b) + n,
        }

    @classmethod
    def for_split(cls, sg: SplitGraph, p: int, p_prime: int) -> "SplitConstraints":
        ab = max(2, ceil_root(sg.k, p))
        return cls(sg.n, sg.k, sg.m1, sg.m2, sg.m12, p, p_prime, ab, ab)


def _exceeds(value: int, bound: Fraction) -> bool:
    return value * bound.denominator > bound.numerator


# ---------------------------------------------------------------------------
# Trees


@dataclass
class PartitionTree:
    kind: str
    p: int
    universes: tuple[tuple[int, ...], ...]
    nodes: dict[Path, tuple[Interval, ...]] = field(default_factory=dict)

    def depth_of(self, path: Path) -> int:
        return len(path)

    def parts(self, path: Path) -> tuple[Interval, ...]:
        return self.nodes.get(path, ())

    def members(self, depth: int, interval: Interval) -> tuple[int, ...]:
        uni = self.universes[depth]
        lo = bisect.bisect_left(uni, interval[0])
        hi = bisect.bisect_right(uni, interval[1])
        return uni[lo:hi]

    def part_of(self, path: Path, vertex: int) -> int | None:
        parts = self.parts(path)
        i = bisect.bisect_right([lo for lo, _ in parts], vertex) - 1
        if i >= 0 and parts[i][0] <= vertex <= parts[i][1]:
            return i
        return None

    def leaves(self) -> list[Path]:
        out = [()]
        for _ in range(self.p):
            out = [path + (j,) for path in out for j in range(len(self.parts(path)))]
        return out

    def leaf_parts(self, leaf: Path) -> list[Interval]:
        return [self.parts(leaf[:d])[leaf[d]] for d in range(self.p)]

    def leaf_members(self, leaf: Path) -> list[tuple[int, ...]]:
        return [self.members(d, iv) for d, iv in enumerate(self.leaf_parts(leaf))]

    def node_paths(self, depth: int) -> list[Path]:
        return sorted(path for path in self.nodes if len(path) == depth)

    def dump(self) -> str:
        lines = []
        for path in sorted(self.nodes, key=lambda s: (len(s), s)):
            for j, (lo, hi) in enumerate(self.nodes[path]):
                lines.append(f"path=({','.join(map(str, path))}) {j} {lo} {hi}")
        return "\n".join(lines) + ("\n" if lines else "")

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, PartitionTree) and self.kind == other.kind and self.p == other.p
                and self.universes == other.universes and self.nodes == other.nodes)


@dataclass
class Violation:
    path: Path
    part: int
    constraint: str
    actual: int
    bound: Fraction

    def __str__(self) -> str:
        return f"path={self.path} part={self.part} {self.constraint}: {self.actual} > {self.bound}"


@dataclass
class TreeReport:
    ok: bool
    violations: list[Violation]
    max_parts: dict[int, int]


def _edges_into(adj: Callable[[int], Iterable[int]], part: Sequence[int], target: set[int] | frozenset[int]) -> int:
    return sum(1 for v in part for w in adj(v) if w in target)


def _check_partition(tree: PartitionTree, path: Path, viols: list[Violation]) -> None:
    parts = tree.parts(path)
    d = len(path)
    prev_hi = None
    covered = 0
    for j, (lo, hi) in enumerate(parts):
        if lo > hi or (prev_hi is not None and lo <= prev_hi):
            viols.append(Violation(path, j, "interval", lo, Fraction(hi)))
        prev_hi = hi
        covered += len(tree.members(d, (lo, hi)))
        if not tree.members(d, (lo, hi)):
            viols.append(Violation(path, j, "empty", 0, Fraction(1)))
    if covered != len(tree.universes[d]):
        viols.append(Violation(path, -1, "cover", covered, Fraction(len(tree.universes[d]))))


def verify_tree(tree: PartitionTree, graph: Graph | SplitGraph, constraints) -> TreeReport:
    viols: list[Violation] = []
    max_parts: dict[int, int] = defaultdict(int)
    if isinstance(constraints, K3Constraints):
        g = graph
        x = constraints.x
        uni0 = frozenset(tree.universes[0])
        for path in sorted(tree.nodes):
            d = len(path)
            parts = tree.parts(path)
            max_parts[d] = max(max_parts[d], len(parts))
            if len(parts) > x:
                viols.append(Violation(path, -1, "branching", len(parts), Fraction(x)))
            _check_partition(tree, path, viols)
            anc = [set(tree.members(i, tree.parts(path[:i])[path[i]])) for i in range(d)]
            for j, iv in enumerate(parts):
                mem = tree.members(d, iv)
                deg = _edges_into(g.neighbors, mem, uni0)
                up = sum(_edges_into(g.neighbors, mem, W) for W in anc)
                for name, val, bound in (("Consdeg", deg, constraints.deg_bound()),
                                         ("Consupdeg", up, constraints.up_bound(d)),
                                         ("Conssz", len(mem), constraints.size_bound())):
                    if _exceeds(val, bound):
                        viols.append(Violation(path, j, name, val, bound))
    else:
        sg: SplitGraph = graph
        c: SplitConstraints = constraints
        V1, V2 = set(sg.V1), set(sg.V2)
        for path in sorted(tree.nodes):
            d = len(path)
            parts = tree.parts(path)
            max_parts[d] = max(max_parts[d], len(parts))
            if len(parts) > c.branching(d):
                viols.append(Violation(path, -1, "branching", len(parts), Fraction(c.branching(d))))
            _check_partition(tree, path, viols)
            anc = [(i, set(tree.members(i, tree.parts(path[:i])[path[i]]))) for i in range(d)]
            bounds = c.bounds(d)
            for j, iv in enumerate(parts):
                mem = tree.members(d, iv)
                into1 = _edges_into(sg.neighbors, mem, V1)
                into2 = _edges_into(sg.neighbors, mem, V2)
                up_hi = sum(_edges_into(sg.neighbors, mem, W) for i, W in anc if i >= c.pi)
                up_lo = sum(_edges_into(sg.neighbors, mem, W) for i, W in anc if i < c.pi)
                if d < c.pi:
                    vals = {"Consdegbb": into2, "Consupdegbb": up_lo, "Consdegba": into1}
                else:
                    vals = {"Consdegaa": into1, "Consupdegaa": up_hi, "Consupdegab": up_lo}
                for name, bound in bounds.items():
                    if _exceeds(vals[name], bound):
                        viols.append(Violation(path, j, name, vals[name], bound))
    return TreeReport(not viols, viols, dict(max_parts))


class CoverageError(RuntimeError):
    pass


def covering_leaf(tree: PartitionTree, clique: Iterable[int], split: SplitGraph | None = None) -> Path:
    """Root-to-leaf walk placing clique vertices in order; for split trees the
    V2 vertices come first (ascending), then the V1 vertices."""
    verts = sorted(set(clique))
    if split is not None:
        v2 = [v for v in verts if v in split.V2]
        v1 = [v for v in verts if v in split.V1]
        if len(v1) != tree.p - _split_pi(tree) or len(v2) != _split_pi(tree):
            raise CoverageError(f"clique {verts} does not match the tree's V1/V2 layout")
        verts = v2 + v1
    if len(verts) != tree.p:
        raise CoverageError(f"clique of size {len(verts)} for a tree with {tree.p} layers")
    path: Path = ()
    for d, v in enumerate(verts):
        j = tree.part_of(path, v)
        if j is None or v not in tree.universes[d]:
            raise CoverageError(f"vertex {v} has no part at path {path}")
        path = path + (j,)
    members = [set(m) for m in tree.leaf_members(path)]
    for i, u in enumerate(verts):
        for w in verts[i + 1:]:
            if not any(u in members[a] and w in members[b] for a in range(tree.p) for b in range(tree.p) if a != b):
                raise CoverageError(f"edge {(u, w)} not covered by leaf {path}")
    return path


def _split_pi(tree: PartitionTree) -> int:
    return int(tree.kind.split(":")[1]) if ":" in tree.kind else 0


# ---------------------------------------------------------------------------
# Streaming layer algorithms


class K3LayerAlgorithm(SkipStreamAlgorithm):
    """Counter-based construction of one K3-tree partition.

    Main tokens: (id, deg, |E(v, U_0)|, ..., |E(v, U_{d-1})|) in ascending id
    order. State: (reads, finished, lo, prev, deg_sum, size, up_sum).
    """

    name = "k3-layer"

    def __init__(self, n: int, depth: int, constraints: K3Constraints, n_out: int | None = None):
        # n_out widens the output budget for stress tests with shrunken constants.
        self.depth = depth
        self.cons = constraints
        x = n_out if n_out is not None else constraints.x
        super().__init__(n, token_limit(2 + depth, n), constraints.k, x, 0, x)
        self._deg = constraints.deg_bound()
        self._up = constraints.up_bound(depth)
        self._sz = constraints.size_bound()

    def initial_state(self):
        return (0, 0, 0, 0, 0, 0, 0)

    def _overflow(self, dsum: int, size: int, usum: int) -> bool:
        return _exceeds(dsum, self._deg) or _exceeds(usum, self._up) or _exceeds(size, self._sz)

    def step(self, state, event):
        reads, fin, lo, prev, dsum, size, usum = state
        if event is None:
            if fin:
                return state, HALT
            if reads == self.N_in:
                if size == 0:
                    return (reads, 1, lo, prev, dsum, size, usum), HALT
                return (reads, 1, lo, prev, dsum, size, usum), write((lo, prev))
            return state, READ
        tok = event[1]
        v, deg, ups = tok[0], tok[1], sum(tok[2:])
        if reads and v <= prev:
            raise ContractViolation("K3 layer stream must be ascending by id")
        reads += 1
        if size and self._overflow(dsum + deg, size + 1, usum + ups):
            return (reads, 0, v, v, deg, 1, ups), write((lo, prev))
        if not size:
            lo = v
        return self.step((reads, 0, lo, v, dsum + deg, size + 1, usum + ups), None)


class SplitLayerAlgorithm(SkipStreamAlgorithm):
    """Counter-based construction of one split-tree partition with
    auxiliary expansion on overflow.

    Main token: (lo, hi, n_aux, s1, s2, s_anc...) aggregating an interval of
    the universe. Auxiliary token: (v, e1, e2, e_anc...) for one vertex.
    State: (mains, finished, l, c0, c1, c2, aux_left, part_size).
    """

    name = "split-layer"

    def __init__(self, n: int, depth: int, n_mains: int, max_universe: int, constraints: SplitConstraints,
                 n_out: int | None = None):
        self.depth = depth
        self.cons = constraints
        self.max_w = max_universe
        nout = n_out if n_out is not None else constraints.branching(depth)
        super().__init__(n, token_limit(3 + 2 + depth, n), n_mains, nout, nout, nout)
        self._bounds = list(constraints.bounds(depth).values())

    def initial_state(self):
        return (0, 0, 1, 0, 0, 0, 0, 0)

    def _counters(self, values: Sequence[int]) -> tuple[int, int, int]:
        s1, s2, anc = values[0], values[1], values[2:]
        pi = self.cons.pi
        if self.depth < pi:
            return (s2, sum(anc), s1)
        return (s1, sum(anc[pi:]), sum(anc[:pi]))

    def _over(self, c: Sequence[int]) -> bool:
        return any(_exceeds(val, b) for val, b in zip(c, self._bounds))

    def step(self, state, event):
        mains, fin, l, c0, c1, c2, aux_left, size = state
        if event is None:
            if fin:
                return state, HALT
            if aux_left:
                return state, READ
            if mains == self.N_in:
                if size == 0 and mains == 0:
                    return (mains, 1, l, c0, c1, c2, 0, size), HALT
                return (mains, 1, l, c0, c1, c2, 0, size), write((l, self.max_w))
            return state, READ
        kind, tok = event
        if kind == "m":
            mains += 1
            naux = tok[2]
            add = self._counters(tok[3:])
            new = (c0 + add[0], c1 + add[1], c2 + add[2])
            if self._over(new):
                return (mains, 0, l, c0, c1, c2, naux, size), AUX
            return self.step((mains, 0, l, *new, 0, size + naux), None)
        r = tok[0]
        add = self._counters(tok[1:])
        new = (c0 + add[0], c1 + add[1], c2 + add[2])
        aux_left -= 1
        if self._over(new):
            if size == 0:
                raise ContractViolation(f"vertex {r} alone exceeds a split-tree bound")
            return (mains, 0, r, *add, aux_left, 1), write((l, r - 1))
        return self.step((mains, 0, l, *new, aux_left, size + 1), None)


# ---------------------------------------------------------------------------
# Broadcast and distribution subroutines


@dataclass
class DistributionResult:
    held: dict[int, list]
    trace: RoundTrace
    stats: dict[str, int] = field(default_factory=dict)


def _route_all(graph: Graph, demands, n: int, c_B: int, trace: RoundTrace) -> dict[int, list]:
    if not demands:
        return {}
    res = route(graph, demands, L=load_factor(graph, demands), n=n, c_B=c_B)
    trace.extend(res.trace, trace.rounds)
    return res.received


TAG_ITEM = 3


def amplify_broadcast(cluster, items: dict[int, list[tuple[int, ...]]], c_B: int = DEFAULT_CB) -> DistributionResult:
    """Two-phase broadcast of numbered items over amplifier chains.

    `items` maps holder -> list of item tuples whose first field is the item
    number t. Chain t uses pool positions (t*y + r) mod k, r < y, where
    y = ceil(k / beta) and beta = ceil(k^(2/3)).
    """
    v_list = tuple(sorted(cluster.v_list))
    k = len(v_list)
    trace = RoundTrace()
    all_items = sorted(it for its in items.values() for it in its)
    if len({it[0] for it in all_items}) != len(all_items):
        raise ContractViolation("item numbers must be unique")
    if not all_items:
        return DistributionResult({v: [] for v in v_list}, trace, {"max_recv": 0})
    x = ceil_root(k, 3)
    if not set(items) <= set(v_list):
        raise ContractViolation("items must be held by V_list vertices")
    if len(all_items) > x * x or any(len(its) > x for its in items.values()):
        raise ContractViolation("amplify_broadcast needs O(k^(2/3)) items, O(k^(1/3)) per holder")
    beta = ceil_root(k * k, 3)
    y = -(-k // beta)
    held: dict[int, set] = defaultdict(set)
    for v, its in items.items():
        held[v].update(its)
    phase1 = []
    for holder, its in sorted(items.items()):
        for it in its:
            t = it[0]
            for r in range(y):
                member = v_list[(t * y + r) % k]
                phase1.append((holder, member, Message(TAG_ITEM, tuple(it))))
    recv1 = _route_all(cluster.graph, phase1, cluster.n, c_B, trace)
    count_recv: dict[int, int] = defaultdict(int)
    phase2 = []
    for member, msgs in sorted(recv1.items()):
        for _, msg in msgs:
            held[member].add(msg.fields)
            count_recv[member] += 1
            t = msg.fields[0]
            r = [((t * y + rr) % k) for rr in range(y)].index(v_list.index(member))
            for target in v_list[r * beta:(r + 1) * beta]:
                if target != member:
                    phase2.append((member, target, msg))
    recv2 = _route_all(cluster.graph, phase2, cluster.n, c_B, trace)
    for v, msgs in recv2.items():
        for _, msg in msgs:
            held[v].add(msg.fields)
            count_recv[v] += 1
    return DistributionResult({v: sorted(held[v]) for v in v_list}, trace,
                              {"max_recv": max(count_recv.values(), default=0), "chain_size": y, "beta": beta})


def broadcast_n_messages(cluster, items: dict[int, list[tuple[int, ...]]], c_B: int = DEFAULT_CB) -> DistributionResult:
    """Gather at the lowest id, then doubling: in step s, rank i < 2^s sends
    everything to rank i + 2^s."""
    v_list = tuple(sorted(cluster.v_list))
    k = len(v_list)
    trace = RoundTrace()
    if not k:
        return DistributionResult({}, trace)
    leader = v_list[0]
    gathered = set(items.get(leader, []))
    demands = [(v, leader, Message(TAG_ITEM, tuple(it))) for v, its in sorted(items.items()) if v != leader for it in its]
    for _, msgs in _route_all(cluster.graph, demands, cluster.n, c_B, trace).items():
        gathered.update(m.fields for _, m in msgs)
    payload = sorted(gathered)
    informed = 1
    steps = 0
    while informed < k:
        dem = []
        for i in range(min(informed, k - informed)):
            dem += [(v_list[i], v_list[i + informed], Message(TAG_ITEM, it)) for it in payload]
        _route_all(cluster.graph, dem, cluster.n, c_B, trace)
        informed *= 2
        steps += 1
    return DistributionResult({v: list(payload) for v in v_list}, trace, {"doubling_steps": steps})


class IntervalAssignment(SkipStreamAlgorithm):
    """Degree-balanced interval assignment. Main tokens (v, deg_C(v)) in
    ascending order; output (v, lo, hi), with (v, 0, 0) for the empty set."""

    name = "interval-assignment"

    def __init__(self, n: int, k: int, M: int, m: int):
        self.k, self.M, self.m = k, M, m
        super().__init__(n, token_limit(3, n), k, k, 0, 1)

    def initial_state(self):
        return (0, 0)

    def step(self, state, event):
        reads, leaf = state
        if event is None:
            return state, (HALT if reads == self.N_in else READ)
        v, deg = event[1]
        if 2 * deg * self.k < self.m:
            return (reads + 1, leaf), write((v, 0, 0))
        length = 2 * (-(-self.M * deg // self.m))
        return (reads + 1, leaf + length), write((v, leaf + 1, leaf + length))


def interval_assignment(degrees: Sequence[tuple[int, int]], M: int) -> list[tuple[int, int, int]]:
    """Closed form of IntervalAssignment (used by the tests as a second route)."""
    k = len(degrees)
    m = sum(d for _, d in degrees)
    out, leaf = [], 0
    for v, d in sorted(degrees):
        if 2 * d * k < m:
            out.append((v, 0, 0))
        else:
            ln = 2 * (-(-M * d // m))
            out.append((v, leaf + 1, leaf + ln))
            leaf += ln
    return out


@dataclass
class BalancedDistribution:
    held: dict[int, list[tuple[int, ...]]]
    intervals: dict[int, tuple[int, int]]
    trace: RoundTrace
    token_holders: dict[int, int]
    sim_stats: UsageStats | None


def degree_balanced_distribute(cluster, items: dict[int, list[tuple[int, ...]]], c_B: int = DEFAULT_CB,
                               lam: int | None = None) -> BalancedDistribution:
    """Items are tuples whose first field is the item number j in 1..M."""
    v_list = tuple(sorted(cluster.v_list))
    k = len(v_list)
    g = cluster.graph
    trace = RoundTrace()
    numbered = sorted(it for its in items.values() for it in its)
    M = len(numbered)
    if [it[0] for it in numbered] != list(range(1, M + 1)):
        raise ContractViolation("items must be numbered 1..M")
    degs = [(v, g.degree(v)) for v in v_list]
    m = sum(d for _, d in degs)
    if k == 1:
        return BalancedDistribution({v_list[0]: numbered}, {v_list[0]: (1, M) if M else (0, 0)}, trace, {}, None)
    if not k or m == 0:
        if M:
            raise ContractViolation("cannot distribute items in a cluster without edges")
        return BalancedDistribution({}, {}, trace, {}, None)
    # m and M become common knowledge through one convergecast + broadcast each.
    agg = tree_aggregate(g, cluster.n, c_B)
    trace.extend(agg, trace.rounds)
    trace.extend(agg, trace.rounds)
    # (i) re-index: item j moves to V_list rank ceil(j / c).
    c = max(1, -(-M // k))
    holder_of = {j: v_list[(j - 1) // c] for j in range(1, M + 1)}
    staged: dict[int, list[tuple[int, ...]]] = defaultdict(list)
    demands = []
    for v, its in sorted(items.items()):
        for it in its:
            dst = holder_of[it[0]]
            if dst == v:
                staged[v].append(tuple(it))
            else:
                demands.append((v, dst, Message(TAG_ITEM, tuple(it))))
    for dst, msgs in _route_all(g, demands, cluster.n, c_B, trace).items():
        staged[dst].extend(m_.fields for _, m_ in msgs)
    # (ii) interval assignment as a skip-stream.
    alg = IntervalAssignment(cluster.n, k, M, m)
    sic = StreamingInputCluster(g, v_list, [StreamInput(alg, {v: [((v, d), ())] for v, d in degs})], cluster.n)
    lam = lam if lam is not None else default_lambda(k, 1)
    sim = simulate_in_cluster(sic, lam, c_B)
    trace.extend(sim.trace, trace.rounds)
    # (iii) output tokens travel to their subjects.
    token_at: dict[int, int] = {}
    demands = []
    for writer, recs in sorted(sim.writes_at.items()):
        for _, _, tok in recs:
            token_at[tok[0]] = writer
            if writer != tok[0]:
                demands.append((writer, tok[0], Message(TAG_ITEM, tok)))
    _route_all(g, demands, cluster.n, c_B, trace)
    intervals = {tok[0]: (tok[1], tok[2]) for tok in sim.outputs[0]}
    total = sum(hi - lo + 1 for lo, hi in intervals.values() if lo)
    if total < M:
        raise ContractViolation(f"interval assignment covers {total} < M={M} items")
    # (iv) subjects pull their items from the re-indexed holders.
    requests, replies = [], []
    held: dict[int, list[tuple[int, ...]]] = {v: [] for v in v_list}
    staged_by_num = {it[0]: (v, it) for v, its in staged.items() for it in its}
    for v in v_list:
        lo, hi = intervals[v]
        if not lo:
            continue
        hi = min(hi, M)
        sources = sorted({holder_of[j] for j in range(lo, hi + 1)})
        for s in sources:
            if s != v:
                requests.append((v, s, Message(TAG_ITEM, (lo, hi))))
        for j in range(lo, hi + 1):
            s, it = staged_by_num[j]
            held[v].append(it)
            if s != v:
                replies.append((s, v, Message(TAG_ITEM, it)))
    _route_all(g, requests, cluster.n, c_B, trace)
    _route_all(g, replies, cluster.n, c_B, trace)
    return BalancedDistribution(held, intervals, trace, token_at, sim.stats[0])


# ---------------------------------------------------------------------------
# Layer builders


@dataclass
class LayerRun:
    parts: dict[Path, tuple[Interval, ...]]
    writers: dict[Path, list[tuple[int, int]]]
    stats: list[UsageStats]
    trace: RoundTrace
    sequential: list[list[tuple[int, ...]]]


def _run_layer(cluster, paths: list[Path], algs: list[SkipStreamAlgorithm],
               holdings: list[dict], lam: int, mode: str, c_B: int) -> LayerRun:
    trace = RoundTrace()
    parts: dict[Path, tuple[Interval, ...]] = {}
    writers: dict[Path, list[tuple[int, int]]] = {}
    if mode == "sequential":
        outs, stats = [], []
        for path, alg, h in zip(paths, algs, holdings):
            stream = _assemble(cluster.v_list, h)
            res = run_sequential(alg, stream)
            parts[path] = tuple((t[0], t[1]) for t in res.outputs)
            outs.append(res.outputs)
            stats.append(res.stats)
        return LayerRun(parts, writers, stats, trace, outs)
    sic = StreamingInputCluster(cluster.graph, tuple(cluster.v_list),
                                [StreamInput(a, h) for a, h in zip(algs, holdings)], cluster.n)
    sim = simulate_in_cluster(sic, lam, c_B)
    trace.extend(sim.trace)
    for i, path in enumerate(paths):
        parts[path] = tuple((t[0], t[1]) for t in sim.outputs[i])
        writers[path] = []
    for v, recs in sorted(sim.writes_at.items()):
        for j, seq, _ in recs:
            writers[paths[j]].append((seq, v))
    for path in writers:
        writers[path].sort()
    return LayerRun(parts, writers, sim.stats, trace, sim.outputs)


def _assemble(v_list: Sequence[int], holdings: dict) -> TokenStream:
    mains, auxes = [], []
    for v in sorted(v_list):
        for tok, aux in holdings.get(v, []):
            mains.append(tok)
            auxes.append(aux)
    return TokenStream(mains, auxes)


@dataclass
class TreeBuild:
    tree: PartitionTree
    trace: RoundTrace
    layer_stats: list[list[UsageStats]]
    leaf_holders: dict[int, list[Path]]
    constraints: object
    algorithms: list[list[tuple[SkipStreamAlgorithm, TokenStream, list[tuple[int, ...]]]]]


def k3_graph(cluster) -> Graph:
    vl = set(cluster.v_list)
    return Graph(cluster.n, [e for e in cluster.graph.edges if e[0] in vl and e[1] in vl], vertices=vl)


def build_k3_tree(cluster, mode: str = "distributed", c_B: int = DEFAULT_CB,
                  distribute: bool = True, constraints: K3Constraints | None = None,
                  n_out: int | None = None) -> TreeBuild:
    """Three streamed layers over C[V_list]; amplify after layers 0 and 1;
    leaf parts balanced over V_hd at the end. `constraints` and `n_out`
    replace the default constants (stress tests only)."""
    v_list = tuple(sorted(cluster.v_list))
    k = len(v_list)
    gl = k3_graph(cluster)
    cons = constraints or K3Constraints(k, gl.m)
    tree = PartitionTree("k3", 3, (v_list,) * 3)
    trace = RoundTrace()
    layer_stats: list[list[UsageStats]] = []
    algos: list[list] = []
    if k == 0:
        return TreeBuild(tree, trace, [], {}, cons, [])
    nbr = {v: gl.neighbors(v) for v in v_list}
    frontier: list[Path] = [()]
    leaf_items: dict[int, list[tuple[int, ...]]] = defaultdict(list)
    for depth in range(3):
        paths = frontier
        algs, holdings = [], []
        for path in paths:
            anc = [set(tree.members(i, tree.parts(path[:i])[path[i]])) for i in range(depth)]
            h = {v: [((v, len(nbr[v])) + tuple(len(nbr[v] & W) for W in anc), ())] for v in v_list}
            algs.append(K3LayerAlgorithm(cluster.n, depth, cons, n_out))
            holdings.append(h)
        lam = default_lambda(k, len(paths))
        run = _run_layer(cluster, paths, algs, holdings, lam, mode, c_B)
        trace.extend(run.trace, trace.rounds)
        tree.nodes.update(run.parts)
        layer_stats.append(run.stats)
        algos.append([(a, _assemble(v_list, h), out) for a, h, out in zip(algs, holdings, run.sequential)])
        if mode == "distributed" and depth < 2:
            items: dict[int, list[tuple[int, ...]]] = defaultdict(list)
            t = 0
            for path in paths:
                for j, (seq, v) in enumerate(run.writers[path]):
                    lo, hi = run.parts[path][seq]
                    items[v].append((t, len(path), *path, seq, lo, hi))
                    t += 1
            res = amplify_broadcast(cluster, items, c_B)
            trace.extend(res.trace, trace.rounds)
        if mode == "distributed" and depth == 2:
            for path in paths:
                for seq, v in run.writers[path]:
                    leaf_items[v].append(path + (seq,))
        frontier = [path + (j,) for path in paths for j in range(len(run.parts[path]))]
    leaf_holders: dict[int, list[Path]] = {}
    if mode == "distributed":
        if distribute:
            number = {leaf: i + 1 for i, leaf in enumerate(tree.leaves())}
            items = {v: [(number[lf], *lf) for lf in lfs] for v, lfs in leaf_items.items()}
            dist = degree_balanced_distribute(cluster, items, c_B)
            trace.extend(dist.trace, trace.rounds)
            leaf_holders = {v: [tuple(it[1:]) for it in its] for v, its in dist.held.items() if its}
        else:
            leaf_holders = {v: sorted(lfs) for v, lfs in leaf_items.items()}
    return TreeBuild(tree, trace, layer_stats, leaf_holders, cons, algos)


def split_universes(sg: SplitGraph, p: int, p_prime: int) -> tuple[tuple[int, ...], ...]:
    pi = p - p_prime
    v1, v2 = tuple(sorted(sg.V1)), tuple(sorted(sg.V2))
    return tuple(v2 if d < pi else v1 for d in range(p))


def build_split_tree(cluster, sg: SplitGraph, p: int, p_prime: int,
                     sigma: dict[int, tuple[int, ...]], mode: str = "distributed",
                     c_B: int = DEFAULT_CB, constraints: SplitConstraints | None = None,
                     n_out: int | None = None) -> TreeBuild:
    """Build a (p', p)-split tree. `sigma` maps each V_list vertex to the V2
    vertices it owns after input reorganisation (ascending, contiguous)."""
    v_list = tuple(sorted(cluster.v_list))
    cons = constraints or SplitConstraints.for_split(sg, p, p_prime)
    unis = split_universes(sg, p, p_prime)
    tree = PartitionTree(f"split:{cons.pi}", p, unis)
    trace = RoundTrace()
    layer_stats: list[list[UsageStats]] = []
    algos: list[list] = []
    nbr = {v: sg.neighbors(v) for v in set(sg.V1) | set(sg.V2)}
    V1, V2 = set(sg.V1), set(sg.V2)
    frontier: list[Path] = [()]
    for depth in range(p):
        over_v2 = depth < cons.pi
        paths = frontier
        algs, holdings = [], []
        for path in paths:
            anc = [set(tree.members(i, tree.parts(path[:i])[path[i]])) for i in range(depth)]

            def vals(v: int) -> tuple[int, ...]:
                nb = nbr[v]
                return (len(nb & V1), len(nb & V2)) + tuple(len(nb & W) for W in anc)

            h: dict[int, list] = {}
            n_mains = 0
            for owner in v_list:
                verts = sigma.get(owner, ()) if over_v2 else (owner,)
                if not verts:
                    continue
                aux = tuple((v,) + vals(v) for v in verts)
                agg = tuple(sum(a[i] for a in aux) for i in range(1, 3 + depth))
                h[owner] = [((verts[0], verts[-1], len(verts)) + agg, aux)]
                n_mains += 1
            uni = unis[depth]
            algs.append(SplitLayerAlgorithm(cluster.n, depth, n_mains, uni[-1] if uni else 0, cons, n_out))
            holdings.append(h)
        run = _run_layer(cluster, paths, algs, holdings, 1, mode, c_B)
        trace.extend(run.trace, trace.rounds)
        tree.nodes.update(run.parts)
        layer_stats.append(run.stats)
        algos.append([(a, _assemble(v_list, h), out) for a, h, out in zip(algs, holdings, run.sequential)])
        if mode == "distributed":
            items: dict[int, list[tuple[int, ...]]] = defaultdict(list)
            for path in paths:
                for seq, v in run.writers[path]:
                    lo, hi = run.parts[path][seq]
                    items[v].append((len(path), *path, seq, lo, hi))
            res = broadcast_n_messages(cluster, items, c_B)
            trace.extend(res.trace, trace.rounds)
        frontier = [path + (j,) for path in paths for j in range(len(run.parts[path]))]
    return TreeBuild(tree, trace, layer_stats, {}, cons, algos)
