"""Graph representation, cut metrics, conductance and the clique oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

Edge = tuple[int, int]

EXACT_CONDUCTANCE_LIMIT = 20


class GraphError(ValueError):
    pass


class ParseError(GraphError):
    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


class ContractViolation(RuntimeError):
    """A documented precondition of an operation was not met."""


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


class Graph:
    """Undirected simple graph on integer vertex ids.

    `n` is the size of the id universe 1..n (it fixes message widths);
    `vertices` may be a subset of it, as for edge-induced subgraphs.
    """

    __slots__ = ("n", "vertices", "edges", "_adj", "tags")

    def __init__(
        self,
        n: int,
        edges: Iterable[Edge] = (),
        vertices: Iterable[int] | None = None,
        tags: dict[Edge, str] | None = None,
    ):
        if n < 0:
            raise GraphError("negative vertex count")
        self.n = n
        es = set()
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at {u}")
            if not (1 <= u <= n and 1 <= v <= n):
                raise GraphError(f"edge ({u},{v}) outside 1..{n}")
            es.add(norm_edge(u, v))
        self.edges: frozenset[Edge] = frozenset(es)
        if vertices is None:
            vs = frozenset(range(1, n + 1))
        else:
            vs = frozenset(vertices)
            for u, v in self.edges:
                if u not in vs or v not in vs:
                    raise GraphError(f"edge ({u},{v}) leaves the vertex set")
        self.vertices: frozenset[int] = vs
        adj: dict[int, set[int]] = {v: set() for v in vs}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        self._adj = {v: frozenset(s) for v, s in adj.items()}
        self.tags = dict(tags or {})

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> frozenset[int]:
        return self._adj.get(v, frozenset())

    def degree(self, v: int) -> int:
        return len(self._adj.get(v, ()))

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj.get(u, ())

    def sorted_vertices(self) -> list[int]:
        return sorted(self.vertices)

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def volume(self, S: Iterable[int]) -> int:
        return sum(self.degree(v) for v in S)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n, self.vertices, self.edges) == (other.n, other.vertices, other.edges)

    def __hash__(self) -> int:
        return hash((self.n, self.vertices, self.edges))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, |V|={len(self.vertices)}, m={self.m})"


def load_graph(text: str) -> Graph:
    header: tuple[int, int] | None = None
    edges: list[Edge] = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(no, f"expected two integers, got {raw!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(no, f"non-integer token in {raw!r}") from None
        if header is None:
            if a < 0 or b < 0:
                raise ParseError(no, "negative header value")
            header = (a, b)
            continue
        if a == b:
            raise ParseError(no, f"self-loop at {a}")
        if not (1 <= a <= header[0] and 1 <= b <= header[0]):
            raise ParseError(no, f"vertex out of range 1..{header[0]}")
        edges.append((a, b))
    if header is None:
        raise ParseError(0, "missing header line 'n m'")
    if len(edges) != header[1]:
        raise ParseError(0, f"header declares {header[1]} edges, found {len(edges)}")
    return Graph(header[0], edges)


def dump_graph(g: Graph) -> str:
    lines = [f"{g.n} {g.m}"]
    lines += [f"{u} {v}" for u, v in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def format_cliques(cliques: Iterable[Sequence[int]]) -> str:
    rows = sorted(tuple(sorted(c)) for c in cliques)
    return "".join(" ".join(map(str, r)) + "\n" for r in rows)


def parse_cliques(text: str) -> list[tuple[int, ...]]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            out.append(tuple(sorted(int(t) for t in line.split())))
    return sorted(out)


def degree_into(g: Graph, v: int, S: Iterable[int]) -> int:
    if v not in g.vertices:
        raise ContractViolation(f"vertex {v} not in graph")
    nb = g.neighbors(v)
    return sum(1 for u in set(S) if u in nb)


def induced_by_edges(g: Graph, edges: Iterable[Edge]) -> Graph:
    es = {norm_edge(*e) for e in edges}
    missing = es - g.edges
    if missing:
        raise ContractViolation(f"edges not in graph: {sorted(missing)[:5]}")
    vs = {x for e in es for x in e}
    return Graph(g.n, es, vertices=vs)


def induced_by_vertices(g: Graph, S: Iterable[int]) -> Graph:
    s = frozenset(S)
    es = [e for e in g.edges if e[0] in s and e[1] in s]
    return Graph(g.n, es, vertices=s)


def components(g: Graph) -> list[list[int]]:
    """Connected components as sorted vertex lists, ordered by smallest id."""
    seen: set[int] = set()
    comps = []
    for s in g.sorted_vertices():
        if s in seen:
            continue
        stack, comp = [s], []
        seen.add(s)
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in g.neighbors(v):
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        comps.append(sorted(comp))
    return comps


@dataclass(frozen=True)
class CutMetrics:
    S: frozenset[int]
    volume: int
    complement_volume: int
    boundary: int

    @property
    def conductance(self) -> Fraction:
        den = min(self.volume, self.complement_volume)
        if den == 0:
            raise GraphError("conductance undefined for a zero-volume side")
        return Fraction(self.boundary, den)


def cut_metrics(g: Graph, S: Iterable[int]) -> CutMetrics:
    s = frozenset(S)
    if not s <= g.vertices:
        raise ContractViolation("cut side leaves the vertex set")
    vol = g.volume(s)
    bd = sum(1 for u, v in g.edges if (u in s) != (v in s))
    return CutMetrics(s, vol, 2 * g.m - vol, bd)


@dataclass(frozen=True)
class ConductanceResult:
    """`value` is exact in mode 'exact', a certified lower bound in mode
    'spectral', and 0 in mode 'disconnected'. `upper` is the best cut found."""

    value: Fraction
    upper: Fraction
    mode: str
    witness: frozenset[int]
    lambda2: float | None = None


def _exact_conductance(g: Graph) -> ConductanceResult:
    vs = g.sorted_vertices()
    n = len(vs)
    pos = {v: i for i, v in enumerate(vs)}
    deg = np.array([g.degree(v) for v in vs], dtype=np.int64)
    total = int(deg.sum())
    masks = np.arange(1, 1 << (n - 1), dtype=np.int64)
    # vertex vs[0] always sits on the complement side; bit i-1 stands for vs[i]
    bits = [np.zeros_like(masks)] + [(masks >> (i - 1)) & 1 for i in range(1, n)]
    vol = np.zeros_like(masks)
    for i in range(1, n):
        vol += deg[i] * bits[i]
    bd = np.zeros_like(masks)
    for u, v in g.edges:
        bd += bits[pos[u]] ^ bits[pos[v]]
    den = np.minimum(vol, total - vol)
    ratio = bd / den
    best = ratio.min()
    cand = np.nonzero(ratio <= best * (1 + 1e-9) + 1e-15)[0]
    best_frac, best_mask = None, None
    for c in cand:
        f = Fraction(int(bd[c]), int(den[c]))
        if best_frac is None or f < best_frac:
            best_frac, best_mask = f, int(masks[c])
    S = frozenset(vs[i] for i in range(1, n) if (best_mask >> (i - 1)) & 1)
    return ConductanceResult(best_frac, best_frac, "exact", S)


def _floor_fraction(x: float, den: int = 10**9) -> Fraction:
    return Fraction(max(0, math.floor(x * den) - 1), den)


def spectral_data(g: Graph) -> tuple[float, list[int]]:
    """Second eigenvalue of the normalized Laplacian and the sweep order."""
    vs = g.sorted_vertices()
    pos = {v: i for i, v in enumerate(vs)}
    n = len(vs)
    A = np.zeros((n, n))
    for u, v in g.edges:
        A[pos[u], pos[v]] = A[pos[v], pos[u]] = 1.0
    d = A.sum(axis=1)
    dinv = 1.0 / np.sqrt(d)
    L = np.eye(n) - (dinv[:, None] * A) * dinv[None, :]
    w, V = np.linalg.eigh(L)
    lam2 = float(w[1])
    f = V[:, 1] * dinv
    order = sorted(range(n), key=lambda i: (f[i], vs[i]))
    return lam2, [vs[i] for i in order]


def sweep_cut(g: Graph, order: Sequence[int]) -> tuple[Fraction, frozenset[int]]:
    total = 2 * g.m
    inside: set[int] = set()
    vol = bd = 0
    best: tuple[Fraction, frozenset[int]] | None = None
    for v in order[:-1]:
        inside.add(v)
        vol += g.degree(v)
        k = sum(1 for u in g.neighbors(v) if u in inside)
        bd += g.degree(v) - 2 * k
        den = min(vol, total - vol)
        if den == 0:
            continue
        phi = Fraction(bd, den)
        if best is None or phi < best[0]:
            best = (phi, frozenset(inside))
    assert best is not None
    return best


def _spectral_conductance(g: Graph, samples: int = 64, seed: int = 0) -> ConductanceResult:
    lam2, order = spectral_data(g)
    upper, witness = sweep_cut(g, order)
    rng = np.random.default_rng(seed)
    vs = g.sorted_vertices()
    cands = [frozenset([v]) for v in vs]
    for _ in range(samples):
        mask = rng.random(len(vs)) < 0.5
        S = frozenset(v for v, b in zip(vs, mask) if b)
        if 0 < len(S) < len(vs):
            cands.append(S)
    for S in cands:
        cm = cut_metrics(g, S)
        if min(cm.volume, cm.complement_volume) == 0:
            continue
        if cm.conductance < upper:
            upper, witness = cm.conductance, S
    lower = min(_floor_fraction(lam2 / 2), upper)
    return ConductanceResult(lower, upper, "spectral", witness, lam2)


def conductance(g: Graph, exact_limit: int = EXACT_CONDUCTANCE_LIMIT) -> ConductanceResult:
    if len(g.vertices) < 2:
        raise ContractViolation("conductance needs at least two vertices")
    comps = components(g)
    if len(comps) > 1:
        w = frozenset(comps[0])
        return ConductanceResult(Fraction(0), Fraction(0), "disconnected", w)
    if len(g.vertices) <= exact_limit:
        return _exact_conductance(g)
    return _spectral_conductance(g)


def brute_force_cliques(g: Graph, p: int) -> list[tuple[int, ...]]:
    """All p-vertex cliques, each sorted, in lexicographic order."""
    if p < 1:
        raise GraphError("clique size must be positive")
    vs = g.sorted_vertices()
    idx = {v: i for i, v in enumerate(vs)}
    nb = [0] * len(vs)
    for u, v in g.edges:
        nb[idx[u]] |= 1 << idx[v]
        nb[idx[v]] |= 1 << idx[u]
    out: list[tuple[int, ...]] = []

    def grow(chosen: list[int], cand: int) -> None:
        if len(chosen) == p:
            out.append(tuple(vs[i] for i in chosen))
            return
        need = p - len(chosen)
        while cand and cand.bit_count() >= need:
            low = cand & -cand
            i = low.bit_length() - 1
            cand ^= low
            chosen.append(i)
            grow(chosen, cand & nb[i])
            chosen.pop()

    grow([], (1 << len(vs)) - 1)
    return out


def relabel(g: Graph, perm: dict[int, int]) -> Graph:
    return Graph(g.n, [(perm[u], perm[v]) for u, v in g.edges], vertices=[perm[v] for v in g.vertices])


@dataclass
class SplitGraph:
    """Graph with an inside set V1, an outside set V2 and the three edge classes."""

    base: Graph
    V1: frozenset[int]
    V2: frozenset[int]
    E1: frozenset[Edge]
    E2: frozenset[Edge]
    E12: frozenset[Edge]
    _adj: dict[int, set[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.V1 & self.V2:
            raise GraphError("V1 and V2 overlap")
        for u, v in self.E1:
            if u not in self.V1 or v not in self.V1:
                raise GraphError(f"E1 edge ({u},{v}) leaves V1")
        for u, v in self.E2:
            if u not in self.V2 or v not in self.V2:
                raise GraphError(f"E2 edge ({u},{v}) leaves V2")
        for u, v in self.E12:
            if not ((u in self.V1) != (v in self.V1) and {u, v} <= self.V1 | self.V2):
                raise GraphError(f"E12 edge ({u},{v}) does not cross")
        if self.E1 & self.E2 or self.E1 & self.E12 or self.E2 & self.E12:
            raise GraphError("edge classes overlap")
        adj: dict[int, set[int]] = {v: set() for v in self.V1 | self.V2}
        for u, v in self.E1 | self.E2 | self.E12:
            adj[u].add(v)
            adj[v].add(u)
        self._adj = adj

    @classmethod
    def from_sets(cls, n: int, V1: Iterable[int], E1: Iterable[Edge], E12: Iterable[Edge],
                  E2: Iterable[Edge], V2: Iterable[int] | None = None) -> "SplitGraph":
        v1 = frozenset(V1)
        v2 = frozenset(V2) if V2 is not None else frozenset(range(1, n + 1)) - v1
        e1 = frozenset(norm_edge(*e) for e in E1)
        e2 = frozenset(norm_edge(*e) for e in E2)
        e12 = frozenset(norm_edge(*e) for e in E12)
        base = Graph(n, e1 | e2 | e12)
        return cls(base, v1, v2, e1, e2, e12)

    @classmethod
    def from_graph(cls, g: Graph, V1: Iterable[int]) -> "SplitGraph":
        v1 = frozenset(V1)
        e1, e2, e12 = set(), set(), set()
        for u, v in g.edges:
            a, b = u in v1, v in v1
            (e1 if a and b else e12 if a != b else e2).add((u, v))
        return cls(g, v1, frozenset(g.vertices) - v1, frozenset(e1), frozenset(e2), frozenset(e12))

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def k(self) -> int:
        return len(self.V1)

    @property
    def m1(self) -> int:
        return len(self.E1)

    @property
    def m2(self) -> int:
        return len(self.E2)

    @property
    def m12(self) -> int:
        return len(self.E12)

    def neighbors(self, v: int) -> set[int]:
        return self._adj.get(v, set())

    def edge_class(self, u: int, v: int) -> str | None:
        e = norm_edge(u, v)
        if e in self.E1:
            return "E1"
        if e in self.E2:
            return "E2"
        if e in self.E12:
            return "E12"
        return None

    def all_edges(self) -> Iterator[Edge]:
        yield from sorted(self.E1 | self.E2 | self.E12)
