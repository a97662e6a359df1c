"""Deterministic graph generators and the fixed test corpus.

Random graphs draw from SplitMix64 so edge sets are reproducible across
implementations: state += 0x9E3779B97F4A7C15, then
z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9, z = (z ^ (z >> 27)) * 0x94D049BB133111EB,
output z ^ (z >> 31), all mod 2^64. The initial state is the seed. G(n, q)
visits pairs (u, v), u < v, in lexicographic order and keeps the pair iff
the next output is below floor(q * 2^64).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterator

from .graph import Graph, GraphError

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

KINDS = ("complete", "bipartite", "gnp", "bridged-cliques", "glued-cliques", "petersen", "wheel")


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & MASK64
        z = ((z ^ (z >> 27)) * MIX2) & MASK64
        return z ^ (z >> 31)

    def __iter__(self) -> Iterator[int]:
        while True:
            yield self.next()


def _prob(q) -> Fraction:
    f = Fraction(q).limit_denominator(10**9) if isinstance(q, float) else Fraction(q)
    if not 0 <= f <= 1:
        raise GraphError(f"edge probability {q} outside [0, 1]")
    return f


def complete(n: int) -> Graph:
    return Graph(n, [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)])


def bipartite(a: int, b: int) -> Graph:
    return Graph(a + b, [(u, a + v) for u in range(1, a + 1) for v in range(1, b + 1)])


def gnp(n: int, q, seed: int = 0) -> Graph:
    cutoff = (_prob(q) * (1 << 64)).__floor__()
    rng = SplitMix64(seed)
    return Graph(n, [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1) if rng.next() < cutoff])


def bridged_cliques(size: int, count: int = 2) -> Graph:
    """`count` copies of K_size in a path, consecutive copies joined by one
    edge from the last vertex of one to the first vertex of the next."""
    edges = []
    for c in range(count):
        base = c * size
        edges += [(base + u, base + v) for u in range(1, size + 1) for v in range(u + 1, size + 1)]
        if c:
            edges.append((base, base + 1))
    return Graph(size * count, edges)


def glued_cliques(size: int = 6, shared: int = 3) -> Graph:
    """Two copies of K_size sharing `shared` vertices (ids 1..shared)."""
    if not 0 <= shared <= size:
        raise GraphError("shared must lie in 0..size")
    first = list(range(1, size + 1))
    second = list(range(1, shared + 1)) + list(range(size + 1, 2 * size - shared + 1))
    edges = {(u, v) for grp in (first, second) for i, u in enumerate(grp) for v in grp[i + 1:]}
    return Graph(2 * size - shared, edges)


def petersen() -> Graph:
    outer = [(i, i % 5 + 1) for i in range(1, 6)]
    inner = [(5 + i, 5 + (i + 1) % 5 + 1) for i in range(1, 6)]
    spokes = [(i, i + 5) for i in range(1, 6)]
    return Graph(10, outer + inner + spokes)


def wheel(rim: int) -> Graph:
    """Hub 1 joined to the cycle 2..rim+1."""
    if rim < 3:
        raise GraphError("a wheel needs a rim of at least 3 vertices")
    cycle = [(1 + i, 1 + i % rim + 1) for i in range(1, rim + 1)]
    return Graph(rim + 1, cycle + [(1, v) for v in range(2, rim + 2)])


def generate(kind: str, seed: int = 0, **params) -> Graph:
    try:
        if kind == "complete":
            return complete(int(params["n"]))
        if kind == "bipartite":
            return bipartite(int(params["a"]), int(params["b"]))
        if kind == "gnp":
            return gnp(int(params["n"]), params["p"], seed)
        if kind == "bridged-cliques":
            return bridged_cliques(int(params.get("size", 5)), int(params.get("count", 2)))
        if kind == "glued-cliques":
            return glued_cliques(int(params.get("size", 6)), int(params.get("shared", 3)))
        if kind == "petersen":
            return petersen()
        if kind == "wheel":
            return wheel(int(params["rim"]))
    except KeyError as exc:
        raise GraphError(f"generator {kind!r} needs parameter {exc.args[0]!r}") from None
    raise GraphError(f"unknown generator {kind!r}; choose from {', '.join(KINDS)}")


def parse_gen(spec: str) -> tuple[str, dict[str, str]]:
    """'gnp:n=30,p=1/2' -> ('gnp', {'n': '30', 'p': '1/2'})."""
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise GraphError(f"malformed generator parameter {item!r}")
        params[key.strip()] = val.strip()
    if "p" in params:
        params["p"] = Fraction(params["p"])
    return kind.strip(), params


def corpus(seeds: int = 10) -> list[tuple[str, Graph]]:
    """The fixed acceptance corpus: named graphs in a stable order."""
    out = [(f"K{n}", complete(n)) for n in range(5, 13)]
    out.append(("K3,3", bipartite(3, 3)))
    out.append(("petersen", petersen()))
    out += [(f"W{r}", wheel(r)) for r in range(5, 10)]
    out.append(("bridged-K5", bridged_cliques(5, 2)))
    out.append(("glued-K6", glued_cliques(6, 3)))
    for q in (Fraction(1, 5), Fraction(2, 5), Fraction(3, 5)):
        for s in range(seeds):
            n = 8 * (s + 1)
            out.append((f"gnp(n={n},p={q},seed={s})", gnp(n, q, s)))
    return out
