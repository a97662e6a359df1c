"""Round-synchronous CONGEST simulator with bandwidth enforcement and traces.

Messages are a 4-bit tag plus integer fields. Each field is written as
units of w = ceil(log2(n+1)) bits plus a continuation bit, so a vertex id
costs one unit and larger counters cost more. A logical message larger than
B bits is split into ceil(bits / B) fragments that travel over the same
directed edge in consecutive rounds; the trace counts fragments.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections import defaultdict, deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .graph import ContractViolation, Graph

TAG_BITS = 4
DEFAULT_CB = 8


_SCHEDULE_SEED: int | None = None


@contextmanager
def permuted_schedule(seed: int | None):
    """Within this block, simulators process vertices and edges of a round in
    a seeded pseudo-random order instead of ascending order."""
    global _SCHEDULE_SEED
    prev, _SCHEDULE_SEED = _SCHEDULE_SEED, seed
    try:
        yield
    finally:
        _SCHEDULE_SEED = prev


def schedule_order(items: Iterable) -> list:
    """Processing order for independent per-vertex or per-edge work. Results
    must not depend on it; `permuted_schedule` exists to test exactly that."""
    if _SCHEDULE_SEED is None:
        return list(items)
    items = sorted(items)
    random.Random(_SCHEDULE_SEED * 1000003 + len(items)).shuffle(items)
    return items


class CongestError(RuntimeError):
    def __init__(self, msg: str, vertex: int | None = None, edge: tuple[int, int] | None = None,
                 round_no: int | None = None):
        where = []
        if vertex is not None:
            where.append(f"vertex {vertex}")
        if edge is not None:
            where.append(f"edge {edge}")
        if round_no is not None:
            where.append(f"round {round_no}")
        super().__init__(msg + (f" ({', '.join(where)})" if where else ""))
        self.vertex, self.edge, self.round_no = vertex, edge, round_no


class Message(NamedTuple):
    tag: int
    fields: tuple[int, ...] = ()
    atomic: bool = False


def id_width(n: int) -> int:
    return max(1, n.bit_length())


def bandwidth(n: int, c_B: int = DEFAULT_CB) -> int:
    return c_B * max(1, math.ceil(math.log2(n))) if n > 1 else c_B


def field_units(value: int, w: int) -> int:
    if value < 0:
        raise ValueError("message fields are non-negative integers")
    return max(1, -(-value.bit_length() // w))


def message_bits(msg: Message, n: int) -> int:
    w = id_width(n)
    return TAG_BITS + sum(field_units(f, w) for f in msg.fields) * (w + 1)


def fragment_sizes(bits: int, B: int) -> list[int]:
    full, rest = divmod(bits, B)
    return [B] * full + ([rest] if rest else [])


class RoundTrace:
    """Fragment-level ledger: one record per (round, sender, receiver)."""

    def __init__(self) -> None:
        self._r: list[int] = []
        self._s: list[int] = []
        self._d: list[int] = []
        self._b: list[int] = []

    def add(self, round_no: int, src: int, dst: int, bits: int) -> None:
        self._r.append(round_no)
        self._s.append(src)
        self._d.append(dst)
        self._b.append(bits)

    def extend(self, other: "RoundTrace", offset: int = 0) -> None:
        self._r.extend(r + offset for r in other._r)
        self._s.extend(other._s)
        self._d.extend(other._d)
        self._b.extend(other._b)

    def __len__(self) -> int:
        return len(self._r)

    @property
    def rounds(self) -> int:
        return max(self._r) if self._r else 0

    @property
    def total_bits(self) -> int:
        return sum(self._b)

    def records(self) -> list[tuple[int, int, int, int, int]]:
        """Normalized records (round, edge_u, edge_v, dir, bits)."""
        out = []
        for r, s, d, b in zip(self._r, self._s, self._d, self._b):
            u, v = (s, d) if s < d else (d, s)
            out.append((r, u, v, 0 if s < d else 1, b))
        out.sort()
        return out

    def to_csv(self) -> str:
        lines = ["round,edge_u,edge_v,dir,bits"]
        lines += [",".join(map(str, rec)) for rec in self.records()]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    def per_vertex(self) -> tuple[dict[int, int], dict[int, int]]:
        sent: dict[int, int] = defaultdict(int)
        recv: dict[int, int] = defaultdict(int)
        for s in self._s:
            sent[s] += 1
        for d in self._d:
            recv[d] += 1
        return dict(sent), dict(recv)

    def round_utilization(self) -> list[int]:
        if not self._r:
            return []
        counts = np.bincount(np.asarray(self._r, dtype=np.int64), minlength=self.rounds + 1)
        return [int(c) for c in counts[1:]]

    def violations(self, B: int) -> list[str]:
        """Bandwidth breaches: oversize fragments or two fragments on one
        directed edge in one round."""
        bad = []
        seen: set[tuple[int, int, int]] = set()
        for r, s, d, b in zip(self._r, self._s, self._d, self._b):
            if b > B:
                bad.append(f"round {r} {s}->{d}: {b} bits > {B}")
            key = (r, s, d)
            if key in seen:
                bad.append(f"round {r} {s}->{d}: second message")
            seen.add(key)
        return bad


@dataclass
class AccountingReport:
    max_sent: int
    max_recv: int
    rounds: int
    total_messages: int
    total_bits: int = 0
    B: int = 0
    c_B: int = DEFAULT_CB
    max_round_utilization: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AccountingReport":
        return cls(**json.loads(text))


def accounting_report(trace: RoundTrace, B: int = 0, c_B: int = DEFAULT_CB) -> AccountingReport:
    sent, recv = trace.per_vertex()
    util = trace.round_utilization()
    return AccountingReport(
        max_sent=max(sent.values(), default=0),
        max_recv=max(recv.values(), default=0),
        rounds=trace.rounds,
        total_messages=len(trace),
        total_bits=trace.total_bits,
        B=B,
        c_B=c_B,
        max_round_utilization=max(util, default=0),
    )


@dataclass
class PhaseRecord:
    name: str
    start: int
    rounds: int
    messages: int


@dataclass
class Accountant:
    """Concatenates the traces of successive protocol phases."""

    n: int
    c_B: int = DEFAULT_CB
    trace: RoundTrace = field(default_factory=RoundTrace)
    phases: list[PhaseRecord] = field(default_factory=list)

    @property
    def B(self) -> int:
        return bandwidth(self.n, self.c_B)

    def absorb(self, name: str, trace: RoundTrace) -> int:
        start = self.trace.rounds
        self.trace.extend(trace, offset=start)
        self.phases.append(PhaseRecord(name, start, trace.rounds, len(trace)))
        return start

    def report(self) -> AccountingReport:
        return accounting_report(self.trace, self.B, self.c_B)


class VertexProgram:
    """Base class for per-vertex handlers run by `run`.

    Subclasses override `on_round`, returning a map neighbor -> Message (or
    list of Messages, queued in order). Set `done` once the vertex has
    nothing further to do; append listing results to `outputs`.
    """

    def __init__(self) -> None:
        self.vertex = 0
        self.done = False
        self.outputs: list[tuple[int, ...]] = []

    def init(self, vertex: int, local_input: object = None) -> None:
        self.vertex = vertex

    def on_round(self, round_no: int, inbox: dict[int, Message]) -> dict[int, Message | list[Message]]:
        return {}


@dataclass
class RunResult:
    outputs: dict[int, set[tuple[int, ...]]]
    trace: RoundTrace
    rounds: int


def run(g: Graph, programs: dict[int, VertexProgram], max_rounds: int,
        order: Sequence[int] | None = None, c_B: int = DEFAULT_CB) -> RunResult:
    if max_rounds < 1:
        raise ContractViolation("max_rounds must be positive")
    if set(programs) != set(g.vertices):
        raise ContractViolation("need exactly one program per vertex")
    B = bandwidth(g.n, c_B)
    order = list(order) if order is not None else schedule_order(g.vertices)
    queues: dict[tuple[int, int], deque] = {}
    pending: dict[int, dict[int, Message]] = defaultdict(dict)
    trace = RoundTrace()
    for r in range(1, max_rounds + 1):
        inbox = pending.pop(r, {})
        boxes: dict[int, dict[int, Message]] = defaultdict(dict)
        for (src, dst), msg in sorted(inbox.items()):
            boxes[dst][src] = msg
        for v in order:
            prog = programs[v]
            out = prog.on_round(r, boxes.get(v, {}))
            for nb, msgs in (out or {}).items():
                if not g.has_edge(v, nb):
                    raise CongestError("outbox key is not an incident edge", v, (v, nb), r)
                for msg in msgs if isinstance(msgs, list) else [msgs]:
                    bits = message_bits(msg, g.n)
                    if msg.atomic and bits > B:
                        raise CongestError(f"message of {bits} bits exceeds B={B}", v, (v, nb), r)
                    q = queues.setdefault((v, nb), deque())
                    frags = fragment_sizes(bits, B)
                    for i, fb in enumerate(frags):
                        q.append((fb, msg if i == len(frags) - 1 else None))
        for key in schedule_order(k for k, q in queues.items() if q):
            fb, msg = queues[key].popleft()
            trace.add(r, key[0], key[1], fb)
            if msg is not None:
                pending[r + 1][key] = msg
        if all(p.done for p in programs.values()) and not any(queues.values()) and not pending:
            return RunResult({v: set(p.outputs) for v, p in programs.items()}, trace, r)
    raise CongestError(f"no termination within {max_rounds} rounds")


@dataclass
class Exchange:
    received: dict[int, list[tuple[int, Message]]]
    trace: RoundTrace


def exchange(g: Graph | None, sends: Iterable[tuple[int, int, Message]], n: int,
             c_B: int = DEFAULT_CB) -> Exchange:
    """One-hop transfer of queued messages, all enqueued in round 1.

    Each directed edge drains its FIFO queue one fragment per round; this is
    exactly what `run` does for programs that send everything up front.
    `g=None` skips the adjacency check (callers that already verified it).
    """
    B = bandwidth(n, c_B)
    queues: dict[tuple[int, int], list[Message]] = defaultdict(list)
    for src, dst, msg in sends:
        if g is not None and not g.has_edge(src, dst):
            raise ContractViolation(f"{src}->{dst} is not an edge")
        queues[(src, dst)].append(msg)
    trace = RoundTrace()
    arrivals: list[tuple[int, int, int, int, Message]] = []
    for (src, dst) in schedule_order(queues):
        r = 0
        for seq, msg in enumerate(queues[(src, dst)]):
            for fb in fragment_sizes(message_bits(msg, n), B):
                r += 1
                trace.add(r, src, dst, fb)
            arrivals.append((r, src, dst, seq, msg))
    arrivals.sort(key=lambda a: (a[2], a[0], a[1], a[3]))
    received: dict[int, list[tuple[int, Message]]] = defaultdict(list)
    for _, src, dst, _, msg in arrivals:
        received[dst].append((src, msg))
    return Exchange(dict(received), trace)
