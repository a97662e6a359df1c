"""Skip-stream algorithms: a budget-enforcing executor, vertex chains, and the
three-phase distributed simulation inside a cluster.

An algorithm is a pure state machine. `step(state, event)` receives the result
of the previous operation and returns the next state plus the next operation:

    event  None | ("m", main_token) | ("a", aux_token)
    op     ("R",) read, ("A",) aux, ("W", token) write, ("H",) halt

States and tokens are tuples of non-negative integers so they can be shipped
as message fields. Both the sequential and the distributed paths drive the
same `Executor`, which owns every budget counter.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Sequence

from .congest import DEFAULT_CB, Message, RoundTrace, id_width, field_units
from .expander import route
from .graph import ContractViolation, Graph

Token = tuple[int, ...]
READ: tuple = ("R",)
AUX: tuple = ("A",)
HALT: tuple = ("H",)


def write(token: Token) -> tuple:
    return ("W", tuple(token))


def token_bits(token: Sequence[int], n: int) -> int:
    w = id_width(n)
    return sum(field_units(int(x), w) for x in token) * (w + 1)


def token_limit(fields: int, n: int) -> int:
    """L for tokens with `fields` integer fields, each up to two id units."""
    return 4 + 2 * fields * (id_width(n) + 1)


class BudgetViolation(RuntimeError):
    def __init__(self, budget: str, index: int, algorithm: str = "", phase: str = ""):
        where = f" in {algorithm}" if algorithm else ""
        where += f" during {phase}" if phase else ""
        super().__init__(f"{budget} budget exceeded at token {index}{where}")
        self.budget, self.index, self.algorithm, self.phase = budget, index, algorithm, phase


class StreamExhausted(RuntimeError):
    pass


class SkipStreamAlgorithm:
    """Base class. Subclasses set the budget parameters and implement
    `initial_state` and `step`."""

    name = "skip-stream"

    def __init__(self, n: int, L: int, N_in: int, N_out: int, q: int, y: int,
                 state_cap: int | None = None):
        self.n, self.L, self.N_in, self.N_out, self.q, self.y = n, L, N_in, N_out, q, y
        self.state_cap = state_cap if state_cap is not None else 64 * L * L

    def initial_state(self) -> Token:
        return ()

    def step(self, state: Token, event) -> tuple[Token, tuple]:
        raise NotImplementedError


class HaltAlgorithm(SkipStreamAlgorithm):
    name = "halt"

    def step(self, state, event):
        return state, HALT


class CopyAlgorithm(SkipStreamAlgorithm):
    """Reads every main token and writes it back unchanged."""

    name = "copy"

    def initial_state(self):
        return (0,)

    def step(self, state, event):
        (seen,) = state
        if event is not None and event[0] == "m":
            return (seen + 1,), write(event[1])
        if seen == self.N_in:
            return state, HALT
        return state, READ


@dataclass
class TokenStream:
    mains: list[Token]
    auxes: list[tuple[Token, ...]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.mains = [tuple(t) for t in self.mains]
        if not self.auxes:
            self.auxes = [()] * len(self.mains)
        if len(self.auxes) != len(self.mains):
            raise ContractViolation("one auxiliary sequence per main token")
        self.auxes = [tuple(tuple(a) for a in seq) for seq in self.auxes]


@dataclass
class UsageStats:
    reads: int = 0
    mains: int = 0
    auxes: int = 0
    writes: int = 0
    max_writes_between: int = 0
    max_state_bits: int = 0
    handoffs: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


class Executor:
    """Drives one algorithm and enforces its budgets.

    The mutable part (`snapshot`) is a flat integer tuple so a simulator can
    ship it across an edge and rebuild the executor elsewhere.
    """

    def __init__(self, alg: SkipStreamAlgorithm, phase: str = "sequential"):
        self.alg = alg
        self.phase = phase
        self.state: Token = tuple(alg.initial_state())
        self.stats = UsageStats()
        self.since_main = 0
        self.last_main = -1
        self.last_was_main = False
        self.aux_left = 0
        self.op: tuple | None = None
        self._check_state()

    def _violation(self, budget: str, index: int | None = None) -> BudgetViolation:
        return BudgetViolation(budget, self.stats.mains if index is None else index, self.alg.name, self.phase)

    def _check_state(self) -> None:
        bits = token_bits(self.state, self.alg.n)
        if bits > self.alg.state_cap:
            raise self._violation("state")
        self.stats.max_state_bits = max(self.stats.max_state_bits, bits)

    def start(self) -> tuple:
        return self._advance(None)

    def feed(self, event) -> tuple:
        kind, tok = event
        if self.op != READ:
            raise ContractViolation("token delivered without a pending READ")
        if token_bits(tok, self.alg.n) > self.alg.L:
            raise self._violation("L")
        self.stats.reads += 1
        if kind == "m":
            if self.aux_left:
                raise ContractViolation("main token delivered while auxiliaries pending")
            self.stats.mains += 1
            if self.stats.mains > self.alg.N_in:
                raise self._violation("N_in")
            self.since_main = 0
            self.last_main += 1
            self.last_was_main = True
        else:
            if not self.aux_left:
                raise ContractViolation("auxiliary token delivered without AUX")
            self.aux_left -= 1
            self.last_was_main = False
        return self._advance(event)

    def after_write(self) -> tuple:
        return self._advance(None)

    def grant_aux(self, count: int) -> tuple:
        """Record that the auxiliaries of the last main token were prepended."""
        if self.op != AUX:
            raise ContractViolation("AUX granted without request")
        self.aux_left = count
        return self._advance(None)

    def _advance(self, event) -> tuple:
        state, op = self.alg.step(self.state, event)
        self.state = tuple(state)
        self._check_state()
        if op[0] == "W":
            if token_bits(op[1], self.alg.n) > self.alg.L:
                raise self._violation("L")
            self.stats.writes += 1
            self.since_main += 1
            if self.stats.writes > self.alg.N_out:
                raise self._violation("N_out")
            if self.since_main > self.alg.y:
                raise self._violation("y")
            self.stats.max_writes_between = max(self.stats.max_writes_between, self.since_main)
        elif op == AUX:
            if not self.last_was_main:
                raise ContractViolation("AUX must directly follow a main-token READ")
            self.stats.auxes += 1
            if self.stats.auxes > self.alg.q:
                raise self._violation("q")
            self.last_was_main = False
        self.op = op
        return op

    # Serialization for hand-offs ------------------------------------------
    def snapshot(self) -> Token:
        s = self.stats
        op_code = {"R": 0, "A": 1, "W": 2, "H": 3}[self.op[0]] if self.op else 4
        head = (s.reads, s.mains, s.auxes, s.writes, s.max_writes_between, s.max_state_bits, s.handoffs,
                self.since_main, self.last_main + 1, int(self.last_was_main), self.aux_left, op_code)
        return head + (len(self.state),) + self.state

    @classmethod
    def restore(cls, alg: SkipStreamAlgorithm, snap: Sequence[int], phase: str) -> "Executor":
        ex = cls.__new__(cls)
        ex.alg, ex.phase = alg, phase
        (reads, mains, auxes, writes, mwb, msb, hand, since, lm1, lwm, aux_left, op_code) = snap[:12]
        ex.stats = UsageStats(reads, mains, auxes, writes, mwb, msb, hand)
        ex.since_main, ex.last_main, ex.last_was_main, ex.aux_left = since, lm1 - 1, bool(lwm), aux_left
        size = snap[12]
        ex.state = tuple(snap[13:13 + size])
        ex.op = {0: READ, 1: AUX, 3: HALT, 4: None}.get(op_code)
        if op_code == 2:
            raise ContractViolation("snapshots are taken between operations, never mid-write")
        return ex


@dataclass
class SequentialRun:
    outputs: list[Token]
    stats: UsageStats


def run_sequential(alg: SkipStreamAlgorithm, stream: TokenStream) -> SequentialRun:
    if len(stream.mains) != alg.N_in:
        raise ContractViolation(f"stream has {len(stream.mains)} mains, algorithm expects {alg.N_in}")
    ex = Executor(alg)
    out: list[Token] = []
    pending: deque[Token] = deque()
    nxt = 0
    op = ex.start()
    while op != HALT:
        if op == READ:
            if pending:
                op = ex.feed(("a", pending.popleft()))
            elif nxt < len(stream.mains):
                op = ex.feed(("m", stream.mains[nxt]))
                nxt += 1
            else:
                raise StreamExhausted(f"{alg.name} read past the end of its stream")
        elif op == AUX:
            pending.extend(stream.auxes[ex.last_main])
            op = ex.grant_aux(len(stream.auxes[ex.last_main]))
        else:
            out.append(op[1])
            op = ex.after_write()
    return SequentialRun(out, ex.stats)


@dataclass
class VertexChain:
    targets: tuple[int, ...]
    beta: int
    members: tuple[int, ...]

    def member_of(self, vertex: int) -> int:
        rank = self._rank[vertex]
        return self.members[rank // self.beta]

    def assigned(self, member: int) -> tuple[int, ...]:
        i = self.members.index(member)
        return self.targets[i * self.beta:(i + 1) * self.beta]

    def __post_init__(self) -> None:
        self._rank = {v: i for i, v in enumerate(self.targets)}


def make_vertex_chain(targets: Sequence[int], beta: int, pool: Sequence[int]) -> VertexChain:
    targets = tuple(sorted(targets))
    if beta < 1:
        raise ContractViolation("beta must be positive")
    size = -(-len(targets) // beta)
    if len(pool) < size:
        raise ContractViolation(f"pool of {len(pool)} cannot host a chain of {size}")
    return VertexChain(targets, beta, tuple(pool[:size]))


@dataclass
class StreamInput:
    """One hosted algorithm and its input: vertex -> [(main, auxiliaries)]."""

    algorithm: SkipStreamAlgorithm
    holdings: dict[int, list[tuple[Token, tuple[Token, ...]]]]


@dataclass
class StreamingInputCluster:
    graph: Graph
    v_list: tuple[int, ...]
    inputs: list[StreamInput]
    n: int

    def __post_init__(self) -> None:
        self.v_list = tuple(sorted(self.v_list))
        vl = set(self.v_list)
        for si in self.inputs:
            if not set(si.holdings) <= vl:
                raise ContractViolation("main tokens must be held by V_list vertices")

    @property
    def T_max(self) -> int:
        return max((len(h) for si in self.inputs for h in si.holdings.values()), default=0)

    def stream(self, j: int) -> TokenStream:
        h = self.inputs[j].holdings
        mains, auxes = [], []
        for v in self.v_list:
            for tok, aux in h.get(v, []):
                mains.append(tok)
                auxes.append(aux)
        return TokenStream(mains, auxes)


@dataclass
class SimulationResult:
    outputs: list[list[Token]]
    writes_at: dict[int, list[tuple[int, int, Token]]]
    stats: list[UsageStats]
    trace: RoundTrace
    phase_rounds: dict[str, int]
    phase1_sent: int
    phase1_recv: int
    steps: int
    max_aux_answers_per_step: int


TAG_MAIN, TAG_STATE = 1, 2


def simulate_in_cluster(c: StreamingInputCluster, lam: int, c_B: int = DEFAULT_CB) -> SimulationResult:
    """Simulate every hosted algorithm. Algorithms are processed in batches of
    at most floor(k / lam) so that simulator chains stay disjoint."""
    k = len(c.v_list)
    if lam < 1 or (c.inputs and lam > k):
        raise ContractViolation(f"lambda={lam} outside [1, k={k}]")
    zeta = len(c.inputs)
    if zeta == 0:
        return SimulationResult([], {}, [], RoundTrace(), {}, 0, 0, 0, 0)
    per_batch = max(1, k // lam)
    trace = RoundTrace()
    outputs: list[list[Token]] = [None] * zeta  # type: ignore[list-item]
    stats: list[UsageStats] = [None] * zeta  # type: ignore[list-item]
    writes_at: dict[int, list[tuple[int, int, Token]]] = defaultdict(list)
    phase_rounds: dict[str, int] = defaultdict(int)
    p1s = p1r = steps = aux_answers = 0
    for b0 in range(0, zeta, per_batch):
        batch = list(range(b0, min(zeta, b0 + per_batch)))
        res = _simulate_batch(c, batch, lam, c_B)
        off = trace.rounds
        trace.extend(res.trace, off)
        for j in batch:
            outputs[j] = res.outputs[j - b0]
            stats[j] = res.stats[j - b0]
        for v, recs in res.writes_at.items():
            writes_at[v].extend(recs)
        for name, r in res.phase_rounds.items():
            phase_rounds[name] += r
        p1s, p1r = max(p1s, res.phase1_sent), max(p1r, res.phase1_recv)
        steps = max(steps, res.steps)
        aux_answers = max(aux_answers, res.max_aux_answers_per_step)
    return SimulationResult(outputs, dict(writes_at), stats, trace, dict(phase_rounds), p1s, p1r, steps, aux_answers)


def _simulate_batch(c: StreamingInputCluster, batch: list[int], lam: int, c_B: int) -> SimulationResult:
    k, n, g = len(c.v_list), c.n, c.graph
    zeta = len(batch)
    T_max = c.T_max
    beta = -(-k // lam)
    delta_min = min(g.degree(v) for v in c.v_list) if k else 1
    if delta_min == 0 and k > 1:
        raise ContractViolation("V_list vertex without cluster edges")
    delta_min = max(1, delta_min)

    # Phase 0: chain j takes pool positions j*lam .. (j+1)*lam - 1.
    chains = [make_vertex_chain(c.v_list, beta, c.v_list[i * lam:(i + 1) * lam]) for i in range(zeta)]

    # Phase 1: every main token travels, tagged with origin and index, to its owner.
    origin: list[list[int]] = []
    streams: list[TokenStream] = []
    demands = []
    sent: dict[int, int] = defaultdict(int)
    recv: dict[int, int] = defaultdict(int)
    known: list[dict[int, set[int]]] = []
    for bi, j in enumerate(batch):
        h = c.inputs[j].holdings
        org, mains, auxes = [], [], []
        kn: dict[int, set[int]] = defaultdict(set)
        for v in c.v_list:
            owner = chains[bi].member_of(v)
            for tok, aux in h.get(v, []):
                idx = len(mains)
                org.append(v)
                mains.append(tok)
                auxes.append(aux)
                kn[owner].add(idx)
                demands.append((v, owner, Message(TAG_MAIN, (bi, idx) + tuple(tok))))
                sent[v] += 1
                recv[owner] += 1
        origin.append(org)
        streams.append(TokenStream(mains, auxes))
        known.append(kn)
        alg = c.inputs[j].algorithm
        if len(mains) != alg.N_in:
            raise ContractViolation(f"{alg.name}: stream has {len(mains)} mains, expects {alg.N_in}")
    p1_sent, p1_recv = max(sent.values(), default=0), max(recv.values(), default=0)
    if p1_sent > zeta * T_max or p1_recv > beta * T_max:
        raise ContractViolation("phase 1 traffic exceeds its bound")
    L1 = max(1, -(-(beta * T_max + zeta * T_max) // delta_min))
    trace = RoundTrace()
    phase_rounds = {"phase1": 0, "phase2": 0}
    r1 = route(g, demands, L=L1, n=n, c_B=c_B)
    trace.extend(r1.trace)
    phase_rounds["phase1"] = r1.trace.rounds

    # Phase 2: q+1 barrier steps; within a step, sub-rounds of state transfers.
    algs = [c.inputs[j].algorithm for j in batch]
    execs: list[Executor | None] = [None] * zeta
    loc = [chains[bi].members[0] if chains[bi].members else c.v_list[0] for bi in range(zeta)]
    last_member = list(loc)
    handoffs = [0] * zeta
    nxt = [0] * zeta
    aux_queue: list[deque] = [deque() for _ in range(zeta)]
    outputs: list[list[Token]] = [[] for _ in range(zeta)]
    writes_at: dict[int, list[tuple[int, int, Token]]] = defaultdict(list)
    member_sets = [set(ch.members) for ch in chains]
    waiting_aux = [False] * zeta
    halted = [False] * zeta
    for bi in range(zeta):
        execs[bi] = Executor(algs[bi], phase="phase 2")
    L2 = max(1, -(-(2 * zeta) // delta_min))
    q_max = max(a.q for a in algs)
    steps = 0
    max_answers = 0

    def local_run(bi: int) -> tuple[int, Token] | None:
        """Advance algorithm bi at its current location; return a transfer
        request (destination, snapshot) or None when halted / parked for AUX."""
        ex = execs[bi]
        here = loc[bi]
        op = ex.op if ex.op is not None else ex.start()
        while True:
            if op == HALT:
                halted[bi] = True
                return None
            if op[0] == "W":
                outputs[bi].append(op[1])
                writes_at[here].append((batch[bi], len(outputs[bi]) - 1, op[1]))
                op = ex.after_write()
                continue
            if op == AUX:
                waiting_aux[bi] = True
                return None
            if aux_queue[bi]:
                op = ex.feed(("a", aux_queue[bi].popleft()))
                continue
            i = nxt[bi]
            if i >= len(streams[bi].mains):
                raise StreamExhausted(f"{algs[bi].name} read past the end of its stream")
            if i in known[bi].get(here, ()):
                nxt[bi] += 1
                op = ex.feed(("m", streams[bi].mains[i]))
                continue
            return chains[bi].member_of(origin[bi][i]), ex.snapshot()

    def transfer(requests: dict[int, tuple[int, Token]], aux_step: bool) -> None:
        nonlocal max_answers
        if not requests:
            return
        dem = []
        for bi in sorted(requests):
            dst, snap = requests[bi]
            dem.append((loc[bi], dst, Message(TAG_STATE, (bi, nxt[bi]) + tuple(snap))))
        res = route(g, dem, L=L2, n=n, c_B=c_B)
        trace.extend(res.trace, trace.rounds)
        phase_rounds["phase2"] += res.trace.rounds
        if aux_step:
            answers: dict[tuple[int, int], int] = defaultdict(int)
            for bi in requests:
                answers[(requests[bi][0], bi)] += 1
            max_answers = max(max_answers, max(answers.values()))
        for dst, msgs in res.received.items():
            for _, msg in msgs:
                bi = msg.fields[0]
                snap = msg.fields[2:]
                ex = execs[bi] = Executor.restore(algs[bi], snap, "phase 2")
                loc[bi] = dst
                if aux_step:
                    # the origin answers the request from its local auxiliaries
                    aux = streams[bi].auxes[ex.last_main]
                    ex.grant_aux(len(aux))
                    aux_queue[bi].extend(aux)
                elif dst in member_sets[bi] and dst != last_member[bi]:
                    handoffs[bi] += 1
                    last_member[bi] = dst

    for step in range(q_max + 1):
        steps += 1
        if step > 0:
            reqs = {}
            for bi in range(zeta):
                if waiting_aux[bi]:
                    waiting_aux[bi] = False
                    ex = execs[bi]
                    reqs[bi] = (origin[bi][ex.last_main], ex.snapshot())
            transfer(reqs, aux_step=True)
        while True:
            reqs = {}
            for bi in range(zeta):
                if halted[bi] or waiting_aux[bi]:
                    continue
                r = local_run(bi)
                if r is not None:
                    reqs[bi] = r
            if not reqs:
                break
            transfer(reqs, aux_step=False)
        if all(halted):
            break
    if not all(halted):
        bad = next(bi for bi in range(zeta) if not halted[bi])
        raise BudgetViolation("q", execs[bad].stats.mains, algs[bad].name, "phase 2")
    stats = []
    for bi in range(zeta):
        st = execs[bi].stats
        st.handoffs = handoffs[bi]
        stats.append(st)
    return SimulationResult(outputs, dict(writes_at), stats, trace, phase_rounds, p1_sent, p1_recv,
                            steps, max_answers)


def default_lambda(k: int, zeta: int) -> int:
    """lambda = min(ceil(k^(1/3)), floor(k / zeta)), never below 1."""
    from .expander import ceil_root

    lam = ceil_root(k, 3)
    if zeta:
        lam = min(lam, k // zeta)
    return max(1, lam)


def chain_load(k: int, lam: int) -> int:
    return math.ceil(k / lam) if lam else 0
