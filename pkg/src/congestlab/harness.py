"""Experiment configuration, oracle-diff verification and report writing."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from .generators import generate, parse_gen
from .graph import Graph, brute_force_cliques, dump_graph, format_cliques, load_graph
from .listing import ListingParams, ListingResult, depth_bound, list_kp


class HarnessError(RuntimeError):
    pass


def fmt_num(x) -> str:
    """Decimal for integers and floats, num/den for rationals."""
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _frac(x: str | None) -> Fraction | None:
    return None if x is None else Fraction(x)


@dataclass
class ExperimentConfig:
    """One run. Exactly one of `graph` (edge-list path) or `gen`
    ('kind:key=val,...') names the input. Rational overrides are strings
    such as '1/6' so the config stays JSON-serializable."""

    p: int = 3
    graph: str | None = None
    gen: str | None = None
    seed: int = 0
    epsilon: str | None = None
    beta: str | None = None
    gamma: str | None = None
    scale: str | None = None
    c_B: int | None = None
    slack: float | None = None
    verify: bool = True
    out: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise HarnessError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**raw)

    def params(self) -> ListingParams:
        return ListingParams.defaults(self.p, epsilon=_frac(self.epsilon), beta=_frac(self.beta),
                                      gamma=_frac(self.gamma), scale=_frac(self.scale), c_B=self.c_B,
                                      slack=self.slack, verify=self.verify)

    def load(self) -> Graph:
        if (self.graph is None) == (self.gen is None):
            raise HarnessError("config needs exactly one of 'graph' or 'gen'")
        if self.graph is not None:
            path = Path(self.graph)
            if not path.is_file():
                raise HarnessError(f"graph file not found: {path}")
            return load_graph(path.read_text())
        kind, params = parse_gen(self.gen)
        return generate(kind, self.seed, **params)


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class Verdict:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(ok), detail))

    def lines(self) -> list[str]:
        out = [f"check {c.name} {'pass' if c.ok else 'FAIL'}" + (f" {c.detail}" if c.detail else "")
               for c in self.checks]
        return out + [f"verdict {'pass' if self.ok else 'FAIL'}"]


def elimination_target(params: ListingParams) -> Fraction:
    """Minimum fraction of the current edges each wrapper level removes."""
    eps = params.epsilon
    if params.p == 3:
        return 1 - 3 * eps
    if params.p == 4:
        return 1 - (3 * eps + 2 / params.gamma)
    return 1 - (3 * eps + 4 / params.beta + 2 / params.gamma)


def check_all(g: Graph, p: int, params: ListingParams | None = None,
              result: ListingResult | None = None) -> tuple[Verdict, ListingResult | None]:
    params = params or ListingParams.defaults(p)
    verdict = Verdict()
    try:
        res = result or list_kp(g, p, params)
    except Exception as exc:  # a contract breach inside the run is a verdict entry
        verdict.add("run", False, f"{type(exc).__name__}: {exc}")
        return verdict, None
    oracle = brute_force_cliques(g, p)
    verdict.add("oracle", res.cliques == oracle, f"listed={len(res.cliques)} oracle={len(oracle)}")
    verdict.add("attribution", sorted(res.attribution) == oracle, f"attributed={len(res.attribution)}")
    dec = res.audits.get("decomposition", [])
    verdict.add("decomposition", all(ok for _, ok, _ in dec), f"runs={len(dec)}")
    ea = res.audits.get("edge_accounting", [])
    verdict.add("edge_accounting", all(a.ok for _, a in ea),
                f"max_plus_membership={max((a.max_plus_membership for _, a in ea), default=0)}")
    trees = res.audits.get("trees", [])
    parts_ok = all(all(v <= bound for v in mp.values()) for *_, mp, bound in trees)
    verdict.add("trees", all(t[3] for t in trees) and parts_ok, f"built={len(trees)}")
    sk = res.audits.get("skipstream", [])
    verdict.add("skipstream_budgets", all(a <= q and w <= y for _, _, a, q, w, y, _ in sk), f"runs={len(sk)}")
    B = res.accountant.B
    viol = res.accountant.trace.violations(B)
    verdict.add("bandwidth", not viol, f"B={B} c_B={res.accountant.c_B}" + (f" first={viol[0]}" if viol else ""))
    bound = depth_bound(g.m)
    verdict.add("depth", res.depth <= bound, f"depth={res.depth} bound={bound}")
    vol = res.audits.get("volume", [])
    worst = max((w for *_, w in vol), default=0.0)
    verdict.add("volume", all(ok for _, _, ok, _ in vol), f"worst_ratio={worst:.4f} slack={params.slack_value:g}")
    target = elimination_target(params)
    elim = res.audits.get("elimination", [])
    frac_ok = all(Fraction(rem, cur) >= target for _, cur, rem in elim if cur)
    verdict.add("elimination", frac_ok, f"target={fmt_num(target)}")
    if p > 4:
        sc2 = res.audits.get("sc2", [])
        cur = {lv: c for lv, c, _ in elim}
        verdict.add("bad_set_mass", all(Fraction(v) <= 4 * Fraction(cur[lv]) / params.beta for lv, v in sc2),
                    f"max={max((v for _, v in sc2), default=0)}")
    verdict.add("internal", not res.failures, res.failures[0] if res.failures else "")
    return verdict, res


@dataclass
class ExperimentOutcome:
    report: str
    exit_code: int
    files: dict[str, str]
    verdict: Verdict | None


def _report(config: ExperimentConfig, g: Graph, params: ListingParams, res: ListingResult | None,
            verdict: Verdict | None) -> str:
    lines = ["# config"]
    for key, val in sorted(asdict(config).items()):
        if key != "out":
            lines.append(f"{key} {val}")
    lines += ["# parameters", f"epsilon {fmt_num(params.epsilon)}", f"beta {fmt_num(params.beta)}",
              f"gamma {fmt_num(params.gamma)}", f"scale {fmt_num(params.scale)}", f"phi {fmt_num(params.phi)}",
              f"c_B {params.c_B}", f"slack {params.slack_value:g}"]
    lines += ["# graph", f"n {g.n}", f"m {g.m}"]
    if res is not None:
        rep = res.accountant.report()
        lines += ["# result", f"cliques {len(res.cliques)}", f"depth {res.depth}"]
        lines += ["# attribution"] + [f"{k} {v}" for k, v in res.attribution_counts().items()]
        lines += ["# accounting"] + [f"{k} {fmt_num(v)}" for k, v in sorted(asdict(rep).items())]
        lines.append(f"trace_sha256 {res.accountant.trace.digest()}")
        lines += ["# phases"] + [f"{ph.name} start={ph.start} rounds={ph.rounds} messages={ph.messages}"
                                 for ph in res.accountant.phases]
    if verdict is not None:
        lines += ["# verdict"] + verdict.lines()
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig) -> ExperimentOutcome:
    g = config.load()
    params = config.params()
    if config.verify:
        verdict, res = check_all(g, config.p, params)
    else:
        verdict, res = None, list_kp(g, config.p, params)
    report = _report(config, g, params, res, verdict)
    files: dict[str, str] = {"report.txt": report, "config.json": config.to_json() + "\n"}
    if res is not None:
        files["cliques.txt"] = format_cliques(res.cliques)
        files["attribution.txt"] = "".join(f"{' '.join(map(str, q))} {ph} {lv}\n"
                                           for q, (ph, lv) in res.attribution.items())
        files["accounting.json"] = res.accountant.report().to_json() + "\n"
        files["graph.txt"] = dump_graph(g)
    if config.out:
        out = Path(config.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            for name, text in files.items():
                (out / name).write_text(text)
        except OSError as exc:
            raise HarnessError(f"cannot write reports to {out}: {exc}") from exc
    exit_code = 0 if verdict is None or verdict.ok else 1
    return ExperimentOutcome(report, exit_code, files, verdict)


@dataclass
class SweepRow:
    n: int
    m: int
    cliques: int
    rounds: int
    messages: int
    max_sent: int
    depth: int
    seconds: float

    def line(self) -> str:
        return (f"{self.n:>5} {self.m:>6} {self.cliques:>8} {self.rounds:>8} {self.messages:>10} "
                f"{self.max_sent:>8} {self.depth:>5} {self.seconds:>8.2f}")


SWEEP_HEADER = f"{'n':>5} {'m':>6} {'cliques':>8} {'rounds':>8} {'messages':>10} {'max_sent':>8} {'depth':>5} {'seconds':>8}"


def sweep(ns: list[int], q: Fraction, p: int, seed: int = 0, params: ListingParams | None = None) -> list[SweepRow]:
    """Rounds-versus-n table on G(n, q); for inspection only."""
    rows = []
    for n in ns:
        g = generate("gnp", seed, n=n, p=q)
        t0 = time.perf_counter()
        res = list_kp(g, p, params or ListingParams.defaults(p))
        rep = res.accountant.report()
        rows.append(SweepRow(n, g.m, len(res.cliques), rep.rounds, rep.total_messages, rep.max_sent, res.depth,
                             time.perf_counter() - t0))
    return rows


def reference_curve(n: int, p: int) -> float:
    """n^(1/3) for triangles, n^(1-2/p) otherwise; a column for eyeballing."""
    return n ** (1 / 3) if p == 3 else n ** (1 - 2 / p)
