"""Command-line entry point: `congestlab list|verify|sweep|decompose`."""

from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import click

from .expander import decompose, verify_decomposition
from .graph import GraphError, brute_force_cliques, parse_cliques
from .harness import SWEEP_HEADER, ExperimentConfig, HarnessError, fmt_num, reference_curve, run_experiment, sweep
from .listing import ListingParams


def _graph_from(graph: str | None, gen: str | None, seed: int):
    return ExperimentConfig(graph=graph, gen=gen, seed=seed).load()


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


@click.group()
def main() -> None:
    """Deterministic CONGEST clique-listing simulator."""


@main.command("list")
@click.option("--graph", type=str, help="Edge-list file ('n m' header, then 'u v' lines).")
@click.option("--gen", type=str, help="Generator spec, e.g. 'gnp:n=30,p=1/2' or 'wheel:rim=5'.")
@click.option("--config", "config_path", type=str, help="JSON experiment config; flags override it.")
@click.option("--p", "p", type=int, default=None, help="Clique size (default 3).")
@click.option("--seed", type=int, default=None)
@click.option("--epsilon", type=str, default=None)
@click.option("--beta", type=str, default=None)
@click.option("--gamma", type=str, default=None)
@click.option("--scale", type=str, default=None, help="Threshold scaling factor (testing knob).")
@click.option("--c-b", "c_B", type=int, default=None, help="Bandwidth constant: B = c_B * ceil(log2 n).")
@click.option("--verify/--no-verify", default=None)
@click.option("--out", type=str, default=None, help="Directory for report files.")
def list_cmd(graph, gen, config_path, p, seed, epsilon, beta, gamma, scale, c_B, verify, out) -> None:
    """List all p-cliques and (by default) verify the run."""
    try:
        cfg = ExperimentConfig.from_json(Path(config_path).read_text()) if config_path else ExperimentConfig()
    except OSError as exc:
        _fail(f"cannot read config {config_path}: {exc.strerror}")
    for key, val in dict(graph=graph, gen=gen, p=p, seed=seed, epsilon=epsilon, beta=beta, gamma=gamma,
                         scale=scale, c_B=c_B, verify=verify, out=out).items():
        if val is not None:
            setattr(cfg, key, val)
    try:
        outcome = run_experiment(cfg)
    except (HarnessError, GraphError) as exc:
        _fail(str(exc))
    click.echo(outcome.report, nl=False)
    sys.exit(outcome.exit_code)


@main.command("verify")
@click.option("--graph", type=str)
@click.option("--gen", type=str)
@click.option("--seed", type=int, default=0)
@click.option("--p", "p", type=int, required=True)
@click.option("--cliques", "cliques_path", type=str, required=True, help="Stored clique list to re-check.")
def verify_cmd(graph, gen, seed, p, cliques_path) -> None:
    """Re-check a stored clique list against the brute-force oracle."""
    try:
        g = _graph_from(graph, gen, seed)
        stored = parse_cliques(Path(cliques_path).read_text())
    except OSError as exc:
        _fail(f"cannot read {exc.filename}: {exc.strerror}")
    except (HarnessError, GraphError, ValueError) as exc:
        _fail(str(exc))
    oracle = brute_force_cliques(g, p)
    missing = sorted(set(oracle) - set(stored))
    extra = sorted(set(stored) - set(oracle))
    click.echo(f"stored {len(stored)}\noracle {len(oracle)}\nmissing {len(missing)}\nextra {len(extra)}")
    for q in missing[:10]:
        click.echo("missing " + " ".join(map(str, q)))
    for q in extra[:10]:
        click.echo("extra " + " ".join(map(str, q)))
    ok = not missing and not extra and len(stored) == len(set(stored))
    click.echo(f"verdict {'pass' if ok else 'FAIL'}")
    sys.exit(0 if ok else 1)


@main.command("sweep")
@click.option("--ns", default="16,24,32,48,64", help="Comma-separated vertex counts.")
@click.option("--q", "q", default="2/5", help="Edge probability of G(n, q).")
@click.option("--p", "p", type=int, default=3)
@click.option("--seed", type=int, default=0)
@click.option("--scale", type=str, default=None)
def sweep_cmd(ns, q, p, seed, scale) -> None:
    """Rounds-versus-n table on random graphs (for inspection, not a gate)."""
    sizes = [int(x) for x in ns.split(",") if x.strip()]
    params = ListingParams.defaults(p, scale=Fraction(scale) if scale else None)
    click.echo(f"# G(n, {q}) p={p} seed={seed}")
    click.echo(SWEEP_HEADER + f" {'ref':>8} {'rounds/ref':>10}")
    for row in sweep(sizes, Fraction(q), p, seed, params):
        ref = reference_curve(row.n, p)
        click.echo(row.line() + f" {ref:>8.3f} {row.rounds / ref:>10.2f}")


@main.command("decompose")
@click.option("--graph", type=str)
@click.option("--gen", type=str)
@click.option("--seed", type=int, default=0)
@click.option("--epsilon", type=str, default="1/6")
def decompose_cmd(graph, gen, seed, epsilon) -> None:
    """Run the expander decomposition and its verifier."""
    try:
        g = _graph_from(graph, gen, seed)
    except (HarnessError, GraphError) as exc:
        _fail(str(exc))
    d = decompose(g, Fraction(epsilon))
    rep = verify_decomposition(g, d)
    click.echo(f"n {g.n}\nm {g.m}\nepsilon {fmt_num(d.epsilon)}\nphi {fmt_num(d.phi)}")
    click.echo(d.dump(), nl=False)
    for i, mode, value in rep.certificates:
        click.echo(f"certificate part {i} {mode} {fmt_num(value)}")
    for f in rep.failures:
        click.echo(f"failure {f}")
    click.echo(f"verdict {'pass' if rep.ok else 'FAIL'}")
    sys.exit(0 if rep.ok else 1)


if __name__ == "__main__":
    main()
