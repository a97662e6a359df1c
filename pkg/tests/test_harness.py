import json
from fractions import Fraction

import pytest

from congestlab.congest import permuted_schedule
from congestlab.generators import complete, gnp, petersen
from congestlab.graph import brute_force_cliques
from congestlab.harness import (
    ExperimentConfig,
    HarnessError,
    check_all,
    elimination_target,
    fmt_num,
    reference_curve,
    run_experiment,
    sweep,
)
from congestlab.listing import ListingParams


def test_fmt_num():
    assert fmt_num(Fraction(1, 6)) == "1/6"
    assert fmt_num(Fraction(4)) == "4"
    assert fmt_num(7) == "7"
    assert fmt_num(0.5) == "0.5"


def test_check_all_k6_p4():
    verdict, res = check_all(complete(6), 4)
    assert verdict.ok
    assert len(res.cliques) == 15


def test_check_all_petersen_p3():
    verdict, res = check_all(petersen(), 3)
    assert verdict.ok and res.cliques == []


def test_check_all_gnp40():
    g = gnp(40, Fraction(1, 2), 7)
    verdict, res = check_all(g, 3)
    assert verdict.ok
    assert res.cliques == brute_force_cliques(g, 3)
    names = [c.name for c in verdict.checks]
    assert names[:3] == ["oracle", "attribution", "decomposition"]


def test_check_all_reports_breach_as_entry():
    g = gnp(20, Fraction(1, 2), 1)
    _, res = check_all(g, 3)
    res.cliques = res.cliques[1:]
    verdict, _ = check_all(g, 3, result=res)
    assert not verdict.ok
    assert [c.name for c in verdict.checks if not c.ok] == ["oracle"]
    assert verdict.lines()[-1] == "verdict FAIL"


def test_elimination_targets():
    assert elimination_target(ListingParams.defaults(3)) == Fraction(1, 2)
    assert elimination_target(ListingParams.defaults(4)) == Fraction(1, 4)
    assert elimination_target(ListingParams.defaults(5)) == Fraction(1, 2)


def test_config_round_trip():
    cfg = ExperimentConfig(p=4, gen="gnp:n=20,p=1/2", seed=3, epsilon="1/12", scale="1/8")
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(HarnessError, match="unknown config keys"):
        ExperimentConfig.from_json(json.dumps({"p": 3, "colour": "red"}))


def test_config_needs_one_source():
    with pytest.raises(HarnessError):
        ExperimentConfig().load()
    with pytest.raises(HarnessError):
        ExperimentConfig(graph="x", gen="petersen").load()


def test_missing_graph_file_names_path(tmp_path):
    missing = tmp_path / "nope.txt"
    with pytest.raises(HarnessError, match=str(missing)):
        run_experiment(ExperimentConfig(graph=str(missing)))


def test_repeated_runs_identical(tmp_path):
    cfg = ExperimentConfig(p=4, gen="gnp:n=24,p=3/5", seed=2, scale="1/4", out=str(tmp_path))
    first = run_experiment(cfg)
    before = {name: (tmp_path / name).read_bytes() for name in first.files}
    second = run_experiment(cfg)
    assert first.exit_code == 0
    assert first.files == second.files
    assert before == {name: (tmp_path / name).read_bytes() for name in second.files}


def test_permuted_schedule_does_not_change_outputs():
    cfg = ExperimentConfig(p=3, gen="gnp:n=32,p=2/5", seed=4, scale="1/8")
    base = run_experiment(cfg)
    with permuted_schedule(17):
        shuffled = run_experiment(cfg)
    assert shuffled.files == base.files


def test_no_verify_omits_verdict():
    out = run_experiment(ExperimentConfig(p=3, gen="complete:n=6", verify=False))
    assert "# verdict" not in out.report and out.verdict is None and out.exit_code == 0
    assert "# verdict" in run_experiment(ExperimentConfig(p=3, gen="complete:n=6")).report


def test_report_sections(tmp_path):
    out = run_experiment(ExperimentConfig(p=4, gen="complete:n=6", out=str(tmp_path)))
    heads = [line for line in out.report.splitlines() if line.startswith("#")]
    assert heads == ["# config", "# parameters", "# graph", "# result", "# attribution", "# accounting",
                     "# phases", "# verdict"]
    assert "epsilon 1/12" in out.report
    assert (tmp_path / "cliques.txt").read_text().count("\n") == 15
    assert set(out.files) == {"report.txt", "config.json", "cliques.txt", "attribution.txt", "accounting.json",
                              "graph.txt"}


def test_sweep_rows():
    rows = sweep([8, 16], Fraction(1, 2), 3)
    assert [r.n for r in rows] == [8, 16]
    assert all(r.cliques == len(brute_force_cliques(gnp(r.n, Fraction(1, 2), 0), 3)) for r in rows)
    assert reference_curve(27, 3) == pytest.approx(3.0)
