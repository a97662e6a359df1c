from click.testing import CliRunner

from congestlab.cli import main
from congestlab.generators import complete
from congestlab.graph import dump_graph


def invoke(*args):
    return CliRunner().invoke(main, list(args))


def test_list_generated_graph():
    res = invoke("list", "--gen", "complete:n=6", "--p", "4")
    assert res.exit_code == 0, res.output
    assert "cliques 15" in res.output and "verdict pass" in res.output


def test_list_graph_file_and_out(tmp_path):
    path = tmp_path / "k5.txt"
    path.write_text(dump_graph(complete(5)))
    out = tmp_path / "run"
    res = invoke("list", "--graph", str(path), "--p", "3", "--out", str(out))
    assert res.exit_code == 0, res.output
    assert (out / "cliques.txt").read_text().count("\n") == 10


def test_list_missing_file():
    res = invoke("list", "--graph", "/no/such/graph.txt")
    assert res.exit_code == 2
    assert "/no/such/graph.txt" in res.output


def test_list_config_file_with_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"p": 3, "gen": "wheel:rim=6"}')
    res = invoke("list", "--config", str(cfg), "--no-verify")
    assert res.exit_code == 0
    assert "cliques 6" in res.output and "# verdict" not in res.output


def test_verify_stored_cliques(tmp_path):
    out = tmp_path / "run"
    assert invoke("list", "--gen", "petersen", "--p", "3", "--out", str(out)).exit_code == 0
    good = invoke("verify", "--gen", "petersen", "--p", "3", "--cliques", str(out / "cliques.txt"))
    assert good.exit_code == 0 and "verdict pass" in good.output
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n")
    res = invoke("verify", "--gen", "petersen", "--p", "3", "--cliques", str(bad))
    assert res.exit_code == 1 and "extra 1" in res.output


def test_decompose_command():
    res = invoke("decompose", "--gen", "bridged-cliques", "--epsilon", "1/6")
    assert res.exit_code == 0, res.output
    assert "epsilon 1/6" in res.output and "verdict pass" in res.output


def test_sweep_command():
    res = invoke("sweep", "--ns", "8,12", "--q", "1/2")
    assert res.exit_code == 0, res.output
    lines = res.output.splitlines()
    assert lines[0] == "# G(n, 1/2) p=3 seed=0"
    assert len(lines) == 4
