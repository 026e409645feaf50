import json

import pytest

from desim.cli import main
from desim.fixtures import example11
from desim.model import dump_demands, dump_topology


@pytest.fixture
def ex11_files(tmp_path):
    topo, matrix = example11()
    t = tmp_path / "topo.json"
    d = tmp_path / "demands.csv"
    t.write_text(dump_topology(topo))
    d.write_text(dump_demands(matrix))
    return t, d


def test_study_writes_outputs(tmp_path, capsys):
    rc = main(["study", "--topology", "builtin:symmetric5", "--iterations", "2", "--seed", "3",
               "--out", str(tmp_path / "out")])
    assert rc == 0
    assert "demand_engineering" in capsys.readouterr().out
    lines = (tmp_path / "out" / "study.csv").read_text().splitlines()
    assert len(lines) == 4
    assert len(list((tmp_path / "out" / "traces").glob("*.csv"))) == 6


def test_place_example(ex11_files, capsys, tmp_path):
    t, d = ex11_files
    out = tmp_path / "after.csv"
    rc = main(["place", "--topology", str(t), "--demands", str(d),
               "--a-ends", "atl,bos,chi,hst,kcy,lax,mia,nyc,sea,sjc,wdc", "--mbps", "100",
               "--l-max", "25", "--threshold", "0.95", "--failures", "none,circuits,nodes,srlgs",
               "--commit-out", str(out)])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["chosen"] == "kcy"
    assert len(out.read_text().splitlines()) > len(d.read_text().splitlines())


def test_place_requires_bandwidth(ex11_files):
    t, _ = ex11_files
    assert main(["place", "--topology", str(t), "--a-ends", "atl"]) == 1


def test_report_stdout(ex11_files, capsys):
    t, d = ex11_files
    assert main(["report", "--topology", str(t), "--demands", str(d)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "scenario,edge,load_mbps,utilization"
    assert out[-1].startswith("summary,network_wc_util,,")


def test_check(ex11_files, capsys):
    t, d = ex11_files
    assert main(["check", "--topology", str(t), "--demands", str(d)]) == 0
    assert capsys.readouterr().out.startswith("ok: 11 nodes")


@pytest.mark.parametrize("argv", [
    ["check", "--topology", "/no/such.json"],
    ["check"],
    ["study", "--topology", "builtin:nope"],
    ["study", "--topology", "builtin:symmetric5", "--algorithms", "magic"],
    ["nosuchcommand"],
])
def test_input_errors_exit_1(argv):
    assert main(argv) == 1


def test_bad_topology_content(tmp_path, capsys):
    p = tmp_path / "t.json"
    p.write_text('{"nodes": [], "circuits": [{"id": "x"}]}')
    assert main(["check", "--topology", str(p)]) == 1
    assert "error" in capsys.readouterr().err


def test_serve_check(tmp_path, ex11_files, capsys):
    t, d = ex11_files
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"topology: {t}\ndemands: {d}\n")
    assert main(["serve", "--config", str(cfg), "--check"]) == 0
    assert "ok: 11 nodes, 8 committed demands" in capsys.readouterr().out
    assert main(["check", "--config", str(cfg)]) == 0
    assert "8 demands" in capsys.readouterr().out


def test_internal_error_exit_2(monkeypatch):
    import desim.cli as cli_mod

    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(cli_mod, "run_study", boom)
    assert main(["study", "--topology", "builtin:symmetric5", "--iterations", "1"]) == 2
