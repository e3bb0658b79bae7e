import json
from fractions import Fraction

import pytest

from nonuni.cli import fmt, parse_grid, parse_params, run
from nonuni.graph_core import GraphPatch


@pytest.fixture
def gm_patch(tmp_path):
    path = tmp_path / "gm.json"
    assert run(["generate", "--family", "grandmother", "--params", "k=2,up=6,down=6", "--out", str(path)]) == 0
    return path


def test_helpers():
    assert parse_grid("0.3:0.5:0.1") == [0.3, 0.4, 0.5]
    assert fmt(Fraction(1, 3)) == "1/3" and fmt(True) == "true" and fmt(0.1 + 0.2) == "0.3"
    assert parse_params('{"k": 2}', ["up=3"]) == {"k": 2, "up": 3}
    assert parse_params("k=2,up=3", None) == {"k": 2, "up": 3}


def test_generate_roundtrip(gm_patch):
    p = GraphPatch.from_json(gm_patch.read_text())
    assert p.generator == "grandmother" and p.labels is not None
    man = json.loads((gm_patch.parent / "gm.json.manifest.json").read_text())
    assert man["subcommand"] == "generate" and man["outputs"] == [str(gm_patch)]


def test_mtp_check_counterexample(gm_patch, capsys):
    assert run(["mtp-check", "--patch", str(gm_patch), "--rule", "unit_to_children"]) == 0
    assert capsys.readouterr().out.strip() == "sent=2 received=1 equal=false"
    assert run(["mtp-check", "--patch", str(gm_patch), "--rule", "unit_to_children", "--weighted"]) == 0
    assert capsys.readouterr().out.strip() == "sent=2 weighted_received=2 equal=true"


def test_weighted_failure_exits_3(tmp_path):
    # a path with doubling weights is not transitive, so the weighted identity fails
    n = 7
    doc = {"generator": "path", "params": {}, "V": n, "root": 3, "level_ratio": "2",
           "edges": [[i, i + 1] for i in range(n - 1)], "level": list(range(n)),
           "interior": [0 < i < n - 1 for i in range(n)]}
    path = tmp_path / "path.json"
    path.write_text(json.dumps(doc))
    assert run(["mtp-check", "--patch", str(path), "--rule", "unit_to_children", "--weighted"]) == 3


def test_parameter_errors_exit_2(gm_patch, tmp_path):
    assert run(["sweep", "--p-grid", "bad", "--depth", "4"]) == 2
    assert run(["mtp-check", "--patch", str(gm_patch), "--rule", "nope"]) == 2
    assert run(["branching", "--k", "2", "--p", "0.5", "--alpha", "3"]) == 2
    assert run(["percolate", "--patch", str(gm_patch)]) == 2
    assert run(["no-such-command"]) == 2


def test_unwritable_output_exits_4(tmp_path):
    assert run(["upsilon", "--q", "0.5", "--csv", str(tmp_path / "missing" / "x.csv")]) == 4


def test_config_and_env_seed(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "b.csv"
    cfg.write_text(json.dumps({"k": 2, "p": 0.6, "trials": 200, "max-gen": 10, "csv": str(out)}))
    assert run(["--config", str(cfg), "branching"]) == 0
    first = out.read_text()
    monkeypatch.setenv("NONUNI_SEED", "9")
    assert run(["--config", str(cfg), "branching"]) == 0
    man = json.loads((tmp_path / "b.csv.manifest.json").read_text())
    assert man["seed"] == 9 and out.read_text() != first


COMMANDS = [
    ["percolate", "--patch", "{gm}", "--p", "0.6", "--json", "{d}/perc.json", "--csv", "{d}/perc.csv"],
    ["sweep", "--p-grid", "0.4:0.6:0.1", "--depth", "6", "--trials", "300", "--stats-trials", "2",
     "--csv", "{d}/sweep.csv"],
    ["mtp-check", "--patch", "{gm}", "--rule", "unit_to_grandchildren", "--weighted", "--all", "--csv", "{d}/mtp.csv"],
    ["partition", "--patch", "{gm}", "--u", "0.37", "--emit", "{d}/classes.csv"],
    ["forest-pipeline", "--patch", "{g12}", "--p", "0.8", "--class", "-5", "--threshold", "5",
     "--json", "{d}/pipe.json"],
    ["branching", "--k", "2", "--p", "0.7", "--alpha", "2", "--trials", "3000", "--max-gen", "15",
     "--csv", "{d}/br.csv"],
    ["upsilon", "--q", "0.6", "--budget", "5000", "--csv", "{d}/ups.csv"],
    ["omega", "--levels", "40", "--q", "0.6", "--p", "0.9", "--trials", "200", "--verify",
     "--csv", "{d}/om.csv", "--json", "{d}/om.json"],
]


@pytest.mark.parametrize("template", COMMANDS, ids=lambda c: c[0])
def test_rerun_is_byte_identical(template, tmp_path, gm_patch):
    g12 = tmp_path / "g12.json"
    assert run(["generate", "--family", "grandmother", "--params", "k=2,up=0,down=12", "--out", str(g12)]) == 0
    first, second = tmp_path / "a", tmp_path / "b"
    first.mkdir(), second.mkdir()
    argv = [t.format(d=first, gm=gm_patch, g12=g12) for t in template] + ["--workers", "1"]
    assert run(argv) == 0
    man = json.loads((first / sorted(p.name for p in first.glob("*.manifest.json"))[0]).read_text())
    assert run(["rerun", str(first / f"{man['outputs'][0].split('/')[-1]}.manifest.json"),
                "--out-dir", str(second), "--workers", "3"]) == 0
    for path in man["outputs"]:
        name = path.split("/")[-1]
        assert (first / name).read_bytes() == (second / name).read_bytes()
