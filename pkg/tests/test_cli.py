import csv
import json

import pytest

from tilerepair.cli import main, parse_args
from tilerepair.level import read_level
from tilerepair.reach import is_solvable

SEALED = "{--\n--X\n-X}"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "cfg.toml"
    cfg.write_text('seed = 2\nrows = 8\ncols = 8\n\n[gen]\nn = 6\nout = "%s"\n\n[train]\nepochs = 2\n'
                   'hidden = [16, 8]\n' % (d / "data.jsonl"))
    assert main(["gen", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(d / "data.jsonl"),
                 "--out", str(d / "model.json"), "--log", str(d / "log.csv")]) == 0
    (d / "sealed.txt").write_text(SEALED)
    return d


def test_config_precedence(workdir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5, "gen": {"n": 3}}))
    a = parse_args(["gen", "--config", str(cfg), "--n", "9"])
    assert (a.seed, a.n) == (5, 9)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(SystemExit):
        parse_args(["gen", "--config", str(bad)])


def test_gen_and_train_outputs(workdir):
    lines = (workdir / "data.jsonl").read_text().splitlines()
    assert len(lines) == 12
    log = list(csv.reader(open(workdir / "log.csv")))
    assert len(log) == 3


def test_attr_weights_repair(workdir, cave):
    d = workdir
    model = ["--model", str(d / "model.json")]
    # the model is 8x8; the level to repair must match
    lv = json.loads((d / "data.jsonl").read_text().splitlines()[-1])
    assert not lv["solvable"]
    (d / "lv.txt").write_text(lv["text"])
    assert main(["attr", "--level", str(d / "lv.txt"), "--out", str(d / "a.csv"), "--steps", "16"] + model) == 0
    assert (d / "a.svg").exists()
    assert main(["weights", "--attr", str(d / "a.csv"), "--out", str(d / "w.csv")]) == 0
    assert (d / "w.svg").exists()
    rc = main(["repair", "--level", str(d / "lv.txt"), "--out", str(d / "fixed.txt"),
               "--solver-log", str(d / "log.csv"), "--time-limit", "30"] + model)
    assert rc == 0
    assert is_solvable(read_level(d / "fixed.txt"), cave)
    assert (d / "fixed.svg").exists()
    head = open(d / "log.csv").readline().strip()
    assert head == "config_id,status,objective,nodes,wall_time_s"


def test_repair_uni_prints_outcome_header(workdir, capsys):
    assert main(["repair", "--level", str(workdir / "sealed.txt"), "--method", "UNI", "--no-plot"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "level_id,method,status,wall_time_s,attribution_time_s,changes,objective,winning_config"
    assert out[1].split(",")[2] == "Optimal"


def test_bench_summarize_plot(workdir, capsys):
    d = workdir
    assert main(["bench", "--n", "2", "--methods", "UNI", "--rows", "8", "--cols", "8",
                 "--time-limit", "30", "--out", str(d / "o.csv")]) == 0
    assert (d / "o.svg").exists() and (d / "o.series.csv").exists()
    assert len(list(csv.DictReader(open(d / "o.csv")))) == 2
    assert main(["summarize", "--csv", str(d / "o.csv"), "--out", str(d / "t.csv")]) == 0
    assert (d / "t.svg").exists()
    capsys.readouterr()
    assert main(["plot", "--csv", str(d / "o.csv"), "--out", str(d / "c.svg"), "--total", "2"]) == 0
    assert capsys.readouterr().out.startswith("method,time_s,repaired")
    assert (d / "c.svg").read_text().lstrip().startswith("<?xml")


@pytest.mark.parametrize("fmt", ["lp", "wcnf", "json"])
def test_export(workdir, fmt):
    out = workdir / f"p.{fmt}"
    assert main(["export", "--level", str(workdir / "sealed.txt"), "--method", "UNI", "--out", str(out)]) == 0
    text = out.read_text()
    if fmt == "lp":
        assert text.startswith("Minimize") and text.rstrip().endswith("End")
    elif fmt == "wcnf":
        assert any(line.startswith("p wcnf") for line in text.splitlines())
    else:
        json.loads(text)
