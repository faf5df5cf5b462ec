import json

import pytest

from ttcd.cli import EXIT_DOMAIN, EXIT_IO, EXIT_OK, EXIT_USAGE, main, parse_assignments, UsageError
from ttcd.data import TemporalGraph, load_csv

FAST = ["--set", "epochs=3", "--set", "max_rounds=1"]


@pytest.fixture(scope="module")
def ds1_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--dataset", "ds1", "--length", "1000", "--seed", "42", "--out-dir", str(out)]) == EXIT_OK
    return out


def test_generate(ds1_dir):
    ds = load_csv(ds1_dir / "data.csv")
    assert (ds.T, ds.n) == (1000, 4)
    assert ds.meta["max_lag"] == 5 and ds.meta["config"]["seed"] == 42
    truth = json.loads((ds1_dir / "truth.json").read_text())
    assert len(truth["edges"]) == 9 and truth["seed"] == 42


def test_generate_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("TTCD_SEED", "9")
    assert main(["generate", "--dataset", "ds2", "--length", "100", "--out-dir", str(tmp_path)]) == EXIT_OK
    assert load_csv(tmp_path / "data.csv").meta["seed"] == 9
    assert main(["generate", "--dataset", "ds2", "--length", "100", "--seed", "3", "--out-dir", str(tmp_path)]) == 0
    assert load_csv(tmp_path / "data.csv").meta["seed"] == 3


def test_discover_outputs_and_determinism(ds1_dir, tmp_path):
    args = ["discover", "--input", str(ds1_dir / "data.csv"), "--max-lag", "5", "--seed", "7",
            "--threshold", "5", *FAST]
    assert main([*args, "--out-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--out-dir", str(tmp_path / "b")]) == EXIT_OK
    names = ("graph.json", "graph.dot", "adjacency.csv", "report.json")
    for name in names:
        assert (tmp_path / "a" / name).exists()
    a, b = (tmp_path / "a" / "graph.json").read_bytes(), (tmp_path / "b" / "graph.json").read_bytes()
    assert a == b
    doc = json.loads(a)
    assert doc["seed"] == 7 and doc["config"]["epochs"] == 3 and doc["config"]["max_lag"] == 5
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["config"] == doc["config"] and "wall_clock" not in report
    assert (tmp_path / "a" / "graph.dot").read_text().startswith("// ttcd: ")
    assert (tmp_path / "a" / "adjacency.csv").read_text().startswith("# ttcd: ")


def test_discover_rerun_from_embedded_config(ds1_dir, tmp_path):
    args = ["discover", "--input", str(ds1_dir / "data.csv"), "--seed", "1", "--threshold", "5", *FAST]
    assert main([*args, "--out-dir", str(tmp_path / "a")]) == EXIT_OK
    cfg = json.loads((tmp_path / "a" / "graph.json").read_text())["config"]
    lines = [f"{k}={'none' if v is None else v}" for k, v in cfg.items()]
    (tmp_path / "run.cfg").write_text("# replay\n" + "\n".join(lines) + "\n")
    assert main(["discover", "--input", str(ds1_dir / "data.csv"), "--config", str(tmp_path / "run.cfg"),
                 "--out-dir", str(tmp_path / "b")]) == EXIT_OK
    for name in ("graph.json", "report.json", "adjacency.csv", "graph.dot"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_discover_cycle_is_domain_error(ds1_dir, tmp_path):
    # threshold 0 keeps every nonzero contemporaneous weight after one short round
    code = main(["discover", "--input", str(ds1_dir / "data.csv"), "--threshold", "0", "--seed", "0", *FAST,
                 "--out-dir", str(tmp_path)])
    assert code == EXIT_DOMAIN
    assert json.loads((tmp_path / "report.json").read_text())["error"].startswith("acyclicity violated")


@pytest.mark.parametrize("extra", [["--max-lag", "0"], ["--threshold", "-1"], ["--variant", "nope"],
                                   ["--set", "bogus=1"], ["--set", "epochs=abc"]])
def test_discover_usage_errors(ds1_dir, tmp_path, extra):
    assert main(["discover", "--input", str(ds1_dir / "data.csv"), *extra, "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_unknown_config_key(ds1_dir, tmp_path):
    (tmp_path / "c.cfg").write_text("lr=0.01\nwarp_speed=9\n")
    code = main(["discover", "--input", str(ds1_dir / "data.csv"), "--config", str(tmp_path / "c.cfg")])
    assert code == EXIT_USAGE


def test_missing_input_is_io_error(tmp_path):
    assert main(["discover", "--input", str(tmp_path / "missing.csv"), "--max-lag", "2"]) == EXIT_IO
    assert main(["evaluate", "--pred", str(tmp_path / "a.json"), "--truth", str(tmp_path / "b.json")]) == EXIT_IO


def test_bad_csv_is_domain_error(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n3,abc\n")
    assert main(["stationarity", "--input", str(tmp_path / "x.csv")]) == EXIT_DOMAIN


def test_evaluate_identity(ds1_dir, capsys):
    g = str(ds1_dir / "truth.json")
    assert main(["evaluate", "--pred", g, "--truth", g]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "shd=0 f1=1.0 fdr=0.0"


def test_stationarity_table(ds1_dir, capsys, tmp_path):
    assert main(["stationarity", "--input", str(ds1_dir / "data.csv"), "--json", str(tmp_path / "s.json")]) == 0
    out = capsys.readouterr().out
    assert "ADF p" in out and "X4" in out
    assert len(json.loads((tmp_path / "s.json").read_text())["results"]) == 8


def test_ablate_table(tmp_path, capsys):
    code = main(["ablate", "--variants", "full,no-dsb", "--dataset", "ds1", "--length", "200", "--seeds", "3",
                 *FAST, "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["variant", "SHD", "F1", "FDR"]
    assert [l.split()[0] for l in lines[1:]] == ["full", "no-dsb"]
    assert all(len(l.split()) == 4 for l in lines[1:])
    doc = json.loads((tmp_path / "ablation.json").read_text())
    assert doc["seeds"] == [0, 1, 2] and len(doc["runs"]["full"]) == 3


def test_usage_exit_code():
    assert main(["discover"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


def test_parse_assignments():
    assert parse_assignments(["# c", "lr = 0.5  # note", "", "two_stage=yes", "omega=none"], "x") == {
        "lr": 0.5, "two_stage": True, "omega": None}
    with pytest.raises(UsageError):
        parse_assignments(["lr"], "x")
