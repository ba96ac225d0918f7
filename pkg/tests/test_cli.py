import json

import pytest

from milab.cli import main
from test_runner import micro_config


def write_config(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return str(path)


def test_gen_data_writes_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "data"
    rc = main(["gen-data", "--classes", "3", "--dim", "2", "--per-class", "10",
               "--spread", "1.0", "--seed", "5", "--eval-size", "10",
               "--out", str(out)])
    assert rc == 0
    assert (out / "data.csv").exists()
    assert (out / "split.json").exists()
    header = (out / "data.csv").read_text().splitlines()[0]
    assert header == "f0,f1,label"


def test_attack_end_to_end_and_report_roundtrip(tmp_path, capsys):
    cfg = micro_config(output_dir=str(tmp_path / "out"))
    cfg_path = write_config(tmp_path, cfg)
    rc = main(["attack", "--config", cfg_path])
    assert rc == 0
    text = capsys.readouterr().out
    assert "a_R=" in text and "advantage=" in text
    rc = main(["report", "--report", str(tmp_path / "out" / "report.json")])
    assert rc == 0
    assert "self-consistency: ok" in capsys.readouterr().out


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = micro_config()
    d = cfg.to_dict()
    d["defense"] = "mmd"  # weight stays zero -> inconsistent
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    rc = main(["attack", "--config", str(path)])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_seed_override_changes_report(tmp_path):
    cfg = micro_config(output_dir=str(tmp_path / "a"))
    cfg_path = write_config(tmp_path, cfg)
    assert main(["attack", "--config", cfg_path, "--seed", "11",
                 "--out", str(tmp_path / "a")]) == 0
    assert main(["attack", "--config", cfg_path, "--seed", "12",
                 "--out", str(tmp_path / "b")]) == 0
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    assert ra["seed"] != rb["seed"]


def test_train_subcommand_writes_checkpoint(tmp_path):
    cfg = micro_config()
    cfg_path = write_config(tmp_path, cfg)
    rc = main(["train", "--config", cfg_path, "--out", str(tmp_path / "t")])
    assert rc == 0
    assert (tmp_path / "t" / "target.json").exists()
    assert (tmp_path / "t" / "history.csv").exists()


def test_defend_compare_and_size_sweep(tmp_path, capsys):
    cfg = micro_config()
    cfg_path = write_config(tmp_path, cfg)
    rc = main(["defend-compare", "--config", cfg_path, "--defenses", "none,mmd",
               "--sweep", "0.5", "--out", str(tmp_path / "cmp")])
    assert rc == 0
    assert (tmp_path / "cmp" / "tradeoff_train_vs_test.csv").exists()
    rc = main(["size-sweep", "--config", cfg_path, "--sizes", "60,80",
               "--out", str(tmp_path / "sw")])
    assert rc == 0
    assert "size=60" in capsys.readouterr().out
