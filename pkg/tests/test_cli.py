import csv
import json
import xml.etree.ElementTree as ET

import pytest

from elbox.cli import cmd_eval_equiv, cmd_gen_synthetic, main
from elbox.ontology import parse_axiom_file
from elbox.trainer import read_checkpoint

SMALL = ["--dim", "3", "--epochs", "5", "--batch-size", "4", "--seed", "1"]


@pytest.fixture
def ppi(tmp_path):
    assert main(["gen-ppi", "--proteins", "20", "--seed", "1", "--out", str(tmp_path / "ppi")]) == 0
    return tmp_path / "ppi"


def test_train_writes_checkpoint_history_manifest(tmp_path, ppi):
    out = tmp_path / "run"
    assert main(["train", str(ppi / "train.txt"), "--valid", str(ppi / "valid.txt"), "--out", str(out), "--margin", "-0.05", "--lr", "5e-3", *SMALL]) == 0
    params, config = read_checkpoint(out / "checkpoint.txt")
    assert config["dim"] == 3 and config["margin"] == -0.05
    assert len((out / "history.tsv").read_text().splitlines()) == 6
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["seed"] == 1
    assert set(manifest["inputs"]) == {str(ppi / "train.txt"), str(ppi / "valid.txt")}
    assert all(len(d) == 64 for d in manifest["inputs"].values())
    assert manifest["started"] <= manifest["finished"]
    assert str(out / "checkpoint.txt") in manifest["outputs"]


def test_train_epochs_zero(tmp_path, ppi):
    assert main(["train", str(ppi / "train.txt"), "--out", str(tmp_path / "z"), "--dim", "2", "--epochs", "0"]) == 0
    assert (tmp_path / "z" / "history.tsv").read_text().splitlines() == ["epoch\tloss\ttotal\tvalid_mean_rank"]


def test_out_dir_from_environment(tmp_path, ppi, monkeypatch):
    monkeypatch.setenv("ELBOX_OUT", str(tmp_path / "envout"))
    assert main(["train", str(ppi / "train.txt"), *SMALL]) == 0
    assert (tmp_path / "envout" / "checkpoint.txt").exists()


def test_eval_ppi(tmp_path, ppi, capsys):
    run = tmp_path / "run"
    main(["train", str(ppi / "train.txt"), "--out", str(run), *SMALL])
    capsys.readouterr()
    rc = main(["eval-ppi", str(run / "checkpoint.txt"), str(ppi / "test.txt"), "--filter", str(ppi / "train.txt"), "--filter", str(ppi / "valid.txt"), "--relation", "interacts", "--out", str(run)])
    assert rc == 0
    header = (run / "ppi_report.tsv").read_text().splitlines()[0].split("\t")
    assert header == ["H@10(R)", "H@10(F)", "H@100(R)", "H@100(F)", "MR(R)", "MR(F)", "AUC(R)", "AUC(F)"]
    assert capsys.readouterr().out.startswith("H@10(R)")
    rows = list(csv.reader((run / "ppi_metrics.tsv").open(), delimiter="\t"))
    assert rows[0] == ["task", "metric", "variant", "value"] and len(rows) == 9
    n_test = len(parse_axiom_file(ppi / "test.txt").axioms)
    assert len((run / "ppi_ranks.tsv").read_text().splitlines()) == n_test + 1


def test_exit_codes(tmp_path, ppi, capsys):
    run = tmp_path / "run"
    main(["train", str(ppi / "train.txt"), "--out", str(run), *SMALL])
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    assert main(["eval-ppi", str(run / "checkpoint.txt"), str(empty), "--out", str(run)]) == 2
    unknown = tmp_path / "unknown.txt"
    unknown.write_text("nf3 {P000} interacts Nobody\n")
    assert main(["eval-ppi", str(run / "checkpoint.txt"), str(unknown), "--out", str(run)]) == 4
    bad = tmp_path / "bad.txt"
    bad.write_text("nf1 A\n")
    assert main(["train", str(bad), "--out", str(tmp_path / "b")]) == 2
    assert main(["train", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "m")]) == 2
    assert main(["train", str(ppi / "train.txt"), "--dim", "0", "--out", str(tmp_path / "d")]) == 2
    assert main(["eval-ppi", str(tmp_path / "nock.txt"), str(ppi / "test.txt"), "--out", str(run)]) == 2
    err = capsys.readouterr().err
    assert "expects 2 fields" in err and "unknown concept" in err


def test_numeric_failure_exit_code(tmp_path):
    axioms = tmp_path / "a.txt"
    axioms.write_text("nf1 A B\n")
    out = tmp_path / "nan"
    assert main(["train", str(axioms), "--out", str(out), "--init-scale", "1e200", "--epochs", "5", "--dim", "2"]) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"].startswith("failed")


def test_gen_synthetic_and_eval_equiv(tmp_path):
    assert main(["gen-base", "--concepts", "80", "--nf2", "20", "--out", str(tmp_path)]) == 0
    train, held = cmd_gen_synthetic(tmp_path / "base.txt", n_triples=10, n_heldout=4, seed=2, out_dir=tmp_path / "syn")
    assert len(held.read_text().splitlines()) == 4
    assert all(line.startswith("nf2 ") for line in held.read_text().splitlines())
    again = cmd_gen_synthetic(tmp_path / "base.txt", n_triples=10, n_heldout=4, seed=2, out_dir=tmp_path / "syn2")
    assert again[0].read_text() == train.read_text() and again[1].read_text() == held.read_text()
    _, none = cmd_gen_synthetic(tmp_path / "base.txt", n_triples=3, n_heldout=0, out_dir=tmp_path / "syn3")
    assert none.read_text() == ""

    assert main(["train", str(train), "--out", str(tmp_path / "run"), *SMALL]) == 0
    assert main(["eval-equiv", str(tmp_path / "run" / "checkpoint.txt"), str(held), "--out", str(tmp_path / "run")]) == 0
    header = (tmp_path / "run" / "equiv_report.tsv").read_text().splitlines()[0].split("\t")
    assert header == ["H@1", "H@3", "H@10", "MR"]
    assert main(["eval-equiv", str(tmp_path / "run" / "checkpoint.txt"), str(none), "--out", str(tmp_path / "run")]) == 2


def test_eval_equiv_single_candidate(tmp_path):
    main(["gen-base", "--concepts", "40", "--nf2", "5", "--out", str(tmp_path)])
    _, held = cmd_gen_synthetic(tmp_path / "base.txt", n_triples=3, n_heldout=1, out_dir=tmp_path)
    main(["train", str(tmp_path / "train.txt"), "--out", str(tmp_path), *SMALL])
    e = held.read_text().split()[-1]
    (tmp_path / "cands.txt").write_text(e + "\n")
    report = cmd_eval_equiv(tmp_path / "checkpoint.txt", held, tmp_path, candidates=tmp_path / "cands.txt")
    assert report.hits_at[1] == 1.0


def test_family_demo_outputs(tmp_path, capsys):
    out = tmp_path / "fam"
    assert main(["family-demo", "--out", str(out), "--epochs", "50"]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"family.txt", "checkpoint.txt", "history.tsv", "boxes.csv", "family.svg", "verdicts.txt", "manifest.json"} <= names
    root = ET.fromstring((out / "family.svg").read_text())
    assert len([r for r in root.iter() if r.get("class") == "box"]) == 7
    rows = list(csv.reader((out / "boxes.csv").open()))
    assert rows[0] == ["concept", "center_0", "center_1", "offset_0", "offset_1"] and len(rows) == 8
    printed = capsys.readouterr().out
    assert "Father ⊆ Male:" in printed and "Female ∩ Male = ∅:" in printed
    assert len(printed.splitlines()) == 14


def test_threads_flag(tmp_path, ppi):
    assert main(["train", str(ppi / "train.txt"), "--threads", "3", "--out", str(tmp_path / "t"), *SMALL]) == 0
