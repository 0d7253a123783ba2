import json
import subprocess
import sys

import numpy as np
import pytest

from quatkg.checkpoint import load_checkpoint, read_text_export
from quatkg.cli import EXIT_IO, EXIT_USAGE, default_schedule, main
from quatkg.data import load_dataset
from quatkg.synthetic import random_kg
from quatkg.data import save_dataset


@pytest.fixture(scope="module")
def kg_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("kg")
    save_dataset(random_kg(30, 3, 90, 15, 15, seed=0), d)
    return d


@pytest.fixture(scope="module")
def trained(kg_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--data", str(kg_dir), "--variant", "quatre", "--dim", "4", "--lr", "0.1",
                 "--neg", "5", "--lambda", "0.1", "--epochs", "4", "--eval-every", "2", "--seed", "7",
                 "--out", str(out)])
    assert code == 0
    return out


def test_train_writes_artifacts(trained):
    for name in ("checkpoint.bin", "train_log.jsonl", "manifest.json", "entities.tsv", "relations.tsv"):
        assert (trained / name).is_file()
    m = json.loads((trained / "manifest.json").read_text())
    assert m["variant"] == "quatre" and m["seed"] == 7
    assert m["n_params"] == 30 * 16 + 3 * 3 * 16
    assert m["config"]["epochs"] == 4 and m["metrics"]["best_epoch"] in (2, 4)


def test_missing_data_is_usage_error(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "--data" in capsys.readouterr().err


def test_bad_flag_value_is_usage_error(kg_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", str(kg_dir), "--variant", "transe"])
    assert exc.value.code == 2
    assert main(["train", "--data", str(kg_dir), "--lr", "-1", "--out", str(tmp_path)]) == EXIT_USAGE


def test_quate_manifest_param_count(kg_dir, tmp_path):
    assert main(["train", "--data", str(kg_dir), "--variant", "quate", "--dim", "4", "--epochs", "1",
                 "--seed", "7", "--out", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["variant"] == "quate"
    assert m["n_params"] == 30 * 16 + 3 * 16


def test_missing_dataset_is_io_error(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope"), "--epochs", "1", "--out", str(tmp_path)]) == EXIT_IO


def test_from_manifest_reproduces(trained, tmp_path):
    assert main(["train", "--from-manifest", str(trained / "manifest.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "checkpoint.bin").read_bytes() == (trained / "checkpoint.bin").read_bytes()
    a = json.loads((tmp_path / "manifest.json").read_text())
    b = json.loads((trained / "manifest.json").read_text())
    assert a["config"] == b["config"] and a["metrics"] == b["metrics"]


def test_eval_twice_identical(trained, kg_dir, tmp_path):
    args = ["eval", "--data", str(kg_dir), "--run", str(trained), "--split", "test"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "eval_test.json").read_text()
    assert a == (tmp_path / "b" / "eval_test.json").read_text()
    doc = json.loads(a)
    assert doc["split"] == "test" and doc["variant"] == "quatre"
    assert set(doc["per_category"]) == {"1-1", "1-M", "M-1", "M-M", "undefined"}


def test_eval_valid_vs_test(trained, kg_dir, tmp_path):
    for split in ("valid", "test"):
        assert main(["eval", "--data", str(kg_dir), "--run", str(trained), "--split", split,
                     "--out", str(tmp_path)]) == 0
    v = json.loads((tmp_path / "eval_valid.json").read_text())
    t = json.loads((tmp_path / "eval_test.json").read_text())
    assert v["split"] == "valid" and t["split"] == "test"
    assert v["overall"] != t["overall"]
    assert "split: valid" in (tmp_path / "eval_valid.txt").read_text()


def test_eval_checkpoint_mismatch(trained, tmp_path, capsys):
    other = tmp_path / "other"
    save_dataset(random_kg(12, 2, 20, 3, 3, seed=1), other)
    assert main(["eval", "--data", str(other), "--run", str(trained), "--out", str(tmp_path)]) == EXIT_IO
    assert "|E|=30" in capsys.readouterr().err


def test_eval_missing_checkpoint(kg_dir, tmp_path):
    assert main(["eval", "--data", str(kg_dir), "--checkpoint", str(tmp_path / "x.bin"),
                 "--out", str(tmp_path)]) == EXIT_IO
    assert main(["eval", "--data", str(kg_dir), "--out", str(tmp_path)]) == EXIT_USAGE


def test_fresh_model_near_random_baseline(tmp_path):
    data = tmp_path / "kg"
    save_dataset(random_kg(50, 3, 150, 0, 150, seed=3), data)
    run = tmp_path / "run"
    assert main(["train", "--data", str(data), "--dim", "8", "--epochs", "0", "--out", str(run)]) == 0
    assert main(["eval", "--data", str(data), "--run", str(run), "--out", str(tmp_path)]) == 0
    mrr = json.loads((tmp_path / "eval_test.json").read_text())["overall"]["MRR"]
    # expected reciprocal rank when the target lands uniformly among k + 1 slots
    ds = load_dataset(data)
    rng = np.random.default_rng(0)
    sims = []
    for h, r, t in ds.test.tolist():
        for k in (50 - len(ds.known_tails(h, r)), 50 - len(ds.known_heads(r, t))):
            sims.append(np.mean(1.0 / (1 + rng.integers(0, k + 1, size=200))))
    assert abs(mrr - np.mean(sims)) < 0.04


def test_analyze_json_and_table_agree(trained, kg_dir, tmp_path):
    assert main(["analyze", "--data", str(kg_dir), "--run", str(trained), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "analysis.json").read_text())
    lines = (tmp_path / "analysis.txt").read_text().splitlines()
    for row in doc["relations"]:
        line = next(l for l in lines if l.split() and l.split()[0] == row["relation"])
        fields = line.split()
        assert int(fields[1]) == row["count"]
        assert float(fields[2]) == pytest.approx(row["eta_h"], abs=5e-4)
        assert float(fields[3]) == pytest.approx(row["eta_t"], abs=5e-4)
        assert fields[4] == row["category"]
        assert float(fields[5]) == pytest.approx(row["MRR"], abs=5e-4)
    assert "per_category" in doc


def test_analyze_hand_counts(tmp_path):
    from conftest import write_split_files
    d = write_split_files(tmp_path / "d", [("a", "r", "x"), ("b", "r", "x")], [], [("a", "r", "x")])
    assert main(["analyze", "--data", str(d), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "analysis.json").read_text())
    assert doc["relations"] == [{"relation": "r", "count": 2, "eta_h": 2.0, "eta_t": 1.0, "category": "M-1",
                                 "MRR": None}]
    table = (tmp_path / "analysis.txt").read_text().strip().splitlines()
    assert len(table) == 2


def test_export(tmp_path):
    data = tmp_path / "kg"
    save_dataset(random_kg(10, 2, 20, 2, 2, seed=0), data)
    run = tmp_path / "run"
    assert main(["train", "--data", str(data), "--dim", "2", "--epochs", "1", "--out", str(run)]) == 0
    assert main(["export", "--run", str(run), "--out", str(tmp_path / "e")]) == 0
    lines = (tmp_path / "e" / "embeddings.txt").read_text().splitlines()
    assert len(lines) == 10
    assert all(len(l.split("\t")) == 9 for l in lines)
    params = load_checkpoint(run / "checkpoint.bin")
    labels, arr = read_text_export(tmp_path / "e" / "embeddings.txt")["entity"]
    assert labels == load_dataset(data).entity_labels
    assert np.array_equal(arr, params.entity)

    assert main(["export", "--run", str(run), "--relations", "--out", str(tmp_path / "r")]) == 0
    sections = read_text_export(tmp_path / "r" / "embeddings.txt")
    assert list(sections) == ["entity", "relation", "rot1", "rot2"]
    assert np.array_equal(sections["rot2"][1], params.rot2)


def test_grid_small(kg_dir, tmp_path):
    assert main(["grid", "--data", str(kg_dir), "--lrs", "0.05,0.1", "--negs", "1", "--dims", "2",
                 "--lambdas", "0.1", "--epochs", "2", "--eval-every", "1", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "grid_summary.json").read_text())
    assert len(summary["cells"]) == 2
    for cell in summary["cells"]:
        assert json.loads((tmp_path / cell["dir"].split("/")[-1] / "manifest.json").read_text())["config"]["dim"] == 2
    assert summary["best"]["valid_hits10"] == max(c["valid_hits10"] for c in summary["cells"])


def test_synth(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--kind", "random", "--entities", "20", "--train", "30",
                 "--valid", "5", "--test", "5"]) == 0
    ds = load_dataset(tmp_path)
    assert len(ds.train) == 30 and len(ds.valid) == 5


def test_default_schedule():
    assert default_schedule("data/FB15k-237") == (2000, 200)
    assert default_schedule("data/WN18RR") == (8000, 400)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "quatkg", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "train" in res.stdout
