import json

import pytest

from conftest import SAMPLE_ROWS, separable_dataset
from soupkit.checkpoint import read_checkpoint
from soupkit.cli import main
from soupkit.data import write_tsv

FAST = ["--feature-dim", "256", "--lr", "0.05", "--batch-size", "4", "--epochs", "3"]


@pytest.fixture
def corpus(tmp_path):
    ds = separable_dataset(n_train=40, n_dev=20, seed=2)
    paths = {}
    for split in ("train", "dev", "test"):
        paths[split] = tmp_path / f"{split}.tsv"
        write_tsv(paths[split], ds[split])
    return paths


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def train_many(capsys, corpus, out, seeds="1,2,3"):
    code, doc = run(capsys, "train-many", "--train", corpus["train"], "--dev", corpus["dev"], "--seeds", seeds,
                    "--out", out, *FAST)
    assert code == 0
    return [m["checkpoint"] for m in doc["models"]]


class TestTrain:
    def test_writes_checkpoint_and_log(self, capsys, corpus, tmp_path):
        code, doc = run(capsys, "train", "--train", corpus["train"], "--dev", corpus["dev"], "--seed", 4,
                        "--out", tmp_path / "o", *FAST)
        assert code == 0
        ckpt = read_checkpoint(doc["checkpoint"])
        assert ckpt.meta.seed == 4
        lines = (tmp_path / "o" / "model-seed4.log.jsonl").read_text().splitlines()
        assert len(lines) == 3
        assert set(json.loads(lines[0])) == {"epoch", "train_loss", "dev_loss", "dev_f1"}

    def test_missing_file_is_data_error(self, capsys, corpus, tmp_path):
        code, _ = run(capsys, "train", "--train", tmp_path / "nope.tsv", "--dev", corpus["dev"], "--out", tmp_path)
        assert code == 2

    def test_bad_label_is_data_error(self, capsys, corpus, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("Sentence_id\tText\tclass_label\n1\thello\tmaybe\n")
        code, _ = run(capsys, "train", "--train", bad, "--dev", corpus["dev"], "--out", tmp_path)
        assert code == 2

    def test_unknown_flag_is_config_error(self, capsys):
        assert main(["train", "--bogus"]) == 1

    def test_preprocess_recorded(self, capsys, corpus, tmp_path):
        code, doc = run(capsys, "train", "--train", corpus["train"], "--dev", corpus["dev"], "--out", tmp_path,
                        "--preprocess", "ner-tokens", *FAST)
        assert code == 0
        assert read_checkpoint(doc["checkpoint"]).meta.extra["preprocess"] == "ner_tokens"

    def test_config_file_with_flag_override(self, capsys, corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"train": "train.tsv", "dev": "dev.tsv", "feature_dim": 128, "epochs": 2,
                                   "learning_rate": 0.05, "out": "from-config"}))
        code, doc = run(capsys, "train", "--config", cfg, "--epochs", 1)
        assert code == 0
        assert doc["checkpoint"].startswith(str(tmp_path / "from-config"))
        ckpt = read_checkpoint(doc["checkpoint"])
        assert ckpt.tensors["linear.weight"].shape == (128,)
        log = doc["log"]
        assert len(open(log).read().splitlines()) == 1


class TestTrainMany:
    def test_three_seeds_same_signature(self, capsys, corpus, tmp_path):
        paths = train_many(capsys, corpus, tmp_path)
        ckpts = [read_checkpoint(p) for p in paths]
        assert len({c.signature for c in ckpts}) == 1
        assert [c.meta.seed for c in ckpts] == [1, 2, 3]

    @pytest.mark.parametrize("seeds", ["1,1,2", "5"])
    def test_bad_seed_lists(self, capsys, corpus, tmp_path, seeds):
        code, _ = run(capsys, "train-many", "--train", corpus["train"], "--dev", corpus["dev"], "--seeds", seeds,
                      "--out", tmp_path)
        assert code == 1


class TestSoup:
    def test_inverse_loss(self, capsys, corpus, tmp_path):
        paths = train_many(capsys, corpus, tmp_path / "m")
        code, doc = run(capsys, "soup", *paths, "--dev", corpus["dev"], "--scheme", "inverse-loss", "--out", tmp_path / "s")
        assert code == 0
        assert len(doc["weights"]) == 3
        assert sum(doc["weights"]) == pytest.approx(1.0, abs=1e-9)
        losses = [m["dev_loss"] for m in doc["members"]]
        inv = [1 / x for x in losses]
        assert doc["weights"] == pytest.approx([x / sum(inv) for x in inv], abs=1e-12)
        assert (tmp_path / "s" / "master.ckpt").exists()
        assert json.loads((tmp_path / "s" / "recipe.json").read_text())["scheme"] == "inverse_loss"

    def test_paper_as_written(self, capsys, corpus, tmp_path):
        paths = train_many(capsys, corpus, tmp_path / "m")
        code, doc = run(capsys, "soup", *paths, "--dev", corpus["dev"], "--scheme", "paper-as-written",
                        "--out", tmp_path / "s")
        assert code == 0
        losses = [m["dev_loss"] for m in doc["members"]]
        assert doc["weights"] == pytest.approx([x / sum(losses) for x in losses], abs=1e-12)

    def test_greedy(self, capsys, corpus, tmp_path):
        paths = train_many(capsys, corpus, tmp_path / "m")
        code, doc = run(capsys, "soup", *paths, "--dev", corpus["dev"], "--scheme", "greedy", "--out", tmp_path / "s")
        assert code == 0
        assert 1 <= len(doc["members"]) <= 3

    def test_incompatible_is_exit_3(self, capsys, corpus, tmp_path):
        a = train_many(capsys, corpus, tmp_path / "a", "1,2")[0]
        code, doc = run(capsys, "train", "--train", corpus["train"], "--dev", corpus["dev"], "--out", tmp_path / "b",
                        *FAST[2:], "--feature-dim", "512")
        assert code == 0
        code, _ = run(capsys, "soup", a, doc["checkpoint"], "--dev", corpus["dev"], "--out", tmp_path / "s")
        assert code == 3

    def test_corrupt_checkpoint_is_data_error(self, capsys, corpus, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"NOPE")
        code, _ = run(capsys, "soup", bad, "--dev", corpus["dev"], "--out", tmp_path)
        assert code == 2


def test_eval(capsys, corpus, tmp_path):
    path = train_many(capsys, corpus, tmp_path, "1,2")[0]
    code, doc = run(capsys, "eval", path, corpus["test"])
    assert code == 0
    assert doc["split"] == "test"
    assert set(doc["confusion"]) == {"tp", "fp", "fn", "tn"}
    assert sum(doc["confusion"].values()) == 20
    assert 0.0 <= doc["f1"] <= 1.0


def test_stats(capsys, corpus):
    code, doc = run(capsys, "stats", "--train", corpus["train"], "--test", corpus["test"])
    assert code == 0
    assert doc["class_distribution"]["train"] == {"total": 40, "yes": 20, "no": 20}
    # Every positive has exactly one percentage; negatives have no entities.
    assert doc["entities"]["train"]["Yes"]["mean_mentions"] == 1.0
    assert doc["entities"]["train"]["No"]["mean_mentions"] == 0.0


def test_bench(capsys, corpus, tmp_path):
    paths = train_many(capsys, corpus, tmp_path)
    code, doc = run(capsys, "bench", "--members", *paths, "--dev", corpus["dev"], "--data", corpus["test"])
    assert code == 0
    counts = {s["name"]: s["forwards"] for s in doc["systems"]}
    assert counts["soup"] == 20 and counts["stacking"] == 80


def test_ner_row(capsys):
    code, doc = run(capsys, "ner", SAMPLE_ROWS[0][1])
    assert code == 0
    assert [(m["surface"], m["parent"]) for m in doc["mentions"]] == [
        ("98 percent", "NUM"), ("American", "GPE"), ("97 percent", "NUM")]
    assert doc["counts"]["NUM"] == 2
    assert "<NUM> of <GPE> families" in doc["substituted"]


def test_ner_gazetteer_env_and_flag(capsys, tmp_path, monkeypatch):
    env_dir = tmp_path / "env"
    env_dir.mkdir()
    (env_dir / "g.tsv").write_text("Springfield\tGPE\n")
    flag_dir = tmp_path / "flag"
    flag_dir.mkdir()
    (flag_dir / "g.tsv").write_text("Springfield\tORG\n")
    monkeypatch.setenv("SOUPKIT_GAZETTEERS", str(env_dir))
    _, doc = run(capsys, "ner", "in Springfield today")
    assert [m["fine_type"] for m in doc["mentions"]] == ["GPE"]
    _, doc = run(capsys, "ner", "in Springfield today", "--gazetteers", flag_dir)
    assert [m["fine_type"] for m in doc["mentions"]] == ["ORG"]
    # The bundled list is not merged in when a directory is given.
    _, doc = run(capsys, "ner", "in Ohio today")
    assert doc["mentions"] == []


def test_ner_requires_input(capsys):
    assert main(["ner"]) == 1
