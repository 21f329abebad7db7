"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
every criterion with its outcome and elapsed time.
"""
import functools
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import SAMPLE_ROWS, random_checkpoint, separable_dataset
from soupkit.cli import main
from soupkit.data import Dataset, class_distribution, load_tsv, write_tsv
from soupkit.ensemble import SingleModel, bench_inference, train_stacking
from soupkit.entities import extract_entities, substitute_tokens
from soupkit.evaluation import evaluate
from soupkit.metrics import ConfusionCounts, metrics
from soupkit.soup import build_master, greedy_master, influence_scores, soup
from soupkit.synthetic import generate_corpus
from soupkit.trainer import ModelSpec, TrainConfig, encode_split, train

from test_trainer import _random_instance, max_fd_relative_error

N_TEST, N_POS = 318, 108
REFERENCE_SCORES = {
    "souping": (0.9214, 0.9278, 0.8333, 0.8780),
    "bert_a": (0.8710, 0.9351, 0.6667, 0.7784),
}


def _reconstruct(target, tol=5e-4):
    """All integer confusion matrices over 318 items / 108 positives matching ``target``."""
    found = []
    for tp in range(N_POS + 1):
        for fp in range(N_TEST - N_POS + 1):
            c = ConfusionCounts(tp, fp, N_POS - tp, N_TEST - N_POS - fp)
            m = metrics(c)
            if all(abs(a - b) <= tol for a, b in zip((m.accuracy, m.precision, m.recall, m.f1), target)):
                found.append(c)
    return found


def test_ac1_metric_arithmetic(criterion):
    with criterion("AC1 metric arithmetic reproduces reference test scores (5e-4)"):
        start = time.perf_counter()
        souping = _reconstruct(REFERENCE_SCORES["souping"])
        bert = _reconstruct(REFERENCE_SCORES["bert_a"])
        assert souping == [ConfusionCounts(90, 7, 18, 203)]
        assert bert == [ConfusionCounts(72, 5, 36, 205)]
        for c, target in ((souping[0], REFERENCE_SCORES["souping"]), (bert[0], REFERENCE_SCORES["bert_a"])):
            m = metrics(c)
            assert np.allclose((m.accuracy, m.precision, m.recall, m.f1), target, atol=5e-4, rtol=0)
        assert time.perf_counter() - start < 1.0


def test_ac2_influence_properties(criterion):
    with criterion("AC2 influence schemes: 1000 loss vectors, sum/scale/monotone (1e-9)"):
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 9))
            losses = rng.uniform(0.01, 5.0, n)
            scale = float(rng.uniform(0.01, 100.0))
            order = np.argsort(losses, kind="stable")
            for scheme in ("paper_as_written", "inverse_loss", "uniform"):
                w = np.array(influence_scores(losses, scheme))
                assert abs(math.fsum(w) - 1.0) <= 1e-9
                assert np.all(np.abs(w - influence_scores(losses * scale, scheme)) <= 1e-9)
                ws = w[order]
                ls = losses[order]
                strict = ls[1:] > ls[:-1]
                if scheme == "paper_as_written":
                    assert np.all(ws[1:][strict] > ws[:-1][strict])
                elif scheme == "inverse_loss":
                    assert np.all(ws[1:][strict] < ws[:-1][strict])
        assert time.perf_counter() - start < 1.0


def _random_shapes(rng):
    shapes = {}
    budget = 1000
    for i in range(int(rng.integers(1, 5))):
        dims = tuple(int(d) for d in rng.integers(1, 12, size=int(rng.integers(1, 4))))
        if math.prod(dims) > budget:
            break
        budget -= math.prod(dims)
        shapes[f"t{i}"] = dims
    return shapes or {"t0": (1,)}


def test_ac3_soup_algebra(criterion):
    with criterion("AC3 soup algebra: idempotence/selection/linearity/associativity on 200 checkpoints (1e-6)"):
        start = time.perf_counter()
        rng = np.random.default_rng(3)
        for _ in range(200):
            shapes = _random_shapes(rng)
            a, b, c = (random_checkpoint(rng, shapes) for _ in range(3))
            w = rng.dirichlet(np.ones(3)).tolist()

            same = soup([a, a, a], w)
            sel = soup([a, b, c], [0.0, 1.0, 0.0])
            direct = soup([a, b, c], w)
            inner_w = w[0] + w[1]
            inner = soup([a, b], [w[0] / inner_w, w[1] / inner_w])
            nested = soup([inner, c], [inner_w, 1.0 - inner_w])
            for k in shapes:
                ta, tb, tc = (x.tensors[k].astype(np.float64) for x in (a, b, c))
                assert np.max(np.abs(same.tensors[k] - ta)) <= 1e-6
                assert np.array_equal(sel.tensors[k], b.tensors[k])
                assert np.max(np.abs(direct.tensors[k] - (w[0] * ta + w[1] * tb + w[2] * tc))) <= 1e-6
                assert np.max(np.abs(nested.tensors[k] - direct.tensors[k])) <= 1e-6
        assert time.perf_counter() - start < 5.0


EXPERIMENT_SPEC = ModelSpec("text_linear", feature_dim=2**14)
EXPERIMENT_CFG = dict(learning_rate=0.01, epochs=5, batch_size=24)


@functools.lru_cache(maxsize=None)
def souping_experiment():
    """20 corpora, 3 seeds each; inverse-loss master and greedy soup per corpus."""
    start = time.perf_counter()
    rows = []
    for corpus_seed in range(20):
        ds = generate_corpus(corpus_seed, n_train=2000, n_dev=500, n_test=500)
        dev = encode_split(ds["dev"], EXPERIMENT_SPEC)
        test = encode_split(ds["test"], EXPERIMENT_SPEC)
        members = [train(ds, EXPERIMENT_SPEC, TrainConfig(seed=s, **EXPERIMENT_CFG)) for s in (1, 2, 3)]
        master, _ = build_master(members, ds, EXPERIMENT_SPEC, "inverse_loss")
        _, greedy = greedy_master(members, ds, EXPERIMENT_SPEC)
        rows.append({
            "member_test_f1": [metrics(evaluate(m, test, EXPERIMENT_SPEC)).f1 for m in members],
            "member_dev_f1": [metrics(evaluate(m, dev, EXPERIMENT_SPEC)).f1 for m in members],
            "soup_test_f1": metrics(evaluate(master, test, EXPERIMENT_SPEC)).f1,
            "greedy_dev_f1": greedy.dev_f1,
        })
    return rows, time.perf_counter() - start


def test_ac4_soup_vs_worst_member(criterion):
    with criterion("AC4 inverse-loss soup test F1 >= worst member - 0.01 in >= 18/20 corpora"):
        rows, elapsed = souping_experiment()
        wins = sum(r["soup_test_f1"] >= min(r["member_test_f1"]) - 0.01 for r in rows)
        print(f"\nAC4: {wins}/20 corpora; experiment took {elapsed:.1f}s")
        for i, r in enumerate(rows):
            print(f"  corpus {i:2d}: members {[round(f, 4) for f in r['member_test_f1']]}  soup {r['soup_test_f1']:.4f}")
        assert wins >= 18
        assert elapsed < 120.0


def test_ac5_greedy_dominance(criterion):
    with criterion("AC5 greedy soup dev F1 >= best member dev F1 in 20/20 corpora"):
        rows, _ = souping_experiment()
        assert all(r["greedy_dev_f1"] >= max(r["member_dev_f1"]) for r in rows)


def test_ac6_gradient_checks(criterion):
    with criterion("AC6 analytic vs finite-difference gradients, 50 instances, rel err < 1e-4"):
        start = time.perf_counter()
        rng = np.random.default_rng(6)
        kinds = ["ner_logreg", "text_linear", "text_mlp"]
        worst = 0.0
        for i in range(50):
            spec, params, batch = _random_instance(kinds[i % 3], rng)
            worst = max(worst, max_fd_relative_error(spec, params, batch))
        print(f"\nAC6: worst relative error {worst:.2e}")
        assert worst < 1e-4
        assert time.perf_counter() - start < 10.0


def test_ac7_inference_cost(criterion):
    with criterion("AC7 1000-item bench: stack 4000 forwards, soup 1000, ratio 4.0"):
        start = time.perf_counter()
        ds = separable_dataset(n_train=60, n_dev=30, seed=7)
        spec = ModelSpec("text_linear", feature_dim=512)
        members = [train(ds, spec, TrainConfig(learning_rate=0.05, batch_size=4, seed=s)) for s in (1, 2, 3)]
        master, _ = build_master(members, ds, spec, "inverse_loss")
        stack = train_stacking(members, ds, spec, TrainConfig(learning_rate=0.01))
        pool = ds["train"] + ds["dev"] + ds["test"]
        items = [pool[i % len(pool)] for i in range(1000)]
        report = bench_inference([stack, SingleModel(master, "soup")], items, spec)
        assert report["stacking"].forwards == 4000
        assert report["soup"].forwards == 1000
        assert report["stacking"].forwards / report["soup"].forwards == 4.0
        assert time.perf_counter() - start < 5.0


def test_ac8_ner_fixtures(criterion, gaz):
    with criterion("AC8 NER fixtures: quoted sentences and no-entity instances"):
        start = time.perf_counter()
        row1, row2, row3, row4 = (t for _, t, _ in SAMPLE_ROWS)

        def spans(text):
            return [(m.surface, m.parent.name) for m in extract_entities(text, gaz)]

        assert spans(row1) == [("98 percent", "NUM"), ("American", "GPE"), ("97 percent", "NUM")]
        assert spans("child support enforcement's up 50 percent.") == [("50 percent", "NUM")]
        assert spans(row2) == [("50 percent", "NUM")]
        assert substitute_tokens(row2, extract_entities(row2, gaz)) == (
            "I said we'd get tougher with child support and child support enforcement's up <NUM>.")
        assert substitute_tokens(row1, extract_entities(row1, gaz)) == (
            "And that means <NUM> of <GPE> families, <NUM> of small businesses, they will not see a tax increase.")
        assert spans(row3) == [] and spans(row4) == []
        assert time.perf_counter() - start < 1.0


def test_ac9_determinism(criterion, tmp_path, capsys):
    with criterion("AC9 train twice is byte-identical; soup invariant to worker count"):
        start = time.perf_counter()
        ds = generate_corpus(9, n_train=400, n_dev=100, n_test=100)
        for split in ("train", "dev"):
            write_tsv(tmp_path / f"{split}.tsv", ds[split])
        common = ["--train", str(tmp_path / "train.tsv"), "--dev", str(tmp_path / "dev.tsv"),
                  "--feature-dim", "4096", "--lr", "0.01"]
        for run in ("a", "b"):
            assert main(["train-many", *common, "--seeds", "1,2,3", "--out", str(tmp_path / run)]) == 0
        for seed in (1, 2, 3):
            name = f"model-seed{seed}.ckpt"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

        ckpts = [str(tmp_path / "a" / f"model-seed{s}.ckpt") for s in (1, 2, 3)]
        for workers in (1, 4):
            assert main(["soup", *ckpts, "--dev", str(tmp_path / "dev.tsv"), "--workers", str(workers),
                         "--out", str(tmp_path / f"soup{workers}")]) == 0
        assert (tmp_path / "soup1" / "master.ckpt").read_bytes() == (tmp_path / "soup4" / "master.ckpt").read_bytes()
        capsys.readouterr()
        assert time.perf_counter() - start < 30.0


OFFICIAL_COUNTS = {
    "train": (16876, 4058, 12818),
    "dev": (5625, 1355, 4270),
    "dev_test": (1032, 238, 794),
    "test": (318, 108, 210),
}


def _official_files(root: Path) -> dict:
    files = sorted(root.glob("*.tsv"))
    found = {}
    for f in files:
        stem = f.stem.lower()
        if "dev_test" in stem or "devtest" in stem:
            found["dev_test"] = f
        elif "train" in stem:
            found["train"] = f
        elif stem.endswith("dev") or "_dev" in stem:
            found["dev"] = f
        elif "test" in stem:
            found["test"] = f
    return found


def test_ac10_official_class_distribution(criterion):
    with criterion("AC10 official class distribution (conditional on local data)"):
        root = os.environ.get("SOUPKIT_CHECKTHAT_DIR")
        if not root or not Path(root).is_dir():
            pytest.skip("official data not present; set SOUPKIT_CHECKTHAT_DIR to run")
        files = _official_files(Path(root))
        if set(files) != set(OFFICIAL_COUNTS):
            pytest.skip(f"incomplete official data in {root}: found {sorted(files)}")
        dist = class_distribution(Dataset({name: load_tsv(path, name) for name, path in files.items()}))
        for name, expected in OFFICIAL_COUNTS.items():
            assert tuple(dist[name]) == expected
