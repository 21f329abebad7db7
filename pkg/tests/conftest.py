import contextlib
import time

import numpy as np
import pytest

from soupkit.checkpoint import Checkpoint, CheckpointMeta
from soupkit.data import Dataset, LabeledSentence
from soupkit.entities import GazetteerSet

SAMPLE_ROWS = [
    ("1", "And that means 98 percent of American families, 97 percent of small businesses, they will not see a tax increase.", 1),
    ("2", "I said we'd get tougher with child support and child support enforcement's up 50 percent.", 1),
    ("3", "But I'm not going to do that.", 0),
    ("4", "But the important thing is what are we going to do now?", 0),
]

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def gaz():
    return GazetteerSet.default()


@pytest.fixture
def sample_rows():
    return [LabeledSentence(i, t, y) for i, t, y in SAMPLE_ROWS]


def random_checkpoint(rng, shapes, seed=0, scale=1.0):
    tensors = {name: rng.uniform(-scale, scale, size=shape) for name, shape in shapes.items()}
    return Checkpoint.create(tensors, CheckpointMeta(seed=seed, model_spec_id="test"))


def separable_dataset(n_train=40, n_dev=20, seed=0):
    """Positives always mention a percentage, negatives never contain digits."""
    rng = np.random.default_rng(seed)
    words = "we will the people of this country believe think really going".split()

    def make(split, n):
        out = []
        for i in range(n):
            label = i % 2
            body = " ".join(rng.choice(words, size=6))
            text = f"{body} up {int(rng.integers(2, 99))} percent" if label else f"{body} again"
            out.append(LabeledSentence(f"{split}-{i}", text, label))
        return out

    return Dataset({"train": make("train", n_train), "dev": make("dev", n_dev), "test": make("test", n_dev)})


@pytest.fixture
def criterion():
    """Context manager recording one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def record(label):
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            if isinstance(exc, pytest.skip.Exception):
                _ACCEPTANCE_LINES.append(f"SKIP  {label}  ({exc})")
            else:
                _ACCEPTANCE_LINES.append(f"FAIL  {label}  ({time.perf_counter() - start:.2f}s)")
            raise
        _ACCEPTANCE_LINES.append(f"PASS  {label}  ({time.perf_counter() - start:.2f}s)")

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
