"""Synthetic check-worthiness corpora for desk-scale experiments.

Generation, per sentence, from ``random.Random(seed)``:

1. label is 1 with probability ``positive_rate``;
2. a topic is drawn uniformly (independent of the label) and 6-14 words
   are sampled from that topic's vocabulary mixed with filler words;
3. with probability ``p_entity_pos`` (label 1) or ``p_entity_neg``
   (label 0) one or two numeric / entity phrases are inserted at random
   word positions;
4. the sentence is capitalized and ends with a period.

Entity phrases are built from the bundled gazetteer and the numeric
patterns the recognizer knows, so ``ner_tokens`` preprocessing sees them.
"""
from __future__ import annotations

import random

from soupkit.data import Dataset, LabeledSentence

FILLER = ("the we they that it is are was will have not going to of and in for with on this what "
          "people think know believe really about just very would should could").split()

TOPICS = {
    "economy": "jobs tax taxes economy budget deficit spending wages business businesses trade growth debt".split(),
    "health": "health care insurance hospitals doctors medicine coverage patients plan costs".split(),
    "security": "military troops war terrorism security border defense weapons allies threat".split(),
    "education": "schools teachers students college education tuition kids classrooms loans".split(),
    "energy": "energy oil gas coal climate pipeline power jobs prices drilling".split(),
}

STATES = ["Ohio", "Texas", "Florida", "Michigan", "Iowa", "California", "Pennsylvania", "Nevada"]
COUNTRIES = ["China", "Russia", "Iran", "Mexico", "Iraq", "Canada", "Germany"]
NATIONALITIES = ["American", "Chinese", "Russian", "Mexican"]
ORGS = ["Congress", "the Senate", "NATO", "the Pentagon", "Medicare"]
PEOPLE = ["Obama", "Romney", "Reagan", "Bush"]


def _entity_phrase(rng: random.Random) -> str:
    kind = rng.randrange(8)
    if kind == 0:
        return f"{rng.randint(2, 99)} percent"
    if kind == 1:
        return f"${rng.randint(1, 900)} {rng.choice(['million', 'billion', 'trillion'])}"
    if kind == 2:
        return f"in {rng.randint(1950, 2016)}"
    if kind == 3:
        return f"{rng.randint(2, 40)} million {rng.choice(['people', 'jobs', 'families'])}"
    if kind == 4:
        return f"in {rng.choice(STATES)}"
    if kind == 5:
        return f"{rng.choice(NATIONALITIES)} {rng.choice(['workers', 'families', 'companies'])}"
    if kind == 6:
        return rng.choice(ORGS + COUNTRIES)
    return rng.choice(PEOPLE)


def _sentence(rng: random.Random, label: int, p_entity: float) -> str:
    topic = TOPICS[rng.choice(sorted(TOPICS))]
    words = [rng.choice(topic) if rng.random() < 0.5 else rng.choice(FILLER) for _ in range(rng.randint(6, 14))]
    if rng.random() < p_entity:
        for _ in range(rng.randint(1, 2)):
            words.insert(rng.randint(0, len(words)), _entity_phrase(rng))
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def generate_corpus(seed: int, n_train: int = 2000, n_dev: int = 500, n_test: int = 500,
                    positive_rate: float = 0.3, p_entity_pos: float = 0.8, p_entity_neg: float = 0.2) -> Dataset:
    rng = random.Random(seed)
    splits = {}
    for split, n in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        items = []
        for i in range(n):
            label = int(rng.random() < positive_rate)
            text = _sentence(rng, label, p_entity_pos if label else p_entity_neg)
            items.append(LabeledSentence(f"{split}-{i}", text, label))
        splits[split] = items
    return Dataset(splits)
