"""Preference resources (human choices, model ratings) and training-pair construction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import MalformedRecord


class Choice(str, Enum):
    First = "First"
    Second = "Second"
    Both = "Both"
    Neither = "Neither"


@dataclass
class HumanPreference:
    task_id: str
    image_id: str
    question: str
    answer_a: str
    answer_b: str
    choice: Choice
    annotator: str = ""
    timestamp: int = 0


@dataclass
class ModelRating:
    sample_id: str
    image_id: str
    question: str
    answer: str
    score: int

    def __post_init__(self):
        if not 0 <= self.score <= 10:
            raise ValueError(f"score {self.score} outside 0..10")


@dataclass
class PreferencePair:
    x_i: np.ndarray
    x_j: np.ndarray
    z: tuple[int, int]  # (1,0) or (0,1)
    weight: float = 1.0
    source: str = "model"  # "human" | "model"


def z_assign(r_i: float, r_j: float) -> tuple[int, int]:
    """(1,0) when r_i >= r_j, else (0,1). Ties go to the first argument."""
    return (1, 0) if r_i >= r_j else (0, 1)


def pairs_from_human(prefs: list[HumanPreference], featurizer) -> list[PreferencePair]:
    """One pair per First/Second annotation; Both/Neither carry no ordering signal.

    featurizer(image_id, question, answer) -> feature vector.
    """
    pairs = []
    for p in prefs:
        if p.choice not in (Choice.First, Choice.Second):
            continue
        x_a = featurizer(p.image_id, p.question, p.answer_a)
        x_b = featurizer(p.image_id, p.question, p.answer_b)
        z = (1, 0) if p.choice == Choice.First else (0, 1)
        pairs.append(PreferencePair(x_i=x_a, x_j=x_b, z=z, source="human"))
    return pairs


def pairs_from_model(ratings: list[ModelRating], featurizer, seed: int = 0,
                     domain_of: dict[str, str] | None = None) -> list[PreferencePair]:
    """Seeded random matching of rated samples into disjoint pairs.

    Matches within the same domain when a domain map is given, pooling
    leftovers across domains. Equal-score pairs are dropped (no ordering
    signal); an odd leftover sample is skipped.
    """
    rng = np.random.default_rng(seed)
    groups: dict[str, list[ModelRating]] = {}
    if domain_of:
        for r in ratings:
            groups.setdefault(domain_of.get(r.sample_id, ""), []).append(r)
    else:
        groups[""] = list(ratings)

    pairs = []
    leftovers: list[ModelRating] = []
    for key in sorted(groups):
        group = groups[key]
        shuffled = [group[i] for i in rng.permutation(len(group))]
        matched, unmatched = _match(shuffled, featurizer)
        pairs.extend(matched)
        leftovers.extend(unmatched)
    shuffled = [leftovers[i] for i in rng.permutation(len(leftovers))]
    matched, _ = _match(shuffled, featurizer)
    pairs.extend(matched)
    return pairs


def _match(shuffled: list[ModelRating], featurizer):
    """Greedy matching that never pairs equal scores (such a pair would assert
    an arbitrary ordering); unmatched samples are returned for pooling."""
    pairs = []
    unmatched: list[ModelRating] = []
    for r in shuffled:
        partner = None
        for idx in range(len(unmatched) - 1, -1, -1):
            if unmatched[idx].score != r.score:
                partner = unmatched.pop(idx)
                break
        if partner is None:
            unmatched.append(r)
            continue
        pairs.append(
            PreferencePair(
                x_i=featurizer(partner.image_id, partner.question, partner.answer),
                x_j=featurizer(r.image_id, r.question, r.answer),
                z=z_assign(partner.score, r.score),
                source="model",
            )
        )
    return pairs, unmatched


def derive_binary_labels(prefs: list[HumanPreference], ratings: list[ModelRating],
                         threshold: int = 7) -> dict[str, str]:
    """Map sample ids to "positive"/"negative".

    Human answer samples are keyed "<task_id>/a" and "<task_id>/b".
    Ratings at or above threshold are positive. Human labels win on conflict.
    """
    if not 0 <= threshold <= 10:
        raise ValueError("threshold must be in 0..10")
    labels: dict[str, str] = {}
    for r in ratings:
        labels[r.sample_id] = "positive" if r.score >= threshold else "negative"
    for p in prefs:
        key_a, key_b = f"{p.task_id}/a", f"{p.task_id}/b"
        if p.choice == Choice.First:
            labels[key_a], labels[key_b] = "positive", "negative"
        elif p.choice == Choice.Second:
            labels[key_a], labels[key_b] = "negative", "positive"
        elif p.choice == Choice.Both:
            labels[key_a] = labels[key_b] = "positive"
        else:
            labels[key_a] = labels[key_b] = "negative"
    return labels


def load_human_preferences(path) -> list[HumanPreference]:
    prefs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                prefs.append(
                    HumanPreference(
                        task_id=obj["task_id"],
                        image_id=obj["image_id"],
                        question=obj["question"],
                        answer_a=obj["answer_a"],
                        answer_b=obj["answer_b"],
                        choice=Choice(obj["choice"]),
                        annotator=obj.get("annotator", ""),
                        timestamp=obj.get("timestamp", 0),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    return prefs


def dump_human_preference(p: HumanPreference) -> str:
    return json.dumps(
        {
            "task_id": p.task_id,
            "image_id": p.image_id,
            "question": p.question,
            "answer_a": p.answer_a,
            "answer_b": p.answer_b,
            "choice": p.choice.value,
            "annotator": p.annotator,
            "timestamp": p.timestamp,
        }
    )


def load_model_ratings(path) -> list[ModelRating]:
    ratings = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ratings.append(
                    ModelRating(
                        sample_id=obj["sample_id"],
                        image_id=obj["image_id"],
                        question=obj["question"],
                        answer=obj["answer"],
                        score=int(obj["score"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    return ratings
