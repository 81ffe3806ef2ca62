"""Downstream evaluation over model-response files: reference-guided relative
scoring, pairwise win-rate judging, and VQA closed/open metrics."""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyReference, MalformedRecord, UnparseableRating, UnparseableVerdict
from .genclient import build_chat_score_prompt, build_judge_prompt, parse_rating, parse_verdict

QUESTION_TYPES = ("conversation", "description", "closed", "open")


@dataclass
class EvalItem:
    id: str
    question: str
    reference_answer: str
    candidate_answers: dict[str, str]  # model name -> answer
    question_type: str
    domain: str

    def __post_init__(self):
        if not self.reference_answer:
            raise EmptyReference(self.id)
        if not self.candidate_answers:
            raise ValueError(f"item {self.id}: no candidate answers")


@dataclass
class JudgeVerdict:
    item_id: str
    winner: str  # "A" | "B" | "Tie"
    raw: str


@dataclass
class RelativeScore:
    item_id: str
    reference_score: float
    candidate_score: float
    relative: float  # 100 * candidate / reference; may exceed 100


@dataclass
class ChatScoreReport:
    per_item: list[RelativeScore] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    excluded: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_item": [vars(s) for s in self.per_item],
                "aggregates": self.aggregates,
                "excluded": self.excluded,
            }
        )


def load_eval_items(path) -> list[EvalItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                items.append(
                    EvalItem(
                        id=obj["id"],
                        question=obj["question"],
                        reference_answer=obj["reference_answer"],
                        candidate_answers=obj["candidate_answers"],
                        question_type=obj["question_type"],
                        domain=obj["domain"],
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    return items


def score_open_chat(items: list[EvalItem], model: str, judge, template: str) -> ChatScoreReport:
    """Judge scores the reference and the candidate on a 1-10 scale; the
    reported number is 100 * candidate / reference, aggregated by question
    type, by domain, and overall. Unparseable judge replies exclude the item
    and are counted."""
    report = ChatScoreReport()
    groups: dict[str, list[float]] = {}
    for item in items:
        candidate = item.candidate_answers[model]
        try:
            ref_raw = judge(build_chat_score_prompt(
                item.question, item.reference_answer, item.reference_answer, template))
            cand_raw = judge(build_chat_score_prompt(
                item.question, item.reference_answer, candidate, template))
            ref_score = parse_rating(ref_raw, lo=1, hi=10)
            cand_score = parse_rating(cand_raw, lo=1, hi=10)
        except UnparseableRating:
            report.excluded += 1
            continue
        rel = 100.0 * cand_score / ref_score
        report.per_item.append(
            RelativeScore(item_id=item.id, reference_score=ref_score,
                          candidate_score=cand_score, relative=rel)
        )
        groups.setdefault("overall", []).append(rel)
        groups.setdefault(f"type:{item.question_type}", []).append(rel)
        groups.setdefault(f"domain:{item.domain}", []).append(rel)
    report.aggregates = {
        key: {"mean": float(np.mean(vals)), "n": len(vals)} for key, vals in sorted(groups.items())
    }
    return report


def win_rate(items: list[EvalItem], model_a: str, model_b: str, judge,
             template: str, seed: int = 0) -> dict:
    """Head-to-head judging with per-item randomized presentation order so
    position bias cancels. Ties are excluded from the win-rate denominator;
    the include-as-half convention is also reported."""
    rng = np.random.default_rng(seed)
    wins_a = wins_b = ties = excluded = 0
    verdicts = []
    for item in items:
        ans_a = item.candidate_answers[model_a]
        ans_b = item.candidate_answers[model_b]
        flip = bool(rng.integers(2))
        first, second = (ans_b, ans_a) if flip else (ans_a, ans_b)
        raw = judge(build_judge_prompt(item.question, item.reference_answer,
                                       first, second, template))
        try:
            winner = parse_verdict(raw)
        except UnparseableVerdict:
            excluded += 1
            continue
        if winner == "Tie":
            ties += 1
        elif (winner == "A") != flip:
            wins_a += 1
        else:
            wins_b += 1
        canonical = "Tie" if winner == "Tie" else ("A" if (winner == "A") != flip else "B")
        verdicts.append(JudgeVerdict(item_id=item.id, winner=canonical, raw=raw))
    decided = wins_a + wins_b
    return {
        "wins_a": wins_a,
        "wins_b": wins_b,
        "ties": ties,
        "excluded": excluded,
        "win_rate_a": wins_a / decided if decided else None,
        "win_rate_a_ties_half": (wins_a + ties / 2) / (decided + ties) if decided + ties else None,
        "verdicts": verdicts,
    }


_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_tokens(text: str, drop_articles: bool = False) -> list[str]:
    tokens = text.lower().translate(_PUNCT_TABLE).split()
    if drop_articles:
        tokens = [t for t in tokens if t not in _ARTICLES]
    return tokens


def vqa_closed_accuracy(items: list[EvalItem], responses: dict[str, str]) -> float:
    """Normalized exact match of the response's first token against the
    reference label (lowercased, punctuation and articles stripped)."""
    closed = [i for i in items if i.question_type == "closed"]
    if not closed:
        raise ValueError("no closed items")
    correct = 0
    for item in closed:
        ref = normalize_tokens(item.reference_answer, drop_articles=True)
        resp = normalize_tokens(responses.get(item.id, ""), drop_articles=True)
        if ref and resp and resp[0] == ref[0]:
            correct += 1
    return 100.0 * correct / len(closed)


def vqa_open_recall(items: list[EvalItem], responses: dict[str, str]) -> float:
    """Mean per-item recall: fraction of unique ground-truth tokens that
    appear in the response (lowercased, punctuation stripped)."""
    open_items = [i for i in items if i.question_type == "open"]
    if not open_items:
        raise ValueError("no open items")
    recalls = []
    for item in open_items:
        ref = set(normalize_tokens(item.reference_answer))
        if not ref:
            raise EmptyReference(item.id)
        resp = set(normalize_tokens(responses.get(item.id, "")))
        recalls.append(len(ref & resp) / len(ref))
    return float(np.mean(recalls))


def load_responses(path) -> dict[str, dict[str, str]]:
    """NDJSON {id, model, answer} -> {model: {id: answer}}."""
    out: dict[str, dict[str, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.setdefault(obj["model"], {})[obj["id"]] = obj["answer"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    return out
