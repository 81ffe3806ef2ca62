"""Data model and file I/O for image-text pairs, embeddings, instruction records, and manifests.

Input corpora and embedding files are newline-delimited JSON (streamable);
the emitted dataset is a single JSON array matching the released-dataset
schema: objects with keys id, image, domain, conversations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import (
    DimensionMismatch,
    DuplicateId,
    InvalidRecord,
    MalformedRecord,
    NonFiniteComponent,
)

DOMAINS = ("CXR", "MRI", "Histology", "Gross", "CT")

_PAIR_FIELDS = {"id", "image_ref", "caption", "inline_mentions", "domain"}


@dataclass
class ImageTextPair:
    id: str
    image_ref: str
    caption: str
    inline_mentions: list[str]
    domain: str
    extra: dict = field(default_factory=dict)  # unknown input keys, kept opaquely


@dataclass
class Turn:
    role: str  # "human" | "assistant"
    text: str


@dataclass
class InstructionRecord:
    id: str
    image: str
    domain: str
    conversations: list[Turn]


@dataclass
class EmbeddingVector:
    id: str
    kind: str  # "image" | "text"
    vector: list[float]


@dataclass
class DatasetManifest:
    name: str
    size: int
    record_ids: list[str]
    provenance: dict = field(default_factory=dict)


def validate_pair(obj, line_no):
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "not a JSON object")
    for key in ("id", "image_ref", "caption", "domain"):
        if key not in obj:
            raise MalformedRecord(line_no, f"missing field {key!r}")
        if not isinstance(obj[key], str):
            raise MalformedRecord(line_no, f"field {key!r} must be a string")
    if not obj["caption"]:
        raise MalformedRecord(line_no, "empty caption")
    if obj["domain"] not in DOMAINS:
        raise MalformedRecord(line_no, "unknown domain")
    mentions = obj.get("inline_mentions", [])
    if not isinstance(mentions, list) or not all(isinstance(m, str) for m in mentions):
        raise MalformedRecord(line_no, "inline_mentions must be a list of strings")
    extra = {k: v for k, v in obj.items() if k not in _PAIR_FIELDS}
    return ImageTextPair(
        id=obj["id"],
        image_ref=obj["image_ref"],
        caption=obj["caption"],
        inline_mentions=list(mentions),
        domain=obj["domain"],
        extra=extra,
    )


def load_corpus(path) -> list[ImageTextPair]:
    """Load an NDJSON corpus file, validating every line. Order preserved."""
    pairs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
            pair = validate_pair(obj, line_no)
            if pair.id in seen:
                raise DuplicateId(pair.id)
            seen.add(pair.id)
            pairs.append(pair)
    return pairs


def load_embeddings(path) -> dict[tuple[str, str], EmbeddingVector]:
    """Load an NDJSON embeddings file into a map keyed by (id, kind).

    All vectors in the file must share one dimension; components must be finite.
    """
    out: dict[tuple[str, str], EmbeddingVector] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict) or not {"id", "kind", "vector"} <= obj.keys():
                raise MalformedRecord(line_no, "expected keys id, kind, vector")
            if obj["kind"] not in ("image", "text"):
                raise MalformedRecord(line_no, f"unknown kind {obj['kind']!r}")
            vec = obj["vector"]
            if not isinstance(vec, list) or not vec:
                raise MalformedRecord(line_no, "vector must be a non-empty list")
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vec):
                raise NonFiniteComponent(obj["id"])
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DimensionMismatch(obj["id"], dim, len(vec))
            key = (obj["id"], obj["kind"])
            if key in out:
                raise DuplicateId(obj["id"])
            out[key] = EmbeddingVector(obj["id"], obj["kind"], [float(v) for v in vec])
    return out


def validate_record(rec: InstructionRecord):
    turns = rec.conversations
    if len(turns) < 2 or len(turns) > 12:
        raise InvalidRecord(rec.id, f"conversation length {len(turns)} outside 2..12")
    if len(turns) % 2 != 0:
        raise InvalidRecord(rec.id, "conversation has odd number of turns")
    if rec.domain not in DOMAINS:
        raise InvalidRecord(rec.id, f"unknown domain {rec.domain!r}")
    for i, turn in enumerate(turns):
        expected = "human" if i % 2 == 0 else "assistant"
        if turn.role != expected:
            raise InvalidRecord(rec.id, f"turn {i} must be {expected}, got {turn.role}")


def write_dataset(records: list[InstructionRecord], path, name="dataset", provenance=None) -> DatasetManifest:
    """Write records as a JSON array in the released schema; returns a manifest.

    Round-trip safe: load_dataset(path) reproduces the input records exactly.
    """
    seen = set()
    objs = []
    for rec in records:
        validate_record(rec)
        if rec.id in seen:
            raise InvalidRecord(rec.id, "duplicate id")
        seen.add(rec.id)
        objs.append(
            {
                "id": rec.id,
                "image": rec.image,
                "domain": rec.domain,
                "conversations": [{"from": t.role, "value": t.text} for t in rec.conversations],
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(objs, fh, ensure_ascii=False, indent=1)
    return DatasetManifest(
        name=name,
        size=len(records),
        record_ids=[r.id for r in records],
        provenance=dict(provenance or {}),
    )


def load_dataset(path) -> list[InstructionRecord]:
    """Read back a dataset file written by write_dataset."""
    with open(path, encoding="utf-8") as fh:
        objs = json.load(fh)
    records = []
    seen = set()
    for obj in objs:
        rec = InstructionRecord(
            id=obj["id"],
            image=obj["image"],
            domain=obj["domain"],
            conversations=[Turn(t["from"], t["value"]) for t in obj["conversations"]],
        )
        validate_record(rec)
        if rec.id in seen:
            raise DuplicateId(rec.id)
        seen.add(rec.id)
        records.append(rec)
    return records
