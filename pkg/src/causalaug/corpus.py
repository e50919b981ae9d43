"""Canonical data model and ingestion for annotated event-causality corpora.

A corpus is a JSONL file, one sentence-level record per line:

    {"id": str, "topic": str, "tokens": [str],
     "events":   [{"id": str, "span": [int, int], "lemma": str}],
     "entities": [{"id": str, "span": [int, int], "type": str}],
     "relations": [{"e1": str, "e2": str, "label": "causal"|"non-causal"}]}

Spans are half-open token index ranges. All records are immutable; every
function here is pure and safe to call concurrently.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigurationError, ParseError, ValidationError

CAUSAL = "causal"
NON_CAUSAL = "non-causal"
RELATION_LABELS = (CAUSAL, NON_CAUSAL)

Span = tuple[int, int]


@dataclass(frozen=True)
class EventMention:
    id: str
    span: Span
    lemma: str


@dataclass(frozen=True)
class EntityMention:
    id: str
    span: Span
    type: str


@dataclass(frozen=True)
class Relation:
    e1: str
    e2: str
    label: str


@dataclass(frozen=True)
class AnnotatedExample:
    """A tokenized sentence with event mentions, entity mentions and gold pair relations."""

    id: str
    topic: str
    tokens: tuple[str, ...]
    events: tuple[EventMention, ...]
    entities: tuple[EntityMention, ...]
    relations: tuple[Relation, ...]

    def event_by_id(self, event_id: str) -> EventMention:
        for ev in self.events:
            if ev.id == event_id:
                return ev
        raise KeyError(event_id)

    def validate(self, entity_types: set[str] | None = None) -> None:
        """Check all record invariants; raises ValidationError naming this example."""

        def fail(msg: str) -> None:
            raise ValidationError(f"example {self.id!r}: {msg}")

        n = len(self.tokens)
        spans: list[tuple[Span, str]] = []
        event_ids: set[str] = set()
        for ev in self.events:
            if ev.id in event_ids:
                fail(f"duplicate event id {ev.id!r}")
            event_ids.add(ev.id)
            _check_span(ev.span, n, f"event {ev.id!r}", fail)
            if not ev.lemma or ev.lemma != ev.lemma.lower():
                fail(f"event {ev.id!r} lemma must be non-empty and lowercased")
            spans.append((ev.span, f"event {ev.id!r}"))
        entity_ids: set[str] = set()
        for ent in self.entities:
            if ent.id in entity_ids:
                fail(f"duplicate entity id {ent.id!r}")
            entity_ids.add(ent.id)
            _check_span(ent.span, n, f"entity {ent.id!r}", fail)
            if not ent.type:
                fail(f"entity {ent.id!r} has empty type")
            if entity_types is not None and ent.type not in entity_types:
                fail(f"entity {ent.id!r} type {ent.type!r} not in declared tag set")
            spans.append((ent.span, f"entity {ent.id!r}"))
        spans.sort()
        for (a, name_a), (b, name_b) in zip(spans, spans[1:]):
            if b[0] < a[1]:
                fail(f"overlapping mention spans: {name_a} and {name_b}")
        for rel in self.relations:
            if rel.label not in RELATION_LABELS:
                fail(f"relation label {rel.label!r} not in {RELATION_LABELS}")
            if rel.e1 == rel.e2:
                fail(f"relation references the same event {rel.e1!r} twice")
            for eid in (rel.e1, rel.e2):
                if eid not in event_ids:
                    fail(f"relation references unknown event {eid!r}")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "topic": self.topic,
            "tokens": list(self.tokens),
            "events": [
                {"id": ev.id, "span": list(ev.span), "lemma": ev.lemma} for ev in self.events
            ],
            "entities": [
                {"id": ent.id, "span": list(ent.span), "type": ent.type} for ent in self.entities
            ],
            "relations": [
                {"e1": rel.e1, "e2": rel.e2, "label": rel.label} for rel in self.relations
            ],
        }


def _check_span(span: Span, n_tokens: int, what: str, fail) -> None:
    start, end = span
    if not (isinstance(start, int) and isinstance(end, int)):
        fail(f"{what} span must be a pair of ints, got {span!r}")
    if not (0 <= start < end <= n_tokens):
        fail(f"{what} span {list(span)} out of bounds for {n_tokens} tokens")


def example_from_json_dict(record: dict) -> AnnotatedExample:
    return AnnotatedExample(
        id=str(record["id"]),
        topic=str(record["topic"]),
        tokens=tuple(str(t) for t in record["tokens"]),
        events=tuple(
            EventMention(id=str(e["id"]), span=(int(e["span"][0]), int(e["span"][1])), lemma=str(e["lemma"]))
            for e in record.get("events", [])
        ),
        entities=tuple(
            EntityMention(id=str(e["id"]), span=(int(e["span"][0]), int(e["span"][1])), type=str(e["type"]))
            for e in record.get("entities", [])
        ),
        relations=tuple(
            Relation(e1=str(r["e1"]), e2=str(r["e2"]), label=str(r["label"]))
            for r in record.get("relations", [])
        ),
    )


def load_corpus(path: str | Path, entity_types: set[str] | None = None) -> list[AnnotatedExample]:
    """Load and validate a JSONL corpus, preserving file order."""
    path = Path(path)
    examples: list[AnnotatedExample] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                example = example_from_json_dict(record)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            example.validate(entity_types=entity_types)
            examples.append(example)
    return examples


def save_corpus(examples: Iterable[AnnotatedExample], path: str | Path) -> None:
    """Serialize examples to JSONL; inverse of load_corpus on valid data."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example.to_json_dict(), sort_keys=True) + "\n")


def enumerate_pairs(example: AnnotatedExample) -> list[tuple[str, str, str]]:
    """All unordered intra-sentence event pairs of an example.

    A pair is labeled causal iff a causal relation is annotated in either
    direction. Pairs are ordered by (span start, event id) of the members,
    so output is independent of annotation order.
    """
    annotated = {
        frozenset((rel.e1, rel.e2)) for rel in example.relations if rel.label == CAUSAL
    }
    events = sorted(example.events, key=lambda ev: (ev.span[0], ev.id))
    pairs = []
    for a, b in itertools.combinations(events, 2):
        label = CAUSAL if frozenset((a.id, b.id)) in annotated else NON_CAUSAL
        pairs.append((a.id, b.id, label))
    return pairs


@dataclass(frozen=True)
class PairExample:
    """One (event pair, sentence) instance, the unit the identifier consumes.

    The tokens need not come from an annotated example: generated sentences
    are wrapped in the same type. `label` is None for pure inference inputs.
    """

    uid: str
    tokens: tuple[str, ...]
    e1_span: Span
    e2_span: Span
    e1_lemma: str
    e2_lemma: str
    label: str | None = None

    def check_spans(self) -> None:
        n = len(self.tokens)
        for span in (self.e1_span, self.e2_span):
            if not (0 <= span[0] < span[1] <= n):
                raise ValidationError(
                    f"pair {self.uid!r}: span {list(span)} out of bounds for {n} tokens"
                )


def pair_examples(example: AnnotatedExample) -> list[PairExample]:
    """Expand an example into labeled PairExamples, one per event pair."""
    out = []
    for e1_id, e2_id, label in enumerate_pairs(example):
        ev1, ev2 = example.event_by_id(e1_id), example.event_by_id(e2_id)
        out.append(
            PairExample(
                uid=f"{example.id}:{e1_id}:{e2_id}",
                tokens=example.tokens,
                e1_span=ev1.span,
                e2_span=ev2.span,
                e1_lemma=ev1.lemma,
                e2_lemma=ev2.lemma,
                label=label,
            )
        )
    return out


@dataclass(frozen=True)
class FoldPlan:
    """Topic-level cross-validation assignment with a held-out dev topic set."""

    k: int
    assignments: dict[str, int]
    dev_topics: frozenset[str]

    def fold_topics(self, fold: int) -> list[str]:
        return sorted(t for t, f in self.assignments.items() if f == fold)

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "assignments": dict(sorted(self.assignments.items())),
            "dev_topics": sorted(self.dev_topics),
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_json_dict(), sort_keys=True).encode("utf-8")


def split_folds(
    corpus: Sequence[AnnotatedExample], k: int, dev_topics: set[str] | frozenset[str]
) -> FoldPlan:
    """Assign non-dev topics to k folds, round-robin over the sorted topic names."""
    if k < 2:
        raise ConfigurationError(f"k must be >= 2, got {k}")
    topics = sorted({ex.topic for ex in corpus} - set(dev_topics))
    if len(topics) < k:
        raise ConfigurationError(
            f"need at least {k} non-dev topics for {k} folds, got {len(topics)}"
        )
    assignments = {topic: i % k for i, topic in enumerate(topics)}
    return FoldPlan(k=k, assignments=assignments, dev_topics=frozenset(dev_topics))
