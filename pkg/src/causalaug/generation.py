"""Constrained sentence generation.

Builds mask skeletons from selected candidate pairs, assigns replacement
entities by in-context similarity, completes sentences with the
relation-matched generator, and filters candidates by a quality/diversity
score.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from causalaug.corpus import (
    RELATION_LABELS,
    AnnotatedExample,
    Span,
)
from causalaug.errors import (
    ConfigurationError,
    ParseError,
    StructuralError,
    ValidationError,
)
from causalaug.knowledge import CandidatePair
from causalaug.models import (
    MASK_TOKEN,
    EncoderBackend,
    GeneratorPair,
    embed_entity_in_context,
    encode_sentence,
    fill_masks,
)

logger = logging.getLogger("causalaug.generation")

SOURCE_ANNOTATED = "annotated-corpus"
SOURCE_EXTERNAL = "external"
_SOURCES = (SOURCE_ANNOTATED, SOURCE_EXTERNAL)


def mask_count(gap: int) -> int:
    """Masks for a cohesive gap of ``gap`` tokens: ceil(1.2 * gap), exactly."""
    if gap < 0:
        raise ValidationError(f"negative gap length {gap}")
    return (12 * gap + 9) // 10


@dataclass(frozen=True)
class EntityCandidate:
    tokens: tuple[str, ...]
    type: str

    def __post_init__(self):
        if not self.tokens or any(not t for t in self.tokens):
            raise ValidationError("entity candidate needs non-empty surface tokens")
        if not self.type:
            raise ValidationError("entity candidate needs a non-empty type")


@dataclass(frozen=True)
class EntityCandidateSet:
    entries: tuple[EntityCandidate, ...]
    source: str = SOURCE_ANNOTATED

    def __post_init__(self):
        if self.source not in _SOURCES:
            raise ValidationError(f"unknown candidate source {self.source!r}")

    def of_type(self, entity_type: str) -> tuple[EntityCandidate, ...]:
        return tuple(c for c in self.entries if c.type == entity_type)

    @classmethod
    def from_corpus(cls, examples: Sequence[AnnotatedExample]) -> "EntityCandidateSet":
        seen = set()
        for example in examples:
            for entity in example.entities:
                surface = tuple(example.tokens[entity.span[0] : entity.span[1]])
                seen.add((surface, entity.type))
        entries = tuple(EntityCandidate(t, ty) for t, ty in sorted(seen))
        return cls(entries=entries, source=SOURCE_ANNOTATED)

    @classmethod
    def load(cls, path: str | Path, source: str = SOURCE_EXTERNAL) -> "EntityCandidateSet":
        """TSV rows: space-separated surface tokens, then the entity type."""
        entries = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path} line {lineno}: expected 2 tab-separated fields")
            surface, entity_type = parts
            entries.append(EntityCandidate(tuple(surface.split()), entity_type.strip()))
        return cls(entries=tuple(sorted(set(entries), key=lambda c: (c.type, c.tokens))),
                   source=source)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if norm == 0.0:
        logger.info("zero-norm vector in cosine; similarity term set to 0")
        return 0.0
    return float(np.dot(a, b) / norm)


def assign_entities(pair: CandidatePair, original: AnnotatedExample,
                    candidates: EntityCandidateSet,
                    backend: EncoderBackend) -> dict[str, EntityCandidate]:
    """Most-similar same-type replacement per original entity.

    Each candidate is embedded at the original span position within the
    original sentence; ties break lexicographically; the original surface is
    skipped whenever an alternative exists.
    """
    assignment: dict[str, EntityCandidate] = {}
    for entity in original.entities:
        start, end = entity.span
        surface = tuple(original.tokens[start:end])
        same_type = candidates.of_type(entity.type)
        alternatives = [c for c in same_type if c.tokens != surface]
        pool = alternatives if alternatives else list(same_type)
        if not pool:
            logger.info("no %s candidate for entity %s in %s; keeping original",
                        entity.type, entity.id, original.id)
            assignment[entity.id] = EntityCandidate(surface, entity.type)
            continue
        reference = embed_entity_in_context(backend, original.tokens, entity.span)
        best: tuple[float, EntityCandidate] | None = None
        for candidate in sorted(pool, key=lambda c: c.tokens):
            context = (list(original.tokens[:start]) + list(candidate.tokens)
                       + list(original.tokens[end:]))
            vector = embed_entity_in_context(backend, context,
                                             (start, start + len(candidate.tokens)))
            similarity = _cosine(reference, vector)
            if best is None or similarity > best[0]:
                best = (similarity, candidate)
        assignment[entity.id] = best[1]
    return assignment


@dataclass(frozen=True)
class Skeleton:
    tokens: tuple[str, ...]
    e1_span: Span
    e2_span: Span
    entity_spans: tuple[Span, ...]
    relation: str
    origin: CandidatePair

    def __post_init__(self):
        if self.relation not in RELATION_LABELS:
            raise ValidationError(f"unknown relation label {self.relation!r}")
        for span in (self.e1_span, self.e2_span) + self.entity_spans:
            if not (0 <= span[0] < span[1] <= len(self.tokens)):
                raise ValidationError(f"slot span {span} out of bounds")
            if any(t == MASK_TOKEN for t in self.tokens[span[0] : span[1]]):
                raise ValidationError("event/entity slots must hold fixed tokens")

    @property
    def mask_positions(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.tokens) if t == MASK_TOKEN)


def build_skeleton(pair: CandidatePair, assignment: Mapping[str, EntityCandidate],
                   original: AnnotatedExample) -> Skeleton:
    """Copy the original slot layout, substitute the pair's lemmas and the
    assigned entities, and replace each cohesive gap of g tokens with
    ceil(1.2 * g) mask sentinels."""
    events = {e.id: e for e in original.events}
    if pair.source_e1 not in events or pair.source_e2 not in events:
        raise StructuralError(
            f"pair {pair.e1}/{pair.e2} references events missing from {original.id}"
        )
    slots = []  # (span, replacement tokens, tag)
    for event in original.events:
        if event.id == pair.source_e1:
            slots.append((event.span, (pair.e1,), "e1"))
        elif event.id == pair.source_e2:
            slots.append((event.span, (pair.e2,), "e2"))
        else:
            surface = tuple(original.tokens[event.span[0] : event.span[1]])
            slots.append((event.span, surface, "event"))
    for entity in original.entities:
        if entity.id in assignment:
            chosen = assignment[entity.id]
        else:
            chosen = EntityCandidate(
                tuple(original.tokens[entity.span[0] : entity.span[1]]), entity.type
            )
        slots.append((entity.span, chosen.tokens, "entity"))
    slots.sort(key=lambda slot: slot[0])

    out: list[str] = []
    e1_span = e2_span = None
    entity_spans: list[Span] = []
    cursor = 0
    for span, replacement, tag in slots:
        out.extend([MASK_TOKEN] * mask_count(span[0] - cursor))
        placed = (len(out), len(out) + len(replacement))
        out.extend(replacement)
        if tag == "e1":
            e1_span = placed
        elif tag == "e2":
            e2_span = placed
        elif tag == "entity":
            entity_spans.append(placed)
        cursor = span[1]
    out.extend([MASK_TOKEN] * mask_count(len(original.tokens) - cursor))
    return Skeleton(
        tokens=tuple(out),
        e1_span=e1_span,
        e2_span=e2_span,
        entity_spans=tuple(entity_spans),
        relation=pair.provisional_label,
        origin=pair,
    )


@dataclass(frozen=True)
class GeneratedCandidate:
    cid: str
    e1: str
    e2: str
    label: str
    origin_id: str
    tokens: tuple[str, ...]
    e1_span: Span
    e2_span: Span
    fill_positions: tuple[int, ...]
    fill_probs: tuple[float, ...]
    ppl: float
    dis: float | None = None
    score: float | None = None

    def __post_init__(self):
        if len(self.fill_positions) != len(self.fill_probs):
            raise ValidationError("fill positions and probabilities must align")

    def to_json_dict(self) -> dict:
        return {
            "pair": {"e1": self.e1, "e2": self.e2, "label": self.label},
            "tokens": list(self.tokens),
            "fill_positions": list(self.fill_positions),
            "fill_probs": list(self.fill_probs),
            "ppl": self.ppl,
            "dis": self.dis,
            "score": self.score,
            "origin_id": self.origin_id,
            "cid": self.cid,
            "e1_span": list(self.e1_span),
            "e2_span": list(self.e2_span),
        }

    @classmethod
    def from_json_dict(cls, row: Mapping) -> "GeneratedCandidate":
        return cls(
            cid=row["cid"],
            e1=row["pair"]["e1"],
            e2=row["pair"]["e2"],
            label=row["pair"]["label"],
            origin_id=row["origin_id"],
            tokens=tuple(row["tokens"]),
            e1_span=tuple(row["e1_span"]),
            e2_span=tuple(row["e2_span"]),
            fill_positions=tuple(row["fill_positions"]),
            fill_probs=tuple(row["fill_probs"]),
            ppl=row["ppl"],
            dis=row["dis"],
            score=row["score"],
        )


def ppl(candidate: GeneratedCandidate) -> float:
    """Mean fill probability; a candidate with no fills scores a vacuous 1.0."""
    if not candidate.fill_probs:
        return 1.0
    return float(np.mean(candidate.fill_probs))


def complete_sentence(generators: GeneratorPair, skeleton: Skeleton, *,
                      order: str = "ltr") -> GeneratedCandidate:
    result = fill_masks(generators, skeleton.relation, skeleton.tokens, order=order)
    origin = skeleton.origin
    candidate = GeneratedCandidate(
        cid=f"{origin.e1}|{origin.e2}|{skeleton.relation}|{origin.origin.id}",
        e1=origin.e1,
        e2=origin.e2,
        label=skeleton.relation,
        origin_id=origin.origin.id,
        tokens=result.tokens,
        e1_span=skeleton.e1_span,
        e2_span=skeleton.e2_span,
        fill_positions=result.fill_positions,
        fill_probs=result.fill_probs,
        ppl=1.0,
    )
    return replace(candidate, ppl=ppl(candidate))


def sample_discriminator_set(examples: Sequence[AnnotatedExample], m: int,
                             seed: int) -> list[AnnotatedExample]:
    """m labeled sentences drawn once per filtering run, uniformly, seeded."""
    if not examples:
        raise ValidationError("cannot sample from an empty labeled set")
    if m <= 0:
        raise ConfigurationError(f"sample size {m} must be positive")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(examples), size=min(m, len(examples)), replace=False)
    return [examples[i] for i in sorted(chosen)]


def dis(candidate: GeneratedCandidate, sample: Sequence[AnnotatedExample],
        backend: EncoderBackend) -> float:
    """Mean cosine similarity between the candidate and the sampled sentences."""
    if not sample:
        raise ValidationError("discriminator sample is empty")
    vector = encode_sentence(backend, candidate.tokens)
    sims = [_cosine(vector, encode_sentence(backend, ex.tokens)) for ex in sample]
    return float(np.mean(sims))


def score_and_filter(candidates: Sequence[GeneratedCandidate], mu: float, beta: float,
                     sample: Sequence[AnnotatedExample], backend: EncoderBackend, *,
                     dis_mode: str = "similarity") -> list[GeneratedCandidate]:
    """Score every candidate and keep the top floor(beta * N), ties by cid.

    The stored ``dis`` is always the raw similarity mean; ``dis_mode``
    controls only how it enters the score.
    """
    if not 0.0 < beta <= 1.0:
        raise ConfigurationError(f"beta {beta} outside (0, 1]")
    if not 0.0 <= mu <= 1.0:
        raise ConfigurationError(f"mu {mu} outside [0, 1]")
    if dis_mode not in ("similarity", "one_minus_similarity"):
        raise ConfigurationError(f"unknown dis_mode {dis_mode!r}")
    scored = []
    for candidate in candidates:
        raw = dis(candidate, sample, backend)
        effective = raw if dis_mode == "similarity" else 1.0 - raw
        value = mu * candidate.ppl + (1.0 - mu) * effective
        scored.append(replace(candidate, dis=raw, score=value))
    scored.sort(key=lambda c: (-c.score, c.cid))
    return scored[: int(beta * len(scored))]


def generate_candidates(pairs: Sequence[CandidatePair], generators: GeneratorPair,
                        backend: EncoderBackend, candidates: EntityCandidateSet, *,
                        order: str = "ltr") -> list[GeneratedCandidate]:
    """One completed candidate per selected pair, via its own origin sentence."""
    out = []
    for pair in pairs:
        assignment = assign_entities(pair, pair.origin, candidates, backend)
        skeleton = build_skeleton(pair, assignment, pair.origin)
        out.append(complete_sentence(generators, skeleton, order=order))
    return out
