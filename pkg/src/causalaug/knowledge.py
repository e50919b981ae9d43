"""Candidate event-pair acquisition and filtering in a learned causal embedding space.

Candidate causal/non-causal event pairs come from two adapter-backed routes:
lexical expansion of annotated pairs (synonym/hypernym/class tables) and
connective-based mining of raw event-annotated sentences. Candidates are then
ranked by a translation-style distance in an embedding space trained with a
margin objective so that causal pairs end up closer than non-causal ones, and
the top/bottom slices are kept.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import CAUSAL, NON_CAUSAL, RELATION_LABELS, AnnotatedExample
from .errors import ConfigurationError, OOVError, ParseError, ValidationError

log = logging.getLogger(__name__)

PROVENANCE_ANNOTATED = "annotated"
PROVENANCE_LEXICAL = "lexical-expansion"
PROVENANCE_CONNECTIVE = "connective"

LEXICON_RELATIONS = ("synonym", "hypernym", "class")


@dataclass(frozen=True)
class LexiconAdapter:
    """Lemma expansion table loaded from a `lemma<TAB>relation<TAB>related` TSV."""

    table: dict[str, tuple[str, ...]]

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[str, str, str]]) -> "LexiconAdapter":
        table: dict[str, set[str]] = {}
        for lemma, relation, related in entries:
            if relation not in LEXICON_RELATIONS:
                raise ValidationError(
                    f"lexicon relation {relation!r} not in {LEXICON_RELATIONS}"
                )
            if related == lemma:
                raise ValidationError(f"lexicon expands {lemma!r} to itself")
            table.setdefault(lemma, set()).add(related)
        return cls(table={lemma: tuple(sorted(rel)) for lemma, rel in sorted(table.items())})

    @classmethod
    def load(cls, path: str | Path) -> "LexiconAdapter":
        entries = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 tab-separated fields")
            entries.append((parts[0], parts[1], parts[2]))
        return cls.from_entries(entries)

    def expansions(self, lemma: str) -> tuple[str, ...]:
        """Related lemmas for `lemma`, sorted; empty for unknown lemmas."""
        return self.table.get(lemma, ())


@dataclass(frozen=True)
class ConnectivePatternSet:
    """Surface connectives with their provisional relation labels."""

    connectives: tuple[tuple[str, str], ...]

    def __post_init__(self):
        seen = set()
        for surface, label in self.connectives:
            if not surface or surface != surface.lower():
                raise ValidationError(f"connective {surface!r} must be non-empty and lowercased")
            if label not in RELATION_LABELS:
                raise ValidationError(f"connective label {label!r} not in {RELATION_LABELS}")
            if surface in seen:
                raise ValidationError(f"duplicate connective {surface!r}")
            seen.add(surface)

    @classmethod
    def load(cls, path: str | Path) -> "ConnectivePatternSet":
        rows = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}: line {lineno}: expected 2 tab-separated fields")
            rows.append((parts[0], parts[1]))
        return cls(connectives=tuple(rows))


@dataclass(frozen=True)
class CandidatePair:
    """An ordered event-lemma pair with a provisional label and its source sentence.

    `source_e1`/`source_e2` name the events of the origin sentence whose slots
    the pair occupies; for annotated and connective pairs they are the events
    themselves, for lexical expansions the events the lemmas were expanded from.
    """

    e1: str
    e2: str
    provisional_label: str
    provenance: str
    origin: AnnotatedExample
    source_e1: str
    source_e2: str

    def key(self) -> tuple[str, str, str]:
        return (self.e1, self.e2, self.provisional_label)

    def sort_key(self) -> tuple[str, str, str, str]:
        return (self.e1, self.e2, self.origin.id, self.provenance)


def annotated_candidate(example: AnnotatedExample, e1_id: str, e2_id: str, label: str) -> CandidatePair:
    ev1, ev2 = example.event_by_id(e1_id), example.event_by_id(e2_id)
    return CandidatePair(
        e1=ev1.lemma,
        e2=ev2.lemma,
        provisional_label=label,
        provenance=PROVENANCE_ANNOTATED,
        origin=example,
        source_e1=e1_id,
        source_e2=e2_id,
    )


def expand_lexical(pair: CandidatePair, lexicon: LexiconAdapter) -> list[CandidatePair]:
    """Cross product of the two lemmas' expansion groups, minus the original pair.

    Every produced pair keeps the label and origin sentence of `pair` and is
    tagged with lexical-expansion provenance. Result is sorted and duplicate
    free; lemmas missing from the lexicon contribute only themselves.
    """
    if pair.provenance != PROVENANCE_ANNOTATED:
        raise ValidationError(
            f"only annotated pairs are expanded, got provenance {pair.provenance!r}"
        )
    group1 = (pair.e1,) + lexicon.expansions(pair.e1)
    group2 = (pair.e2,) + lexicon.expansions(pair.e2)
    out = []
    for a in group1:
        for b in group2:
            if (a, b) == (pair.e1, pair.e2):
                continue
            out.append(replace(pair, e1=a, e2=b, provenance=PROVENANCE_LEXICAL))
    unique = {(c.e1, c.e2): c for c in out}
    return [unique[k] for k in sorted(unique)]


def _find_connective(tokens_lower: list[str], patterns: ConnectivePatternSet):
    """All (start, end, label) occurrences of any connective in the token list."""
    hits = []
    for surface, label in patterns.connectives:
        needle = surface.split()
        m = len(needle)
        for i in range(len(tokens_lower) - m + 1):
            if tokens_lower[i : i + m] == needle:
                hits.append((i, i + m, label))
    return hits


def introduce_connective(
    documents: Sequence[AnnotatedExample], patterns: ConnectivePatternSet
) -> list[CandidatePair]:
    """Mine (left event, right event) pairs from sentences with exactly one connective.

    A sentence qualifies when exactly one connective occurrence matches and at
    least one event lies entirely on each side of it; the nearest event on each
    side forms the pair, labeled by the connective.
    """
    out = []
    for doc in documents:
        hits = _find_connective([t.lower() for t in doc.tokens], patterns)
        if len(hits) != 1:
            continue
        start, end, label = hits[0]
        left = [ev for ev in doc.events if ev.span[1] <= start]
        right = [ev for ev in doc.events if ev.span[0] >= end]
        if not left or not right:
            continue
        left_ev = max(left, key=lambda ev: (ev.span[1], ev.id))
        right_ev = min(right, key=lambda ev: (ev.span[0], ev.id))
        out.append(
            CandidatePair(
                e1=left_ev.lemma,
                e2=right_ev.lemma,
                provisional_label=label,
                provenance=PROVENANCE_CONNECTIVE,
                origin=doc,
                source_e1=left_ev.id,
                source_e2=right_ev.id,
            )
        )
    return out


@dataclass
class CausalSpaceModel:
    """Per-lemma vectors plus one causal translation vector and the training margin.

    Distance of a pair is ||v(e1) + r_causal - v(e2)||_2; training pushes causal
    pairs to smaller distances than non-causal ones.
    """

    lemmas: tuple[str, ...]
    vectors: np.ndarray  # [n_lemmas, dims]
    r_causal: np.ndarray  # [dims]
    margin: float
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self._index = {lemma: i for i, lemma in enumerate(self.lemmas)}

    @property
    def dims(self) -> int:
        return int(self.vectors.shape[1])

    def __contains__(self, lemma: str) -> bool:
        return lemma in self._index

    def vector(self, lemma: str) -> np.ndarray:
        try:
            return self.vectors[self._index[lemma]]
        except KeyError:
            raise OOVError(f"lemma {lemma!r} not in causal-space vocabulary") from None


def init_causal_space(lemmas: Sequence[str], dims: int, margin: float, seed: int) -> CausalSpaceModel:
    rng = np.random.default_rng(seed)
    lemmas = tuple(sorted(set(lemmas)))
    vectors = rng.normal(0.0, 1.0, size=(len(lemmas), dims))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    r_causal = rng.normal(0.0, 1.0 / np.sqrt(dims), size=dims)
    return CausalSpaceModel(lemmas=lemmas, vectors=vectors, r_causal=r_causal, margin=margin)


def causal_distance(model: CausalSpaceModel, e1: str, e2: str) -> float:
    """Translation distance ||v(e1) + r_causal - v(e2)||_2."""
    return float(np.linalg.norm(model.vector(e1) + model.r_causal - model.vector(e2)))


LemmaPair = tuple[str, str]


def hinge_objective(
    model: CausalSpaceModel, matched: Sequence[tuple[LemmaPair, LemmaPair]]
) -> float:
    """Sum of [margin + d(causal) - d(non-causal)]_+ over matched pair couples."""
    total = 0.0
    for (c1, c2), (n1, n2) in matched:
        total += max(0.0, model.margin + causal_distance(model, c1, c2) - causal_distance(model, n1, n2))
    return total


def hinge_gradients(
    model: CausalSpaceModel, matched: Sequence[tuple[LemmaPair, LemmaPair]], eps: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of hinge_objective w.r.t. (vectors, r_causal)."""
    g_vec = np.zeros_like(model.vectors)
    g_r = np.zeros_like(model.r_causal)
    idx = model._index
    for (c1, c2), (n1, n2) in matched:
        u_c = model.vector(c1) + model.r_causal - model.vector(c2)
        u_n = model.vector(n1) + model.r_causal - model.vector(n2)
        d_c = np.linalg.norm(u_c)
        d_n = np.linalg.norm(u_n)
        if model.margin + d_c - d_n <= 0.0:
            continue
        gc = u_c / max(d_c, eps)
        gn = u_n / max(d_n, eps)
        g_vec[idx[c1]] += gc
        g_vec[idx[c2]] -= gc
        g_r += gc
        g_vec[idx[n1]] -= gn
        g_vec[idx[n2]] += gn
        g_r -= gn
    return g_vec, g_r


def _matched_schedule(
    n_causal: int, n_noncausal: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Round-robin (causal index, non-causal index) couples for one epoch, shuffled."""
    steps = max(n_causal, n_noncausal)
    couples = [(i % n_causal, i % n_noncausal) for i in range(steps)]
    rng.shuffle(couples)
    return couples


def train_causal_space(
    causal: Sequence[CandidatePair],
    noncausal: Sequence[CandidatePair],
    dims: int = 50,
    margin: float = 1.0,
    epochs: int = 100,
    lr: float = 0.05,
    seed: int = 0,
) -> CausalSpaceModel:
    """SGD on the margin-ranking objective; event vectors re-normalized each epoch.

    Each epoch pairs positives with negatives round-robin in a seeded shuffled
    order and takes one hinge step per couple. Deterministic given the seed.
    """
    if not causal or not noncausal:
        raise ConfigurationError("both causal and non-causal training pair sets must be non-empty")
    if dims < 2:
        raise ConfigurationError(f"dims must be >= 2, got {dims}")
    lemmas = sorted(
        {p.e1 for p in causal} | {p.e2 for p in causal} | {p.e1 for p in noncausal} | {p.e2 for p in noncausal}
    )
    model = init_causal_space(lemmas, dims=dims, margin=margin, seed=seed)
    c_pairs = [(p.e1, p.e2) for p in causal]
    n_pairs = [(p.e1, p.e2) for p in noncausal]
    rng = np.random.default_rng(seed + 1)
    eval_couples = [(c_pairs[i], n_pairs[j]) for i, j in _matched_schedule(len(c_pairs), len(n_pairs), np.random.default_rng(seed + 2))]
    model.loss_history.append(hinge_objective(model, eval_couples))
    for _ in range(epochs):
        for ci, ni in _matched_schedule(len(c_pairs), len(n_pairs), rng):
            couple = [(c_pairs[ci], n_pairs[ni])]
            g_vec, g_r = hinge_gradients(model, couple)
            model.vectors -= lr * g_vec
            model.r_causal -= lr * g_r
        norms = np.linalg.norm(model.vectors, axis=1, keepdims=True)
        model.vectors /= np.maximum(norms, 1e-12)
        model.loss_history.append(hinge_objective(model, eval_couples))
    return model


class SelectionReport(NamedTuple):
    dropped_oov: int
    composition: dict[str, dict[str, int]]  # label -> provenance -> count


class SelectionResult(NamedTuple):
    causal: list[CandidatePair]
    noncausal: list[CandidatePair]
    report: SelectionReport


def rank_and_select(
    pairs: Sequence[CandidatePair], model: CausalSpaceModel, alpha: float
) -> SelectionResult:
    """Keep the closest alpha fraction as causal and the farthest as non-causal.

    Pairs are sorted ascending by causal distance (ties broken by lemma pair,
    then origin id and provenance, so permutations of the input are
    irrelevant); the first and last floor(alpha*N) entries are relabeled.
    Out-of-vocabulary pairs are dropped and counted in the report.
    """
    if not (0.0 < alpha <= 0.5):
        raise ConfigurationError(f"alpha must be in (0, 0.5], got {alpha}")
    scored = []
    dropped = 0
    for pair in pairs:
        if pair.e1 not in model or pair.e2 not in model:
            dropped += 1
            continue
        scored.append((causal_distance(model, pair.e1, pair.e2), pair))
    scored.sort(key=lambda item: (item[0],) + item[1].sort_key())
    take = int(alpha * len(scored))
    causal_sel = [replace(p, provisional_label=CAUSAL) for _, p in scored[:take]]
    noncausal_sel = [
        replace(p, provisional_label=NON_CAUSAL) for _, p in scored[len(scored) - take :]
    ]
    composition: dict[str, dict[str, int]] = {CAUSAL: {}, NON_CAUSAL: {}}
    for label, selected in ((CAUSAL, causal_sel), (NON_CAUSAL, noncausal_sel)):
        for p in selected:
            composition[label][p.provenance] = composition[label].get(p.provenance, 0) + 1
    if dropped:
        log.info("rank_and_select dropped %d out-of-vocabulary pairs", dropped)
    return SelectionResult(causal_sel, noncausal_sel, SelectionReport(dropped, composition))


def selected_pairs_to_jsonl(
    selected: Iterable[CandidatePair], model: CausalSpaceModel
) -> list[str]:
    """Serialize selected pairs to the exchange JSONL rows."""
    rows = []
    for p in selected:
        rows.append(
            json.dumps(
                {
                    "e1": p.e1,
                    "e2": p.e2,
                    "label": p.provisional_label,
                    "distance": causal_distance(model, p.e1, p.e2),
                    "provenance": p.provenance,
                    "origin_id": p.origin.id,
                    "source_e1": p.source_e1,
                    "source_e2": p.source_e2,
                },
                sort_keys=True,
            )
        )
    return rows
