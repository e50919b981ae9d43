"""Bundled synthetic corpus generator.

Template sentences over a small event vocabulary where the causal label of an
event pair depends only on the lemmas: a pair is causal exactly when both
lemmas are "core" incident events, never when a "background" event is
involved. Each sentence carries three events with the roles shuffled across
slot positions, so neither the template wording nor the span geometry
predicts the label of any single pair.

Held-out topics use a parallel synonym vocabulary that never occurs in the
training topics; a lexicon file maps each base lemma to its synonym and a
file of raw connective sentences mentions the synonyms, so the acquisition
stages can bridge the gap that the annotated training data cannot.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from causalaug.config import PipelineConfig, dump_config
from causalaug.corpus import (
    CAUSAL,
    AnnotatedExample,
    EntityMention,
    EventMention,
    Relation,
    save_corpus,
)

CORE_BASE = ("quake", "storm", "blast", "strike", "crash", "riot")
CORE_SYN = ("tremor", "tempest", "explosion", "walkout", "wreck", "uproar")
NEUTRAL_BASE = ("meeting", "concert", "parade", "market", "festival", "lecture")
NEUTRAL_SYN = ("assembly", "recital", "procession", "bazaar", "carnival", "seminar")

SYNONYM = dict(zip(CORE_BASE + NEUTRAL_BASE, CORE_SYN + NEUTRAL_SYN))

ENTITY_SURFACES = ("village", "town", "city", "harbor")
EXTRA_ENTITY_SURFACES = ("port", "station")
ENTITY_TYPE = "LOC"

# slot placeholders: A/B/C are events, ENT is the entity
SENTENCE_TEMPLATES = (
    (CAUSAL, ("the", "A", "near", "the", "ENT", "caused", "the", "B",
              "during", "the", "C", ".")),
    (CAUSAL, ("a", "A", "at", "the", "ENT", "led", "to", "the", "B",
              "after", "the", "C", ".")),
    ("non-causal", ("the", "A", "and", "the", "B", "continued", "near",
                    "the", "ENT", "before", "the", "C", ".")),
    ("non-causal", ("a", "A", "followed", "the", "B", "at", "the", "ENT",
                    "during", "a", "C", ".")),
)

RAW_TEMPLATES = (
    (CAUSAL, ("the", "X", "happened", "because", "the", "Y", "happened", ".")),
    ("non-causal", ("the", "X", "continued", "while", "the", "Y", "continued", ".")),
)

CONNECTIVES = (("because", "causal"), ("while", "non-causal"))


@dataclass(frozen=True)
class BundlePaths:
    corpus: Path
    lexicon: Path
    connectives: Path
    raw_docs: Path
    entity_candidates: Path
    config: Path


def _sentence(sid: str, topic: str, template_idx: int, roles: tuple[str, str, str],
              causal_slots: tuple[int, int] | None, entity: str) -> AnnotatedExample:
    """Instantiate one template; `roles` are the lemmas for slots A, B, C and
    `causal_slots` names the (cause, effect) slot indices, if any."""
    kind, template = SENTENCE_TEMPLATES[template_idx]
    slot_lemma = dict(zip("ABC", roles))
    tokens: list[str] = []
    events: list[EventMention] = []
    entities: list[EntityMention] = []
    slot_event: dict[str, str] = {}
    for piece in template:
        if piece in slot_lemma:
            event_id = f"ev{len(events) + 1}"
            lemma = slot_lemma[piece]
            events.append(EventMention(id=event_id,
                                       span=(len(tokens), len(tokens) + 1),
                                       lemma=lemma))
            slot_event[piece] = event_id
            tokens.append(lemma)
        elif piece == "ENT":
            entities.append(EntityMention(id="en1",
                                          span=(len(tokens), len(tokens) + 1),
                                          type=ENTITY_TYPE))
            tokens.append(entity)
        else:
            tokens.append(piece)
    relations: tuple[Relation, ...] = ()
    if causal_slots is not None:
        cause_slot, effect_slot = ("ABC"[causal_slots[0]], "ABC"[causal_slots[1]])
        relations = (Relation(e1=slot_event[cause_slot], e2=slot_event[effect_slot],
                              label=CAUSAL),)
    assert (kind == CAUSAL) == (causal_slots is not None)
    return AnnotatedExample(id=sid, topic=topic, tokens=tuple(tokens),
                            events=tuple(events), entities=tuple(entities),
                            relations=relations)


def _topic_sentences(topic: str, count: int, cores: tuple[str, ...],
                     neutrals: tuple[str, ...], rng: np.random.Generator
                     ) -> list[AnnotatedExample]:
    sentences = []
    for i in range(count):
        causal_sentence = i % 2 == 0
        template_idx = rng.integers(0, 2) if causal_sentence else 2 + rng.integers(0, 2)
        entity = ENTITY_SURFACES[rng.integers(0, len(ENTITY_SURFACES))]
        permutation = tuple(int(p) for p in rng.permutation(3))
        if causal_sentence:
            core_pair = rng.choice(len(cores), size=2, replace=False)
            drawn = (cores[core_pair[0]], cores[core_pair[1]],
                     neutrals[rng.integers(0, len(neutrals))])
            roles = [None, None, None]
            for role_idx, slot_idx in enumerate(permutation):
                roles[slot_idx] = drawn[role_idx]
            causal_slots = (permutation[0], permutation[1])
        else:
            neutral_pair = rng.choice(len(neutrals), size=2, replace=False)
            drawn = (cores[rng.integers(0, len(cores))],
                     neutrals[neutral_pair[0]], neutrals[neutral_pair[1]])
            roles = [None, None, None]
            for role_idx, slot_idx in enumerate(permutation):
                roles[slot_idx] = drawn[role_idx]
            causal_slots = None
        sentences.append(_sentence(
            sid=f"{topic}-s{i:03d}", topic=topic, template_idx=int(template_idx),
            roles=tuple(roles), causal_slots=causal_slots, entity=entity,
        ))
    return sentences


def _raw_documents(count: int, rng: np.random.Generator) -> list[AnnotatedExample]:
    """Connective sentences over the synonym vocabulary only."""
    docs = []
    for i in range(count):
        causal_sentence = i % 2 == 0
        kind, template = RAW_TEMPLATES[0 if causal_sentence else 1]
        if causal_sentence:
            pair = rng.choice(len(CORE_SYN), size=2, replace=False)
            x, y = CORE_SYN[pair[0]], CORE_SYN[pair[1]]
        else:
            mode = rng.integers(0, 3)
            if mode == 0:
                x = CORE_SYN[rng.integers(0, len(CORE_SYN))]
                y = NEUTRAL_SYN[rng.integers(0, len(NEUTRAL_SYN))]
            elif mode == 1:
                x = NEUTRAL_SYN[rng.integers(0, len(NEUTRAL_SYN))]
                y = CORE_SYN[rng.integers(0, len(CORE_SYN))]
            else:
                pair = rng.choice(len(NEUTRAL_SYN), size=2, replace=False)
                x, y = NEUTRAL_SYN[pair[0]], NEUTRAL_SYN[pair[1]]
        tokens = []
        events = []
        for piece in template:
            if piece in ("X", "Y"):
                lemma = x if piece == "X" else y
                events.append(EventMention(id=f"ev{len(events) + 1}",
                                           span=(len(tokens), len(tokens) + 1),
                                           lemma=lemma))
                tokens.append(lemma)
            else:
                tokens.append(piece)
        docs.append(AnnotatedExample(id=f"raw-s{i:03d}", topic="raw",
                                     tokens=tuple(tokens), events=tuple(events),
                                     entities=(), relations=()))
    return docs


def build_corpus(seed: int = 13, train_topics: int = 8,
                 sentences_per_train_topic: int = 40, dev_topic_count: int = 2,
                 sentences_per_dev_topic: int = 20, test_topic_count: int = 2,
                 sentences_per_test_topic: int = 50, raw_sentences: int = 160,
                 ) -> tuple[list[AnnotatedExample], list[AnnotatedExample],
                            tuple[str, ...], tuple[str, ...]]:
    """Returns (annotated corpus, raw connective docs, dev topics, test topics)."""
    rng = np.random.default_rng(seed)
    corpus: list[AnnotatedExample] = []
    for t in range(train_topics):
        corpus.extend(_topic_sentences(f"t{t + 1:02d}", sentences_per_train_topic,
                                       CORE_BASE, NEUTRAL_BASE, rng))
    dev = tuple(f"d{t + 1:02d}" for t in range(dev_topic_count))
    for topic in dev:
        corpus.extend(_topic_sentences(topic, sentences_per_dev_topic,
                                       CORE_BASE, NEUTRAL_BASE, rng))
    test = tuple(f"x{t + 1:02d}" for t in range(test_topic_count))
    for topic in test:
        corpus.extend(_topic_sentences(topic, sentences_per_test_topic,
                                       CORE_SYN, NEUTRAL_SYN, rng))
    raw = _raw_documents(raw_sentences, rng)
    return corpus, raw, dev, test


def desk_config(bundle_dir: str | Path, *, seed: int = 0,
                out_dir: str | Path | None = None) -> PipelineConfig:
    """Hyperparameters sized for the bundled corpus on a CPU."""
    bundle_dir = Path(bundle_dir)
    return PipelineConfig(
        seed=seed,
        corpus=str(bundle_dir / "corpus.jsonl"),
        lexicon=str(bundle_dir / "lexicon.tsv"),
        connectives=str(bundle_dir / "connectives.tsv"),
        raw_docs=str(bundle_dir / "raw_docs.jsonl"),
        entity_candidates=str(bundle_dir / "entity_candidates.tsv"),
        out_dir=str(out_dir if out_dir is not None else bundle_dir / "out"),
        k=2,
        dev_topics=("d01", "d02"),
        test_topics=("x01", "x02"),
        dims=16,
        margin=1.0,
        space_epochs=40,
        space_lr=0.05,
        alpha=0.15,
        dim=24,
        layers=2,
        max_len=24,
        hidden=32,
        pretrain_epochs=20,
        lr_pretrain=5e-3,
        batch_size=16,
        eta=1e-3,
        max_rounds=3,
        patience=2,
        dual_max_pairs=48,
        m=20,
        mu=0.2,
        beta=0.5,
        max_candidates_per_pair=2,
        ratio="1:2",
        neg_rate=0.5,
        final_epochs=20,
        lr_further=2e-3,
    )


def write_bundle(out_dir: str | Path, *, seed: int = 13, **corpus_kwargs) -> BundlePaths:
    """Write the corpus, lexicon, connective list, raw docs, entity candidates
    and a ready-to-run JSON config into `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus, raw, dev, test = build_corpus(seed=seed, **corpus_kwargs)
    paths = BundlePaths(
        corpus=out_dir / "corpus.jsonl",
        lexicon=out_dir / "lexicon.tsv",
        connectives=out_dir / "connectives.tsv",
        raw_docs=out_dir / "raw_docs.jsonl",
        entity_candidates=out_dir / "entity_candidates.tsv",
        config=out_dir / "config.json",
    )
    save_corpus(corpus, paths.corpus)
    save_corpus(raw, paths.raw_docs)
    lexicon_rows = [f"{base}\tsynonym\t{syn}" for base, syn in sorted(SYNONYM.items())]
    paths.lexicon.write_text("\n".join(lexicon_rows) + "\n", encoding="utf-8")
    connective_rows = [f"{surface}\t{label}" for surface, label in CONNECTIVES]
    paths.connectives.write_text("\n".join(connective_rows) + "\n", encoding="utf-8")
    entity_rows = [f"{surface}\t{ENTITY_TYPE}"
                   for surface in sorted(ENTITY_SURFACES + EXTRA_ENTITY_SURFACES)]
    paths.entity_candidates.write_text("\n".join(entity_rows) + "\n", encoding="utf-8")
    # bare filenames keep the bundle relocatable: load_config resolves them
    # against the config file's own directory
    config = desk_config(Path("."))
    if config.dev_topics != dev or config.test_topics != test:
        config = config.replaced(dev_topics=dev, test_topics=test)
    dump_config(config, paths.config)
    return paths
