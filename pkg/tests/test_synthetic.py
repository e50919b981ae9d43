"""Synthetic bundle invariants: the corpus must reward lemma knowledge and
nothing else, and the bundle must be byte-reproducible."""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

import pytest

from causalaug.corpus import CAUSAL, NON_CAUSAL, load_corpus, pair_examples
from causalaug.generation import EntityCandidateSet
from causalaug.knowledge import ConnectivePatternSet, LexiconAdapter
from causalaug.config import load_config
from causalaug.synthetic import (
    CORE_BASE,
    CORE_SYN,
    NEUTRAL_BASE,
    NEUTRAL_SYN,
    SYNONYM,
    build_corpus,
    write_bundle,
)

BASE_LEMMAS = set(CORE_BASE) | set(NEUTRAL_BASE)
SYN_LEMMAS = set(CORE_SYN) | set(NEUTRAL_SYN)


@pytest.fixture(scope="module")
def default_corpus():
    return build_corpus(seed=13)


def groups_for(topic):
    """Training and dev topics use the base vocabulary, test topics the synonyms."""
    if topic.startswith("x"):
        return set(CORE_SYN), set(NEUTRAL_SYN)
    return set(CORE_BASE), set(NEUTRAL_BASE)


class TestCorpusShape:
    def test_default_sizes(self, default_corpus):
        corpus, raw, dev, test = default_corpus
        assert len(corpus) == 8 * 40 + 2 * 20 + 2 * 50
        assert len(raw) == 160
        assert dev == ("d01", "d02")
        assert test == ("x01", "x02")
        assert len({ex.id for ex in corpus + raw}) == len(corpus) + len(raw)

    def test_every_sentence_is_well_formed(self, default_corpus):
        corpus, _, _, _ = default_corpus
        for ex in corpus:
            ex.validate()
            assert len(ex.events) == 3
            assert len(ex.entities) == 1
            assert len(ex.relations) in (0, 1)

    def test_causal_label_depends_only_on_lemma_groups(self, default_corpus):
        corpus, _, _, _ = default_corpus
        for ex in corpus:
            cores, neutrals = groups_for(ex.topic)
            for pair in pair_examples(ex):
                both_core = pair.e1_lemma in cores and pair.e2_lemma in cores
                assert pair.label == (CAUSAL if both_core else NON_CAUSAL), pair.uid
                assert {pair.e1_lemma, pair.e2_lemma} <= cores | neutrals

    def test_span_positions_are_uninformative(self, default_corpus):
        # the causal pair must land on every unordered event-position combo
        corpus, _, _, _ = default_corpus
        combos = Counter()
        for ex in corpus:
            if not ex.relations:
                continue
            order = {ev.id: i for i, ev in
                     enumerate(sorted(ex.events, key=lambda e: e.span))}
            rel = ex.relations[0]
            combos[frozenset((order[rel.e1], order[rel.e2]))] += 1
        assert set(combos) == {frozenset(c) for c in ((0, 1), (0, 2), (1, 2))}
        total = sum(combos.values())
        for combo, count in combos.items():
            assert 0.2 < count / total < 0.47, combo

    def test_cause_appears_on_both_sides_of_effect(self, default_corpus):
        corpus, _, _, _ = default_corpus
        before = after = 0
        for ex in corpus:
            for rel in ex.relations:
                spans = {ev.id: ev.span for ev in ex.events}
                if spans[rel.e1] < spans[rel.e2]:
                    before += 1
                else:
                    after += 1
        assert before > 0 and after > 0


class TestVocabularySplit:
    def test_training_topics_never_use_synonyms(self, default_corpus):
        corpus, _, _, _ = default_corpus
        seen = set()
        for ex in corpus:
            if not ex.topic.startswith("x"):
                seen.update(ex.tokens)
        assert not seen & SYN_LEMMAS

    def test_test_topics_use_only_synonym_lemmas(self, default_corpus):
        corpus, _, _, test = default_corpus
        for ex in corpus:
            if ex.topic in test:
                lemmas = {ev.lemma for ev in ex.events}
                assert lemmas <= SYN_LEMMAS
                assert not lemmas & BASE_LEMMAS

    def test_raw_docs_bridge_the_synonym_gap(self, default_corpus):
        _, raw, _, _ = default_corpus
        mentioned = set()
        for ex in raw:
            assert ex.topic == "raw"
            lemmas = {ev.lemma for ev in ex.events}
            assert lemmas <= SYN_LEMMAS
            mentioned |= lemmas
            connectives = [t for t in ex.tokens if t in ("because", "while")]
            assert len(connectives) == 1
        # every synonym the test topics rely on is observable in raw text
        assert set(CORE_SYN) <= mentioned

    def test_raw_connective_matches_pair_kind(self, default_corpus):
        _, raw, _, _ = default_corpus
        for ex in raw:
            both_core = all(ev.lemma in CORE_SYN for ev in ex.events)
            assert ("because" in ex.tokens) == both_core


class TestBundleFiles:
    def test_files_parse_with_package_loaders(self, tmp_path):
        paths = write_bundle(tmp_path, seed=13, train_topics=2,
                             sentences_per_train_topic=4, sentences_per_dev_topic=2,
                             sentences_per_test_topic=2, raw_sentences=4)
        corpus = load_corpus(paths.corpus)
        raw = load_corpus(paths.raw_docs)
        assert corpus and raw
        lexicon = LexiconAdapter.load(paths.lexicon)
        for base, syn in SYNONYM.items():
            assert lexicon.expansions(base) == (syn,)
        patterns = ConnectivePatternSet.load(paths.connectives)
        assert len(patterns.connectives) == 2
        entities = EntityCandidateSet.load(paths.entity_candidates)
        assert len(entities.entries) >= 4
        config = load_config(paths.config)
        assert config.dev_topics == ("d01", "d02")
        assert config.test_topics == ("x01", "x02")
        assert config.corpus == str(paths.corpus)

    def test_bundle_is_byte_deterministic(self, tmp_path):
        kwargs = dict(seed=13, train_topics=2, sentences_per_train_topic=4,
                      sentences_per_dev_topic=2, sentences_per_test_topic=2,
                      raw_sentences=4)
        a = write_bundle(tmp_path / "a", **kwargs)
        b = write_bundle(tmp_path / "b", **kwargs)
        for name in ("corpus", "raw_docs", "lexicon", "connectives",
                     "entity_candidates", "config"):
            assert getattr(a, name).read_bytes() == getattr(b, name).read_bytes(), name

    def test_bundle_is_relocatable(self, tmp_path, monkeypatch):
        # the stored config must not bake in the creation-time directory
        paths = write_bundle(tmp_path / "bundle", seed=13, train_topics=2,
                             sentences_per_train_topic=4, sentences_per_dev_topic=2,
                             sentences_per_test_topic=2, raw_sentences=4)
        stored = json.loads(paths.config.read_text(encoding="utf-8"))
        assert stored["corpus"] == "corpus.jsonl"
        elsewhere = tmp_path / "elsewhere"
        elsewhere.mkdir()
        monkeypatch.chdir(elsewhere)
        config = load_config(paths.config)
        for field in ("corpus", "raw_docs", "lexicon", "connectives",
                      "entity_candidates"):
            assert Path(getattr(config, field)).is_file(), field

    def test_seed_changes_the_corpus(self, tmp_path):
        kwargs = dict(train_topics=2, sentences_per_train_topic=4,
                      sentences_per_dev_topic=2, sentences_per_test_topic=2,
                      raw_sentences=4)
        a = write_bundle(tmp_path / "a", seed=13, **kwargs)
        b = write_bundle(tmp_path / "b", seed=14, **kwargs)
        assert a.corpus.read_bytes() != b.corpus.read_bytes()
