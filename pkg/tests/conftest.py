"""Shared fixtures and hypothesis strategies."""

from __future__ import annotations

import hypothesis.strategies as st
import numpy as np

from causalaug.corpus import (
    AnnotatedExample,
    EntityMention,
    EventMention,
    Relation,
)

WORDS = ["the", "a", "storm", "hit", "town", "people", "fled", "after", "news", "of", "it"]


class StubBackend:
    """Hand-scriptable EncoderBackend for oracle tests.

    ``vector_table`` maps tokens to fixed context-free vectors;
    ``fill_table`` maps absolute positions to (token, prob) with leftover
    probability parked on [UNK]; ``delta_token`` makes every mask fill
    with that token at probability 1.  ``fill_hook`` may rewrite the
    (token, prob) choice based on the current token state.
    """

    def __init__(self, vocab, dim=4, vector_table=None, fill_table=None,
                 delta_token=None, fill_hook=None):
        self.vocab = vocab
        self._dim = dim
        self.vector_table = dict(vector_table or {})
        self.fill_table = dict(fill_table or {})
        self.delta_token = delta_token
        self.fill_hook = fill_hook
        self.calls = []

    @property
    def dim(self):
        return self._dim

    def token_vectors(self, tokens):
        return np.stack(
            [np.asarray(self.vector_table.get(t, np.zeros(self._dim)), dtype=float) for t in tokens]
        )

    def sentence_vector(self, tokens):
        return self.token_vectors(tokens).mean(axis=0)

    def fill_distribution(self, tokens, positions):
        self.calls.append((tuple(tokens), tuple(positions)))
        rows = []
        for pos in positions:
            if self.delta_token is not None:
                token, prob = self.delta_token, 1.0
            else:
                token, prob = self.fill_table[pos]
            if self.fill_hook is not None:
                token, prob = self.fill_hook(tuple(tokens), pos, token, prob)
            dist = np.zeros(len(self.vocab))
            dist[self.vocab.id_of(token)] = prob
            dist[1] += 1.0 - prob  # remainder on [UNK], excluded from argmax
            rows.append(dist)
        return np.stack(rows)


def make_example(
    ex_id="ex1",
    topic="t1",
    tokens=("the", "attack", "on", "the", "village", "caused", "many", "deaths", "."),
    events=(("ev1", (1, 2), "attack"), ("ev2", (7, 8), "death")),
    entities=(("en1", (4, 5), "LOC"),),
    relations=(("ev1", "ev2", "causal"),),
) -> AnnotatedExample:
    return AnnotatedExample(
        id=ex_id,
        topic=topic,
        tokens=tuple(tokens),
        events=tuple(EventMention(i, s, l) for i, s, l in events),
        entities=tuple(EntityMention(i, s, t) for i, s, t in entities),
        relations=tuple(Relation(a, b, lab) for a, b, lab in relations),
    )


@st.composite
def annotated_examples(draw):
    """Random small valid AnnotatedExamples (non-overlapping mentions)."""
    n_tokens = draw(st.integers(min_value=4, max_value=14))
    tokens = tuple(draw(st.sampled_from(WORDS)) for _ in range(n_tokens))
    # Carve up [0, n_tokens) into candidate single-token mention slots.
    slots = draw(
        st.lists(st.integers(min_value=0, max_value=n_tokens - 1), min_size=0, max_size=5, unique=True)
    )
    slots.sort()
    n_events = draw(st.integers(min_value=0, max_value=len(slots)))
    events = tuple(
        EventMention(f"ev{i}", (pos, pos + 1), draw(st.sampled_from(["fall", "rise", "hit"])))
        for i, pos in enumerate(slots[:n_events])
    )
    entities = tuple(
        EntityMention(f"en{i}", (pos, pos + 1), draw(st.sampled_from(["PER", "LOC"])))
        for i, pos in enumerate(slots[n_events:])
    )
    relations = []
    if len(events) >= 2:
        n_rel = draw(st.integers(min_value=0, max_value=2))
        for j in range(n_rel):
            a, b = draw(
                st.tuples(st.sampled_from(events), st.sampled_from(events)).filter(
                    lambda ab: ab[0].id != ab[1].id
                )
            )
            relations.append(Relation(a.id, b.id, draw(st.sampled_from(["causal", "non-causal"]))))
    ex = AnnotatedExample(
        id=draw(st.uuids()).hex[:8],
        topic=draw(st.sampled_from(["t1", "t2", "t3"])),
        tokens=tokens,
        events=events,
        entities=entities,
        relations=tuple(relations),
    )
    ex.validate()
    return ex
