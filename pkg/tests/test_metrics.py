import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causalaug.corpus import CAUSAL, NON_CAUSAL, PairExample
from causalaug.errors import ValidationError
from causalaug.metrics import MetricsReport, bleu_diversity, evaluate, prf
from causalaug.models import (
    FeatureExtractor,
    IdentifierModel,
    Vocabulary,
    build_backend,
    identify_batch,
    predicted_label,
)

VOCAB = Vocabulary.build(["storm", "fire", "flood", "because", "while", "the"])


def make_pair(uid, e1="storm", e2="fire", label=CAUSAL, connective="because"):
    tokens = ("the", e1, connective, "the", e2)
    return PairExample(uid=uid, tokens=tokens, e1_span=(1, 2), e2_span=(4, 5),
                       e1_lemma=e1, e2_lemma=e2, label=label)


class TestPrf:
    def test_forced_counts(self):
        p, r, f1 = prf(tp=2, fp=1, fn=2)
        assert p == pytest.approx(0.6667, abs=5e-5)
        assert r == pytest.approx(0.5, abs=1e-12)
        assert f1 == pytest.approx(0.5714, abs=5e-5)

    def test_perfect(self):
        assert prf(10, 0, 0) == (1.0, 1.0, 1.0)

    def test_zero_denominators(self):
        assert prf(0, 0, 0) == (0.0, 0.0, 0.0)
        assert prf(0, 5, 0) == (0.0, 0.0, 0.0)
        assert prf(0, 0, 5) == (0.0, 0.0, 0.0)

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_f1_identity(self, tp, fp, fn):
        p, r, f1 = prf(tp, fp, fn)
        if p + r > 0:
            assert f1 == pytest.approx(2 * p * r / (p + r), abs=1e-12)
        else:
            assert f1 == 0.0


class TestEvaluate:
    def test_perfect_identifier_by_construction(self):
        # zero-head model predicts non-causal everywhere; all-non-causal gold
        model = IdentifierModel(build_backend(VOCAB, dim=8, seed=0),
                                FeatureExtractor(None), hidden=8)
        for layer in (model.head[-1],):
            import torch
            torch.nn.init.zeros_(layer.weight)
            torch.nn.init.zeros_(layer.bias)
        pairs = [make_pair(f"p{i}", label=NON_CAUSAL) for i in range(6)]
        report = evaluate(model, pairs)
        # no causal predictions and no causal gold: all three conventions at 0
        assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)

    def test_matches_confusion_matrix_oracle(self):
        model = IdentifierModel(build_backend(VOCAB, dim=16, seed=3),
                                FeatureExtractor(None), hidden=16)
        rng = np.random.default_rng(4)
        lemmas = ["storm", "fire", "flood"]
        pairs = []
        for i in range(50):
            e1, e2 = rng.choice(lemmas, size=2, replace=False)
            label = CAUSAL if rng.uniform() < 0.5 else NON_CAUSAL
            connective = "because" if rng.uniform() < 0.5 else "while"
            pairs.append(make_pair(f"p{i}", str(e1), str(e2), label, connective))
        report = evaluate(model, pairs)
        tp = fp = fn = 0
        for pair, probs in zip(pairs, identify_batch(model, pairs)):
            predicted = predicted_label(*probs)
            tp += predicted == CAUSAL and pair.label == CAUSAL
            fp += predicted == CAUSAL and pair.label == NON_CAUSAL
            fn += predicted == NON_CAUSAL and pair.label == CAUSAL
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        assert report.precision == pytest.approx(p, abs=1e-12)
        assert report.recall == pytest.approx(r, abs=1e-12)

    def test_empty_or_unlabeled_rejected(self):
        model = IdentifierModel(build_backend(VOCAB, dim=8, seed=0),
                                FeatureExtractor(None), hidden=8)
        with pytest.raises(ValidationError):
            evaluate(model, [])
        bare = PairExample(uid="u", tokens=("the", "storm"), e1_span=(0, 1),
                           e2_span=(1, 2), e1_lemma="the", e2_lemma="storm")
        with pytest.raises(ValidationError):
            evaluate(model, [bare])

    def test_report_serializes(self):
        report = MetricsReport(precision=0.5, recall=0.25, f1=1 / 3)
        assert report.to_json_dict() == {
            "precision": 0.5, "recall": 0.25, "f1": 1 / 3, "folds": [],
        }


class TestBleuDiversity:
    def test_identical_corpora_score_one(self):
        corpus = [["the", "storm", "hit", "the", "town"], ["fire", "spread", "fast"]]
        assert bleu_diversity(corpus, corpus) == pytest.approx(1.0, abs=1e-12)

    def test_zero_overlap_scores_zero(self):
        assert bleu_diversity([["a", "b", "c"]], [["x", "y", "z"]]) == 0.0

    def test_hand_computed_single_pair(self):
        # candidate a b c d e vs reference a b c d f:
        # p1..p4 = 4/5, 3/4, 2/3, 1/2; equal lengths so no brevity penalty
        got = bleu_diversity([["a", "b", "c", "d", "e"]], [["a", "b", "c", "d", "f"]])
        expected = (0.8 * 0.75 * (2 / 3) * 0.5) ** 0.25
        assert got == pytest.approx(expected, abs=1e-9)

    def test_hand_computed_corpus_with_vacuous_orders(self):
        # pooled 1-grams: 2 matches / 3 guesses; 2-grams: 1/1; 3- and 4-grams
        # have no guesses and drop out; lengths equal
        got = bleu_diversity([["a", "b"], ["c"]], [["a", "b"], ["d"]])
        assert got == pytest.approx((2 / 3) ** 0.25, abs=1e-9)

    def test_brevity_penalty(self):
        got = bleu_diversity([["a"]], [["a", "b"]])
        assert got == pytest.approx(math.exp(1 - 2 / 1), abs=1e-12)

    def test_empty_candidate_contributes_nothing(self):
        got = bleu_diversity([[], ["a", "b"]], [["a"], ["a", "b"]])
        # 1-grams pooled: 2/2; 2-grams: 1/1; brevity: c=2 < r=3
        assert got == pytest.approx(math.exp(1 - 3 / 2), abs=1e-9)

    def test_all_empty_candidates_score_zero(self):
        assert bleu_diversity([[]], [["a"]]) == 0.0

    def test_shape_errors(self):
        with pytest.raises(ValidationError):
            bleu_diversity([], [])
        with pytest.raises(ValidationError):
            bleu_diversity([["a"]], [["a"], ["b"]])
