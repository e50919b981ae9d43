"""Evaluation: precision/recall/F1 with causal as the positive class, and a
corpus-level BLEU-4 diversity measure for generated sentences."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from causalaug.corpus import CAUSAL, PairExample
from causalaug.errors import ValidationError
from causalaug.models import IdentifierModel, identify_batch, predicted_label


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    replicate: int
    seed: int
    precision: float
    recall: float
    f1: float

    def to_json_dict(self) -> dict:
        return {
            "fold": self.fold,
            "replicate": self.replicate,
            "seed": self.seed,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    folds: tuple[FoldMetrics, ...] = field(default=())

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "folds": [f.to_json_dict() for f in self.folds],
        }


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """P, R, F1 with every 0/0 defined as 0."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def evaluate(identifier: IdentifierModel, test: Sequence[PairExample]) -> MetricsReport:
    if not test:
        raise ValidationError("cannot evaluate on an empty test set")
    for pair in test:
        if pair.label is None:
            raise ValidationError(f"pair {pair.uid} lacks a gold label")
    tp = fp = fn = 0
    for pair, probs in zip(test, identify_batch(identifier, list(test))):
        predicted = predicted_label(*probs)
        if predicted == CAUSAL and pair.label == CAUSAL:
            tp += 1
        elif predicted == CAUSAL:
            fp += 1
        elif pair.label == CAUSAL:
            fn += 1
    precision, recall, f1 = prf(tp, fp, fn)
    return MetricsReport(precision=precision, recall=recall, f1=f1)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_diversity(generated: Sequence[Sequence[str]],
                   references: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Corpus BLEU with uniform n-gram weights and brevity penalty.

    Pairs are aligned by index.  An n-gram order with no guesses anywhere in
    the corpus is vacuous and drops out as a factor of 1.  Identical corpora
    score exactly 1.0; lower means more diverse output.
    """
    if not generated or not references:
        raise ValidationError("generated and reference lists must be non-empty")
    if len(generated) != len(references):
        raise ValidationError(
            f"{len(generated)} candidates vs {len(references)} references"
        )
    matches = [0] * max_n
    guesses = [0] * max_n
    candidate_len = reference_len = 0
    for cand, ref in zip(generated, references):
        candidate_len += len(cand)
        reference_len += len(ref)
        for n in range(1, max_n + 1):
            cand_grams = _ngrams(cand, n)
            ref_grams = _ngrams(ref, n)
            guesses[n - 1] += sum(cand_grams.values())
            matches[n - 1] += sum(
                min(count, ref_grams[gram]) for gram, count in cand_grams.items()
            )
    log_sum = 0.0
    for match, guess in zip(matches, guesses):
        if guess == 0:
            continue  # vacuous order
        if match == 0:
            return 0.0
        log_sum += math.log(match / guess) / max_n
    if candidate_len == 0:
        return 0.0
    brevity = 1.0 if candidate_len > reference_len else math.exp(1 - reference_len / candidate_len)
    return float(brevity * math.exp(log_sum))
