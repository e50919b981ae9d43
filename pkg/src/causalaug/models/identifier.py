"""Causality identifier: encoder + proxy features + 2-way classification head."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from causalaug.corpus import CAUSAL, NON_CAUSAL, PairExample
from causalaug.errors import ValidationError
from causalaug.knowledge import CausalSpaceModel, causal_distance
from causalaug.models.backend import (
    TorchBackend,
    Vocabulary,
    build_backend,
    pad_batch,
    seed_torch,
)

# Class indices are fixed: 0 = causal, 1 = non-causal.
CLASS_LABELS = (CAUSAL, NON_CAUSAL)

DISTANCE_BUCKET_EDGES = (0.5, 1.0, 1.5, 2.0, 2.5)


class FeatureExtractor:
    """Proxy pair features: shared lemma, token distance, bucketed causal potential, order.

    The causal-potential bucket falls back to a dedicated "unknown" slot when
    no embedding space is attached or a lemma is out of vocabulary, so the
    output dimension is fixed and every value finite.
    """

    def __init__(self, space: CausalSpaceModel | None = None,
                 bucket_edges: Sequence[float] = DISTANCE_BUCKET_EDGES,
                 max_token_distance: int = 20):
        self.space = space
        self.bucket_edges = tuple(bucket_edges)
        self.max_token_distance = max_token_distance

    @property
    def dim(self) -> int:
        # shared-lemma + scaled distance + order flag, then distance buckets + unknown.
        return 3 + len(self.bucket_edges) + 2

    def extract(self, pair: PairExample) -> np.ndarray:
        pair.check_spans()
        out = np.zeros(self.dim, dtype=np.float64)
        out[0] = 1.0 if pair.e1_lemma == pair.e2_lemma else 0.0
        gap = abs(pair.e2_span[0] - pair.e1_span[0])
        out[1] = min(gap, self.max_token_distance) / self.max_token_distance
        out[2] = 1.0 if pair.e1_span[0] <= pair.e2_span[0] else 0.0
        bucket = len(self.bucket_edges) + 1  # unknown
        if (self.space is not None and pair.e1_lemma in self.space
                and pair.e2_lemma in self.space):
            distance = causal_distance(self.space, pair.e1_lemma, pair.e2_lemma)
            bucket = int(np.searchsorted(self.bucket_edges, distance, side="right"))
        out[3 + bucket] = 1.0
        return out


@dataclass
class PairBatch:
    ids: torch.Tensor
    pad_mask: torch.Tensor
    e1_mask: torch.Tensor
    e2_mask: torch.Tensor
    feats: torch.Tensor
    labels: torch.Tensor | None = None


def _span_mean(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    summed = (hidden * mask.unsqueeze(-1)).sum(dim=1)
    return summed / mask.sum(dim=1, keepdim=True)


class IdentifierModel(nn.Module):
    """Classifies an in-sentence event pair as causal or non-causal."""

    def __init__(self, backend: TorchBackend, features: FeatureExtractor, hidden: int = 32):
        super().__init__()
        self._backend = backend
        self.encoder = backend.encoder
        self.features = features
        in_dim = 2 * backend.dim + features.dim
        self.head = nn.Sequential(
            nn.Linear(in_dim, hidden), nn.GELU(), nn.Linear(hidden, 2)
        )

    @property
    def backend(self) -> TorchBackend:
        return self._backend

    @property
    def vocab(self) -> Vocabulary:
        return self._backend.vocab

    def forward(self, batch: PairBatch) -> torch.Tensor:
        hidden = self.encoder(batch.ids, batch.pad_mask)
        e1 = _span_mean(hidden, batch.e1_mask)
        e2 = _span_mean(hidden, batch.e2_mask)
        stacked = torch.cat([e1, e2, batch.feats], dim=1)
        return self.head(stacked)

    def prepare_batch(self, pairs: Sequence[PairExample], with_labels: bool = False) -> PairBatch:
        if not pairs:
            raise ValidationError("cannot build an empty batch")
        dtype = self.head[0].weight.dtype
        ids, pad_mask = pad_batch(self.vocab, [p.tokens for p in pairs])
        width = ids.shape[1]
        e1_mask = torch.zeros((len(pairs), width), dtype=dtype)
        e2_mask = torch.zeros((len(pairs), width), dtype=dtype)
        for i, pair in enumerate(pairs):
            pair.check_spans()
            e1_mask[i, pair.e1_span[0] + 1 : pair.e1_span[1] + 1] = 1.0
            e2_mask[i, pair.e2_span[0] + 1 : pair.e2_span[1] + 1] = 1.0
        feats = torch.tensor(
            np.stack([self.features.extract(p) for p in pairs]), dtype=dtype
        )
        labels = None
        if with_labels:
            indices = []
            for pair in pairs:
                if pair.label not in CLASS_LABELS:
                    raise ValidationError(f"pair {pair.uid} lacks a training label")
                indices.append(CLASS_LABELS.index(pair.label))
            labels = torch.tensor(indices, dtype=torch.long)
        return PairBatch(ids, pad_mask, e1_mask, e2_mask, feats, labels)


def identify(model: IdentifierModel, pair: PairExample) -> tuple[float, float]:
    """(p_causal, p_noncausal); sums to 1."""
    return identify_batch(model, [pair])[0]


def identify_batch(model: IdentifierModel, pairs: Sequence[PairExample]) -> list[tuple[float, float]]:
    model.eval()
    with torch.no_grad():
        logits = model(model.prepare_batch(pairs))
        probs = torch.softmax(logits, dim=1)
    return [(float(p[0]), float(p[1])) for p in probs]


def predicted_label(p_causal: float, p_noncausal: float) -> str:
    # exact tie predicts non-causal
    return CAUSAL if p_causal > p_noncausal else NON_CAUSAL


@dataclass
class IdentifierTrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    negatives_per_epoch: list[int] = field(default_factory=list)
    n_causal: int = 0
    n_noncausal: int = 0
    notes: list[str] = field(default_factory=list)


def _batched(order: Sequence[int], size: int):
    for start in range(0, len(order), size):
        yield order[start : start + size]


def train_identifier(model: IdentifierModel, labeled: Sequence[PairExample], *,
                     epochs: int, lr: float, batch_size: int = 8,
                     neg_rate: float = 1.0, seed: int = 0) -> IdentifierTrainReport:
    """Cross-entropy training; non-causal examples are down-sampled to
    ``floor(neg_rate * n)`` fresh draws each epoch."""
    if not labeled:
        raise ValidationError("no labeled pairs to train on")
    if not 0.0 < neg_rate <= 1.0:
        raise ValidationError(f"negative sampling rate {neg_rate} outside (0, 1]")
    pos = [i for i, p in enumerate(labeled) if p.label == CAUSAL]
    neg = [i for i, p in enumerate(labeled) if p.label == NON_CAUSAL]
    if len(pos) + len(neg) != len(labeled):
        raise ValidationError("every training pair needs a causal or non-causal label")
    report = IdentifierTrainReport(n_causal=len(pos), n_noncausal=len(neg))
    if not pos or not neg:
        warnings.warn("training data contains a single class", stacklevel=2)
        report.notes.append("single-class training data")
    seed_torch(seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    model.train()
    for _ in range(epochs):
        keep = int(neg_rate * len(neg))
        sampled = sorted(rng.choice(len(neg), size=keep, replace=False)) if neg else []
        order = pos + [neg[i] for i in sampled]
        rng.shuffle(order)
        report.negatives_per_epoch.append(keep)
        if not order:
            report.epoch_losses.append(0.0)
            continue
        losses = []
        for chunk in _batched(order, batch_size):
            batch = model.prepare_batch([labeled[i] for i in chunk], with_labels=True)
            loss = nn.functional.cross_entropy(model(batch), batch.labels)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        report.epoch_losses.append(float(np.mean(losses)))
    return report


def pretrain_identifier(labeled: Sequence[PairExample], vocab: Vocabulary, *,
                        space: CausalSpaceModel | None = None,
                        dim: int = 32, layers: int = 2, max_len: int = 64,
                        hidden: int = 32, epochs: int = 30, lr: float = 1e-5,
                        batch_size: int = 8, neg_rate: float = 0.5,
                        seed: int = 0) -> tuple[IdentifierModel, IdentifierTrainReport]:
    backend = build_backend(vocab, dim=dim, layers=layers, max_len=max_len, seed=seed)
    model = IdentifierModel(backend, FeatureExtractor(space), hidden=hidden)
    report = train_identifier(
        model, labeled, epochs=epochs, lr=lr, batch_size=batch_size,
        neg_rate=neg_rate, seed=seed,
    )
    return model, report
