"""Relation-conditioned mask-fill generators and their pre-training."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from causalaug.corpus import CAUSAL, NON_CAUSAL, AnnotatedExample
from causalaug.errors import ConfigurationError, RoutingError, ValidationError
from causalaug.models.backend import (
    CLS_ID,
    MASK_ID,
    MASK_TOKEN,
    PAD_ID,
    SPECIAL_TOKENS,
    EncoderBackend,
    TorchBackend,
    Vocabulary,
    build_backend,
    seed_torch,
)

FILL_ORDERS = ("ltr", "confidence")


@dataclass
class GeneratorPair:
    """One generator per relation label; parameters are independent unless
    ``share_encoder`` tied their encoder bodies at construction time."""

    causal: EncoderBackend
    noncausal: EncoderBackend
    share_encoder: bool = False

    def generator_for(self, relation: str) -> EncoderBackend:
        if relation == CAUSAL:
            return self.causal
        if relation == NON_CAUSAL:
            return self.noncausal
        raise RoutingError(f"unknown relation label: {relation!r}")


class FillResult(NamedTuple):
    tokens: tuple[str, ...]
    fill_positions: tuple[int, ...]          # ascending
    fill_tokens: tuple[str, ...]             # aligned with fill_positions
    fill_probs: tuple[float, ...]            # aligned with fill_positions
    steps: tuple[tuple[int, str], ...]       # actual fill order, for replay


def _argmax_content(dist: np.ndarray) -> tuple[int, float]:
    """Highest-probability non-special token; ties go to the lowest id."""
    masked = np.asarray(dist, dtype=np.float64).copy()
    masked[: len(SPECIAL_TOKENS)] = -np.inf
    token_id = int(np.argmax(masked))
    return token_id, float(dist[token_id])


def fill_masks(generators: GeneratorPair, relation: str,
               skeleton_tokens: Sequence[str], *, order: str = "ltr") -> FillResult:
    """Greedily fill every mask sentinel; unmasked slots are never touched."""
    if order not in FILL_ORDERS:
        raise ConfigurationError(f"unknown fill order {order!r}; expected one of {FILL_ORDERS}")
    backend = generators.generator_for(relation)
    tokens = list(skeleton_tokens)
    mask_positions = [i for i, t in enumerate(tokens) if t == MASK_TOKEN]
    if not mask_positions:
        return FillResult(tuple(tokens), (), (), (), ())
    chosen: dict[int, tuple[str, float]] = {}
    steps: list[tuple[int, str]] = []
    if order == "ltr":
        for pos in mask_positions:
            dist = backend.fill_distribution(tokens, [pos])[0]
            token_id, prob = _argmax_content(dist)
            token = backend.vocab.token_at(token_id)
            tokens[pos] = token
            chosen[pos] = (token, prob)
            steps.append((pos, token))
    else:
        remaining = list(mask_positions)
        while remaining:
            dists = backend.fill_distribution(tokens, remaining)
            best = None  # (-prob, position, token_id): max prob, then leftmost, then lowest id
            for pos, dist in zip(remaining, dists):
                token_id, prob = _argmax_content(dist)
                key = (-prob, pos, token_id)
                if best is None or key < best:
                    best = key
            _, pos, token_id = best
            prob = -best[0]
            token = backend.vocab.token_at(token_id)
            tokens[pos] = token
            chosen[pos] = (token, prob)
            steps.append((pos, token))
            remaining.remove(pos)
    return FillResult(
        tokens=tuple(tokens),
        fill_positions=tuple(mask_positions),
        fill_tokens=tuple(chosen[p][0] for p in mask_positions),
        fill_probs=tuple(chosen[p][1] for p in mask_positions),
        steps=tuple(steps),
    )


def masked_fill_logprob(backend: TorchBackend, skeleton_tokens: Sequence[str],
                        steps: Sequence[tuple[int, str]]) -> torch.Tensor:
    """Differentiable sum of log-probabilities of a recorded fill sequence.

    Replays each step under the same conditioning the filler saw: earlier
    fills are in place, later positions still masked.
    """
    encoder = backend.encoder
    dtype = next(encoder.parameters()).dtype
    total = torch.zeros((), dtype=dtype)
    tokens = list(skeleton_tokens)
    for pos, token in steps:
        if tokens[pos] != MASK_TOKEN:
            raise ValidationError(f"replay step at {pos} does not land on a mask")
        ids = torch.tensor([[CLS_ID] + backend.vocab.encode(tokens)], dtype=torch.long)
        logits = encoder.logits(ids)[0, pos + 1]
        total = total + torch.log_softmax(logits, dim=-1)[backend.vocab.id_of(token)]
        tokens[pos] = token
    return total


def cohesive_positions(example: AnnotatedExample) -> list[int]:
    """Token positions outside every event and entity span."""
    keep: set[int] = set()
    for mention in example.events + example.entities:
        keep.update(range(*mention.span))
    return [i for i in range(len(example.tokens)) if i not in keep]


@dataclass
class GeneratorTrainReport:
    causal_losses: list[float] = field(default_factory=list)
    noncausal_losses: list[float] = field(default_factory=list)
    causal_trained_on: list[str] = field(default_factory=list)
    noncausal_trained_on: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def _mlm_epochs(backend: TorchBackend, rows: list[tuple[tuple[str, ...], list[int]]], *,
                epochs: int, lr: float, batch_size: int, seed: int) -> list[float]:
    encoder = backend.encoder
    vocab = backend.vocab
    optimizer = torch.optim.Adam(encoder.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    encoder.train()
    epoch_losses: list[float] = []
    for _ in range(epochs):
        order = list(range(len(rows)))
        rng.shuffle(order)
        losses = []
        for start in range(0, len(order), batch_size):
            chunk = [rows[i] for i in order[start : start + batch_size]]
            width = 1 + max(len(tokens) for tokens, _ in chunk)
            ids = torch.full((len(chunk), width), PAD_ID, dtype=torch.long)
            pad_mask = torch.ones((len(chunk), width), dtype=torch.bool)
            targets = torch.full((len(chunk), width), -100, dtype=torch.long)
            for i, (tokens, masked) in enumerate(chunk):
                row = [CLS_ID] + vocab.encode(tokens)
                ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
                pad_mask[i, : len(row)] = False
                for pos in masked:
                    ids[i, pos + 1] = MASK_ID
                    targets[i, pos + 1] = row[pos + 1]
            if (targets != -100).sum() == 0:
                continue
            logits = encoder.logits(ids, pad_mask)
            loss = nn.functional.cross_entropy(
                logits.reshape(-1, len(vocab)), targets.reshape(-1), ignore_index=-100
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        epoch_losses.append(float(np.mean(losses)) if losses else 0.0)
    return epoch_losses


def pretrain_generators(causal_sents: Sequence[AnnotatedExample],
                        noncausal_sents: Sequence[AnnotatedExample],
                        vocab: Vocabulary, *,
                        dim: int = 32, layers: int = 2, max_len: int = 64,
                        epochs: int = 30, lr: float = 1e-5, batch_size: int = 8,
                        seed: int = 0, share_encoder: bool = False,
                        ) -> tuple[GeneratorPair, GeneratorTrainReport]:
    """Train each generator to re-predict masked cohesive tokens on its own
    relation's sentences only."""
    if not causal_sents or not noncausal_sents:
        raise ValidationError("both relation corpora must be non-empty")
    seed_torch(seed)
    causal_backend = build_backend(vocab, dim=dim, layers=layers, max_len=max_len, seed=seed)
    noncausal_backend = build_backend(vocab, dim=dim, layers=layers, max_len=max_len, seed=seed + 1)
    if share_encoder:
        body = causal_backend.encoder
        twin = noncausal_backend.encoder
        twin.tok_embed = body.tok_embed
        twin.pos_embed = body.pos_embed
        twin.blocks = body.blocks
    pair = GeneratorPair(causal_backend, noncausal_backend, share_encoder=share_encoder)
    report = GeneratorTrainReport()
    jobs = (
        (causal_backend, causal_sents, report.causal_losses, report.causal_trained_on, seed),
        (noncausal_backend, noncausal_sents, report.noncausal_losses, report.noncausal_trained_on, seed + 1),
    )
    for backend, sents, losses, trained, job_seed in jobs:
        rows = []
        for example in sents:
            if not example.events:
                warnings.warn(f"sentence {example.id} has no event spans; skipped", stacklevel=2)
                report.skipped.append(example.id)
                continue
            rows.append((example.tokens, cohesive_positions(example)))
            trained.append(example.id)
        if not rows:
            raise ValidationError("every sentence in one relation corpus lacks event spans")
        losses.extend(
            _mlm_epochs(backend, rows, epochs=epochs, lr=lr, batch_size=batch_size, seed=job_seed)
        )
    return pair, report
