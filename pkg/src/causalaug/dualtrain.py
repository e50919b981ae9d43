"""Dual reinforcement training of the generators and the identifier.

Primal cycle: pair + relation -> generated sentence -> re-identified
relation; the mixed reward scales the generator's log-likelihood gradient.
Dual cycle: pair + sentence -> identified relation -> re-generated sentence;
the mixed reward scales the identifier's log-likelihood gradient.  Both run
as plain reward-weighted ascent with one batch update per cycle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch

from causalaug.corpus import CAUSAL, NON_CAUSAL, PairExample
from causalaug.errors import ConfigurationError, StructuralError, ValidationError
from causalaug.generation import (
    EntityCandidateSet,
    GeneratedCandidate,
    Skeleton,
    assign_entities,
    build_skeleton,
)
from causalaug.knowledge import CandidatePair
from causalaug.metrics import evaluate
from causalaug.models import (
    EncoderBackend,
    GeneratorPair,
    IdentifierModel,
    fill_masks,
    identify,
    masked_fill_logprob,
    predicted_label,
    train_identifier,
)
from causalaug.models.checkpoint import load_state_tensors, state_tensors

PRIMAL = "primal"
DUAL = "dual"
CYCLE_ORDERS = ("primal-dual", "dual-primal")
REWARD_BASELINES = ("none", "batch-mean")


@dataclass(frozen=True)
class DualConfig:
    lambda_mix: float = 0.5
    gamma_mix: float = 0.5
    eta: float = 1e-7
    batch_size: int = 8
    max_rounds: int = 10
    patience: int = 3
    seed: int = 0
    cycle_order: str = "primal-dual"
    fill_order: str = "ltr"
    reward_baseline: str = "none"  # "batch-mean" subtracts the batch mean reward

    def __post_init__(self):
        for name in ("lambda_mix", "gamma_mix"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} {value} outside [0, 1]")
        if self.cycle_order not in CYCLE_ORDERS:
            raise ConfigurationError(f"unknown cycle_order {self.cycle_order!r}")
        if self.reward_baseline not in REWARD_BASELINES:
            raise ConfigurationError(f"unknown reward_baseline {self.reward_baseline!r}")
        if self.batch_size < 1 or self.max_rounds < 0 or self.patience < 1:
            raise ConfigurationError("batch_size/patience must be >= 1, max_rounds >= 0")


def _baseline(config: DualConfig, records: Sequence[RewardRecord]) -> float:
    if config.reward_baseline == "batch-mean" and records:
        return float(np.mean([r.mixed for r in records]))
    return 0.0


@dataclass(frozen=True)
class RewardRecord:
    pair_id: str
    cycle: str
    r_c: float
    r_s: float
    mixed: float
    round: int

    def to_json_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "cycle": self.cycle,
            "r_c": self.r_c,
            "r_s": self.r_s,
            "mixed": self.mixed,
            "round": self.round,
        }


@dataclass(frozen=True)
class AugmentationPlan:
    """labeled : augmented mix ratio, e.g. "1:2" uses twice the labeled count."""

    ratio: str = "1:2"
    neg_rate: float = 0.5

    def __post_init__(self):
        self.parts()  # validate eagerly

    def parts(self) -> tuple[int, int]:
        pieces = self.ratio.split(":")
        if len(pieces) != 2:
            raise ConfigurationError(f"ratio {self.ratio!r} is not of the form a:b")
        try:
            a, b = int(pieces[0]), int(pieces[1])
        except ValueError:
            raise ConfigurationError(f"ratio {self.ratio!r} is not of the form a:b") from None
        if a <= 0 or b <= 0:
            raise ConfigurationError(f"ratio {self.ratio!r} needs positive integers")
        return a, b

    def augmented_count(self, n_labeled: int) -> int:
        a, b = self.parts()
        return n_labeled * b // a


class DualExample(NamedTuple):
    skeleton: Skeleton
    sentence_pair: PairExample  # the identifier's (pair, sentence) view
    gold: str


def pair_sentence_view(pair: CandidatePair) -> PairExample:
    """The origin sentence with expanded lemmas substituted at the source
    event slots; unexpanded events keep their surface tokens."""
    origin = pair.origin
    events = {e.id: e for e in origin.events}
    if pair.source_e1 not in events or pair.source_e2 not in events:
        raise StructuralError(
            f"pair {pair.e1}/{pair.e2} references events missing from {origin.id}"
        )
    slots = []
    for source_id, lemma in ((pair.source_e1, pair.e1), (pair.source_e2, pair.e2)):
        event = events[source_id]
        if lemma != event.lemma:
            slots.append((event.span, (lemma,), source_id))
        else:
            surface = tuple(origin.tokens[event.span[0] : event.span[1]])
            slots.append((event.span, surface, source_id))
    slots.sort(key=lambda slot: slot[0])
    tokens: list[str] = []
    spans: dict[str, tuple[int, int]] = {}
    cursor = 0
    for span, replacement, source_id in slots:
        tokens.extend(origin.tokens[cursor : span[0]])
        spans[source_id] = (len(tokens), len(tokens) + len(replacement))
        tokens.extend(replacement)
        cursor = span[1]
    tokens.extend(origin.tokens[cursor:])
    return PairExample(
        uid=f"{origin.id}:{pair.e1}:{pair.e2}:{pair.provenance}",
        tokens=tuple(tokens),
        e1_span=spans[pair.source_e1],
        e2_span=spans[pair.source_e2],
        e1_lemma=pair.e1,
        e2_lemma=pair.e2,
        label=pair.provisional_label,
    )


def prepare_dual_examples(pairs: Sequence[CandidatePair], entity_set: EntityCandidateSet,
                          backend: EncoderBackend) -> list[DualExample]:
    """Freeze entity assignments and skeletons once, before any training."""
    examples = []
    for pair in pairs:
        assignment = assign_entities(pair, pair.origin, entity_set, backend)
        skeleton = build_skeleton(pair, assignment, pair.origin)
        examples.append(DualExample(
            skeleton=skeleton,
            sentence_pair=pair_sentence_view(pair),
            gold=pair.provisional_label,
        ))
    return examples


def causality_reward(identifier: IdentifierModel, pair: PairExample, gold: str) -> float:
    """Signed probability of the identifier's own prediction: positive iff
    the prediction matches gold."""
    p_causal, p_noncausal = identify(identifier, pair)
    predicted = predicted_label(p_causal, p_noncausal)
    confidence = p_causal if predicted == CAUSAL else p_noncausal
    return confidence if predicted == gold else -confidence


def semantic_alignment_reward(generators: GeneratorPair, relation: str,
                              skeleton: Skeleton, *, order: str = "ltr"):
    """Mean fill probability of a fresh completion; returns the fill too."""
    result = fill_masks(generators, relation, skeleton.tokens, order=order)
    reward = float(np.mean(result.fill_probs)) if result.fill_probs else 1.0
    return reward, result


def _generated_pair(example: DualExample, tokens: tuple[str, ...]) -> PairExample:
    skeleton = example.skeleton
    origin = skeleton.origin
    return PairExample(
        uid=f"gen:{origin.e1}:{origin.e2}:{origin.origin.id}",
        tokens=tokens,
        e1_span=skeleton.e1_span,
        e2_span=skeleton.e2_span,
        e1_lemma=origin.e1,
        e2_lemma=origin.e2,
        label=example.gold,
    )


def primal_cycle(batch: Sequence[DualExample], generators: GeneratorPair,
                 identifier: IdentifierModel, config: DualConfig, *,
                 round_idx: int = 1) -> list[RewardRecord]:
    """One reward-weighted batch update of the relation-matched generators;
    the identifier is read-only here."""
    if not batch:
        return []
    records = []
    contributions = []  # (reward, backend, skeleton tokens, fill steps)
    for example in batch:
        relation = example.gold
        r_s, fill = semantic_alignment_reward(
            generators, relation, example.skeleton, order=config.fill_order
        )
        r_c = causality_reward(identifier, _generated_pair(example, fill.tokens), relation)
        mixed = config.lambda_mix * r_s + (1.0 - config.lambda_mix) * r_c
        records.append(RewardRecord(
            pair_id=example.sentence_pair.uid, cycle=PRIMAL,
            r_c=r_c, r_s=r_s, mixed=mixed, round=round_idx,
        ))
        if fill.steps:
            contributions.append((mixed, generators.generator_for(relation),
                                  example.skeleton.tokens, fill.steps))
    base = _baseline(config, records)
    contributions = [c for c in contributions if c[0] - base != 0.0]
    if not contributions:
        return records
    params = list(generators.causal.encoder.parameters())
    if not generators.share_encoder:
        params += list(generators.noncausal.encoder.parameters())
    else:
        params += list(generators.noncausal.encoder.lm_head.parameters())
    optimizer = torch.optim.SGD(params, lr=config.eta)
    optimizer.zero_grad(set_to_none=True)
    loss = None
    for reward, backend, tokens, steps in contributions:
        term = -(reward - base) * masked_fill_logprob(backend, tokens, steps)
        loss = term if loss is None else loss + term
    loss.backward()
    optimizer.step()
    return records


def dual_cycle(batch: Sequence[DualExample], generators: GeneratorPair,
               identifier: IdentifierModel, config: DualConfig, *,
               round_idx: int = 1) -> list[RewardRecord]:
    """One reward-weighted batch update of the identifier; generators are
    read-only here (the re-generated sentence is reward-only, never kept)."""
    if not batch:
        return []
    pairs = [example.sentence_pair for example in batch]
    identifier.train()
    logits = identifier(identifier.prepare_batch(pairs))
    probs = torch.softmax(logits, dim=1)
    log_probs = torch.log_softmax(logits, dim=1)
    records = []
    predicted_indices = []
    for i, example in enumerate(batch):
        p_causal, p_noncausal = float(probs[i, 0].detach()), float(probs[i, 1].detach())
        predicted = predicted_label(p_causal, p_noncausal)
        confidence = p_causal if predicted == CAUSAL else p_noncausal
        r_c = confidence if predicted == example.gold else -confidence
        r_s, _ = semantic_alignment_reward(
            generators, predicted, example.skeleton, order=config.fill_order
        )
        mixed = config.gamma_mix * r_c + (1.0 - config.gamma_mix) * r_s
        records.append(RewardRecord(
            pair_id=example.sentence_pair.uid, cycle=DUAL,
            r_c=r_c, r_s=r_s, mixed=mixed, round=round_idx,
        ))
        predicted_indices.append(0 if predicted == CAUSAL else 1)
    base = _baseline(config, records)
    loss = None
    for i, record in enumerate(records):
        if record.mixed - base != 0.0:
            term = -(record.mixed - base) * log_probs[i, predicted_indices[i]]
            loss = term if loss is None else loss + term
    if loss is None:
        return records
    optimizer = torch.optim.SGD(identifier.parameters(), lr=config.eta)
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return records


@dataclass
class RoundEntry:
    round: int
    dev_p: float
    dev_r: float
    dev_f1: float
    mean_reward_primal: float
    mean_reward_dual: float

    def to_json_dict(self) -> dict:
        return {
            "round": self.round,
            "dev_p": self.dev_p,
            "dev_r": self.dev_r,
            "dev_f1": self.dev_f1,
            "mean_reward_primal": self.mean_reward_primal,
            "mean_reward_dual": self.mean_reward_dual,
        }


@dataclass
class DualTrainResult:
    generators: GeneratorPair
    identifier: IdentifierModel
    round_log: list[RoundEntry]
    reward_records: list[RewardRecord]
    best_round: int


def _snapshot(generators: GeneratorPair, identifier: IdentifierModel) -> dict:
    return {
        "causal": state_tensors(generators.causal.encoder),
        "noncausal": state_tensors(generators.noncausal.encoder),
        "identifier": state_tensors(identifier),
    }


def _restore(snapshot: dict, generators: GeneratorPair, identifier: IdentifierModel) -> None:
    load_state_tensors(generators.causal.encoder, snapshot["causal"])
    load_state_tensors(generators.noncausal.encoder, snapshot["noncausal"])
    load_state_tensors(identifier, snapshot["identifier"])


def dual_train(examples: Sequence[DualExample], generators: GeneratorPair,
               identifier: IdentifierModel, dev: Sequence[PairExample],
               config: DualConfig) -> DualTrainResult:
    """Alternating cycles with per-round dev F1 early stopping; restores the
    best round's parameters before returning."""
    if not dev:
        raise ValidationError("dev set must be non-empty for early stopping")
    result = DualTrainResult(generators, identifier, [], [], best_round=0)
    if config.max_rounds == 0 or not examples:
        return result
    best_f1 = -1.0
    best_state = None
    for round_idx in range(1, config.max_rounds + 1):
        rng = np.random.default_rng(config.seed + round_idx)
        order = list(range(len(examples)))
        rng.shuffle(order)
        primal_rewards: list[float] = []
        dual_rewards: list[float] = []
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start : start + config.batch_size]]
            cycles = (PRIMAL, DUAL) if config.cycle_order == "primal-dual" else (DUAL, PRIMAL)
            for cycle in cycles:
                if cycle == PRIMAL:
                    records = primal_cycle(batch, generators, identifier, config,
                                           round_idx=round_idx)
                    primal_rewards.extend(r.mixed for r in records)
                else:
                    records = dual_cycle(batch, generators, identifier, config,
                                         round_idx=round_idx)
                    dual_rewards.extend(r.mixed for r in records)
                result.reward_records.extend(records)
        report = evaluate(identifier, dev)
        result.round_log.append(RoundEntry(
            round=round_idx,
            dev_p=report.precision,
            dev_r=report.recall,
            dev_f1=report.f1,
            mean_reward_primal=float(np.mean(primal_rewards)) if primal_rewards else 0.0,
            mean_reward_dual=float(np.mean(dual_rewards)) if dual_rewards else 0.0,
        ))
        if report.f1 > best_f1:
            best_f1 = report.f1
            result.best_round = round_idx
            best_state = _snapshot(generators, identifier)
        if round_idx - result.best_round >= config.patience:
            break
    if best_state is not None:
        _restore(best_state, generators, identifier)
    return result


def write_round_log(path: str | Path, entries: Sequence[RoundEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_json_dict(), sort_keys=True) + "\n")


def write_reward_records(path: str | Path, records: Sequence[RewardRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")


def candidate_to_pair(candidate: GeneratedCandidate, copy: int = 0) -> PairExample:
    uid = f"aug:{candidate.cid}" if copy == 0 else f"aug:{candidate.cid}#{copy}"
    return PairExample(
        uid=uid,
        tokens=candidate.tokens,
        e1_span=candidate.e1_span,
        e2_span=candidate.e2_span,
        e1_lemma=candidate.e1,
        e2_lemma=candidate.e2,
        label=candidate.label,
    )


def build_training_mix(labeled: Sequence[PairExample],
                       augmented: Sequence[GeneratedCandidate],
                       plan: AugmentationPlan, seed: int) -> list[PairExample]:
    """labeled + augmented at the plan ratio: truncate by score rank when
    oversupplied, upsample with replacement (seeded) when undersupplied."""
    if not augmented:
        raise ValidationError("no augmented candidates to mix in")
    target = plan.augmented_count(len(labeled))
    ranked = sorted(augmented, key=lambda c: (-(c.score if c.score is not None else c.ppl), c.cid))
    chosen = [candidate_to_pair(c) for c in ranked[:target]]
    if len(chosen) < target:
        rng = np.random.default_rng(seed)
        copies: dict[str, int] = {}
        for idx in rng.integers(0, len(ranked), size=target - len(chosen)):
            candidate = ranked[int(idx)]
            copies[candidate.cid] = copies.get(candidate.cid, 0) + 1
            chosen.append(candidate_to_pair(candidate, copy=copies[candidate.cid]))
    return list(labeled) + chosen


def further_train(identifier: IdentifierModel, augmented: Sequence[GeneratedCandidate],
                  labeled: Sequence[PairExample], plan: AugmentationPlan, *,
                  epochs: int, lr: float, batch_size: int = 8,
                  seed: int = 0) -> IdentifierModel:
    """Supervised retraining on the labeled + filtered-augmented mix."""
    mix = build_training_mix(labeled, augmented, plan, seed)
    train_identifier(
        identifier, mix, epochs=epochs, lr=lr, batch_size=batch_size,
        neg_rate=plan.neg_rate, seed=seed,
    )
    return identifier
