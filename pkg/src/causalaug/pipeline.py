"""Staged end-to-end runs over hashed artifacts.

Each stage reads files from the run directory, writes new files, and records
a manifest: the config hash plus the SHA-256 of every input and output.  On
rerun a stage is skipped only while its manifest still matches the files on
disk, so deleting a single artifact reruns exactly the stages that depend on
it.  Cross-validation and parameter sweeps drive whole runs in nested output
directories and aggregate the per-run metrics.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from causalaug.config import PipelineConfig, config_hash
from causalaug.corpus import (
    CAUSAL,
    NON_CAUSAL,
    AnnotatedExample,
    PairExample,
    enumerate_pairs,
    load_corpus,
    pair_examples,
    save_corpus,
    split_folds,
)
from causalaug.dualtrain import (
    AugmentationPlan,
    DualConfig,
    build_training_mix,
    dual_train,
    prepare_dual_examples,
    write_reward_records,
    write_round_log,
)
from causalaug.errors import ConfigurationError, StageError, ValidationError
from causalaug.generation import (
    EntityCandidateSet,
    GeneratedCandidate,
    generate_candidates,
    sample_discriminator_set,
    score_and_filter,
)
from causalaug.knowledge import (
    CandidatePair,
    CausalSpaceModel,
    ConnectivePatternSet,
    LexiconAdapter,
    annotated_candidate,
    expand_lexical,
    introduce_connective,
    rank_and_select,
    selected_pairs_to_jsonl,
    train_causal_space,
)
from causalaug.metrics import FoldMetrics, MetricsReport, evaluate
from causalaug.models import (
    FeatureExtractor,
    GeneratorPair,
    IdentifierModel,
    TorchBackend,
    Vocabulary,
    build_backend,
    load_checkpoint,
    pretrain_generators,
    pretrain_identifier,
    save_checkpoint,
    train_identifier,
)
from causalaug.models.checkpoint import load_state_tensors, state_tensors

logger = logging.getLogger(__name__)

STAGES = (
    "ingest",
    "extract-pairs",
    "train-causal-space",
    "select-pairs",
    "pretrain",
    "dual-train",
    "generate",
    "filter",
    "augment",
    "train-final",
    "evaluate",
)

SWEEP_PARAMS = {
    "ratio": "ratio",
    "alpha": "alpha",
    "beta": "beta",
    "mu": "mu",
    "lambda": "lambda_mix",
    "gamma": "gamma_mix",
    "rounds": "max_rounds",
}


# ---------------------------------------------------------------------------
# artifact layout


class RunPaths:
    """Fixed artifact layout under one output directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.inputs = self.root / "inputs"
        self.pairs_dir = self.root / "pairs"
        self.models = self.root / "models"
        self.generated = self.root / "generated"
        self.augment_dir = self.root / "augment"
        self.reports = self.root / "reports"
        self.manifests = self.root / "manifests"

        self.corpus = self.inputs / "corpus.jsonl"
        self.raw_docs = self.inputs / "raw_docs.jsonl"
        self.lexicon = self.inputs / "lexicon.tsv"
        self.connectives = self.inputs / "connectives.tsv"
        self.entity_candidates = self.inputs / "entity_candidates.tsv"
        self.splits = self.inputs / "splits.json"
        self.vocab = self.inputs / "vocab.json"

        self.candidates = self.pairs_dir / "candidates.jsonl"
        self.selected = self.pairs_dir / "selected.jsonl"

        self.space_ckpt = self.models / "causal_space.ckpt"
        self.gen_causal = self.models / "generator_causal.ckpt"
        self.gen_noncausal = self.models / "generator_noncausal.ckpt"
        self.ident_pretrained = self.models / "identifier_pretrained.ckpt"
        self.gen_causal_dual = self.models / "generator_causal_dual.ckpt"
        self.gen_noncausal_dual = self.models / "generator_noncausal_dual.ckpt"
        self.ident_dual = self.models / "identifier_dual.ckpt"
        self.ident_final = self.models / "identifier_final.ckpt"

        self.gen_candidates = self.generated / "candidates.jsonl"
        self.gen_filtered = self.generated / "filtered.jsonl"
        self.train_mix = self.augment_dir / "train_mix.jsonl"

        self.extraction_report = self.reports / "extraction.json"
        self.space_report = self.reports / "space.json"
        self.selection_report = self.reports / "selection.json"
        self.pretrain_report = self.reports / "pretrain.json"
        self.baseline_metrics = self.reports / "baseline_metrics.json"
        self.rounds_csv = self.reports / "rounds.csv"
        self.rounds_png = self.reports / "rounds.png"
        self.rewards = self.reports / "rewards.jsonl"
        self.filter_report = self.reports / "filter.json"
        self.augment_report = self.reports / "augment.json"
        self.final_train_report = self.reports / "final_train.json"
        self.metrics = self.reports / "metrics.json"

    def ensure_dirs(self) -> None:
        for d in (self.root, self.inputs, self.pairs_dir, self.models,
                  self.generated, self.augment_dir, self.reports, self.manifests):
            d.mkdir(parents=True, exist_ok=True)

    def manifest(self, stage: str) -> Path:
        return self.manifests / f"{stage}.json"


def _stage_io(stage: str, config: PipelineConfig,
              paths: RunPaths) -> tuple[list[Path], list[Path]]:
    """Declared input and output artifacts of one stage."""
    p = paths
    if stage == "ingest":
        ins = [Path(config.corpus), Path(config.lexicon), Path(config.connectives)]
        if config.raw_docs:
            ins.append(Path(config.raw_docs))
        if config.entity_candidates:
            ins.append(Path(config.entity_candidates))
        outs = [p.corpus, p.raw_docs, p.lexicon, p.connectives,
                p.entity_candidates, p.splits, p.vocab]
    elif stage == "extract-pairs":
        ins = [p.corpus, p.raw_docs, p.lexicon, p.connectives, p.splits]
        outs = [p.candidates, p.extraction_report]
    elif stage == "train-causal-space":
        ins = [p.candidates]
        outs = [p.space_ckpt, p.space_report]
    elif stage == "select-pairs":
        ins = [p.candidates, p.space_ckpt, p.corpus, p.raw_docs]
        outs = [p.selected, p.selection_report]
    elif stage == "pretrain":
        ins = [p.corpus, p.splits, p.vocab]
        outs = [p.gen_causal, p.gen_noncausal, p.ident_pretrained,
                p.baseline_metrics, p.pretrain_report]
    elif stage == "dual-train":
        ins = [p.selected, p.corpus, p.raw_docs, p.splits, p.entity_candidates,
               p.gen_causal, p.gen_noncausal, p.ident_pretrained]
        outs = [p.gen_causal_dual, p.gen_noncausal_dual, p.ident_dual, p.rounds_csv]
        if config.dump_rewards:
            outs.append(p.rewards)
    elif stage == "generate":
        ins = [p.selected, p.corpus, p.raw_docs, p.entity_candidates,
               p.gen_causal_dual, p.gen_noncausal_dual]
        outs = [p.gen_candidates]
    elif stage == "filter":
        ins = [p.gen_candidates, p.corpus, p.splits, p.gen_causal_dual]
        outs = [p.gen_filtered, p.filter_report]
    elif stage == "augment":
        ins = [p.gen_filtered, p.corpus, p.splits]
        outs = [p.train_mix, p.augment_report]
    elif stage == "train-final":
        ins = [p.train_mix, p.ident_dual]
        outs = [p.ident_final, p.final_train_report]
    elif stage == "evaluate":
        ins = [p.ident_final, p.corpus, p.splits, p.baseline_metrics]
        outs = [p.metrics]
    else:
        raise ConfigurationError(f"unknown pipeline stage {stage!r}")
    return ins, outs


# ---------------------------------------------------------------------------
# manifests


def _hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_map(files: Sequence[Path]) -> dict[str, str]:
    return {str(f): _hash_file(f) for f in sorted(files)}


def _write_manifest(paths: RunPaths, stage: str, chash: str,
                    ins: Sequence[Path], outs: Sequence[Path]) -> None:
    record = {
        "stage": stage,
        "config_hash": chash,
        "inputs": _hash_map(ins),
        "outputs": _hash_map(outs),
    }
    paths.manifest(stage).write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest_fresh(paths: RunPaths, stage: str, chash: str,
                    ins: Sequence[Path], outs: Sequence[Path]) -> bool:
    """True only when the recorded hashes still describe the files on disk."""
    manifest_path = paths.manifest(stage)
    if not manifest_path.exists():
        return False
    try:
        record = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    if record.get("stage") != stage or record.get("config_hash") != chash:
        return False
    for role, files in (("inputs", ins), ("outputs", outs)):
        recorded = record.get(role, {})
        if set(recorded) != {str(f) for f in files}:
            return False
        for f in files:
            if not f.exists() or recorded[str(f)] != _hash_file(f):
                return False
    return True


def _require_inputs(stage: str, ins: Sequence[Path]) -> None:
    missing = [str(f) for f in ins if not f.exists()]
    if missing:
        raise StageError(
            f"stage {stage!r} is missing input artifact(s): {', '.join(missing)}")


# ---------------------------------------------------------------------------
# shared loaders


def _write_json(path: Path, payload: Mapping) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _load_splits(paths: RunPaths) -> tuple[list[str], list[str], list[str]]:
    record = _read_json(paths.splits)
    return record["train_topics"], record["dev_topics"], record["test_topics"]


def _load_vocab(paths: RunPaths) -> Vocabulary:
    return Vocabulary(tuple(_read_json(paths.vocab)["tokens"]))


def _doc_index(paths: RunPaths) -> dict[str, AnnotatedExample]:
    index: dict[str, AnnotatedExample] = {}
    for source in (paths.corpus, paths.raw_docs):
        for example in load_corpus(source):
            index[example.id] = example
    return index


def _topic_examples(corpus: Sequence[AnnotatedExample],
                    topics: Sequence[str]) -> list[AnnotatedExample]:
    wanted = set(topics)
    return [ex for ex in corpus if ex.topic in wanted]


def _topic_pairs(corpus: Sequence[AnnotatedExample],
                 topics: Sequence[str]) -> list[PairExample]:
    out: list[PairExample] = []
    for example in _topic_examples(corpus, topics):
        out.extend(pair_examples(example))
    return out


def _candidate_row(pair: CandidatePair) -> dict:
    return {
        "e1": pair.e1,
        "e2": pair.e2,
        "label": pair.provisional_label,
        "provenance": pair.provenance,
        "origin_id": pair.origin.id,
        "source_e1": pair.source_e1,
        "source_e2": pair.source_e2,
    }


def _rows_to_candidates(rows: Sequence[Mapping],
                        index: Mapping[str, AnnotatedExample],
                        source: Path) -> list[CandidatePair]:
    out = []
    for row in rows:
        origin = index.get(row["origin_id"])
        if origin is None:
            raise StageError(
                f"{source} references unknown origin sentence {row['origin_id']!r}")
        out.append(CandidatePair(
            e1=row["e1"],
            e2=row["e2"],
            provisional_label=row["label"],
            provenance=row["provenance"],
            origin=origin,
            source_e1=row["source_e1"],
            source_e2=row["source_e2"],
        ))
    return out


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _write_jsonl(path: Path, rows: Sequence[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _pair_row(pair: PairExample) -> dict:
    return {
        "uid": pair.uid,
        "tokens": list(pair.tokens),
        "e1_span": list(pair.e1_span),
        "e2_span": list(pair.e2_span),
        "e1_lemma": pair.e1_lemma,
        "e2_lemma": pair.e2_lemma,
        "label": pair.label,
    }


def _row_to_pair(row: Mapping) -> PairExample:
    return PairExample(
        uid=row["uid"],
        tokens=tuple(row["tokens"]),
        e1_span=tuple(row["e1_span"]),
        e2_span=tuple(row["e2_span"]),
        e1_lemma=row["e1_lemma"],
        e2_lemma=row["e2_lemma"],
        label=row["label"],
    )


# ---------------------------------------------------------------------------
# checkpoint bridges


def _save_backend(path: Path, backend: TorchBackend, kind: str, seed: int) -> None:
    encoder = backend.encoder
    save_checkpoint(
        path,
        kind=kind,
        config={"dim": encoder.dim, "layers": len(encoder.blocks),
                "max_len": encoder.max_len},
        seed=seed,
        vocab=backend.vocab.tokens,
        tensors=state_tensors(encoder),
    )


def _load_backend(path: Path) -> TorchBackend:
    ckpt = load_checkpoint(path)
    backend = build_backend(
        Vocabulary(tuple(ckpt.vocab)),
        dim=int(ckpt.config["dim"]),
        layers=int(ckpt.config["layers"]),
        max_len=int(ckpt.config["max_len"]),
        seed=ckpt.seed,
    )
    load_state_tensors(backend.encoder, ckpt.tensors)
    return backend


def _tie_encoders(pair: GeneratorPair) -> GeneratorPair:
    """Re-tie encoder bodies after reload; checkpoints of a shared pair hold
    identical tensors, so pointing both at one module loses nothing."""
    twin = pair.noncausal.encoder
    body = pair.causal.encoder
    twin.tok_embed = body.tok_embed
    twin.pos_embed = body.pos_embed
    twin.blocks = body.blocks
    return pair


def _load_generator_pair(causal_path: Path, noncausal_path: Path,
                         share_encoder: bool) -> GeneratorPair:
    pair = GeneratorPair(_load_backend(causal_path), _load_backend(noncausal_path),
                         share_encoder=share_encoder)
    return _tie_encoders(pair) if share_encoder else pair


def _save_identifier(path: Path, identifier: IdentifierModel, kind: str,
                     seed: int, hidden: int) -> None:
    backend = identifier.backend
    save_checkpoint(
        path,
        kind=kind,
        config={"dim": backend.encoder.dim, "layers": len(backend.encoder.blocks),
                "max_len": backend.encoder.max_len, "hidden": hidden},
        seed=seed,
        vocab=backend.vocab.tokens,
        tensors=state_tensors(identifier),
    )


def _load_identifier(path: Path) -> IdentifierModel:
    ckpt = load_checkpoint(path)
    backend = build_backend(
        Vocabulary(tuple(ckpt.vocab)),
        dim=int(ckpt.config["dim"]),
        layers=int(ckpt.config["layers"]),
        max_len=int(ckpt.config["max_len"]),
        seed=ckpt.seed,
    )
    model = IdentifierModel(backend, FeatureExtractor(None),
                            hidden=int(ckpt.config["hidden"]))
    load_state_tensors(model, ckpt.tensors)
    return model


def _save_space(path: Path, model: CausalSpaceModel, seed: int) -> None:
    save_checkpoint(
        path,
        kind="causal-space",
        config={"dims": model.dims, "margin": model.margin},
        seed=seed,
        vocab=model.lemmas,
        tensors={"vectors": model.vectors, "r_causal": model.r_causal},
    )


def _load_space(path: Path) -> CausalSpaceModel:
    ckpt = load_checkpoint(path)
    return CausalSpaceModel(
        lemmas=tuple(ckpt.vocab),
        vectors=np.asarray(ckpt.tensors["vectors"], dtype=np.float64),
        r_causal=np.asarray(ckpt.tensors["r_causal"], dtype=np.float64),
        margin=float(ckpt.config["margin"]),
    )


# ---------------------------------------------------------------------------
# stage bodies


def _stage_ingest(config: PipelineConfig, paths: RunPaths) -> None:
    corpus = load_corpus(config.corpus)
    raw = load_corpus(config.raw_docs) if config.raw_docs else list(corpus)
    topics = {ex.topic for ex in corpus}

    dev = list(config.dev_topics)
    test = list(config.test_topics)
    if not dev or not test:
        raise ConfigurationError("dev_topics and test_topics must both be set")
    for name, group in (("dev", dev), ("test", test)):
        unknown = sorted(set(group) - topics)
        if unknown:
            raise ConfigurationError(f"{name} topics not in corpus: {unknown}")
    if set(dev) & set(test):
        raise ConfigurationError("dev and test topics overlap")
    train = sorted(topics - set(dev) - set(test))
    if not train:
        raise ConfigurationError("no topics left for training")

    lexicon = LexiconAdapter.load(config.lexicon)
    ConnectivePatternSet.load(config.connectives)

    if config.entity_candidates:
        entity_set = EntityCandidateSet.load(config.entity_candidates)
    else:
        visible = _topic_examples(corpus, train + dev)
        entity_set = EntityCandidateSet.from_corpus(visible)
    if not entity_set.entries:
        raise ValidationError("no entity candidates available")

    # vocabulary from everything the pipeline may read or write during
    # training; test sentences stay out of it.
    content: set[str] = set()
    for example in _topic_examples(corpus, train + dev):
        content.update(example.tokens)
    for example in raw:
        content.update(example.tokens)
    for lemma, related in lexicon.table.items():
        content.add(lemma)
        content.update(related)
    for entry in entity_set.entries:
        content.update(entry.tokens)
    vocab = Vocabulary.build(content)

    save_corpus(corpus, paths.corpus)
    save_corpus(raw, paths.raw_docs)
    shutil.copyfile(config.lexicon, paths.lexicon)
    shutil.copyfile(config.connectives, paths.connectives)
    with open(paths.entity_candidates, "w", encoding="utf-8") as fh:
        for entry in sorted(entity_set.entries, key=lambda c: (c.type, c.tokens)):
            fh.write(f"{' '.join(entry.tokens)}\t{entry.type}\n")
    _write_json(paths.splits, {"train_topics": train, "dev_topics": sorted(dev),
                               "test_topics": sorted(test)})
    _write_json(paths.vocab, {"tokens": list(vocab.tokens)})


def _dedup_candidates(pairs: Sequence[CandidatePair],
                      per_pair_cap: int) -> list[CandidatePair]:
    """Keep at most one candidate per (pair, label, origin sentence) and at
    most `per_pair_cap` origins per (pair, label); 0 means no cap."""
    grouped: dict[tuple, dict[str, CandidatePair]] = {}
    for pair in sorted(pairs, key=lambda p: p.sort_key() + (p.provenance,)):
        origins = grouped.setdefault((pair.e1, pair.e2, pair.provisional_label), {})
        origins.setdefault(pair.origin.id, pair)
    kept: list[CandidatePair] = []
    for origins in grouped.values():
        members = sorted(origins.values(), key=lambda p: p.sort_key() + (p.provenance,))
        if per_pair_cap:
            members = members[:per_pair_cap]
        kept.extend(members)
    kept.sort(key=lambda p: p.sort_key() + (p.provenance,))
    return kept


def _stage_extract_pairs(config: PipelineConfig, paths: RunPaths) -> None:
    corpus = load_corpus(paths.corpus)
    raw = load_corpus(paths.raw_docs)
    train, _, _ = _load_splits(paths)
    lexicon = LexiconAdapter.load(paths.lexicon)
    patterns = ConnectivePatternSet.load(paths.connectives)

    annotated: list[CandidatePair] = []
    for example in _topic_examples(corpus, train):
        for e1_id, e2_id, label in enumerate_pairs(example):
            annotated.append(annotated_candidate(example, e1_id, e2_id, label))

    expanded: list[CandidatePair] = []
    for pair in annotated:
        expanded.extend(expand_lexical(pair, lexicon))

    connective = introduce_connective(raw, patterns)

    combined = _dedup_candidates(annotated + expanded + connective,
                                 config.max_candidates_per_pair)
    _write_jsonl(paths.candidates, [_candidate_row(p) for p in combined])
    counts = {"annotated": 0, "lexical-expansion": 0, "connective": 0}
    for pair in combined:
        counts[pair.provenance] += 1
    _write_json(paths.extraction_report,
                {"total": len(combined), "by_provenance": counts})


def _stage_train_space(config: PipelineConfig, paths: RunPaths) -> None:
    index = _doc_index(paths)
    rows = _read_jsonl(paths.candidates)
    grounded = [r for r in rows if r["provenance"] in ("annotated", "connective")]
    pairs = _rows_to_candidates(grounded, index, paths.candidates)
    causal = [p for p in pairs if p.provisional_label == CAUSAL]
    noncausal = [p for p in pairs if p.provisional_label == NON_CAUSAL]
    model = train_causal_space(
        causal, noncausal,
        dims=config.dims, margin=config.margin,
        epochs=config.space_epochs, lr=config.space_lr, seed=config.seed,
    )
    _save_space(paths.space_ckpt, model, config.seed)
    _write_json(paths.space_report, {
        "lemmas": len(model.lemmas),
        "causal_pairs": len(causal),
        "noncausal_pairs": len(noncausal),
        "initial_loss": model.loss_history[0] if model.loss_history else 0.0,
        "final_loss": model.loss_history[-1] if model.loss_history else 0.0,
    })


def _stage_select_pairs(config: PipelineConfig, paths: RunPaths) -> None:
    index = _doc_index(paths)
    pairs = _rows_to_candidates(_read_jsonl(paths.candidates), index, paths.candidates)
    space = _load_space(paths.space_ckpt)
    result = rank_and_select(pairs, space, config.alpha)
    selected = list(result.causal) + list(result.noncausal)
    lines = selected_pairs_to_jsonl(selected, space)
    paths.selected.write_text("".join(line + "\n" for line in lines),
                              encoding="utf-8")
    _write_json(paths.selection_report, {
        "dropped_oov": result.report.dropped_oov,
        "composition": result.report.composition,
        "selected_causal": len(result.causal),
        "selected_noncausal": len(result.noncausal),
    })


def _stage_pretrain(config: PipelineConfig, paths: RunPaths) -> None:
    corpus = load_corpus(paths.corpus)
    train, _, test = _load_splits(paths)
    vocab = _load_vocab(paths)

    train_examples = _topic_examples(corpus, train)
    causal_sents = [ex for ex in train_examples
                    if any(rel.label == CAUSAL for rel in ex.relations)]
    causal_ids = {ex.id for ex in causal_sents}
    noncausal_sents = [ex for ex in train_examples if ex.id not in causal_ids]
    generators, gen_report = pretrain_generators(
        causal_sents, noncausal_sents, vocab,
        dim=config.dim, layers=config.layers, max_len=config.max_len,
        epochs=config.pretrain_epochs, lr=config.lr_pretrain,
        batch_size=config.batch_size, seed=config.seed,
        share_encoder=config.share_encoder,
    )

    train_pairs = _topic_pairs(corpus, train)
    identifier, ident_report = pretrain_identifier(
        train_pairs, vocab, space=None,
        dim=config.dim, layers=config.layers, max_len=config.max_len,
        hidden=config.hidden, epochs=config.pretrain_epochs,
        lr=config.lr_pretrain, batch_size=config.batch_size,
        neg_rate=config.neg_rate, seed=config.seed,
    )

    _save_backend(paths.gen_causal, generators.causal, "generator-causal", config.seed)
    _save_backend(paths.gen_noncausal, generators.noncausal, "generator-noncausal",
                  config.seed)
    _save_identifier(paths.ident_pretrained, identifier, "identifier",
                     config.seed, config.hidden)

    baseline = evaluate(identifier, _topic_pairs(corpus, test))
    _write_json(paths.baseline_metrics, baseline.to_json_dict())
    _write_json(paths.pretrain_report, {
        "generator_causal_final_loss":
            gen_report.causal_losses[-1] if gen_report.causal_losses else 0.0,
        "generator_noncausal_final_loss":
            gen_report.noncausal_losses[-1] if gen_report.noncausal_losses else 0.0,
        "identifier_final_loss":
            ident_report.epoch_losses[-1] if ident_report.epoch_losses else 0.0,
        "train_pairs": len(train_pairs),
        "causal_sentences": len(causal_sents),
        "noncausal_sentences": len(noncausal_sents),
    })


def _interleave_selected(rows: Sequence[Mapping], cap: int) -> list[Mapping]:
    """Alternate causal / non-causal rows so a cap keeps both labels."""
    causal = [r for r in rows if r["label"] == CAUSAL]
    noncausal = [r for r in rows if r["label"] == NON_CAUSAL]
    woven: list[Mapping] = []
    for i in range(max(len(causal), len(noncausal))):
        if i < len(causal):
            woven.append(causal[i])
        if i < len(noncausal):
            woven.append(noncausal[i])
    return woven[:cap] if cap else woven


def _dual_config(config: PipelineConfig) -> DualConfig:
    return DualConfig(
        lambda_mix=config.lambda_mix,
        gamma_mix=config.gamma_mix,
        eta=config.eta,
        batch_size=config.batch_size,
        max_rounds=config.max_rounds,
        patience=config.patience,
        seed=config.seed,
        cycle_order=config.cycle_order,
        fill_order=config.fill_order,
        reward_baseline=config.reward_baseline,
    )


def _write_rounds_csv(path: Path, entries) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "dev_p", "dev_r", "dev_f1",
                         "mean_reward_primal", "mean_reward_dual"])
        for entry in entries:
            writer.writerow([entry.round, entry.dev_p, entry.dev_r, entry.dev_f1,
                             entry.mean_reward_primal, entry.mean_reward_dual])


def _plot_rounds(path: Path, entries) -> None:
    """Best-effort dev-F1 curve; skipped when matplotlib is unavailable."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.info("matplotlib not installed; skipping %s", path)
        return
    rounds = [e.round for e in entries]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rounds, [e.dev_f1 for e in entries], marker="o", label="dev F1")
    ax.plot(rounds, [e.mean_reward_primal for e in entries], marker="s",
            label="mean primal reward")
    ax.plot(rounds, [e.mean_reward_dual for e in entries], marker="^",
            label="mean dual reward")
    ax.set_xlabel("round")
    ax.set_ylabel("value")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _stage_dual_train(config: PipelineConfig, paths: RunPaths) -> None:
    corpus = load_corpus(paths.corpus)
    _, dev, _ = _load_splits(paths)
    index = _doc_index(paths)

    rows = _interleave_selected(_read_jsonl(paths.selected), config.dual_max_pairs)
    pairs = _rows_to_candidates(rows, index, paths.selected)
    entity_set = EntityCandidateSet.load(paths.entity_candidates)
    generators = _load_generator_pair(paths.gen_causal, paths.gen_noncausal,
                                      config.share_encoder)
    identifier = _load_identifier(paths.ident_pretrained)

    examples = prepare_dual_examples(pairs, entity_set, generators.causal)
    dev_pairs = _topic_pairs(corpus, dev)
    result = dual_train(examples, generators, identifier, dev_pairs,
                        _dual_config(config))

    _save_backend(paths.gen_causal_dual, result.generators.causal,
                  "generator-causal", config.seed)
    _save_backend(paths.gen_noncausal_dual, result.generators.noncausal,
                  "generator-noncausal", config.seed)
    _save_identifier(paths.ident_dual, result.identifier, "identifier",
                     config.seed, config.hidden)
    _write_rounds_csv(paths.rounds_csv, result.round_log)
    _plot_rounds(paths.rounds_png, result.round_log)
    if config.dump_rewards:
        write_reward_records(paths.rewards, result.reward_records)


def _stage_generate(config: PipelineConfig, paths: RunPaths) -> None:
    index = _doc_index(paths)
    pairs = _rows_to_candidates(_read_jsonl(paths.selected), index, paths.selected)
    entity_set = EntityCandidateSet.load(paths.entity_candidates)
    generators = _load_generator_pair(paths.gen_causal_dual, paths.gen_noncausal_dual,
                                      config.share_encoder)
    candidates = generate_candidates(pairs, generators, generators.causal,
                                     entity_set, order=config.fill_order)
    _write_jsonl(paths.gen_candidates, [c.to_json_dict() for c in candidates])


def _stage_filter(config: PipelineConfig, paths: RunPaths) -> None:
    corpus = load_corpus(paths.corpus)
    train, _, _ = _load_splits(paths)
    candidates = [GeneratedCandidate.from_json_dict(row)
                  for row in _read_jsonl(paths.gen_candidates)]
    backend = _load_backend(paths.gen_causal_dual)
    sample = sample_discriminator_set(_topic_examples(corpus, train),
                                      config.m, config.seed)
    kept = score_and_filter(candidates, config.mu, config.beta, sample, backend,
                            dis_mode=config.dis_mode)
    _write_jsonl(paths.gen_filtered, [c.to_json_dict() for c in kept])
    _write_json(paths.filter_report, {"total": len(candidates), "kept": len(kept)})


def _stage_augment(config: PipelineConfig, paths: RunPaths) -> None:
    corpus = load_corpus(paths.corpus)
    train, _, _ = _load_splits(paths)
    filtered = [GeneratedCandidate.from_json_dict(row)
                for row in _read_jsonl(paths.gen_filtered)]
    train_pairs = _topic_pairs(corpus, train)
    plan = AugmentationPlan(ratio=config.ratio)
    mix = build_training_mix(train_pairs, filtered, plan, seed=config.seed)
    _write_jsonl(paths.train_mix, [_pair_row(p) for p in mix])
    _write_json(paths.augment_report, {
        "annotated": len(train_pairs),
        "generated_available": len(filtered),
        "generated_used": len(mix) - len(train_pairs),
        "ratio": config.ratio,
    })


def _stage_train_final(config: PipelineConfig, paths: RunPaths) -> None:
    identifier = _load_identifier(paths.ident_dual)
    mix = [_row_to_pair(row) for row in _read_jsonl(paths.train_mix)]
    report = train_identifier(
        identifier, mix,
        epochs=config.final_epochs, lr=config.lr_further,
        batch_size=config.batch_size, neg_rate=config.neg_rate, seed=config.seed,
    )
    _save_identifier(paths.ident_final, identifier, "identifier",
                     config.seed, config.hidden)
    _write_json(paths.final_train_report, {
        "examples": len(mix),
        "final_loss": report.epoch_losses[-1] if report.epoch_losses else 0.0,
    })


def _stage_evaluate(config: PipelineConfig, paths: RunPaths) -> None:
    corpus = load_corpus(paths.corpus)
    _, _, test = _load_splits(paths)
    identifier = _load_identifier(paths.ident_final)
    report = evaluate(identifier, _topic_pairs(corpus, test))
    baseline = _read_json(paths.baseline_metrics)
    _write_json(paths.metrics, {
        "config_hash": config_hash(config),
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "baseline": baseline,
        "f1_improvement": report.f1 - baseline["f1"],
    })


_RUNNERS: dict[str, Callable[[PipelineConfig, RunPaths], None]] = {
    "ingest": _stage_ingest,
    "extract-pairs": _stage_extract_pairs,
    "train-causal-space": _stage_train_space,
    "select-pairs": _stage_select_pairs,
    "pretrain": _stage_pretrain,
    "dual-train": _stage_dual_train,
    "generate": _stage_generate,
    "filter": _stage_filter,
    "augment": _stage_augment,
    "train-final": _stage_train_final,
    "evaluate": _stage_evaluate,
}


# ---------------------------------------------------------------------------
# runners


def run_stage(config: PipelineConfig, stage: str, *, resume: bool = True) -> bool:
    """Run one stage; returns True when a fresh manifest let it be skipped."""
    if stage not in _RUNNERS:
        raise ConfigurationError(f"unknown pipeline stage {stage!r}")
    paths = RunPaths(config.out_dir)
    paths.ensure_dirs()
    chash = config_hash(config)
    ins, outs = _stage_io(stage, config, paths)
    if resume and _manifest_fresh(paths, stage, chash, ins, outs):
        logger.info("stage %s: up to date, skipping", stage)
        return True
    _require_inputs(stage, ins)
    logger.info("stage %s: running", stage)
    _RUNNERS[stage](config, paths)
    _write_manifest(paths, stage, chash, ins, outs)
    return False


def run_pipeline(config: PipelineConfig, *, resume: bool = True) -> dict:
    """All stages in order; returns per-stage status plus the final metrics."""
    statuses = {}
    for stage in STAGES:
        skipped = run_stage(config, stage, resume=resume)
        statuses[stage] = "skipped" if skipped else "ran"
    paths = RunPaths(config.out_dir)
    return {"stages": statuses, "metrics": _read_json(paths.metrics)}


# ---------------------------------------------------------------------------
# cross-validation and sweeps


def cross_validate(corpus: Sequence[AnnotatedExample],
                   config: PipelineConfig) -> MetricsReport:
    """k topic folds x `replicates` seeds, macro-averaged across all runs.

    Fold f / replicate r runs the full pipeline with that fold's topics as
    the test set and seed + r as the seed, in its own output directory.
    """
    plan = split_folds(corpus, config.k, set(config.dev_topics))
    folds: list[FoldMetrics] = []
    base = Path(config.out_dir)
    for fold in range(config.k):
        topics = plan.fold_topics(fold)
        if not topics:
            raise ValidationError(f"fold {fold} has no topics")
        for rep in range(config.replicates):
            seed = config.seed + rep
            sub = config.replaced(
                seed=seed,
                test_topics=tuple(topics),
                out_dir=str(base / "cv" / f"fold{fold}_seed{seed}"),
            )
            outcome = run_pipeline(sub)
            metrics = outcome["metrics"]
            folds.append(FoldMetrics(
                fold=fold, replicate=rep, seed=seed,
                precision=metrics["precision"], recall=metrics["recall"],
                f1=metrics["f1"],
            ))
    report = MetricsReport(
        precision=float(np.mean([f.precision for f in folds])),
        recall=float(np.mean([f.recall for f in folds])),
        f1=float(np.mean([f.f1 for f in folds])),
        folds=tuple(folds),
    )
    base.mkdir(parents=True, exist_ok=True)
    payload = report.to_json_dict()
    payload["config_hash"] = config_hash(config)
    _write_json(base / "cv_metrics.json", payload)
    return report


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: str
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class SweepReport:
    param: str
    rows: tuple[SweepRow, ...]


def write_sweep_csv(path: str | Path, report: SweepReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "precision", "recall", "f1"])
        for row in report.rows:
            writer.writerow([row.param, row.value, row.precision, row.recall, row.f1])


def sweep(param: str, values: Sequence, config: PipelineConfig) -> SweepReport:
    """Rerun cross-validation once per value of one named parameter."""
    if param not in SWEEP_PARAMS:
        known = ", ".join(sorted(SWEEP_PARAMS))
        raise ConfigurationError(f"unknown sweep parameter {param!r} (choose from {known})")
    field = SWEEP_PARAMS[param]
    base = Path(config.out_dir)
    corpus = load_corpus(config.corpus)
    rows = []
    for i, value in enumerate(values):
        sub = config.replaced(**{
            field: value,
            "out_dir": str(base / "sweep" / f"{param}_{i}"),
        })
        report = cross_validate(corpus, sub)
        rows.append(SweepRow(param=param, value=str(value),
                             precision=report.precision, recall=report.recall,
                             f1=report.f1))
    result = SweepReport(param=param, rows=tuple(rows))
    base.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(base / "sweep.csv", result)
    return result
