"""Neural backends: tiny trainable encoder, causality identifier, mask-fill generators."""

from causalaug.models.backend import (
    CLS_TOKEN,
    MASK_TOKEN,
    PAD_TOKEN,
    SPECIAL_TOKENS,
    UNK_TOKEN,
    EncoderBackend,
    TinyEncoder,
    TorchBackend,
    Vocabulary,
    build_backend,
    embed_entity_in_context,
    encode_sentence,
    param_checksum,
    seed_torch,
)
from causalaug.models.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from causalaug.models.generator import (
    FillResult,
    GeneratorPair,
    GeneratorTrainReport,
    cohesive_positions,
    fill_masks,
    masked_fill_logprob,
    pretrain_generators,
)
from causalaug.models.identifier import (
    FeatureExtractor,
    IdentifierModel,
    IdentifierTrainReport,
    identify,
    identify_batch,
    predicted_label,
    pretrain_identifier,
    train_identifier,
)

__all__ = [
    "CLS_TOKEN",
    "MASK_TOKEN",
    "PAD_TOKEN",
    "SPECIAL_TOKENS",
    "UNK_TOKEN",
    "Checkpoint",
    "EncoderBackend",
    "FeatureExtractor",
    "FillResult",
    "GeneratorPair",
    "GeneratorTrainReport",
    "IdentifierModel",
    "IdentifierTrainReport",
    "TinyEncoder",
    "TorchBackend",
    "Vocabulary",
    "build_backend",
    "cohesive_positions",
    "embed_entity_in_context",
    "encode_sentence",
    "fill_masks",
    "identify",
    "identify_batch",
    "load_checkpoint",
    "masked_fill_logprob",
    "param_checksum",
    "predicted_label",
    "pretrain_generators",
    "pretrain_identifier",
    "save_checkpoint",
    "seed_torch",
    "train_identifier",
]
