"""Tiny trainable encoder backend.

The reference backend is a two-layer, single-head self-attention encoder
with an MLM head, small enough to train on CPU in seconds.  Anything
implementing :class:`EncoderBackend` can stand in for it; the inference
boundary speaks numpy so alternative backends need not depend on torch.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np
import torch
from torch import nn

from causalaug.errors import ValidationError

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
MASK_TOKEN = "[MASK]"
CLS_TOKEN = "[CLS]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN, CLS_TOKEN)
PAD_ID, UNK_ID, MASK_ID, CLS_ID = range(len(SPECIAL_TOKENS))


@dataclass(frozen=True)
class Vocabulary:
    """Token inventory: the four specials first, then sorted content tokens."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValidationError("vocabulary must start with the special tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocabulary contains duplicate tokens")

    @classmethod
    def build(cls, tokens: Iterable[str]) -> "Vocabulary":
        content = sorted(set(tokens) - set(SPECIAL_TOKENS))
        return cls(tokens=SPECIAL_TOKENS + tuple(content))

    @cached_property
    def _ids(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_at(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @cached_property
    def vocab_hash(self) -> str:
        blob = json.dumps(list(self.tokens), ensure_ascii=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@runtime_checkable
class EncoderBackend(Protocol):
    """Inference contract shared by all sentence encoders."""

    vocab: Vocabulary

    @property
    def dim(self) -> int: ...

    def token_vectors(self, tokens: Sequence[str]) -> np.ndarray:
        """Contextual vector per token, shape [len(tokens), dim]."""

    def sentence_vector(self, tokens: Sequence[str]) -> np.ndarray:
        """Pooled sentence vector, shape [dim]."""

    def fill_distribution(self, tokens: Sequence[str], positions: Sequence[int]) -> np.ndarray:
        """Vocabulary distribution at each masked position, shape [len(positions), vocab]."""


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, ffn_dim: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, num_heads=1, batch_first=True)
        self.ln_attn = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, ffn_dim), nn.GELU(), nn.Linear(ffn_dim, dim))
        self.ln_ffn = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        attended, _ = self.attn(x, x, x, key_padding_mask=pad_mask, need_weights=False)
        x = self.ln_attn(x + attended)
        return self.ln_ffn(x + self.ffn(x))


class TinyEncoder(nn.Module):
    """Two-layer single-head self-attention encoder with learned positions and an MLM head."""

    def __init__(self, vocab_size: int, dim: int = 32, layers: int = 2,
                 ffn_dim: int | None = None, max_len: int = 64):
        super().__init__()
        self.dim = dim
        self.max_len = max_len
        self.tok_embed = nn.Embedding(vocab_size, dim, padding_idx=PAD_ID)
        self.pos_embed = nn.Embedding(max_len, dim)
        self.blocks = nn.ModuleList(
            EncoderLayer(dim, ffn_dim or 2 * dim) for _ in range(layers)
        )
        self.lm_head = nn.Linear(dim, vocab_size)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        if ids.shape[1] > self.max_len:
            raise ValidationError(
                f"sequence length {ids.shape[1]} exceeds encoder limit {self.max_len}"
            )
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.tok_embed(ids) + self.pos_embed(positions)
        for block in self.blocks:
            x = block(x, pad_mask)
        return x

    def logits(self, ids: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        return self.lm_head(self.forward(ids, pad_mask))


class TorchBackend:
    """EncoderBackend over a TinyEncoder.  [CLS] is prepended internally."""

    def __init__(self, vocab: Vocabulary, encoder: TinyEncoder):
        self.vocab = vocab
        self.encoder = encoder

    @property
    def dim(self) -> int:
        return self.encoder.dim

    def _with_cls(self, tokens: Sequence[str]) -> torch.Tensor:
        ids = [CLS_ID] + self.vocab.encode(tokens)
        return torch.tensor([ids], dtype=torch.long)

    def _hidden(self, tokens: Sequence[str]) -> torch.Tensor:
        self.encoder.eval()
        with torch.no_grad():
            return self.encoder(self._with_cls(tokens))[0]

    def token_vectors(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            raise ValidationError("cannot encode an empty token sequence")
        return self._hidden(tokens)[1:].numpy().astype(np.float64)

    def sentence_vector(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            raise ValidationError("cannot encode an empty token sequence")
        return self._hidden(tokens)[0].numpy().astype(np.float64)

    def fill_distribution(self, tokens: Sequence[str], positions: Sequence[int]) -> np.ndarray:
        for pos in positions:
            if not 0 <= pos < len(tokens):
                raise ValidationError(f"mask position {pos} out of range")
            if tokens[pos] != MASK_TOKEN:
                raise ValidationError(f"position {pos} holds {tokens[pos]!r}, not a mask")
        if not positions:
            return np.zeros((0, len(self.vocab)), dtype=np.float64)
        self.encoder.eval()
        with torch.no_grad():
            logits = self.encoder.logits(self._with_cls(tokens))[0]
        rows = logits[[p + 1 for p in positions]]
        return torch.softmax(rows, dim=-1).numpy().astype(np.float64)


def seed_torch(seed: int) -> None:
    torch.manual_seed(seed)
    torch.set_num_threads(1)


def build_backend(vocab: Vocabulary, *, dim: int = 32, layers: int = 2,
                  ffn_dim: int | None = None, max_len: int = 64, seed: int = 0) -> TorchBackend:
    seed_torch(seed)
    encoder = TinyEncoder(len(vocab), dim=dim, layers=layers, ffn_dim=ffn_dim, max_len=max_len)
    return TorchBackend(vocab, encoder)


def encode_sentence(backend: EncoderBackend, tokens: Sequence[str]) -> np.ndarray:
    return np.asarray(backend.sentence_vector(tokens), dtype=np.float64)


def embed_entity_in_context(backend: EncoderBackend, tokens: Sequence[str],
                            span: tuple[int, int]) -> np.ndarray:
    start, end = span
    if not (0 <= start < end <= len(tokens)):
        raise ValidationError(f"span {span} invalid for a sentence of {len(tokens)} tokens")
    vectors = np.asarray(backend.token_vectors(tokens), dtype=np.float64)
    return vectors[start:end].mean(axis=0)


def pad_batch(vocab: Vocabulary, sequences: Sequence[Sequence[str]]) -> tuple[torch.Tensor, torch.Tensor]:
    """Encode with [CLS] prepended and right padding; mask is True at pad slots."""
    if not sequences:
        raise ValidationError("cannot build an empty batch")
    encoded = [[CLS_ID] + vocab.encode(seq) for seq in sequences]
    width = max(len(row) for row in encoded)
    ids = torch.full((len(encoded), width), PAD_ID, dtype=torch.long)
    pad_mask = torch.ones((len(encoded), width), dtype=torch.bool)
    for i, row in enumerate(encoded):
        ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        pad_mask[i, : len(row)] = False
    return ids, pad_mask


def param_checksum(module: nn.Module) -> str:
    """Digest over all parameters and buffers; equal iff bit-identical."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()
