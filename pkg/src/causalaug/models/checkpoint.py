"""Versioned binary checkpoint container.

Layout: magic ``CAUG\\x01``, a little-endian u32 header length, a canonical
JSON header (kind, config, seed, vocab, vocab hash, tensor index), then the
tensors as raw little-endian float32 in header order.  save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from causalaug.errors import ParseError, ValidationError

MAGIC = b"CAUG\x01"
_TENSOR_DTYPE = np.dtype("<f4")


def _vocab_hash(vocab: Sequence[str]) -> str:
    blob = json.dumps(list(vocab), ensure_ascii=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Checkpoint:
    kind: str
    config: dict
    seed: int
    vocab: tuple[str, ...]
    tensors: dict[str, np.ndarray]

    def tensor(self, name: str) -> np.ndarray:
        if name not in self.tensors:
            raise ValidationError(f"checkpoint has no tensor named {name!r}")
        return self.tensors[name]


def save_checkpoint(path: str | Path, *, kind: str, config: Mapping, seed: int,
                    vocab: Sequence[str], tensors: Mapping[str, np.ndarray]) -> None:
    index = []
    payload = bytearray()
    for name in sorted(tensors):
        array = np.ascontiguousarray(np.asarray(tensors[name], dtype=np.float64), dtype=_TENSOR_DTYPE)
        index.append({"name": name, "shape": list(array.shape)})
        payload.extend(array.tobytes())
    header = {
        "kind": kind,
        "config": dict(config),
        "seed": int(seed),
        "vocab": list(vocab),
        "vocab_hash": _vocab_hash(vocab),
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt checkpoint header: {exc}") from exc
    offset += header_len
    vocab = tuple(header["vocab"])
    if header.get("vocab_hash") != _vocab_hash(vocab):
        raise ValidationError(f"{path}: vocabulary hash mismatch")
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * _TENSOR_DTYPE.itemsize
        if end > len(raw):
            raise ParseError(f"{path}: truncated tensor payload for {entry['name']!r}")
        flat = np.frombuffer(raw[offset:end], dtype=_TENSOR_DTYPE)
        tensors[entry["name"]] = flat.reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise ParseError(f"{path}: {len(raw) - offset} trailing bytes after tensors")
    return Checkpoint(
        kind=header["kind"],
        config=header["config"],
        seed=header["seed"],
        vocab=vocab,
        tensors=tensors,
    )


def state_tensors(module: nn.Module) -> dict[str, np.ndarray]:
    """Parameters and buffers as float32 numpy arrays keyed by state-dict name."""
    return {
        name: tensor.detach().cpu().numpy().astype(np.float32)
        for name, tensor in module.state_dict().items()
    }


def load_state_tensors(module: nn.Module, tensors: Mapping[str, np.ndarray]) -> None:
    state = module.state_dict()
    missing = sorted(set(state) - set(tensors))
    extra = sorted(set(tensors) - set(state))
    if missing or extra:
        raise ValidationError(f"state mismatch: missing {missing}, unexpected {extra}")
    module.load_state_dict(
        {name: torch.from_numpy(np.asarray(array, dtype=np.float32)).reshape(state[name].shape)
         for name, array in tensors.items()}
    )
