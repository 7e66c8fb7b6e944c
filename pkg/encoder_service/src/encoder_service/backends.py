"""Embedding backends behind the HTTP surface.

Two kinds: a real sentence-transformer model (the default), and a
model-free hashing encoder selected with a model name of the form
"hash:<dim>".  The hashing backend exists so the service and everything
that talks to it can be exercised on machines with no model weights; it
is deterministic, order-free over tokens, and produces unit vectors, but
carries no semantics beyond token overlap.
"""

from __future__ import annotations

import hashlib
import math
from typing import Protocol

import numpy as np

_HASH_PREFIX = "hash:"


class EncoderBackend(Protocol):
    name: str
    dim: int

    def encode(self, texts: list[str]) -> np.ndarray: ...


class HashBackend:
    """Counter-mode blake2b token hashing -> one unit vector per text."""

    def __init__(self, dim: int) -> None:
        if dim < 2:
            raise ValueError("hash backend needs dim >= 2")
        self.dim = dim
        self.name = f"{_HASH_PREFIX}{dim}"
        self._blocks = math.ceil(dim / 8)

    def _token_direction(self, token: str) -> np.ndarray:
        normals = np.empty(self._blocks * 8, dtype=np.float64)
        for block in range(self._blocks):
            digest = hashlib.blake2b(
                f"{token}\x1f{block}".encode("utf-8"), digest_size=64
            ).digest()
            words = np.frombuffer(digest, dtype="<u8")
            uniform = (words.astype(np.float64) + 0.5) / 2.0**64
            # Box-Muller on consecutive pairs
            radius = np.sqrt(-2.0 * np.log(uniform[0::2]))
            angle = 2.0 * np.pi * uniform[1::2]
            normals[block * 8 : block * 8 + 4] = radius * np.cos(angle)
            normals[block * 8 + 4 : (block + 1) * 8] = radius * np.sin(angle)
        direction = normals[: self.dim]
        return direction / np.linalg.norm(direction)

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = text.split() or [text]
            for token in tokens:
                out[row] += self._token_direction(token)
            norm = np.linalg.norm(out[row])
            if norm == 0.0:  # exact cancellation; fall back to the raw text
                out[row] = self._token_direction(f"\x00{text}")
                norm = 1.0
            out[row] /= norm
        return out.astype(np.float32)


class SentenceTransformerBackend:
    """Wraps a pretrained sentence-transformers model, loaded once."""

    def __init__(self, model_name: str) -> None:
        from sentence_transformers import SentenceTransformer

        self.name = model_name
        self._model = SentenceTransformer(model_name)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str]) -> np.ndarray:
        vectors = self._model.encode(
            texts, convert_to_numpy=True, normalize_embeddings=True
        )
        return np.asarray(vectors, dtype=np.float32)


def resolve_backend(model: str) -> EncoderBackend:
    """Instantiate the backend a model name describes."""
    if model.startswith(_HASH_PREFIX):
        try:
            dim = int(model[len(_HASH_PREFIX) :])
        except ValueError:
            raise ValueError(f"bad hash backend spec {model!r}; expected hash:<dim>")
        return HashBackend(dim)
    return SentenceTransformerBackend(model)
