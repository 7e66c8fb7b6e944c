"""Text embedding: encoder dispatch, the hash fallback encoder, and the
HTTP client for a remote encoder service.

All downstream modules consume unit-length float64 vectors; normalization
happens exactly once, when an EmbeddedCorpus is constructed.  Wire payloads
use 32-bit float precision, internal arithmetic is 64-bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import requests

from .corpus import UtteranceRecord, validate_records
from .errors import DataError, ProtocolError, TransportError, UsageError

_KINDS = ("precomputed", "remote", "fallback")


@dataclass(frozen=True)
class EncoderSpec:
    """How to turn texts into vectors.

    kind:
        "precomputed" - vectors arrive with the corpus, no encoding happens;
        "remote"      - POST batches of texts to an encoder service;
        "fallback"    - the built-in hashing encoder (no model, no network).
    """

    kind: str
    endpoint: Optional[str] = None
    fallback_dim: int = 64
    fallback_seed: int = 0
    batch_size: int = 256

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise UsageError(f"unknown encoder kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "remote" and not self.endpoint:
            raise UsageError("remote encoder requires an endpoint URL")
        if self.fallback_dim < 2:
            raise UsageError("fallback_dim must be >= 2")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")


@dataclass
class EmbeddedCorpus:
    """Records plus one unit-length float64 vector per record.

    vectors[i] corresponds to records[i], whose id is i.  Dimension is
    constant and at least 2; rows are L2-normalized exactly once here.
    """

    records: tuple[UtteranceRecord, ...]
    vectors: np.ndarray
    dim: int

    @classmethod
    def from_raw(
        cls, records: Sequence[UtteranceRecord], raw_vectors: np.ndarray
    ) -> "EmbeddedCorpus":
        validate_records(records)
        matrix = np.asarray(raw_vectors, dtype=np.float64)
        if matrix.ndim != 2:
            raise DataError(f"expected a 2-d vector matrix, got shape {matrix.shape}")
        if matrix.shape[0] != len(records):
            raise DataError(
                f"{len(records)} records but {matrix.shape[0]} vectors"
            )
        if matrix.shape[1] < 2:
            raise DataError("embedding dimension must be >= 2")
        if not np.isfinite(matrix).all():
            bad = int(np.argwhere(~np.isfinite(matrix).all(axis=1))[0][0])
            raise DataError(f"record {bad}: non-finite embedding component")
        norms = np.linalg.norm(matrix, axis=1)
        zero = np.where(norms == 0.0)[0]
        if zero.size:
            raise DataError(f"record {int(zero[0])}: all-zero embedding")
        matrix = matrix / norms[:, None]
        return cls(records=tuple(records), vectors=matrix, dim=matrix.shape[1])


# ---------------------------------------------------------------------------
# fallback hashing encoder
# ---------------------------------------------------------------------------

_BLOCK_NORMALS = 8  # one 64-byte digest yields 8 uint64s -> 8 normals


def _token_direction(token: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic pseudo-random unit vector for one token.

    Derives standard normals from blake2b digests in counter mode via the
    Box-Muller transform, so the mapping is stable across platforms and
    library versions, then normalizes to unit length.
    """
    normals = np.empty(dim, dtype=np.float64)
    blocks = (dim + _BLOCK_NORMALS - 1) // _BLOCK_NORMALS
    pos = 0
    for block in range(blocks):
        digest = hashlib.blake2b(
            f"{seed}|{block}|".encode("utf-8") + token.encode("utf-8"),
            digest_size=64,
        ).digest()
        words = np.frombuffer(digest, dtype="<u8").astype(np.float64)
        # map uint64 -> (0, 1]; keep away from 0 so log() stays finite
        uniforms = (words + 1.0) * 2.0**-64
        u1, u2 = uniforms[0::2], uniforms[1::2]
        radius = np.sqrt(-2.0 * np.log(u1))
        take = min(_BLOCK_NORMALS, dim - pos)
        pair = np.empty(_BLOCK_NORMALS, dtype=np.float64)
        pair[0::2] = radius * np.cos(2.0 * math.pi * u2)
        pair[1::2] = radius * np.sin(2.0 * math.pi * u2)
        normals[pos : pos + take] = pair[:take]
        pos += take
    norm = np.linalg.norm(normals)
    if norm == 0.0:  # astronomically unlikely; all normals exactly zero
        raise DataError(f"degenerate token direction for {token!r}")
    return normals / norm


def fallback_encode(
    text: str,
    dim: int = 64,
    seed: int = 0,
    _cache: Optional[dict[str, np.ndarray]] = None,
) -> np.ndarray:
    """Encode one text as the normalized sum of its token directions.

    Tokens are whitespace-split; each token maps to a seed-keyed
    pseudo-random unit direction.  Texts sharing a token multiset map to
    identical vectors.  Raises DataError on texts with no tokens.
    """
    tokens = text.split()
    if not tokens:
        raise DataError("cannot encode a text with no tokens")
    total = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        if _cache is not None and token in _cache:
            direction = _cache[token]
        else:
            direction = _token_direction(token, dim, seed)
            if _cache is not None:
                _cache[token] = direction
        total += direction
    norm = np.linalg.norm(total)
    if norm == 0.0:
        raise DataError(f"token directions cancelled for text {text!r}")
    return total / norm


# ---------------------------------------------------------------------------
# remote encoder client
# ---------------------------------------------------------------------------


def _embed_url(endpoint: str) -> str:
    base = endpoint.rstrip("/")
    return base if base.endswith("/embed") else base + "/embed"


def _post_batch(url: str, texts: Sequence[str], batch_index: int) -> tuple[np.ndarray, int]:
    try:
        resp = requests.post(url, json={"texts": list(texts)}, timeout=120)
    except requests.RequestException as exc:
        raise TransportError(f"batch {batch_index}: encoder service unreachable: {exc}") from exc
    if resp.status_code != 200:
        detail = ""
        try:
            detail = resp.json().get("error", "")
        except (ValueError, AttributeError):
            detail = resp.text[:200]
        raise TransportError(
            f"batch {batch_index}: encoder service returned {resp.status_code}: {detail}"
        )
    try:
        payload = resp.json()
    except ValueError as exc:
        raise ProtocolError(f"batch {batch_index}: response is not JSON") from exc
    if not isinstance(payload, dict) or "embeddings" not in payload or "dim" not in payload:
        raise ProtocolError(f'batch {batch_index}: response missing "embeddings" or "dim"')
    rows = payload["embeddings"]
    dim = payload["dim"]
    if not isinstance(rows, list) or len(rows) != len(texts):
        raise ProtocolError(
            f"batch {batch_index}: expected {len(texts)} embeddings, got "
            f"{len(rows) if isinstance(rows, list) else type(rows).__name__}"
        )
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != dim:
        raise ProtocolError(f"batch {batch_index}: embedding rows do not match declared dim {dim}")
    return matrix, int(dim)


def encode_texts(texts: Sequence[str], spec: EncoderSpec) -> np.ndarray:
    """Encode arbitrary texts, returning raw (unnormalized) float64 rows.

    Remote batches are sent sequentially and reassembled in input order;
    a dimension change between batches is a protocol error.
    """
    if spec.kind == "fallback":
        cache: dict[str, np.ndarray] = {}
        return np.stack(
            [fallback_encode(t, spec.fallback_dim, spec.fallback_seed, cache) for t in texts]
        ) if texts else np.empty((0, spec.fallback_dim), dtype=np.float64)
    if spec.kind == "remote":
        assert spec.endpoint is not None
        url = _embed_url(spec.endpoint)
        parts: list[np.ndarray] = []
        dim: Optional[int] = None
        for batch_index, start in enumerate(range(0, len(texts), spec.batch_size)):
            matrix, got_dim = _post_batch(url, texts[start : start + spec.batch_size], batch_index)
            if dim is None:
                dim = got_dim
            elif got_dim != dim:
                raise ProtocolError(
                    f"batch {batch_index}: dimension changed from {dim} to {got_dim}"
                )
            parts.append(matrix)
        if not parts:
            raise UsageError("no texts to encode")
        return np.concatenate(parts, axis=0)
    raise UsageError(f"encode_texts does not support kind {spec.kind!r}")


def embed(
    records: Sequence[UtteranceRecord],
    spec: EncoderSpec,
    precomputed: Optional[np.ndarray] = None,
) -> EmbeddedCorpus:
    """Attach one vector per record and normalize into an EmbeddedCorpus."""
    if not records:
        raise DataError("cannot embed an empty corpus")
    if spec.kind == "precomputed":
        if precomputed is None:
            raise UsageError("precomputed encoder requires a vector matrix")
        return EmbeddedCorpus.from_raw(records, precomputed)
    raw = encode_texts([rec.text for rec in records], spec)
    return EmbeddedCorpus.from_raw(records, raw)
