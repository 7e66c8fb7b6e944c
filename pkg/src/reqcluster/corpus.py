"""Corpus ingestion: normalization, deduplication, and file readers.

A corpus starts as raw utterance strings, one per user request.  Texts are
normalized (NFC, lowercased, whitespace collapsed) and deduplicated; each
surviving unique text becomes an UtteranceRecord whose frequency counts how
often it occurred.  Record ids are dense integers assigned in first-seen
order, so downstream arrays can be indexed by record id directly.
"""

from __future__ import annotations

import json
import logging
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawUtterance:
    """One raw request as it arrived, before any normalization."""

    text: str
    source_id: Optional[str] = None


@dataclass(frozen=True)
class UtteranceRecord:
    """One unique normalized text with its occurrence count."""

    id: int
    text: str
    frequency: int


def normalize_text(text: str) -> str:
    """Normalize a raw utterance.

    Applies Unicode NFC, lowercases, and collapses runs of whitespace to a
    single space.  Returns the empty string when nothing remains; callers
    drop such rows.
    """
    out = unicodedata.normalize("NFC", text).lower()
    return " ".join(out.split())


def deduplicate(raws: Iterable[RawUtterance]) -> list[UtteranceRecord]:
    """Collapse raw utterances into unique records with frequencies.

    Empty-after-normalization rows are dropped (counted in a warning, never
    stored).  Ids are assigned in first-seen order starting at 0.
    """
    counts: dict[str, int] = {}
    dropped = 0
    for raw in raws:
        text = normalize_text(raw.text)
        if not text:
            dropped += 1
            continue
        counts[text] = counts.get(text, 0) + 1
    if dropped:
        logger.warning("dropped %d empty utterances during ingestion", dropped)
    return [
        UtteranceRecord(id=i, text=text, frequency=freq)
        for i, (text, freq) in enumerate(counts.items())
    ]


def read_corpus_lines(path: str) -> list[UtteranceRecord]:
    """Read a plain-text corpus, one utterance per line."""
    with open(path, "r", encoding="utf-8") as fh:
        raws = [RawUtterance(text=line.rstrip("\n")) for line in fh]
    return deduplicate(raws)


def read_corpus_jsonl(
    path: str,
) -> tuple[list[UtteranceRecord], Optional[np.ndarray]]:
    """Read a structured corpus of JSON objects, one per line.

    Each object carries "text" (required), "count" (optional positive int,
    for pre-aggregated duplicates) and "embedding" (optional list of
    numbers, for precomputed vectors).  Lines whose normalized text
    coincides are merged by summing counts; the first-seen embedding wins.

    Returns the records plus a float64 matrix of precomputed vectors in
    record-id order, or None when no line carried an embedding.  A corpus
    where only some lines carry embeddings is rejected: it cannot be used
    with the precomputed encoder and almost always signals an upstream bug.
    """
    texts: dict[str, int] = {}
    embeddings: dict[str, list[float]] = {}
    dropped = 0
    any_embedding = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                raise DataError(f'line {lineno}: expected an object with a "text" string')
            count = obj.get("count", 1)
            if not isinstance(count, int) or isinstance(count, bool) or count < 1:
                raise DataError(f'line {lineno}: "count" must be a positive integer')
            text = normalize_text(obj["text"])
            if not text:
                dropped += 1
                continue
            texts[text] = texts.get(text, 0) + count
            emb = obj.get("embedding")
            if emb is not None:
                if not isinstance(emb, list) or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in emb
                ):
                    raise DataError(f'line {lineno}: "embedding" must be a list of numbers')
                any_embedding = True
                embeddings.setdefault(text, [float(x) for x in emb])
    if dropped:
        logger.warning("dropped %d empty utterances during ingestion", dropped)
    records = [
        UtteranceRecord(id=i, text=text, frequency=freq)
        for i, (text, freq) in enumerate(texts.items())
    ]
    if not any_embedding:
        return records, None
    missing = [rec.id for rec in records if rec.text not in embeddings]
    if missing:
        raise DataError(
            f"embeddings present for some lines but missing for record ids {missing[:5]}"
        )
    dims = {len(embeddings[rec.text]) for rec in records}
    if len(dims) > 1:
        raise DataError(f"inconsistent embedding dimensions in corpus: {sorted(dims)}")
    matrix = np.asarray([embeddings[rec.text] for rec in records], dtype=np.float64)
    return records, matrix


def read_corpus(
    path: str, fmt: str
) -> tuple[list[UtteranceRecord], Optional[np.ndarray]]:
    """Read a corpus in the named format ("lines" or "jsonl")."""
    if fmt == "lines":
        return read_corpus_lines(path), None
    if fmt == "jsonl":
        return read_corpus_jsonl(path)
    raise DataError(f"unknown corpus format: {fmt!r}")


def validate_records(records: Sequence[UtteranceRecord]) -> None:
    """Check record invariants: dense ids, unique texts, positive counts."""
    seen_texts: set[str] = set()
    for i, rec in enumerate(records):
        if rec.id != i:
            raise DataError(f"record ids must be dense 0..n-1; got {rec.id} at position {i}")
        if rec.frequency < 1:
            raise DataError(f"record {rec.id}: frequency must be >= 1")
        if not rec.text:
            raise DataError(f"record {rec.id}: empty text")
        if rec.text in seen_texts:
            raise DataError(f"record {rec.id}: duplicate text {rec.text!r}")
        seen_texts.add(rec.text)
