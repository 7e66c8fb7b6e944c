"""Cluster naming: tokenization, light stemming, and two naming methods.

A cluster is treated as one document formed from its members' texts,
frequency-weighted.  The tfidf method scores candidate ngrams by
frequency-weighted term frequency times inverse cluster frequency.  The
embedding method encodes the document and every candidate ngram and picks
the ngram closest in cosine.  Both are extractive: every name is built from
tokens that occur in the cluster's own members.

The stemmer is deliberately light (plural/-ing/-ed suffixes with doubling
and e-restoration).  It is self-consistent rather than dictionary-correct:
"pregnancies" becomes "pregnanci", and that is fine because gold names pass
through the same transform wherever names are compared.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from .embedding import EmbeddedCorpus, EncoderSpec, encode_texts
from .errors import DataError, ProtocolError, TransportError, UsageError
from .rbc import Clustering

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_VOWELS = frozenset("aeiou")

UNNAMED = "(unnamed)"


def load_stopwords(path: Optional[str] = None) -> frozenset[str]:
    """Load a stopword list, one word per line; defaults to the bundled one."""
    if path is None:
        text = resources.files("reqcluster.data").joinpath("stopwords_en.txt").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


_DEFAULT_STOPWORDS: Optional[frozenset[str]] = None


def default_stopwords() -> frozenset[str]:
    global _DEFAULT_STOPWORDS
    if _DEFAULT_STOPWORDS is None:
        _DEFAULT_STOPWORDS = load_stopwords()
    return _DEFAULT_STOPWORDS


def _has_vowel(s: str) -> bool:
    return any(c in _VOWELS for c in s)


def _strip_verb_suffix(token: str) -> str:
    """Strip -ing/-ed with doubling and e-restoration cleanup."""
    if token.endswith("ing") and len(token) >= 5 and _has_vowel(token[:-3]):
        stem = token[:-3]
    elif token.endswith("ed") and len(token) >= 4 and _has_vowel(token[:-2]):
        stem = token[:-2]
    else:
        return token
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in "aeioulsz":
        return stem[:-1]  # running -> run, patting -> pat
    if (
        len(stem) <= 3
        and len(stem) >= 2
        and stem[-1] not in _VOWELS
        and stem[-1] not in "wxy"
        and stem[-2] in _VOWELS
    ):
        return stem + "e"  # mak -> make, hop -> hope
    return stem


def _strip_plural_suffix(token: str) -> str:
    if token.endswith("sses") and len(token) >= 5:
        return token[:-2]
    if token.endswith("ies") and len(token) >= 4:
        return token[:-2]  # pregnancies -> pregnanci
    if token.endswith("ss") or token.endswith("us") or token.endswith("is"):
        return token
    if token.endswith("es") and len(token) >= 4 and (
        token[-3] in "sxzo" or token.endswith(("ches", "shes"))
    ):
        return token[:-2]  # boxes -> box, goes -> go
    if token.endswith("s") and len(token) >= 3:
        return token[:-1]
    return token


def stem(token: str) -> str:
    """Light suffix stemming for one lowercase token."""
    return _strip_verb_suffix(_strip_plural_suffix(token))


def tokenize_and_stem(text: str, stopwords: Optional[frozenset[str]] = None) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop stopwords and short
    tokens, then stem.  Stopwords are matched before stemming."""
    if stopwords is None:
        stopwords = default_stopwords()
    out = []
    for token in _TOKEN_RE.findall(text.lower()):
        if len(token) < 2 or token in stopwords:
            continue
        out.append(stem(token))
    return out


def _ngrams(tokens: Sequence[str], orders: Iterable[int]) -> Iterable[tuple[str, ...]]:
    for order in orders:
        if order < 1:
            continue
        for i in range(len(tokens) - order + 1):
            yield tuple(tokens[i : i + order])


@dataclass(frozen=True)
class NamingConfig:
    method: str = "tfidf"  # "tfidf" or "embedding"
    ngram_orders: tuple[int, ...] = (1, 2, 3)
    stopwords_path: Optional[str] = None
    encoder: EncoderSpec = field(default_factory=lambda: EncoderSpec(kind="fallback"))
    fallback_to_tfidf: bool = False

    def __post_init__(self) -> None:
        if self.method not in ("tfidf", "embedding"):
            raise UsageError(f"unknown naming method {self.method!r}")
        if not self.ngram_orders or any(o < 1 for o in self.ngram_orders):
            raise UsageError("ngram_orders must be a non-empty tuple of positive ints")


@dataclass(frozen=True)
class ClusterName:
    cluster_id: int
    name: str
    score: float
    method: str


def cluster_ngram_counts(
    member_ids: Iterable[int],
    corpus: EmbeddedCorpus,
    orders: Iterable[int],
    stopwords: frozenset[str],
) -> Counter:
    """Frequency-weighted ngram counts of a cluster's member texts.

    Ngrams never cross member boundaries, so the counts are invariant to
    the order in which members are listed.
    """
    counts: Counter = Counter()
    orders = tuple(orders)
    for member_id in member_ids:
        rec = corpus.records[member_id]
        tokens = tokenize_and_stem(rec.text, stopwords)
        for gram in _ngrams(tokens, orders):
            counts[gram] += rec.frequency
    return counts


def _best_candidate(
    scored: dict[tuple[str, ...], float]
) -> tuple[tuple[str, ...], float]:
    # highest score; ties broken by longer ngram, then lexicographic
    best = min(scored.items(), key=lambda kv: (-kv[1], -len(kv[0]), kv[0]))
    return best


def name_clusters_tfidf(
    clustering: Clustering, corpus: EmbeddedCorpus, config: NamingConfig
) -> list[ClusterName]:
    """Name every cluster by its best tf-idf ngram.

    idf uses cluster-level document frequency: idf = ln((1+C)/(1+df)) + 1
    where C is the number of clusters and df the number of clusters whose
    document contains the ngram.
    """
    stopwords = load_stopwords(config.stopwords_path) if config.stopwords_path else default_stopwords()
    per_cluster = [
        cluster_ngram_counts(sorted(c.member_ids), corpus, config.ngram_orders, stopwords)
        for c in clustering.clusters
    ]
    n_clusters = len(per_cluster)
    df: Counter = Counter()
    for counts in per_cluster:
        df.update(set(counts))
    names = []
    for cluster, counts in zip(clustering.clusters, per_cluster):
        if not counts:
            names.append(ClusterName(cluster.cluster_id, UNNAMED, 0.0, "tfidf"))
            continue
        scored = {
            gram: tf * (np.log((1.0 + n_clusters) / (1.0 + df[gram])) + 1.0)
            for gram, tf in counts.items()
        }
        gram, score = _best_candidate(scored)
        names.append(ClusterName(cluster.cluster_id, " ".join(gram), float(score), "tfidf"))
    return names


_DOC_TOKEN_CAP = 512


def _cluster_document(cluster_member_ids: Iterable[int], corpus: EmbeddedCorpus) -> str:
    """Frequency-expanded raw document text, capped at 512 tokens."""
    tokens: list[str] = []
    for member_id in sorted(cluster_member_ids):
        rec = corpus.records[member_id]
        text_tokens = rec.text.split()
        for _ in range(rec.frequency):
            tokens.extend(text_tokens)
            if len(tokens) >= _DOC_TOKEN_CAP:
                return " ".join(tokens[:_DOC_TOKEN_CAP])
    return " ".join(tokens)


def name_clusters_embedding(
    clustering: Clustering, corpus: EmbeddedCorpus, config: NamingConfig
) -> list[ClusterName]:
    """Name every cluster by the candidate ngram closest to the cluster
    document in the encoder's vector space."""
    stopwords = load_stopwords(config.stopwords_path) if config.stopwords_path else default_stopwords()
    try:
        return _name_embedding_inner(clustering, corpus, config, stopwords)
    except (TransportError, ProtocolError):
        if config.fallback_to_tfidf:
            return [
                ClusterName(n.cluster_id, n.name, n.score, "tfidf-fallback")
                for n in name_clusters_tfidf(clustering, corpus, config)
            ]
        raise


def _name_embedding_inner(
    clustering: Clustering,
    corpus: EmbeddedCorpus,
    config: NamingConfig,
    stopwords: frozenset[str],
) -> list[ClusterName]:
    names = []
    for cluster in clustering.clusters:
        counts = cluster_ngram_counts(
            sorted(cluster.member_ids), corpus, config.ngram_orders, stopwords
        )
        doc = _cluster_document(cluster.member_ids, corpus)
        if not counts or not doc:
            names.append(ClusterName(cluster.cluster_id, UNNAMED, 0.0, "embedding"))
            continue
        candidates = sorted(counts)
        texts = [doc] + [" ".join(gram) for gram in candidates]
        raw = encode_texts(texts, config.encoder)
        norms = np.linalg.norm(raw, axis=1)
        if np.any(norms == 0.0):
            raise DataError("encoder returned a zero vector for a naming candidate")
        unit = raw / norms[:, None]
        sims = unit[1:] @ unit[0]
        scored = {gram: float(sims[i]) for i, gram in enumerate(candidates)}
        gram, score = _best_candidate(scored)
        names.append(ClusterName(cluster.cluster_id, " ".join(gram), score, "embedding"))
    return names


def name_clusters(
    clustering: Clustering, corpus: EmbeddedCorpus, config: NamingConfig
) -> list[ClusterName]:
    if config.method == "tfidf":
        return name_clusters_tfidf(clustering, corpus, config)
    return name_clusters_embedding(clustering, corpus, config)
