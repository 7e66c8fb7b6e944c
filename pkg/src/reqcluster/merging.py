"""Cluster merging: a semantic mode over centroid geometry and a keyword
mode over shared domain-marker vocabulary.

Semantic mode re-runs radius-based clustering with the centroids of the
flat clusters as the elements (unit-normalized, min_size 1), then unions
the member sets of centroids that landed together.

Keyword mode first extracts domain markers: words whose target-corpus rate
exceeds the background rate by at least z_threshold standard deviations
under a log-odds model with an informative Dirichlet prior.  Each cluster
is profiled by its top-k frequency-weighted content words; the similarity
of two clusters is the fraction of markers found in both profiles, and the
highest-similarity pair above the threshold is merged greedily until no
pair qualifies.

Either way, exactly one merge step happens per invocation and outliers are
left untouched.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import UtteranceRecord
from .embedding import EmbeddedCorpus
from .errors import DataError, UsageError
from .naming import cluster_ngram_counts, default_stopwords, load_stopwords, tokenize_and_stem
from .rbc import Cluster, Clustering, RbcConfig, centroid_matrix, cluster_vector_rows

_MODES = ("semantic", "keyword")


@dataclass(frozen=True)
class MergeConfig:
    mode: str
    merge_min_sim: float
    top_k_words: int = 10
    marker_z_threshold: float = 5.0
    background_path: Optional[str] = None
    dirichlet_alpha0: float = 500.0
    stopwords_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise UsageError(f"unknown merge mode {self.mode!r}; expected one of {_MODES}")
        if not (0.0 < self.merge_min_sim < 1.0):
            raise UsageError("merge_min_sim must lie strictly between 0 and 1")
        if self.top_k_words < 1:
            raise UsageError("top_k_words must be a positive integer")
        if self.marker_z_threshold <= 0.0:
            raise UsageError("marker_z_threshold must be positive")
        if self.dirichlet_alpha0 <= 0.0:
            raise UsageError("dirichlet_alpha0 must be positive")


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _rebuild_clusters(
    groups: Sequence[Iterable[int]], corpus: EmbeddedCorpus
) -> tuple[Cluster, ...]:
    """Build renumbered clusters (descending size, ties to smallest member)
    from member-id groups, recomputing centroids from member vectors."""
    prepared = [sorted(g) for g in groups]
    prepared.sort(key=lambda m: (-len(m), m[0]))
    clusters = []
    for new_id, members in enumerate(prepared):
        rows = corpus.vectors[members]
        clusters.append(
            Cluster(
                cluster_id=new_id,
                member_ids=frozenset(members),
                centroid=rows.mean(axis=0),
                size=len(members),
                weight=int(sum(corpus.records[i].frequency for i in members)),
            )
        )
    return tuple(clusters)


def _check_ids(clustering: Clustering, corpus: EmbeddedCorpus) -> None:
    n = len(corpus.records)
    for c in clustering.clusters:
        for i in c.member_ids:
            if not (0 <= i < n):
                raise DataError(f"cluster {c.cluster_id} references unknown record id {i}")


# ---------------------------------------------------------------------------
# semantic merge
# ---------------------------------------------------------------------------


def semantic_merge(
    clustering: Clustering, corpus: EmbeddedCorpus, config: MergeConfig
) -> Clustering:
    """Merge flat clusters whose centroids cluster together geometrically."""
    if config.mode != "semantic":
        raise UsageError(f"semantic_merge called with mode {config.mode!r}")
    _check_ids(clustering, corpus)
    if len(clustering.clusters) <= 1:
        return clustering
    centroids = centroid_matrix(clustering)
    norms = np.linalg.norm(centroids, axis=1)
    if np.any(norms == 0.0):
        raise DataError("cannot merge: a cluster has a zero centroid")
    unit = centroids / norms[:, None]
    merge_cfg = RbcConfig(
        min_sim=config.merge_min_sim,
        min_size=1,
        max_iter=clustering.config.max_iter,
        seed=clustering.config.seed,
    )
    groups, leftovers, _, _ = cluster_vector_rows(unit, merge_cfg)
    assert not leftovers  # min_size 1 leaves nothing behind
    merged_members = [
        [i for flat_idx in group for i in clustering.clusters[flat_idx].member_ids]
        for group in groups
    ]
    return Clustering(
        clusters=_rebuild_clusters(merged_members, corpus),
        outlier_ids=clustering.outlier_ids,
        config=clustering.config,
        iterations_run=clustering.iterations_run,
        converged=clustering.converged,
    )


# ---------------------------------------------------------------------------
# domain markers via log-odds with an informative Dirichlet prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkerSet:
    markers: frozenset[str]
    z_scores: Mapping[str, float]


def load_background(path: Optional[str] = None) -> dict[str, float]:
    """Load a word<TAB>count background frequency table; defaults to the
    small general-English table bundled with the package."""
    if path is None:
        text = resources.files("reqcluster.data").joinpath("background_freqs.tsv").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    table: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"background table line {lineno}: expected word<TAB>count")
        word, raw_count = parts
        try:
            count = float(raw_count)
        except ValueError as exc:
            raise DataError(f"background table line {lineno}: bad count {raw_count!r}") from exc
        if count <= 0:
            raise DataError(f"background table line {lineno}: count must be positive")
        table[word] = table.get(word, 0.0) + count
    if not table:
        raise DataError("background frequency table is empty")
    return table


_ALPHA_FLOOR = 0.01


def prior_weights(
    words: Iterable[str], background: Mapping[str, float], alpha0: float
) -> dict[str, float]:
    """Informative Dirichlet prior: alpha_w = alpha0 * p_bg(w), floored so
    words unseen in the background keep a small positive prior."""
    n_b = float(sum(background.values()))
    return {
        w: max(alpha0 * background.get(w, 0.0) / n_b, _ALPHA_FLOOR) for w in words
    }


def log_odds_scores(
    target_counts: Mapping[str, float],
    background_counts: Mapping[str, float],
    alpha: Mapping[str, float],
    alpha0: float,
) -> dict[str, tuple[float, float, float]]:
    """Per-word (delta, sigma-squared, z) log-odds-ratio scores.

    delta is the difference of prior-smoothed log odds between target and
    background; sigma-squared is its large-sample variance estimate;
    z = delta / sigma.  Words scored are those present in the target.
    """
    n_t = float(sum(target_counts.values()))
    n_b = float(sum(background_counts.values()))
    if n_t <= 0:
        raise DataError("target corpus has no tokens")
    if n_b <= 0:
        raise DataError("background corpus has no tokens")
    out: dict[str, tuple[float, float, float]] = {}
    for word, y_t in target_counts.items():
        a = alpha[word]
        y_b = float(background_counts.get(word, 0.0))
        delta = math.log((y_t + a) / (n_t + alpha0 - y_t - a)) - math.log(
            (y_b + a) / (n_b + alpha0 - y_b - a)
        )
        sigma2 = 1.0 / (y_t + a) + 1.0 / (y_b + a)
        z = delta / math.sqrt(sigma2)
        out[word] = (delta, sigma2, z)
    return out


def count_corpus_tokens(
    records: Sequence[UtteranceRecord], stopwords: frozenset[str]
) -> Counter:
    """Frequency-weighted stemmed-token counts over a corpus."""
    counts: Counter = Counter()
    for rec in records:
        for token in tokenize_and_stem(rec.text, stopwords):
            counts[token] += rec.frequency
    return counts


def extract_markers(
    records: Sequence[UtteranceRecord],
    config: MergeConfig,
    background: Optional[Mapping[str, float]] = None,
) -> MarkerSet:
    """Find words markedly over-represented in the corpus relative to the
    background: z >= marker_z_threshold on the target-excess side."""
    if not records:
        raise DataError("cannot extract markers from an empty corpus")
    if background is None:
        background = load_background(config.background_path)
    if not background:
        raise DataError("background frequency table is empty")
    stopwords = (
        load_stopwords(config.stopwords_path) if config.stopwords_path else default_stopwords()
    )
    target_counts = count_corpus_tokens(records, stopwords)
    if not target_counts:
        raise DataError("corpus has no content tokens after stopword removal")
    alpha = prior_weights(target_counts.keys(), background, config.dirichlet_alpha0)
    scores = log_odds_scores(target_counts, background, alpha, config.dirichlet_alpha0)
    z_scores = {w: z for w, (_, _, z) in scores.items()}
    markers = frozenset(w for w, z in z_scores.items() if z >= config.marker_z_threshold)
    return MarkerSet(markers=markers, z_scores=z_scores)


# ---------------------------------------------------------------------------
# keyword merge
# ---------------------------------------------------------------------------


def cluster_top_words(
    member_ids: Iterable[int],
    corpus: EmbeddedCorpus,
    top_k: int,
    stopwords: frozenset[str],
) -> list[str]:
    """Top-k frequency-weighted content words of a cluster; ties break
    lexicographically."""
    counts = cluster_ngram_counts(member_ids, corpus, (1,), stopwords)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [gram[0] for gram, _ in ranked[:top_k]]


def marker_similarity(
    words_a: Iterable[str], words_b: Iterable[str], markers: MarkerSet
) -> float:
    """|markers shared by both profiles| / |markers|."""
    if not markers.markers:
        raise UsageError("marker set is empty")
    shared = markers.markers & set(words_a) & set(words_b)
    return len(shared) / len(markers.markers)


def keyword_merge(
    clustering: Clustering,
    corpus: EmbeddedCorpus,
    markers: MarkerSet,
    config: MergeConfig,
) -> Clustering:
    """Greedily merge cluster pairs sharing enough domain markers.

    Each round recomputes pairwise marker similarity over current profiles,
    merges the highest-similarity pair at or above merge_min_sim (ties: the
    earliest pair in index order), and recomputes the merged profile from
    the union.  Stops when no pair qualifies.
    """
    if config.mode != "keyword":
        raise UsageError(f"keyword_merge called with mode {config.mode!r}")
    if not markers.markers:
        raise UsageError("keyword merge requires a non-empty marker set")
    _check_ids(clustering, corpus)
    stopwords = (
        load_stopwords(config.stopwords_path) if config.stopwords_path else default_stopwords()
    )

    groups: list[list[int]] = [sorted(c.member_ids) for c in clustering.clusters]
    profiles: list[list[str]] = [
        cluster_top_words(g, corpus, config.top_k_words, stopwords) for g in groups
    ]
    while len(groups) > 1:
        best_pair = None
        best_sim = -1.0
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                sim = marker_similarity(profiles[i], profiles[j], markers)
                if sim > best_sim:
                    best_sim = sim
                    best_pair = (i, j)
        if best_pair is None or best_sim < config.merge_min_sim:
            break
        i, j = best_pair
        groups[i] = sorted(groups[i] + groups[j])
        del groups[j]
        profiles[i] = cluster_top_words(groups[i], corpus, config.top_k_words, stopwords)
        del profiles[j]
    return Clustering(
        clusters=_rebuild_clusters(groups, corpus),
        outlier_ids=clustering.outlier_ids,
        config=clustering.config,
        iterations_run=clustering.iterations_run,
        converged=clustering.converged,
    )


def merge(
    clustering: Clustering,
    corpus: EmbeddedCorpus,
    config: MergeConfig,
    markers: Optional[MarkerSet] = None,
) -> Clustering:
    """Dispatch to the configured merge mode, extracting markers on demand."""
    if config.mode == "semantic":
        return semantic_merge(clustering, corpus, config)
    if markers is None:
        markers = extract_markers(corpus.records, config)
    return keyword_merge(clustering, corpus, markers, config)
