"""Evaluation: adjusted Rand index, cosine silhouette, clustered ratio,
labeled-dataset loading, and the evaluation protocol against gold labels.

Evaluation excludes outliers: both partitions are restricted to the ids the
clustering actually placed in clusters, so the scores measure cluster
quality rather than coverage.  Coverage is reported separately as the
clustered ratio.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import UtteranceRecord, normalize_text
from .embedding import EmbeddedCorpus, EncoderSpec, encode_texts
from .errors import DataError, UsageError
from .naming import tokenize_and_stem
from .rbc import Clustering


def adjusted_rand_index(pred: Mapping[int, object], gold: Mapping[int, object]) -> float:
    """Adjusted Rand index between two labelings of the same elements.

    Uses the permutation-model form: (sum_ij C(n_ij,2) - E) / (max - E)
    with E = sum_i C(a_i,2) * sum_j C(b_j,2) / C(n,2).  When the
    denominator is zero (both labelings trivial) the convention is 1 for
    identical partitions and 0 otherwise.
    """
    if pred.keys() != gold.keys():
        raise DataError("partitions cover different element sets")
    n = len(pred)
    if n == 0:
        raise DataError("cannot score empty partitions")
    contingency: Counter = Counter()
    a_counts: Counter = Counter()
    b_counts: Counter = Counter()
    for key in pred:
        p, g = pred[key], gold[key]
        contingency[(p, g)] += 1
        a_counts[p] += 1
        b_counts[g] += 1

    def comb2(x: int) -> int:
        return x * (x - 1) // 2

    sum_ij = sum(comb2(c) for c in contingency.values())
    sum_a = sum(comb2(c) for c in a_counts.values())
    sum_b = sum(comb2(c) for c in b_counts.values())
    total_pairs = comb2(n)
    if total_pairs == 0:
        return 1.0  # single element: identical by construction
    expected = sum_a * sum_b / total_pairs
    maximum = 0.5 * (sum_a + sum_b)
    denom = maximum - expected
    if denom == 0.0:
        same = ({frozenset(k for k in pred if pred[k] == lab) for lab in a_counts}
                == {frozenset(k for k in gold if gold[k] == lab) for lab in b_counts})
        return 1.0 if same else 0.0
    return float((sum_ij - expected) / denom)


def silhouette(vectors: np.ndarray, labels: Sequence[object]) -> float:
    """Mean silhouette over all points with cosine distance (1 - cosine).

    Rows of `vectors` must be unit length.  Points in singleton clusters
    score 0.  Requires at least two distinct clusters.

    With unit rows, the mean distance from point i to cluster c is
    1 - x_i . S_c / |c|  (S_c the member-vector sum), so no pairwise
    distance matrix is ever materialized.
    """
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(labels):
        raise UsageError("vectors and labels must align")
    label_list = list(labels)
    unique = sorted(set(label_list), key=repr)
    if len(unique) < 2:
        raise UsageError("silhouette is undefined for a single cluster")
    index_of = {lab: i for i, lab in enumerate(unique)}
    lab_idx = np.asarray([index_of[lab] for lab in label_list])
    k = len(unique)
    n = matrix.shape[0]
    sums = np.zeros((k, matrix.shape[1]), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for c in range(k):
        rows = matrix[lab_idx == c]
        sums[c] = rows.sum(axis=0)
        counts[c] = rows.shape[0]

    dots = matrix @ sums.T  # (n, k)
    scores = np.zeros(n, dtype=np.float64)
    for i in range(n):
        c = lab_idx[i]
        if counts[c] == 1:
            continue  # singleton: defined as 0
        a = 1.0 - (dots[i, c] - 1.0) / (counts[c] - 1)  # own dot contributes 1
        other = [1.0 - dots[i, d] / counts[d] for d in range(k) if d != c]
        b = min(other)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def clustered_ratio(
    clustering: Clustering,
    corpus: Optional[EmbeddedCorpus] = None,
    weighted: bool = True,
) -> float:
    """Fraction of the corpus placed in clusters.

    Weighted mode (raw corpora) uses record frequencies as mass; unweighted
    mode (labeled datasets) counts each record once.
    """
    clustered = sorted(i for c in clustering.clusters for i in c.member_ids)
    outliers = sorted(clustering.outlier_ids)
    if weighted:
        if corpus is None:
            raise UsageError("weighted clustered_ratio requires the corpus")
        mass = lambda ids: sum(corpus.records[i].frequency for i in ids)  # noqa: E731
    else:
        mass = len
    total = mass(clustered) + mass(outliers)
    if total == 0:
        raise DataError("clustering covers no records")
    return mass(clustered) / total


# ---------------------------------------------------------------------------
# labeled datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledDataset:
    """Gold-labeled examples: (text, label) pairs plus label display names."""

    examples: tuple[tuple[str, str], ...]
    labels: frozenset[str]
    label_names: Mapping[str, str]


def _build_dataset(
    pairs: Sequence[tuple[str, str]], exclude_label: Optional[str]
) -> LabeledDataset:
    kept = [(t, l) for t, l in pairs if exclude_label is None or l != exclude_label]
    if not kept:
        raise DataError("dataset has no examples after filtering")
    labels = frozenset(l for _, l in kept)
    return LabeledDataset(
        examples=tuple(kept),
        labels=labels,
        label_names={l: l for l in labels},
    )


def load_dataset_jsonl(path: str, exclude_label: Optional[str] = None) -> LabeledDataset:
    """Load {"text": ..., "label": ...} objects, one JSON object per line."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str) or not isinstance(
                obj.get("label"), str
            ):
                raise DataError(f'line {lineno}: expected "text" and "label" strings')
            pairs.append((obj["text"], obj["label"]))
    return _build_dataset(pairs, exclude_label)


def load_dataset_csv(path: str, exclude_label: Optional[str] = None) -> LabeledDataset:
    """Load a CSV with a text,label header."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "text" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise DataError('CSV must have a header with "text" and "label" columns')
        pairs = [(row["text"], row["label"]) for row in reader]
    return _build_dataset(pairs, exclude_label)


def recommended_min_size(dataset: LabeledDataset) -> int:
    """The smallest gold class size; a reasonable min_size when replaying a
    labeled dataset through the pipeline."""
    counts = Counter(label for _, label in dataset.examples)
    return min(counts.values())


def gold_labels_by_record(
    records: Sequence[UtteranceRecord], dataset: LabeledDataset
) -> dict[int, str]:
    """Map record ids to gold labels via normalized-text matching.

    When duplicate dataset examples collapse into one record with
    conflicting labels, the majority label wins; ties break to the
    lexicographically smallest label so the mapping is deterministic.
    """
    votes: dict[str, Counter] = defaultdict(Counter)
    for text, label in dataset.examples:
        norm = normalize_text(text)
        if norm:
            votes[norm][label] += 1
    out: dict[int, str] = {}
    for rec in records:
        if rec.text not in votes:
            raise DataError(f"record {rec.id} has no matching dataset example: {rec.text!r}")
        tally = votes[rec.text]
        best = min(tally.items(), key=lambda kv: (-kv[1], kv[0]))
        out[rec.id] = best[0]
    return out


@dataclass(frozen=True)
class EvalReport:
    ari: Optional[float]
    silhouette: Optional[float]
    clustered_ratio: float
    n_clusters: int
    naming_similarity: Optional[float] = None


def evaluate_against_labels(
    corpus: EmbeddedCorpus, clustering: Clustering, dataset: LabeledDataset
) -> EvalReport:
    """Score a clustering against gold labels, outliers excluded.

    Both partitions are restricted to clustered record ids.  ARI compares
    cluster assignments with gold labels; silhouette scores the clustered
    embeddings under the predicted partition.  The clustered ratio here is
    unweighted (each record counts once).
    """
    gold = gold_labels_by_record(corpus.records, dataset)
    clustered: dict[int, int] = {}
    for c in clustering.clusters:
        for i in c.member_ids:
            clustered[i] = c.cluster_id
    ratio = clustered_ratio(clustering, corpus, weighted=False)
    if not clustered:
        return EvalReport(ari=None, silhouette=None, clustered_ratio=0.0, n_clusters=0)
    ids = sorted(clustered)
    pred_part = {i: clustered[i] for i in ids}
    gold_part = {i: gold[i] for i in ids}
    ari = adjusted_rand_index(pred_part, gold_part)
    sil: Optional[float]
    try:
        sil = silhouette(corpus.vectors[ids], [clustered[i] for i in ids])
    except UsageError:
        sil = None  # a single surviving cluster has no silhouette
    return EvalReport(
        ari=ari,
        silhouette=sil,
        clustered_ratio=ratio,
        n_clusters=len(clustering.clusters),
    )


def majority_gold_names(
    clustering: Clustering, gold_by_record: Mapping[int, str], label_names: Mapping[str, str]
) -> dict[int, str]:
    """Align each cluster to the display name of its majority gold label."""
    out: dict[int, str] = {}
    for c in clustering.clusters:
        tally = Counter(gold_by_record[i] for i in c.member_ids)
        best = min(tally.items(), key=lambda kv: (-kv[1], kv[0]))
        out[c.cluster_id] = label_names[best[0]]
    return out


def naming_similarity(
    predicted_names: Sequence[str],
    gold_names: Sequence[str],
    encoder: EncoderSpec,
) -> float:
    """Mean cosine similarity between aligned predicted and gold names.

    Both sides pass through the same tokenize-and-stem transform before
    encoding, so the light stemmer never penalizes only one side.
    """
    if len(predicted_names) != len(gold_names):
        raise UsageError("predicted and gold name lists must align")
    if not predicted_names:
        raise UsageError("nothing to compare")

    def canon(name: str) -> str:
        tokens = tokenize_and_stem(name)
        return " ".join(tokens) if tokens else name.lower()

    texts = [canon(n) for n in predicted_names] + [canon(n) for n in gold_names]
    raw = encode_texts(texts, encoder)
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms == 0.0):
        raise DataError("encoder returned a zero vector for a name")
    unit = raw / norms[:, None]
    half = len(predicted_names)
    sims = np.sum(unit[:half] * unit[half:], axis=1)
    return float(sims.mean())
