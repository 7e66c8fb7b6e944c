from __future__ import annotations

import numpy as np
import pytest

from reqcluster.corpus import UtteranceRecord
from reqcluster.embedding import EmbeddedCorpus


def make_records(n: int, frequencies=None, prefix: str = "utterance") -> list[UtteranceRecord]:
    if frequencies is None:
        frequencies = [1] * n
    return [
        UtteranceRecord(id=i, text=f"{prefix} {i}", frequency=int(frequencies[i]))
        for i in range(n)
    ]


def corpus_from_vectors(vectors: np.ndarray, frequencies=None) -> EmbeddedCorpus:
    vectors = np.asarray(vectors, dtype=np.float64)
    return EmbeddedCorpus.from_raw(make_records(vectors.shape[0], frequencies), vectors)


def orthonormal_centers(n_centers: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((dim, n_centers)))
    return q.T


def perturb_on_sphere(center: np.ndarray, max_angle: float, rng: np.random.Generator) -> np.ndarray:
    """A unit vector at a uniform random angle within max_angle of center."""
    g = rng.standard_normal(center.shape[0])
    g -= (g @ center) * center
    norm = np.linalg.norm(g)
    if norm == 0.0:
        return center.copy()
    u = g / norm
    theta = rng.uniform(0.0, max_angle)
    return np.cos(theta) * center + np.sin(theta) * u


def bundle_corpus(
    n_bundles: int,
    per_bundle: int,
    n_noise: int,
    dim: int,
    seed: int,
    max_angle: float = 0.2,
    frequencies=None,
):
    """Synthetic corpus: tight bundles around orthonormal centers plus
    isotropic noise.  Returns (corpus, gold) where gold maps record id to
    its bundle index, or to "noise:<id>" for isotropic points."""
    rng = np.random.default_rng(seed)
    centers = orthonormal_centers(n_bundles, dim, rng)
    vectors = []
    gold = {}
    idx = 0
    for b in range(n_bundles):
        for _ in range(per_bundle):
            vectors.append(perturb_on_sphere(centers[b], max_angle, rng))
            gold[idx] = b
            idx += 1
    for _ in range(n_noise):
        g = rng.standard_normal(dim)
        vectors.append(g / np.linalg.norm(g))
        gold[idx] = f"noise:{idx}"
        idx += 1
    return corpus_from_vectors(np.asarray(vectors), frequencies), gold


def corpus_with_texts(texts, frequencies=None, dim: int = 4, seed: int = 99) -> EmbeddedCorpus:
    """A corpus with the given (already normalized) texts and random
    unit embeddings; for tests that exercise text handling, not geometry."""
    if frequencies is None:
        frequencies = [1] * len(texts)
    records = [
        UtteranceRecord(id=i, text=t, frequency=int(f))
        for i, (t, f) in enumerate(zip(texts, frequencies))
    ]
    vectors = np.random.default_rng(seed).standard_normal((len(texts), dim))
    return EmbeddedCorpus.from_raw(records, vectors)


def clustering_over(groups, corpus: EmbeddedCorpus, config=None):
    """Build a Clustering by fiat from member-id groups; anything not
    listed becomes an outlier."""
    from reqcluster.rbc import Cluster, Clustering, RbcConfig

    clusters = []
    for cid, members in enumerate(groups):
        rows = corpus.vectors[sorted(members)]
        clusters.append(
            Cluster(
                cluster_id=cid,
                member_ids=frozenset(members),
                centroid=rows.mean(axis=0),
                size=len(members),
                weight=sum(corpus.records[i].frequency for i in members),
            )
        )
    placed = {i for m in groups for i in m}
    outliers = frozenset(r.id for r in corpus.records) - placed
    return Clustering(
        clusters=tuple(clusters),
        outlier_ids=outliers,
        config=config or RbcConfig(min_sim=0.5, min_size=1),
        iterations_run=1,
        converged=True,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
