"""Radius-based clustering over unit-length embedding vectors.

A seeded permutation fixes the visiting order once.  On the first pass each
record joins the existing cluster whose centroid it is most cosine-similar
to, provided that similarity strictly exceeds min_sim; otherwise it founds
a singleton.  Later passes revisit records in the same order, first
removing the record from its cluster (deleting the cluster if that empties
it) and then reassigning it by the same rule.  The run converges when a
full pass reassigns nothing, or stops after max_iter passes.

Centroids are arithmetic means of member vectors and are deliberately not
re-normalized; similarity against a centroid divides the dot product by the
centroid's norm, which gives the same ranking as cosine against the
normalized mean.  Internally each cluster keeps its member-vector sum, so
removal and insertion are O(d) and the mean is recovered by dividing by the
member count.

After the passes, clusters smaller than min_size dissolve into the outlier
pool, and survivors are renumbered 0..k-1 by descending size (ties: the
smallest member id wins).  Equal similarities during assignment resolve to
the earliest-created cluster, so runs are deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embedding import EmbeddedCorpus
from .errors import DataError, UsageError


@dataclass(frozen=True)
class RbcConfig:
    min_sim: float
    min_size: int
    max_iter: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.min_sim < 1.0):
            raise UsageError("min_sim must lie strictly between 0 and 1")
        if self.min_size < 1:
            raise UsageError("min_size must be a positive integer")
        if self.max_iter < 1:
            raise UsageError("max_iter must be a positive integer")


@dataclass(frozen=True)
class Cluster:
    cluster_id: int
    member_ids: frozenset[int]
    centroid: np.ndarray
    size: int
    weight: int


@dataclass(frozen=True)
class Clustering:
    clusters: tuple[Cluster, ...]
    outlier_ids: frozenset[int]
    config: RbcConfig
    iterations_run: int
    converged: bool


class _SlotTable:
    """Append-only cluster slots holding member-vector sums.

    Slot index doubles as creation order, which is what the equal-similarity
    tie-break keys on; emptied slots stay dead (count 0) and are masked out
    of candidate scans.  The one exception: a record that empties its own
    cluster and then founds a new one reuses the vacated slot, so a stable
    singleton does not count as a reassignment on every pass.
    """

    def __init__(self, dim: int, capacity: int = 256) -> None:
        self.dim = dim
        self.sums = np.zeros((capacity, dim), dtype=np.float64)
        self.inv_norms = np.zeros(capacity, dtype=np.float64)
        self.counts = np.zeros(capacity, dtype=np.int64)
        self.n_slots = 0

    def _grow(self) -> None:
        cap = self.sums.shape[0]
        self.sums = np.vstack([self.sums, np.zeros((cap, self.dim))])
        self.inv_norms = np.concatenate([self.inv_norms, np.zeros(cap)])
        self.counts = np.concatenate([self.counts, np.zeros(cap, dtype=np.int64)])

    def _refresh_norm(self, slot: int) -> None:
        norm = np.linalg.norm(self.sums[slot])
        # a live cluster whose member sum cancels exactly is unjoinable
        # until its contents change; inv_norm 0 keeps its similarity at 0
        self.inv_norms[slot] = 1.0 / norm if norm > 0.0 else 0.0

    def new_slot(self, vector: np.ndarray) -> int:
        if self.n_slots == self.sums.shape[0]:
            self._grow()
        slot = self.n_slots
        self.n_slots += 1
        self.sums[slot] = vector
        self.counts[slot] = 1
        self._refresh_norm(slot)
        return slot

    def add(self, slot: int, vector: np.ndarray) -> None:
        self.sums[slot] += vector
        self.counts[slot] += 1
        self._refresh_norm(slot)

    def remove(self, slot: int, vector: np.ndarray) -> None:
        self.counts[slot] -= 1
        if self.counts[slot] == 0:
            self.sums[slot] = 0.0
            self.inv_norms[slot] = 0.0
        else:
            self.sums[slot] -= vector
            self._refresh_norm(slot)

    def revive(self, slot: int, vector: np.ndarray) -> None:
        self.sums[slot] = vector
        self.counts[slot] = 1
        self._refresh_norm(slot)

    def best_match(self, vector: np.ndarray, min_sim: float) -> int:
        """Index of the most similar live cluster above min_sim, else -1.

        Dead slots hold a zeroed sum and inv_norm 0, so they score exactly
        0.0 and can never clear the strictly positive threshold.
        """
        n = self.n_slots
        if n == 0:
            return -1
        sims = self.sums[:n] @ vector
        sims *= self.inv_norms[:n]
        best = int(np.argmax(sims))  # first max: earliest-created slot wins ties
        return best if sims[best] > min_sim else -1


def cluster_vector_rows(
    vectors: np.ndarray, config: RbcConfig
) -> tuple[list[list[int]], list[int], int, bool]:
    """Run the clustering passes over raw vector rows.

    Returns (clusters as row-index lists, outlier row indices, passes run,
    converged).  Cluster member lists are ascending; the cluster list is
    already ordered by descending size with ties on the smallest member.
    """
    n, dim = vectors.shape
    if n == 0:
        raise DataError("cannot cluster an empty corpus")
    if not np.isfinite(vectors).all():
        raise DataError("corpus vectors contain non-finite values")

    order = np.random.default_rng(config.seed).permutation(n)
    slots = _SlotTable(dim)
    assign = np.full(n, -1, dtype=np.int64)

    iterations = 0
    converged = False
    for _ in range(config.max_iter):
        iterations += 1
        changed = 0
        for i in order:
            v = vectors[i]
            old = int(assign[i])
            emptied_own = False
            if old >= 0:
                slots.remove(old, v)
                emptied_own = slots.counts[old] == 0
            best = slots.best_match(v, config.min_sim)
            if best >= 0:
                slots.add(best, v)
                new = best
            elif emptied_own:
                slots.revive(old, v)  # stable singleton: not a reassignment
                new = old
            else:
                new = slots.new_slot(v)
            assign[i] = new
            if new != old:
                changed += 1
        if changed == 0:
            converged = True
            break

    # group members by slot, then apply the size filter
    members_by_slot: dict[int, list[int]] = {}
    for i in range(n):
        members_by_slot.setdefault(int(assign[i]), []).append(i)
    survivors = []
    outliers: list[int] = []
    for slot, members in members_by_slot.items():
        if len(members) >= config.min_size:
            survivors.append(members)
        else:
            outliers.extend(members)
    survivors.sort(key=lambda m: (-len(m), m[0]))
    outliers.sort()

    total = sum(len(m) for m in survivors) + len(outliers)
    if total != n:  # partition invariant; cheap, so always checked
        raise AssertionError(f"partition check failed: {total} != {n}")
    return survivors, outliers, iterations, converged


def rbc_cluster(corpus: EmbeddedCorpus, config: RbcConfig) -> Clustering:
    """Cluster an embedded corpus; see the module docstring for semantics."""
    groups, outliers, iterations, converged = cluster_vector_rows(corpus.vectors, config)
    clusters = []
    for new_id, members in enumerate(groups):
        rows = corpus.vectors[members]
        centroid = rows.mean(axis=0)
        weight = int(sum(corpus.records[i].frequency for i in members))
        clusters.append(
            Cluster(
                cluster_id=new_id,
                member_ids=frozenset(members),
                centroid=centroid,
                size=len(members),
                weight=weight,
            )
        )
    return Clustering(
        clusters=tuple(clusters),
        outlier_ids=frozenset(outliers),
        config=config,
        iterations_run=iterations,
        converged=converged,
    )


def clustering_to_dict(clustering: Clustering) -> dict:
    """JSON-ready view: cluster ids, members, sizes, weights, outliers."""
    return {
        "clusters": [
            {
                "id": c.cluster_id,
                "member_ids": sorted(c.member_ids),
                "size": c.size,
                "weight": c.weight,
            }
            for c in clustering.clusters
        ],
        "outliers": sorted(clustering.outlier_ids),
        "converged": clustering.converged,
        "iterations": clustering.iterations_run,
    }


def centroid_matrix(clustering: Clustering) -> np.ndarray:
    """Stack cluster centroids into one matrix in cluster-id order."""
    if not clustering.clusters:
        raise UsageError("clustering has no clusters")
    return np.stack([c.centroid for c in clustering.clusters])
