"""Representative selection: a determinantal point process over a cluster's
members, plus random and top-frequency baselines.

The kernel is built from rows e_i = sqrt(f_i) * u_i, where u_i is member
i's unit embedding and f_i its frequency, so K = E E^T has K_ii = f_i and
K_ij = sqrt(f_i f_j) cos(u_i, u_j).  A size-k sample then favors members
that are individually frequent but mutually dissimilar: the probability of
a subset is proportional to the determinant of its principal minor.

Sampling is exact: eigendecompose K, pick k eigenvectors via the
elementary-symmetric-polynomial recursion, then run the projection-DPP
elimination loop.  Eigenvalues below 1e-10 of the largest count as zero;
when k exceeds the kernel's rank the determinantal part covers only rank
items and the remainder is filled by the top-frequency rule, with the
result marked as padded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import UtteranceRecord
from .embedding import EmbeddedCorpus
from .errors import DataError, UsageError
from .rbc import Cluster

_METHODS = ("dpp", "random", "top_frequency")
_EIG_TOL = 1e-10


@dataclass(frozen=True)
class RepConfig:
    method: str = "dpp"
    k: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise UsageError(f"unknown method {self.method!r}; expected one of {_METHODS}")
        if self.k < 1:
            raise UsageError("k must be a positive integer")


@dataclass(frozen=True)
class DppKernel:
    matrix: np.ndarray
    member_ids: tuple[int, ...]
    frequencies: tuple[int, ...]


@dataclass(frozen=True)
class DppSample:
    member_ids: tuple[int, ...]
    padded: bool


def build_kernel(cluster: Cluster, corpus: EmbeddedCorpus) -> DppKernel:
    """Frequency-scaled similarity kernel over the cluster's members."""
    members = sorted(cluster.member_ids)
    if not members:
        raise DataError("cannot build a kernel for an empty cluster")
    rows = corpus.vectors[members]
    freqs = np.asarray([corpus.records[i].frequency for i in members], dtype=np.float64)
    scaled = rows * np.sqrt(freqs)[:, None]
    matrix = scaled @ scaled.T
    matrix = (matrix + matrix.T) / 2.0  # keep it exactly symmetric
    return DppKernel(
        matrix=matrix,
        member_ids=tuple(members),
        frequencies=tuple(int(f) for f in freqs),
    )


def _elementary_symmetric(eigvals: np.ndarray, k: int) -> np.ndarray:
    """Table E[l, n] of elementary symmetric polynomials of the first n
    eigenvalues, for l = 0..k."""
    n = eigvals.shape[0]
    table = np.zeros((k + 1, n + 1), dtype=np.float64)
    table[0, :] = 1.0
    for l in range(1, k + 1):
        for i in range(1, n + 1):
            table[l, i] = table[l, i - 1] + eigvals[i - 1] * table[l - 1, i - 1]
    return table


def _select_eigenvectors(eigvals: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """Choose k eigenvector indices with probability proportional to the
    product of their eigenvalues (the size-k mixture weights)."""
    table = _elementary_symmetric(eigvals, k)
    selected: list[int] = []
    remaining = k
    for n in range(eigvals.shape[0], 0, -1):
        if remaining == 0:
            break
        if n == remaining:
            marginal = 1.0
        elif table[remaining, n] <= 0.0:
            marginal = 0.0
        else:
            marginal = eigvals[n - 1] * table[remaining - 1, n - 1] / table[remaining, n]
        if rng.random() < marginal:
            selected.append(n - 1)
            remaining -= 1
    if remaining != 0:
        raise DataError("eigenvector selection failed; kernel rank below requested size")
    return selected


def _project_sample(vectors: np.ndarray, rng: np.random.Generator) -> list[int]:
    """Sample one item per column of an orthonormal basis, eliminating the
    chosen item's row and re-orthonormalizing after each draw."""
    V = vectors.copy()
    chosen: list[int] = []
    while V.shape[1] > 0:
        probs = np.einsum("ij,ij->i", V, V)
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        item = int(rng.choice(V.shape[0], p=probs))
        chosen.append(item)
        col = int(np.argmax(np.abs(V[item])))
        pivot = V[:, col] / V[item, col]
        V = V - np.outer(pivot, V[item])
        V = np.delete(V, col, axis=1)
        if V.shape[1] > 0:
            V, _ = np.linalg.qr(V)
    return chosen


def _top_frequency_order(kernel: DppKernel) -> list[int]:
    order = sorted(
        range(len(kernel.member_ids)),
        key=lambda i: (-kernel.frequencies[i], kernel.member_ids[i]),
    )
    return order


def dpp_sample(kernel: DppKernel, k: int, seed: int) -> DppSample:
    """Draw one size-k sample of member ids from the kernel's k-DPP.

    Deterministic given (kernel, k, seed).  If k is at least the number of
    members, or exceeds the kernel's numerical rank, the determinantal draw
    covers what it can and the rest is filled by top frequency; such
    results are marked padded.
    """
    if k < 1:
        raise UsageError("sample size must be a positive integer")
    m = len(kernel.member_ids)
    if k > m:
        return DppSample(member_ids=kernel.member_ids, padded=True)
    rng = np.random.default_rng(seed)
    eigvals, eigvecs = np.linalg.eigh(kernel.matrix)
    top = float(eigvals.max()) if m else 0.0
    if top <= 0.0:
        raise DataError("kernel has no positive eigenvalues")
    eigvals = np.where(eigvals < _EIG_TOL * top, 0.0, eigvals)
    rank = int(np.count_nonzero(eigvals))

    core_size = min(k, rank)
    indices = _select_eigenvectors(eigvals, core_size, rng)
    items = _project_sample(eigvecs[:, indices], rng)
    chosen = {kernel.member_ids[i] for i in items}
    if len(chosen) != core_size:
        raise DataError("projection sampling returned a duplicate item")

    padded = core_size < k
    if padded:
        for i in _top_frequency_order(kernel):
            if len(chosen) == k:
                break
            chosen.add(kernel.member_ids[i])
    return DppSample(member_ids=tuple(sorted(chosen)), padded=padded)


def select_representatives(
    cluster: Cluster, corpus: EmbeddedCorpus, config: RepConfig
) -> list[UtteranceRecord]:
    """Pick config.k representative members of a cluster.

    dpp: determinantal sampling over the frequency-scaled kernel, output
    ordered by descending frequency then id.  random: a uniform seeded
    sample without replacement.  top_frequency: the k most frequent
    members, ties to the lowest id.  Clusters with at most k members are
    returned whole.
    """
    members = sorted(cluster.member_ids)
    if not members:
        raise DataError("cluster has no members")
    by_freq = sorted(members, key=lambda i: (-corpus.records[i].frequency, i))
    if config.k >= len(members):
        return [corpus.records[i] for i in by_freq]
    if config.method == "top_frequency":
        picked = by_freq[: config.k]
    elif config.method == "random":
        rng = np.random.default_rng(config.seed)
        picked = [int(i) for i in rng.choice(members, size=config.k, replace=False)]
    else:
        kernel = build_kernel(cluster, corpus)
        sample = dpp_sample(kernel, config.k, config.seed)
        picked = sorted(sample.member_ids, key=lambda i: (-corpus.records[i].frequency, i))
    return [corpus.records[i] for i in picked]
