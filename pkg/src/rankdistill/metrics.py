"""Ranking construction and rank-quality measures.

All measures operate on one query's documents; corpus-level numbers are
macro averages over queries, computed by callers (see
:func:`rankdistill.distill.fidelity`).

Conventions, shared by every consumer in the toolkit:

* DCG gain is ``2**label - 1`` and the position discount is
  ``1 / log2(position + 1)`` (positions are 1-based, zero beyond the
  cutoff).  Queries whose ideal DCG is zero score 0, not NaN.
* Ties in scores are broken by ascending document ordinal, so every
  ranking is deterministic and Kendall's tau needs no tie correction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRADE_MIN = 0
GRADE_MAX = 4


@dataclass(frozen=True)
class Ranking:
    """A deterministic ordering of one query's documents, best first.

    ``ordered_docs`` is a permutation of ``0..n-1`` (document ordinals);
    ``scores`` is the parallel, non-increasing score vector.
    """

    query_id: str
    ordered_docs: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        docs = np.asarray(self.ordered_docs)
        scores = np.asarray(self.scores, dtype=np.float64)
        if docs.shape != scores.shape or docs.ndim != 1 or docs.size == 0:
            raise ValueError("ordered_docs and scores must be parallel 1-d vectors")
        n = docs.size
        if not np.array_equal(np.sort(docs), np.arange(n)):
            raise ValueError("ordered_docs must be a permutation of 0..n-1")
        if np.any(np.diff(scores) > 0):
            raise ValueError("scores must be non-increasing along the ranking")
        object.__setattr__(self, "ordered_docs", docs.astype(np.intp))
        object.__setattr__(self, "scores", scores)

    @property
    def n(self) -> int:
        return self.ordered_docs.size

    def positions(self) -> np.ndarray:
        """1-based rank position of each document, indexed by ordinal."""
        pos = np.empty(self.n, dtype=np.intp)
        pos[self.ordered_docs] = np.arange(1, self.n + 1)
        return pos


@dataclass(frozen=True)
class MetricResult:
    """One row of evaluation numbers at cutoff ``k``.

    ``tau``/``tau_at_k`` are ``None`` where rank correlation does not
    apply (e.g. a base ranker evaluated against itself would be 1 by
    definition, so its report row carries no tau columns).
    """

    ndcg_at_k: float
    precision_at_k: float
    tau: float | None
    tau_at_k: float | None
    k: int


def descending_order(scores: np.ndarray) -> np.ndarray:
    """Indices that sort ``scores`` descending; ties keep ascending index."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def rank_by_scores(scores, query_id: str = "") -> Ranking:
    """Build the deterministic ranking induced by a score vector."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a non-empty 1-d vector")
    bad = np.flatnonzero(~np.isfinite(scores))
    if bad.size:
        raise ValueError(f"non-finite score {scores[bad[0]]!r} for doc {bad[0]}")
    order = descending_order(scores)
    return Ranking(query_id=query_id, ordered_docs=order, scores=scores[order])


def graded_gain(labels: np.ndarray) -> np.ndarray:
    """Exponential DCG gain ``2**label - 1``."""
    return np.exp2(np.asarray(labels, dtype=np.float64)) - 1.0


def position_discounts(n: int, k: int) -> np.ndarray:
    """Discounts ``1/log2(p+1)`` for 1-based positions ``p``, zero past ``k``."""
    p = np.arange(1, n + 1, dtype=np.float64)
    d = 1.0 / np.log2(p + 1.0)
    d[p > k] = 0.0
    return d


def _check_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("labels must be a non-empty 1-d vector")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(np.asarray(arr, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(arr, dtype=np.float64)):
            raise ValueError("labels must be integers")
        arr = rounded.astype(np.int64)
    if arr.min() < GRADE_MIN or arr.max() > GRADE_MAX:
        raise ValueError(f"labels must lie in [{GRADE_MIN}, {GRADE_MAX}]")
    return arr.astype(np.int64)


def ndcg_at_k(labels_in_rank_order, k: int) -> float:
    """NDCG at cutoff ``k`` of graded labels listed in ranked order.

    Returns 0.0 when every label is zero (ideal DCG is zero), keeping
    per-query macro averages well defined.
    """
    labels = _check_labels(labels_in_rank_order)
    if k < 1:
        raise ValueError("k must be >= 1")
    d = position_discounts(labels.size, k)
    dcg = float(np.dot(graded_gain(labels), d))
    ideal = np.sort(labels)[::-1]
    idcg = float(np.dot(graded_gain(ideal), d))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def precision_at_k(labels_in_rank_order, k: int, relevance_threshold: int = 1) -> float:
    """Fraction of the top ``k`` positions holding a label >= threshold.

    The divisor is ``k`` even when fewer than ``k`` documents exist, so
    short result lists are penalised rather than inflated.
    """
    labels = _check_labels(labels_in_rank_order)
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (1 <= relevance_threshold <= GRADE_MAX):
        raise ValueError(f"relevance_threshold must lie in [1, {GRADE_MAX}]")
    top = labels[: min(k, labels.size)]
    return float(np.count_nonzero(top >= relevance_threshold)) / float(k)


def _tau_from_positions(b_positions_in_a_order: np.ndarray) -> float:
    """Tau-a from the second ranking's positions listed in first-ranking order."""
    b = np.asarray(b_positions_in_a_order)
    n = b.size
    total = n * (n - 1) // 2
    iu, ju = np.triu_indices(n, k=1)
    concordant = int(np.count_nonzero(b[iu] < b[ju]))
    discordant = total - concordant
    return float(concordant - discordant) / float(total)


def _check_comparable(rank_a: Ranking, rank_b: Ranking) -> None:
    if rank_a.n != rank_b.n:
        raise ValueError(
            f"rankings cover different doc sets ({rank_a.n} vs {rank_b.n} docs)"
        )


def kendall_tau(rank_a: Ranking, rank_b: Ranking) -> float:
    """Kendall's tau-a between two tie-free rankings of the same documents.

    ``(concordant - discordant) / (n*(n-1)/2)`` over all document pairs;
    exact because :func:`rank_by_scores` never produces ties.
    """
    _check_comparable(rank_a, rank_b)
    if rank_a.n < 2:
        raise ValueError("tau needs at least 2 documents")
    pos_b = rank_b.positions()
    return _tau_from_positions(pos_b[rank_a.ordered_docs])


def kendall_tau_at_k(
    rank_a: Ranking, rank_b: Ranking, k: int, mode: str = "base"
) -> float:
    """Kendall's tau restricted to the top of the list.

    ``mode="base"`` (default) restricts to the documents in ``rank_a``'s
    top ``k`` -- ``rank_a`` is always the reference (base) ranking.
    ``mode="intersection"`` restricts to documents in both top-``k`` sets.
    Either way, members are ordered by their full-list positions and the
    pair count runs over the restricted set only.
    """
    _check_comparable(rank_a, rank_b)
    if k < 2:
        raise ValueError("k must be >= 2")
    if mode == "base":
        subset = rank_a.ordered_docs[: min(k, rank_a.n)]
    elif mode == "intersection":
        top_a = set(rank_a.ordered_docs[: min(k, rank_a.n)].tolist())
        top_b = set(rank_b.ordered_docs[: min(k, rank_b.n)].tolist())
        subset = np.asarray(sorted(top_a & top_b), dtype=np.intp)
    else:
        raise ValueError(f"unknown top-k mode {mode!r}")
    if subset.size < 2:
        raise ValueError(f"top-{k} restriction leaves {subset.size} docs; need >= 2")
    pos_a = rank_a.positions()
    pos_b = rank_b.positions()
    in_a_order = subset[np.argsort(pos_a[subset], kind="stable")]
    return _tau_from_positions(pos_b[in_a_order])
