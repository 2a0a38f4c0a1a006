"""Secondary training data and interpreter fidelity.

A base ranker's output ranking is converted into relevance grades by
bucketing rank positions: with the defaults, ranks 1-5 get label 4,
ranks 6-10 label 3, and so on down to the floor label 0, which absorbs
every later rank.  Datasets relabeled this way ("secondary" data) train
tree-based interpreters; fidelity compares interpreter rankings against
the base ranker with Kendall's tau while NDCG/Precision are still scored
against the original human labels.

Base rankers may be in-process models (anything with ``predict``) or an
:class:`ExternalScoreTable` loaded from a tab-separated file, so opaque
third-party systems can be audited through files alone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DataError
from .lambdamart import LambdaMARTRanker
from .letor import Dataset, FeatureSubset, QueryGroup
from .metrics import (
    MetricResult,
    Ranking,
    kendall_tau,
    kendall_tau_at_k,
    ndcg_at_k,
    precision_at_k,
    rank_by_scores,
)

logger = logging.getLogger(__name__)

REGIME_ALL = "AM"      # interpreter sees all features
REGIME_SUBSET = "IM"   # interpreter sees only the interpretable subset


@dataclass(frozen=True)
class SecondaryLabelConfig:
    """Rank-bucket labeling: position p gets ``max(floor, top - (p-1)//bucket)``."""

    bucket_size: int = 5
    top_label: int = 4
    floor_label: int = 0

    def __post_init__(self):
        if self.bucket_size < 1:
            raise ValueError("bucket_size must be >= 1")
        if not (self.top_label > self.floor_label >= 0):
            raise ValueError("need top_label > floor_label >= 0")
        if self.top_label > 4:
            raise ValueError("top_label cannot exceed grade 4")

    def label_for_position(self, position: int) -> int:
        """Label of 1-based rank position ``position``."""
        return max(self.floor_label, self.top_label - (position - 1) // self.bucket_size)


@dataclass(frozen=True)
class ExternalScoreTable:
    """Scores keyed by ``(query_id, doc_ordinal)`` for model-free auditing."""

    scores: Mapping[tuple[str, int], float]

    @classmethod
    def from_file(cls, path) -> "ExternalScoreTable":
        """Read ``<query_id>\\t<doc_ordinal>\\t<score>`` lines."""
        table: dict[tuple[str, int], float] = {}
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, raw in enumerate(fh, start=1):
                    line = raw.strip()
                    if not line or line.startswith("#"):
                        continue
                    parts = line.split("\t")
                    if len(parts) != 3:
                        raise DataError(
                            f"{path}:{lineno}: expected '<query_id>\\t<doc_ordinal>\\t<score>'"
                        )
                    qid, ordinal_s, score_s = parts
                    try:
                        ordinal = int(ordinal_s)
                        value = float(score_s)
                    except ValueError:
                        raise DataError(f"{path}:{lineno}: malformed ordinal or score") from None
                    if not np.isfinite(value):
                        raise DataError(f"{path}:{lineno}: scores must be finite")
                    key = (qid, ordinal)
                    if key in table:
                        raise DataError(f"{path}:{lineno}: duplicate entry for {key}")
                    table[key] = value
        except OSError as exc:
            raise DataError(f"cannot read score table {path}: {exc}") from exc
        if not table:
            raise DataError(f"empty score table: {path}")
        return cls(table)

    def for_group(self, group: QueryGroup) -> np.ndarray:
        out = np.empty(group.n_docs)
        for i in range(group.n_docs):
            try:
                out[i] = self.scores[(group.query_id, i)]
            except KeyError:
                raise DataError(
                    f"missing external score for query {group.query_id!r} doc {i}"
                ) from None
        return out


def write_score_table(path, rows) -> None:
    """Write ``(query_id, doc_ordinal, score)`` rows as the score-table TSV."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid, ordinal, value in rows:
            fh.write(f"{qid}\t{ordinal}\t{value!r}\n")


def export_scores(source, dataset: Dataset, path) -> None:
    """Score every instance of a dataset and persist the score table."""
    rows = []
    for group in dataset.groups:
        scores = scores_for(source, group)
        rows.extend((group.query_id, i, float(scores[i])) for i in range(group.n_docs))
    write_score_table(path, rows)


def scores_for(source, group: QueryGroup) -> np.ndarray:
    """Scores of one query's docs from a model or an external table."""
    if isinstance(source, ExternalScoreTable):
        return source.for_group(group)
    return np.asarray(source.predict(group.features), dtype=np.float64)


def rank_query(source, group: QueryGroup) -> Ranking:
    """Deterministic ranking of one query's documents under a score source."""
    return rank_by_scores(scores_for(source, group), query_id=group.query_id)


def generate_secondary_labels(
    ranking: Ranking, config: SecondaryLabelConfig = SecondaryLabelConfig()
) -> np.ndarray:
    """Bucketed labels indexed by doc ordinal for one ranked query."""
    positions = ranking.positions()
    raw = config.top_label - (positions - 1) // config.bucket_size
    return np.maximum(config.floor_label, raw).astype(np.int64)


def build_secondary_dataset(
    source,
    queries: Dataset,
    config: SecondaryLabelConfig = SecondaryLabelConfig(),
) -> tuple[Dataset, dict[str, np.ndarray]]:
    """Relabel a dataset from a base ranker's rankings.

    Returns the relabeled dataset (features, grouping and query order
    untouched) plus a sidecar mapping ``query_id -> original labels`` for
    audit; training code must never consume the sidecar.
    """
    groups = []
    sidecar: dict[str, np.ndarray] = {}
    for group in queries.groups:
        ranking = rank_query(source, group)
        labels = generate_secondary_labels(ranking, config)
        groups.append(QueryGroup(group.query_id, labels, group.features))
        sidecar[group.query_id] = group.labels
    return Dataset(tuple(groups), queries.feature_dim), sidecar


def write_sidecar(sidecar: dict[str, np.ndarray], path) -> None:
    """Original labels as ``<query_id>\\t<doc_ordinal>\\t<label>`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid, labels in sidecar.items():
            for i, label in enumerate(labels):
                fh.write(f"{qid}\t{i}\t{int(label)}\n")


@dataclass(frozen=True)
class InterpreterSpec:
    """Feature regime plus training hyperparameters for one interpreter."""

    feature_subset: FeatureSubset | None = None
    params: dict = field(default_factory=dict)

    @property
    def regime(self) -> str:
        return REGIME_ALL if self.feature_subset is None else REGIME_SUBSET


def train_interpreter(
    secondary_train: Dataset,
    secondary_valid: Dataset | None,
    spec: InterpreterSpec,
) -> LambdaMARTRanker:
    """Fit a tree interpreter on secondary-labeled data.

    With a feature subset, tree splits are restricted to the subset's
    columns, so the returned ensemble references only regime features.
    """
    if secondary_train.n_queries == 0:
        raise DataError("secondary training dataset is empty")
    if spec.feature_subset is not None:
        spec.feature_subset.validate_for(secondary_train.feature_dim)
    ranker = LambdaMARTRanker(feature_subset=spec.feature_subset, **spec.params)
    X, y, qid = secondary_train.to_arrays()
    eval_set = None
    if secondary_valid is not None and secondary_valid.n_queries:
        eval_set = secondary_valid.to_arrays()
    ranker.fit(X, y, qid, eval_set=eval_set)
    return ranker


@dataclass(frozen=True)
class PerQueryFidelity:
    query_id: str
    ndcg_at_k: float
    precision_at_k: float
    tau: float | None
    tau_at_k: float | None


def fidelity(
    interpreter,
    base,
    test: Dataset,
    k: int = 10,
    relevance_threshold: int = 1,
    tau_topk_mode: str = "base",
) -> tuple[MetricResult, list[PerQueryFidelity]]:
    """Macro-averaged agreement of an interpreter with its base ranker.

    Per query: tau and tau@k between the interpreter's and the base's
    rankings, plus NDCG@k and Precision@k of the interpreter's ranking
    against the test set's original labels.  Queries with fewer than two
    documents cannot support tau and are skipped; in ``intersection``
    tau@k mode, queries whose top-k sets share fewer than two documents
    are skipped for the tau@k average only.  Aggregation runs in
    ascending query-id order so results do not depend on group order.
    """
    rows: list[PerQueryFidelity] = []
    groups = sorted(test.groups, key=lambda g: g.query_id)
    skipped = 0
    for group in groups:
        if group.n_docs < 2:
            skipped += 1
            continue
        base_ranking = rank_query(base, group)
        interp_ranking = rank_query(interpreter, group)
        tau = kendall_tau(base_ranking, interp_ranking)
        try:
            tau_k = kendall_tau_at_k(base_ranking, interp_ranking, k, mode=tau_topk_mode)
        except ValueError:
            tau_k = None  # intersection mode with < 2 shared top-k docs
        labels_in_order = group.labels[interp_ranking.ordered_docs]
        rows.append(
            PerQueryFidelity(
                query_id=group.query_id,
                ndcg_at_k=ndcg_at_k(labels_in_order, k),
                precision_at_k=precision_at_k(labels_in_order, k, relevance_threshold),
                tau=tau,
                tau_at_k=tau_k,
            )
        )
    if skipped:
        logger.warning("fidelity skipped %d single-document queries", skipped)
    if not rows:
        raise DataError("no evaluable queries in the test dataset")
    tau_k_vals = [r.tau_at_k for r in rows if r.tau_at_k is not None]
    result = MetricResult(
        ndcg_at_k=float(np.mean([r.ndcg_at_k for r in rows])),
        precision_at_k=float(np.mean([r.precision_at_k for r in rows])),
        tau=float(np.mean([r.tau for r in rows])),
        tau_at_k=float(np.mean(tau_k_vals)) if tau_k_vals else None,
        k=k,
    )
    return result, rows


def ranking_quality(
    model, test: Dataset, k: int = 10, relevance_threshold: int = 1
) -> tuple[float, float]:
    """Mean NDCG@k and Precision@k of a scorer against original labels."""
    ndcgs, precs = [], []
    for group in sorted(test.groups, key=lambda g: g.query_id):
        ranking = rank_query(model, group)
        labels_in_order = group.labels[ranking.ordered_docs]
        ndcgs.append(ndcg_at_k(labels_in_order, k))
        precs.append(precision_at_k(labels_in_order, k, relevance_threshold))
    return float(np.mean(ndcgs)), float(np.mean(precs))
