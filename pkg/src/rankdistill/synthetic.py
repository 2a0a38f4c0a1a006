"""Synthetic ranking data with a known generating score function.

Each query draws ``docs_per_query`` feature vectors uniformly from
``[0, 1)``; the true score is a fixed linear function of the first
``n_informative`` features (weights drawn once per dataset from the seed),
optionally perturbed by Gaussian noise.  Labels bucket the true ranking
with the same rank-bucket heuristic used for secondary data, so the
generator doubles as an exact oracle: the true weights reproduce the
ranking any faithful model should recover.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distill import SecondaryLabelConfig, generate_secondary_labels
from .letor import Dataset, QueryGroup
from .metrics import rank_by_scores


@dataclass(frozen=True)
class SyntheticData:
    dataset: Dataset
    weights: np.ndarray  # (n_features,) true linear weights, zero where uninformative

    def true_scores(self, group: QueryGroup) -> np.ndarray:
        return group.features @ self.weights


class TrueScoreModel:
    """Scores rows with the generating linear function; a drop-in 'blackbox'."""

    def __init__(self, weights: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.n_features_in_ = self.weights.size

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights


def make_synthetic_data(
    n_queries: int,
    docs_per_query: int,
    n_features: int,
    n_informative: int,
    seed: int,
    noise: float = 0.0,
    label_config: SecondaryLabelConfig = SecondaryLabelConfig(),
) -> SyntheticData:
    if not (1 <= n_informative <= n_features):
        raise ValueError("need 1 <= n_informative <= n_features")
    if n_queries < 1 or docs_per_query < 2:
        raise ValueError("need at least 1 query and 2 docs per query")
    rng = np.random.default_rng(seed)
    weights = np.zeros(n_features)
    weights[:n_informative] = rng.uniform(0.5, 1.5, size=n_informative)
    width = len(str(n_queries))
    groups = []
    for q in range(n_queries):
        features = rng.uniform(0.0, 1.0, size=(docs_per_query, n_features))
        scores = features @ weights
        if noise > 0.0:
            scores = scores + rng.normal(0.0, noise, size=docs_per_query)
        ranking = rank_by_scores(scores)
        labels = generate_secondary_labels(ranking, label_config)
        groups.append(QueryGroup(f"q{q + 1:0{width}d}", labels, features))
    return SyntheticData(Dataset(tuple(groups), n_features), weights)
