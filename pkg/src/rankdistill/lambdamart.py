"""Listwise gradient-boosted ranker driven by NDCG-weighted lambdas.

Each boosting round accumulates, per query and per label-discordant pair
``(i, j)`` with ``label_i > label_j``::

    lambda_i += |dNDCG@cutoff(i, j)| * sigma / (1 + exp(sigma * (s_i - s_j)))
    lambda_j -= the same amount

together with the matching pseudo-Hessian, fits a least-squares tree to the
lambdas, and replaces each leaf value with the Newton step
``sum(lambda) / max(sum(hessian), 1e-9)``.  ``|dNDCG|`` uses the exact
swap formula with the same gain/discount/zero-ideal conventions as
:mod:`rankdistill.metrics`.  Queries that cannot produce a discordant pair
(fewer than two documents, or all labels equal) contribute nothing and are
skipped with a warning.

When a validation set is given, the returned ensemble is truncated at the
round with the best validation NDCG@cutoff (earliest round on ties).
"""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator

from ._util import sigmoid
from .errors import TrainingError
from .letor import FeatureSubset, contiguous_group_slices
from .metrics import descending_order, graded_gain, ndcg_at_k, position_discounts
from .trees import fit_regression_tree

logger = logging.getLogger(__name__)

NEWTON_EPS = 1e-9


def swap_deltas(labels: np.ndarray, scores: np.ndarray, cutoff: int) -> np.ndarray:
    """|change in NDCG@cutoff| from swapping each doc pair, as an (n, n) matrix.

    Incremental form: swapping the docs at positions p_i, p_j changes DCG by
    ``(gain_i - gain_j) * (discount_j - discount_i)``; dividing by the ideal
    DCG gives the NDCG change.  Zero-ideal queries get an all-zero matrix.
    """
    labels = np.asarray(labels)
    n = labels.size
    gains = graded_gain(labels)
    pos = np.empty(n, dtype=np.intp)
    pos[descending_order(scores)] = np.arange(n)
    disc = position_discounts(n, cutoff)[pos]
    ideal = float(np.dot(graded_gain(np.sort(labels)[::-1]), position_discounts(n, cutoff)))
    if ideal == 0.0:
        return np.zeros((n, n))
    return np.abs((gains[:, None] - gains[None, :]) * (disc[:, None] - disc[None, :])) / ideal


def query_lambdas(
    scores: np.ndarray,
    labels: np.ndarray,
    cutoff: int,
    sigma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Lambda and pseudo-Hessian vectors for one query at the given scores."""
    delta = swap_deltas(labels, scores, cutoff)
    sdiff = scores[:, None] - scores[None, :]
    rho = sigma * sigmoid(-sigma * sdiff)
    discordant = labels[:, None] > labels[None, :]
    pair_grad = np.where(discordant, rho * delta, 0.0)
    pair_hess = np.where(discordant, rho * (sigma - rho) * delta, 0.0)
    lam = pair_grad.sum(axis=1) - pair_grad.sum(axis=0)
    hess = pair_hess.sum(axis=1) + pair_hess.sum(axis=0)
    return lam, hess


def _usable(labels: np.ndarray) -> bool:
    return labels.size >= 2 and labels.max() != labels.min()


class LambdaMARTRanker(BaseEstimator):
    """Gradient-boosted tree ranker optimizing NDCG@``ndcg_cutoff``.

    Parameters
    ----------
    n_estimators : boosting rounds to run (the kept ensemble may be shorter
        when a validation set selects an earlier round).
    learning_rate : shrinkage applied to every tree.
    max_leaves, min_samples_leaf : tree growth limits.
    ndcg_cutoff : cutoff of the NDCG the lambdas (and validation selection)
        optimize.
    sigma : scale of the pairwise logistic in the lambda computation.
    early_stopping_rounds : stop when validation NDCG has not improved for
        this many rounds (requires an ``eval_set``); ``None`` disables.
    feature_subset : optional iterable of 1-based feature ids; trees may
        split only on these columns.
    """

    def __init__(
        self,
        n_estimators: int = 1000,
        learning_rate: float = 0.1,
        max_leaves: int = 10,
        min_samples_leaf: int = 1,
        ndcg_cutoff: int = 10,
        sigma: float = 1.0,
        early_stopping_rounds: int | None = None,
        feature_subset=None,
    ):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_leaves = max_leaves
        self.min_samples_leaf = min_samples_leaf
        self.ndcg_cutoff = ndcg_cutoff
        self.sigma = sigma
        self.early_stopping_rounds = early_stopping_rounds
        self.feature_subset = feature_subset

    # -- helpers -----------------------------------------------------------

    def _columns(self, n_features: int) -> np.ndarray | None:
        if self.feature_subset is None:
            return None
        subset = (
            self.feature_subset
            if isinstance(self.feature_subset, FeatureSubset)
            else FeatureSubset.from_iterable(self.feature_subset)
        )
        subset.validate_for(n_features)
        return subset.indices0()

    def _check_params(self) -> None:
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.ndcg_cutoff < 1:
            raise ValueError("ndcg_cutoff must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    def _mean_ndcg(self, scores: np.ndarray, y: np.ndarray, slices) -> float:
        vals = []
        for _, sl in slices:
            order = descending_order(scores[sl])
            vals.append(ndcg_at_k(y[sl][order], self.ndcg_cutoff))
        return float(np.mean(vals))

    # -- sklearn API -------------------------------------------------------

    def fit(self, X, y, qid, eval_set=None):
        """Boost on grouped rows; ``qid`` must hold contiguous query blocks.

        ``eval_set`` is an optional ``(X, y, qid)`` triple used to pick the
        best round.
        """
        self._check_params()
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        slices = contiguous_group_slices(qid)
        usable = [(q, sl) for q, sl in slices if _usable(y[sl])]
        skipped = len(slices) - len(usable)
        if skipped:
            logger.warning(
                "skipping %d/%d queries without a label-discordant pair",
                skipped,
                len(slices),
            )
        if not usable:
            raise TrainingError("no query offers a label-discordant pair to learn from")
        columns = self._columns(X.shape[1])

        if eval_set is not None:
            Xv = np.asarray(eval_set[0], dtype=np.float64)
            yv = np.asarray(eval_set[1])
            v_slices = contiguous_group_slices(eval_set[2])
            v_scores = np.zeros(Xv.shape[0])

        scores = np.zeros(X.shape[0])
        trees = []
        history = []
        best_ndcg = -np.inf
        best_round = -1
        for t in range(self.n_estimators):
            lam = np.zeros(X.shape[0])
            hess = np.zeros(X.shape[0])
            for _, sl in usable:
                lam[sl], hess[sl] = query_lambdas(
                    scores[sl], y[sl], self.ndcg_cutoff, self.sigma
                )
            tree = fit_regression_tree(
                X,
                lam,
                max_leaves=self.max_leaves,
                min_samples_leaf=self.min_samples_leaf,
                feature_indices=columns,
            )
            leaf = tree.apply(X)
            num = np.bincount(leaf, weights=lam, minlength=tree.n_nodes)
            den = np.bincount(leaf, weights=hess, minlength=tree.n_nodes)
            newton = num / np.maximum(den, NEWTON_EPS)
            tree.set_leaf_values({int(i): float(newton[i]) for i in np.unique(leaf)})
            scores += self.learning_rate * tree.value[leaf]
            if not np.isfinite(scores).all():
                raise TrainingError(f"non-finite training scores at round {t}")
            trees.append(tree)
            if eval_set is not None:
                v_scores += self.learning_rate * tree.predict(Xv)
                v_ndcg = self._mean_ndcg(v_scores, yv, v_slices)
                history.append(v_ndcg)
                if v_ndcg > best_ndcg:
                    best_ndcg = v_ndcg
                    best_round = t
                elif (
                    self.early_stopping_rounds is not None
                    and t - best_round >= self.early_stopping_rounds
                ):
                    break

        if eval_set is not None and trees:
            trees = trees[: best_round + 1]
        self.trees_ = trees
        self.n_features_in_ = X.shape[1]
        self.best_iteration_ = len(trees) - 1
        self.validation_scores_ = history
        return self

    def predict(self, X, n_trees: int | None = None) -> np.ndarray:
        """Ensemble scores; ``n_trees`` limits to a leading prefix of trees."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2-d")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model expects {self.n_features_in_}"
            )
        out = np.zeros(X.shape[0])
        use = self.trees_ if n_trees is None else self.trees_[:n_trees]
        for tree in use:
            out += self.learning_rate * tree.predict(X)
        return out


def score(model, features) -> float:
    """Score one feature vector with a fitted ranker (0.0 for empty ensembles)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise ValueError("features must be a 1-d vector")
    return float(model.predict(features[None, :])[0])
