"""Pairwise neural ranker: one hidden logistic layer, linear output,
trained by gradient descent on the pairwise logistic loss.

For every label-discordant pair ``(i, j)`` with ``label_i > label_j`` the
loss is ``log(1 + exp(-sigma * (s_i - s_j)))``.  Training takes one
gradient step per query per epoch on that query's pair batch; queries with
more than ``max_pairs_per_query`` discordant pairs get a fresh seeded
sample each epoch.  Weights start from a seeded uniform range scaled by
``1/sqrt(fan_in)``.
"""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator

from ._util import sigmoid
from .errors import TrainingError
from .letor import contiguous_group_slices
from .metrics import descending_order, ndcg_at_k

logger = logging.getLogger(__name__)

# parameter tuple: (W1 (H, D), b1 (H,), w2 (H,), b2 scalar array ())
NetParams = tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def init_params(n_features: int, hidden_size: int, rng: np.random.Generator) -> NetParams:
    a1 = 1.0 / np.sqrt(n_features)
    a2 = 1.0 / np.sqrt(hidden_size)
    return (
        rng.uniform(-a1, a1, size=(hidden_size, n_features)),
        np.zeros(hidden_size),
        rng.uniform(-a2, a2, size=hidden_size),
        np.zeros(()),
    )


def forward(params: NetParams, X: np.ndarray) -> np.ndarray:
    W1, b1, w2, b2 = params
    hidden = sigmoid(X @ W1.T + b1)
    return hidden @ w2 + b2


def pair_loss_and_gradients(
    params: NetParams,
    X: np.ndarray,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    sigma: float,
) -> tuple[float, NetParams]:
    """Summed pair loss and its analytic gradients for one batch.

    ``i_idx[p]``/``j_idx[p]`` index the preferred and unpreferred document
    of pair ``p`` into the rows of ``X``.
    """
    W1, b1, w2, b2 = params
    hidden = sigmoid(X @ W1.T + b1)
    s = hidden @ w2 + b2
    margin = sigma * (s[i_idx] - s[j_idx])
    loss = float(np.logaddexp(0.0, -margin).sum())
    rho = sigma * sigmoid(-margin)  # -dloss/ds_i = +dloss/ds_j

    grad_s = np.zeros(X.shape[0])
    np.add.at(grad_s, i_idx, -rho)
    np.add.at(grad_s, j_idx, rho)

    g_w2 = hidden.T @ grad_s
    g_b2 = np.asarray(grad_s.sum())
    g_hidden = np.outer(grad_s, w2)
    g_pre = g_hidden * hidden * (1.0 - hidden)
    g_W1 = g_pre.T @ X
    g_b1 = g_pre.sum(axis=0)
    return loss, (g_W1, g_b1, g_w2, g_b2)


def _discordant_pairs(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.nonzero(labels[:, None] > labels[None, :])
    return i.astype(np.intp), j.astype(np.intp)


class RankNetRanker(BaseEstimator):
    """Feed-forward pairwise ranker ``[n_features, hidden_size, 1]``.

    When an ``eval_set`` is given, the parameters from the epoch with the
    best validation NDCG@``ndcg_cutoff`` are kept (the initialization when
    no epoch improves on it, e.g. ``n_epochs=0``).
    """

    def __init__(
        self,
        hidden_size: int = 10,
        n_epochs: int = 100,
        learning_rate: float = 5e-5,
        sigma: float = 1.0,
        max_pairs_per_query: int = 1000,
        ndcg_cutoff: int = 10,
        early_stopping_rounds: int | None = None,
        random_state: int = 0,
    ):
        self.hidden_size = hidden_size
        self.n_epochs = n_epochs
        self.learning_rate = learning_rate
        self.sigma = sigma
        self.max_pairs_per_query = max_pairs_per_query
        self.ndcg_cutoff = ndcg_cutoff
        self.early_stopping_rounds = early_stopping_rounds
        self.random_state = random_state

    def _check_params(self) -> None:
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.n_epochs < 0:
            raise ValueError("n_epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.max_pairs_per_query < 1:
            raise ValueError("max_pairs_per_query must be >= 1")

    def _mean_ndcg(self, params: NetParams, X, y, slices) -> float:
        scores = forward(params, X)
        vals = []
        for _, sl in slices:
            order = descending_order(scores[sl])
            vals.append(ndcg_at_k(y[sl][order], self.ndcg_cutoff))
        return float(np.mean(vals))

    def fit(self, X, y, qid, eval_set=None):
        self._check_params()
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        slices = contiguous_group_slices(qid)
        usable = []
        for q, sl in slices:
            if y[sl].size >= 2 and y[sl].max() != y[sl].min():
                usable.append((sl, _discordant_pairs(y[sl])))
        skipped = len(slices) - len(usable)
        if skipped:
            logger.warning(
                "skipping %d/%d queries without a label-discordant pair",
                skipped,
                len(slices),
            )
        if not usable:
            raise TrainingError("no query offers a label-discordant pair to learn from")

        rng = np.random.default_rng(self.random_state)
        params = init_params(X.shape[1], self.hidden_size, rng)

        if eval_set is not None:
            Xv = np.asarray(eval_set[0], dtype=np.float64)
            yv = np.asarray(eval_set[1])
            v_slices = contiguous_group_slices(eval_set[2])
            best_params = tuple(p.copy() for p in params)
            best_ndcg = self._mean_ndcg(params, Xv, yv, v_slices)
            best_epoch = -1
        history = []

        for epoch in range(self.n_epochs):
            epoch_loss = 0.0
            for sl, (pi, pj) in usable:
                if pi.size > self.max_pairs_per_query:
                    pick = rng.choice(pi.size, self.max_pairs_per_query, replace=False)
                    bi, bj = pi[pick], pj[pick]
                else:
                    bi, bj = pi, pj
                loss, grads = pair_loss_and_gradients(params, X[sl], bi, bj, self.sigma)
                epoch_loss += loss
                params = tuple(
                    p - self.learning_rate * g for p, g in zip(params, grads)
                )
            if not np.isfinite(epoch_loss) or not all(
                np.isfinite(p).all() for p in params
            ):
                raise TrainingError(f"pairwise loss diverged at epoch {epoch}")
            if eval_set is not None:
                v_ndcg = self._mean_ndcg(params, Xv, yv, v_slices)
                history.append(v_ndcg)
                if v_ndcg > best_ndcg:
                    best_ndcg = v_ndcg
                    best_params = tuple(p.copy() for p in params)
                    best_epoch = epoch
                elif (
                    self.early_stopping_rounds is not None
                    and epoch - best_epoch >= self.early_stopping_rounds
                ):
                    break

        if eval_set is not None:
            params = best_params
        self.coefs_ = (params[0], params[2])
        self.intercepts_ = (params[1], params[3])
        self.n_features_in_ = X.shape[1]
        self.validation_scores_ = history
        return self

    def _params(self) -> NetParams:
        return (self.coefs_[0], self.intercepts_[0], self.coefs_[1], self.intercepts_[1])

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2-d")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model expects {self.n_features_in_}"
            )
        return forward(self._params(), X)
