"""ItemKNN and BPR matrix-factorization baselines.

Both share the evaluation module; BPR-MF also shares the triple sampler and
the RMSprop step with the spectral model, so identical seeds produce
identical triple sequences across the two models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import InteractionSet
from .errors import NumericError
from .model import ModelParams
from .training import (
    TrainConfig,
    _batch_arrays,
    _stable_sigmoid_neg,
    init_opt_state,
    rmsprop_step,
    sample_batch,
)


@dataclass
class ItemKnnModel:
    """Cosine similarity over item interaction-indicator columns.

    ``similarity`` is the full symmetric matrix (diagonal zeroed);
    ``neighbor_sim`` keeps only each row's top-k entries and is what scoring
    uses.
    """

    similarity: sp.csr_matrix
    neighbor_sim: sp.csr_matrix
    k_neighbors: int


@dataclass
class BprMfModel:
    P_u: np.ndarray
    Q_i: np.ndarray

    @property
    def d(self) -> int:
        return self.P_u.shape[1]


def fit_itemknn(train: InteractionSet, k_neighbors: int = 50) -> ItemKnnModel:
    """Cosine item-item similarity with per-item top-k neighbor retention."""
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    R = train.to_csr()
    co = (R.T @ R).toarray()
    norms = np.sqrt(np.diag(co))
    sim = co / np.outer(norms, norms)
    np.fill_diagonal(sim, 0.0)

    topk = np.zeros_like(sim)
    k = min(k_neighbors, train.n_items - 1)
    for i in range(train.n_items):
        row = sim[i]
        # Highest similarity first, ties by ascending item index.
        order = np.lexsort((np.arange(len(row)), -row))[:k]
        keep = order[row[order] > 0.0]
        topk[i, keep] = row[keep]
    return ItemKnnModel(
        similarity=sp.csr_matrix(sim),
        neighbor_sim=sp.csr_matrix(topk),
        k_neighbors=k_neighbors,
    )


def score_itemknn(model: ItemKnnModel, train: InteractionSet, u: int, i: int) -> float:
    """Sum of similarities between item i's retained neighbors and the user's items."""
    positives = train.user_items[u]
    row = np.asarray(model.neighbor_sim.getrow(i).todense()).ravel()
    return float(row[positives].sum())


def itemknn_scorer(model: ItemKnnModel, train: InteractionSet):
    """Per-user score vectors for the evaluation module."""
    R = train.to_csr()

    def scorer(u: int) -> np.ndarray:
        indicator = np.asarray(R.getrow(u).todense()).ravel()
        return model.neighbor_sim @ indicator

    return scorer


def popularity_scorer(train: InteractionSet):
    """Rank items by training interaction count, identically for every user."""
    counts = np.zeros(train.n_items)
    for items in train.user_items:
        counts[items] += 1.0

    def scorer(u: int) -> np.ndarray:
        return counts

    return scorer


def _mf_gradients(model: BprMfModel, batch, reg: float):
    r, j, jn = _batch_arrays(batch)
    diff = np.einsum("ij,ij->i", model.P_u[r], model.Q_i[j] - model.Q_i[jn])
    g = -_stable_sigmoid_neg(diff)
    G_P = 2.0 * reg * model.P_u
    G_Q = 2.0 * reg * model.Q_i
    np.add.at(G_P, r, g[:, None] * (model.Q_i[j] - model.Q_i[jn]))
    np.add.at(G_Q, j, g[:, None] * model.P_u[r])
    np.add.at(G_Q, jn, -g[:, None] * model.P_u[r])
    return G_P, G_Q


def bpr_mf_loss(model: BprMfModel, batch, reg: float) -> float:
    r, j, jn = _batch_arrays(batch)
    diff = np.einsum("ij,ij->i", model.P_u[r], model.Q_i[j] - model.Q_i[jn])
    loss = np.logaddexp(0.0, -diff).sum()
    loss += reg * ((model.P_u ** 2).sum() + (model.Q_i ** 2).sum())
    if not np.isfinite(loss):
        raise NumericError("loss is not finite")
    return float(loss)


def fit_bpr_mf(train: InteractionSet, d: int, train_config: TrainConfig,
               init_seed: int = 0):
    """Optimize the pairwise loss on plain user/item embeddings.

    Same sampler, same optimizer and the same Gaussian(0.01, 0.02)
    initialization as the spectral model; returns (model, loss history).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    init_rng = np.random.default_rng(init_seed)
    P = init_rng.normal(0.01, 0.02, size=(train.n_users, d))
    Q = init_rng.normal(0.01, 0.02, size=(train.n_items, d))
    # Embeddings ride in the shared ModelParams/OptState containers (no filters).
    params = ModelParams(X_u0=P, X_i0=Q, thetas=[])
    opt = init_opt_state(params)

    rng = np.random.default_rng(train_config.seed)
    history = []
    for _ in range(train_config.epochs):
        losses = []
        for _ in range(train_config.steps_per_epoch):
            batch = sample_batch(train, train_config.batch_size, rng)
            model = BprMfModel(params.X_u0, params.X_i0)
            losses.append(bpr_mf_loss(model, batch, train_config.reg))
            G_P, G_Q = _mf_gradients(model, batch, train_config.reg)
            params, opt = rmsprop_step(
                params, ModelParams(X_u0=G_P, X_i0=G_Q, thetas=[]), opt,
                train_config.learning_rate, train_config.rms_decay,
                train_config.rms_epsilon,
            )
        history.append(float(np.mean(losses)))
    return BprMfModel(params.X_u0, params.X_i0), history


def bpr_mf_scorer(model: BprMfModel):
    def scorer(u: int) -> np.ndarray:
        return model.Q_i @ model.P_u[u]

    return scorer
