"""Pairwise-ranking training: triple sampling, loss, gradients and RMSprop.

Gradients are exact reverse-mode derivatives of the batch loss through the
layered forward pass, the column-wise concatenation into the factor tables
and the regularizer; no autodiff framework is involved. 64-bit floats
throughout so finite-difference checks stay reliable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .data import InteractionSet
from .graph import ConvKernel
from .model import FactorTable, LayerTrace, ModelConfig, ModelParams, forward, init_params

REG_FULL = "full"
REG_BATCH_ROWS = "batch_rows"


@dataclass(frozen=True)
class Triple:
    """User r with an interacted item j and a non-interacted item j_neg."""

    r: int
    j: int
    j_neg: int


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1024
    epochs: int = 200
    learning_rate: float = 0.001
    reg: float = 0.001
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    seed: int = 0
    steps_per_epoch: int = 1
    reg_scope: str = REG_FULL

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.steps_per_epoch < 1:
            raise ValueError("batch_size, epochs and steps_per_epoch must be >= 1")
        if self.learning_rate <= 0 or self.rms_epsilon <= 0:
            raise ValueError("learning_rate and rms_epsilon must be positive")
        if not (0.0 < self.rms_decay < 1.0):
            raise ValueError("rms_decay must lie in (0, 1)")
        if self.reg < 0:
            raise ValueError("reg must be >= 0")
        if self.reg_scope not in (REG_FULL, REG_BATCH_ROWS):
            raise ValueError(f"unknown reg_scope: {self.reg_scope!r}")


@dataclass
class OptState:
    """Running mean-square gradient accumulators, one per parameter array."""

    acc_X_u0: np.ndarray
    acc_X_i0: np.ndarray
    acc_thetas: list[np.ndarray]


def init_opt_state(params: ModelParams) -> OptState:
    return OptState(
        acc_X_u0=np.zeros_like(params.X_u0),
        acc_X_i0=np.zeros_like(params.X_i0),
        acc_thetas=[np.zeros_like(t) for t in params.thetas],
    )


def sample_batch(train: InteractionSet, batch_size: int, rng: np.random.Generator) -> list[Triple]:
    """Draw triples: user uniform, positive uniform over the user's items,
    negative uniform over the complement via rejection sampling.

    Users who interacted with every item have no negatives and are excluded
    (with a warning).
    """
    n_items = train.n_items
    eligible = [u for u in range(train.n_users) if len(train.user_items[u]) < n_items]
    if not eligible:
        raise ValueError("no user has a negative item to sample")
    if len(eligible) < train.n_users:
        warnings.warn(
            f"{train.n_users - len(eligible)} user(s) interact with every item; "
            "excluded from triple sampling",
            stacklevel=2,
        )
    batch = []
    for _ in range(batch_size):
        u = eligible[int(rng.integers(len(eligible)))]
        positives = train.user_items[u]
        j = int(positives[int(rng.integers(len(positives)))])
        while True:
            cand = int(rng.integers(n_items))
            pos = np.searchsorted(positives, cand)
            if pos >= len(positives) or positives[pos] != cand:
                break
        batch.append(Triple(u, j, cand))
    return batch


def _batch_arrays(batch: list[Triple]):
    r = np.array([t.r for t in batch], dtype=np.int64)
    j = np.array([t.j for t in batch], dtype=np.int64)
    jn = np.array([t.j_neg for t in batch], dtype=np.int64)
    return r, j, jn


def _reg_rows(factors: FactorTable, batch, scope):
    """Boolean masks of the V_u / V_i rows the regularizer covers."""
    um = np.zeros(factors.V_u.shape[0], dtype=bool)
    im = np.zeros(factors.V_i.shape[0], dtype=bool)
    if scope == REG_FULL:
        um[:] = True
        im[:] = True
    else:
        r, j, jn = _batch_arrays(batch)
        um[r] = True
        im[j] = True
        im[jn] = True
    return um, im


def bpr_loss(factors: FactorTable, batch: list[Triple], reg: float,
             reg_scope: str = REG_FULL) -> float:
    """Sum over triples of -ln sigmoid(score(r,j) - score(r,j_neg)), plus the
    squared-Frobenius regularizer over the factor tables (applied once per
    batch, not divided by the batch size)."""
    if not batch:
        raise ValueError("batch is empty")
    r, j, jn = _batch_arrays(batch)
    diff = np.einsum("ij,ij->i", factors.V_u[r], factors.V_i[j] - factors.V_i[jn])
    loss = np.logaddexp(0.0, -diff).sum()
    if reg != 0.0:
        um, im = _reg_rows(factors, batch, reg_scope)
        loss += reg * ((factors.V_u[um] ** 2).sum() + (factors.V_i[im] ** 2).sum())
    if not np.isfinite(loss):
        raise NumericError("loss is not finite")
    return float(loss)


def backward(params: ModelParams, kernel: ConvKernel, config: ModelConfig,
             batch: list[Triple], reg: float, trace: LayerTrace,
             reg_scope: str = REG_FULL) -> ModelParams:
    """Exact gradients of :func:`bpr_loss` w.r.t. every parameter array.

    Needs the LayerTrace of the paired forward call; returns gradients in a
    ModelParams container with matching shapes.
    """
    if trace is None:
        raise ValueError("backward requires the LayerTrace of the paired forward call")
    n_users = params.n_users
    V = np.hstack(trace.xs)
    V_u, V_i = V[:n_users], V[n_users:]
    r, j, jn = _batch_arrays(batch)

    diff = np.einsum("ij,ij->i", V_u[r], V_i[j] - V_i[jn])
    # d/d(diff) of softplus(-diff)
    g = -_stable_sigmoid_neg(diff)

    G_V = np.zeros_like(V)
    np.add.at(G_V, r, g[:, None] * (V_i[j] - V_i[jn]))
    np.add.at(G_V, n_users + j, g[:, None] * V_u[r])
    np.add.at(G_V, n_users + jn, -g[:, None] * V_u[r])
    if reg != 0.0:
        um, im = _reg_rows(FactorTable(V_u, V_i), batch, reg_scope)
        G_V[:n_users][um] += 2.0 * reg * V_u[um]
        G_V[n_users:][im] += 2.0 * reg * V_i[im]

    # Split the concatenation back into per-layer blocks.
    widths = [x.shape[1] for x in trace.xs]
    offsets = np.concatenate([[0], np.cumsum(widths)])
    blocks = [G_V[:, offsets[k]:offsets[k + 1]] for k in range(len(widths))]

    grad_thetas: list[np.ndarray | None] = [None] * config.K
    accum = blocks[config.K]
    for k in range(config.K, 0, -1):
        Xk = trace.xs[k]
        dZ = accum * Xk * (1.0 - Xk)
        KX = kernel.apply(trace.xs[k - 1])
        grad_thetas[k - 1] = KX.T @ dZ
        accum = blocks[k - 1] + kernel.apply_transpose(dZ @ params.thetas[k - 1].T)

    return ModelParams(X_u0=accum[:n_users], X_i0=accum[n_users:], thetas=grad_thetas)


def _stable_sigmoid_neg(diff: np.ndarray) -> np.ndarray:
    # sigmoid(-diff) without overflow for large |diff|
    out = np.empty_like(diff)
    pos = diff >= 0
    out[pos] = np.exp(-diff[pos]) / (1.0 + np.exp(-diff[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(diff[~pos]))
    return out


def rmsprop_step(params: ModelParams, grads: ModelParams, opt: OptState,
                 learning_rate: float, decay: float, epsilon: float):
    """One RMSprop update; returns (new params, new optimizer state)."""

    def _upd(p, g, acc):
        acc_new = decay * acc + (1.0 - decay) * g * g
        return p - learning_rate * g / np.sqrt(acc_new + epsilon), acc_new

    X_u0, acc_u = _upd(params.X_u0, grads.X_u0, opt.acc_X_u0)
    X_i0, acc_i = _upd(params.X_i0, grads.X_i0, opt.acc_X_i0)
    thetas, acc_t = [], []
    for p, g, a in zip(params.thetas, grads.thetas, opt.acc_thetas):
        t, acc = _upd(p, g, a)
        thetas.append(t)
        acc_t.append(acc)
    return ModelParams(X_u0, X_i0, thetas), OptState(acc_u, acc_i, acc_t)


def train(train_set: InteractionSet, kernel: ConvKernel, model_config: ModelConfig,
          train_config: TrainConfig):
    """Full training loop; returns (final params, per-epoch loss history).

    Each epoch draws ``steps_per_epoch`` batches (default one, matching the
    one-batch-per-epoch schedule) and applies one RMSprop update per batch.
    Deterministic for fixed seeds. Numeric failures abort with the epoch
    number and the last finite loss.
    """
    rng = np.random.default_rng(train_config.seed)
    params = init_params(model_config, train_set.n_users, train_set.n_items)
    opt = init_opt_state(params)
    history: list[float] = []
    last_finite = float("nan")
    for epoch in range(1, train_config.epochs + 1):
        epoch_losses = []
        try:
            for _ in range(train_config.steps_per_epoch):
                batch = sample_batch(train_set, train_config.batch_size, rng)
                factors, trace = forward(params, kernel, model_config)
                loss = bpr_loss(factors, batch, train_config.reg, train_config.reg_scope)
                grads = backward(params, kernel, model_config, batch,
                                 train_config.reg, trace, train_config.reg_scope)
                params, opt = rmsprop_step(params, grads, opt,
                                           train_config.learning_rate,
                                           train_config.rms_decay,
                                           train_config.rms_epsilon)
                epoch_losses.append(loss)
                last_finite = loss
        except NumericError as exc:
            raise NumericError(
                f"training aborted at epoch {epoch}: {exc}; last finite loss {last_finite}"
            ) from exc
        history.append(float(np.mean(epoch_losses)))
    return params, history
