"""Model parameters, the layered spectral-convolution forward pass and scoring.

Layer k maps X_k to X_{k+1} = sigmoid(kernel @ X_k @ Theta_k) over the stacked
user/item vertex matrix; the final factors concatenate every layer's output
(including the raw input embeddings) column-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionError, NumericError
from .graph import ConvKernel

SIGMOID_CLAMP = 500.0


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Clamp keeps exp() finite; results are unchanged in the normal regime.
    return expit(np.clip(z, -SIGMOID_CLAMP, SIGMOID_CLAMP))


@dataclass(frozen=True)
class ModelConfig:
    """Layer count K, input embedding width C, filters per layer F."""

    K: int = 3
    C: int = 16
    F: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.C < 1 or self.F < 1:
            raise ValueError("K, C and F must all be >= 1")

    @property
    def factor_width(self) -> int:
        return self.C + self.K * self.F


@dataclass
class ModelParams:
    """Initial embeddings and per-layer filter matrices.

    ``thetas[0]`` is C x F; every later entry is F x F. Gradients produced by
    the training module reuse this container shape-for-shape.
    """

    X_u0: np.ndarray
    X_i0: np.ndarray
    thetas: list[np.ndarray]

    @property
    def n_users(self) -> int:
        return self.X_u0.shape[0]

    @property
    def n_items(self) -> int:
        return self.X_i0.shape[0]

    def validate_shapes(self, config: ModelConfig) -> None:
        if self.X_u0.shape[1] != config.C or self.X_i0.shape[1] != config.C:
            raise DimensionError("embedding width disagrees with config.C")
        if len(self.thetas) != config.K:
            raise DimensionError(f"expected {config.K} filter matrices, got {len(self.thetas)}")
        expected = (config.C, config.F)
        for k, theta in enumerate(self.thetas):
            if theta.shape != expected:
                raise DimensionError(f"filter {k} has shape {theta.shape}, expected {expected}")
            expected = (config.F, config.F)


@dataclass
class FactorTable:
    """Final latent factors; rows are users/items, width C + K*F."""

    V_u: np.ndarray
    V_i: np.ndarray


@dataclass
class LayerTrace:
    """Forward-pass intermediates needed by reverse-mode gradients.

    ``xs[k]`` is the layer-k activation (xs[0] is the raw stacked input);
    ``zs[k]`` is the pre-activation feeding xs[k+1].
    """

    xs: list[np.ndarray]
    zs: list[np.ndarray]


def init_params(config: ModelConfig, n_users: int, n_items: int) -> ModelParams:
    """Draw every parameter i.i.d. from a Gaussian with mean 0.01, std 0.02.

    The draw order (user embeddings, item embeddings, filters layer by layer)
    is fixed so a seed pins the full parameter set.
    """
    rng = np.random.default_rng(config.seed)
    X_u0 = rng.normal(0.01, 0.02, size=(n_users, config.C))
    X_i0 = rng.normal(0.01, 0.02, size=(n_items, config.C))
    thetas = [rng.normal(0.01, 0.02, size=(config.C, config.F))]
    for _ in range(1, config.K):
        thetas.append(rng.normal(0.01, 0.02, size=(config.F, config.F)))
    return ModelParams(X_u0, X_i0, thetas)


def forward(params: ModelParams, kernel: ConvKernel, config: ModelConfig):
    """Run the K-layer propagation; returns (FactorTable, LayerTrace)."""
    params.validate_shapes(config)
    n_users, n_items = params.n_users, params.n_items
    X0 = np.vstack([params.X_u0, params.X_i0])
    if kernel.matrix.shape[0] != X0.shape[0]:
        raise DimensionError(
            f"kernel is {kernel.matrix.shape[0]}x{kernel.matrix.shape[1]} "
            f"but the model has {X0.shape[0]} vertices"
        )
    xs = [X0]
    zs = []
    for k in range(config.K):
        Z = kernel.apply(xs[-1]) @ params.thetas[k]
        if not np.isfinite(Z).all():
            raise NumericError(f"non-finite pre-activation at layer {k + 1}")
        zs.append(Z)
        xs.append(sigmoid(Z))
    V = np.hstack(xs)
    factors = FactorTable(V_u=V[:n_users], V_i=V[n_users:])
    return factors, LayerTrace(xs=xs, zs=zs)


def score(factors: FactorTable, u: int, i: int) -> float:
    """Inner product of a user's and an item's factor rows."""
    if not (0 <= u < factors.V_u.shape[0]):
        raise DimensionError(f"user index {u} out of range")
    if not (0 <= i < factors.V_i.shape[0]):
        raise DimensionError(f"item index {i} out of range")
    return float(factors.V_u[u] @ factors.V_i[i])


def rank_items(factors: FactorTable, u: int, exclude, M: int):
    """Top-M item indices for a user, score descending, ties by ascending index.

    ``exclude`` items never appear; fewer than M candidates yields a shorter
    list.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if not (0 <= u < factors.V_u.shape[0]):
        raise DimensionError(f"user index {u} out of range")
    n_items = factors.V_i.shape[0]
    candidates = np.setdiff1d(np.arange(n_items), np.fromiter(exclude, dtype=np.int64, count=-1))
    scores = factors.V_i[candidates] @ factors.V_u[u]
    # Stable sort on negated scores keeps ascending item index within ties.
    order = np.argsort(-scores, kind="stable")
    return candidates[order[:M]]
