"""Single-hidden-layer logistic network over a flat parameter vector.

Layout of the vector for input width d and hidden width h::

    W1  d*h   row-major, W1[i, j] connects input i to hidden unit j
    b1  h
    w2  h
    b2  1

Length is (d + 1) * h + (h + 1).
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.config import Config
from src.errors import DimensionMismatch, EmptyDataset, NonFinite
from src.fedlearn.features import LocalDataset

logger = logging.getLogger(__name__)


def param_count(d: int, h: int) -> int:
    return (d + 1) * h + (h + 1)


def hidden_width(params: np.ndarray, d: int) -> int:
    """Hidden width implied by a parameter vector for input width ``d``."""
    size = len(params) - 1
    if size <= 0 or size % (d + 2):
        raise DimensionMismatch(f"{len(params)} parameters do not fit input width {d}")
    return size // (d + 2)


def init_params(d: int, h: int = Config.HIDDEN_UNITS, seed: int = 0) -> np.ndarray:
    """Uniform in [-0.5, 0.5] from a seeded generator."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5, 0.5, size=param_count(d, h))


def unpack(params: np.ndarray, d: int, h: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    params = np.asarray(params, dtype=float)
    if len(params) != param_count(d, h):
        raise DimensionMismatch(f"expected {param_count(d, h)} parameters, got {len(params)}")
    W1 = params[: d * h].reshape(d, h)
    b1 = params[d * h: d * h + h]
    w2 = params[d * h + h: d * h + 2 * h]
    return W1, b1, w2, float(params[-1])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class TrainResult:
    params: np.ndarray
    loss: float
    losses: List[float] = field(default_factory=list)
    accuracies: List[float] = field(default_factory=list)


class FeedForwardModel:
    """Forward pass, loss and analytic gradient for fixed widths."""

    def __init__(self, input_dim: int, hidden_units: int = Config.HIDDEN_UNITS):
        self.d = input_dim
        self.h = hidden_units

    @classmethod
    def for_params(cls, params: np.ndarray, input_dim: int) -> "FeedForwardModel":
        return cls(input_dim, hidden_width(params, input_dim))

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DimensionMismatch(f"expected {self.d} features, got shape {X.shape}")
        return X

    def logits(self, params: np.ndarray, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        W1, b1, w2, b2 = unpack(params, self.d, self.h)
        hidden = _sigmoid(X @ W1 + b1)
        return hidden @ w2 + b2, hidden

    def predict_proba(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        z, _ = self.logits(params, self._check(X))
        return _sigmoid(z)

    def loss(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        """Mean binary cross-entropy, computed from logits as softplus(z) - y*z."""
        z, _ = self.logits(params, self._check(X))
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def gradient(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
        X = self._check(X)
        W1, _, w2, _ = unpack(params, self.d, self.h)
        z, hidden = self.logits(params, X)
        n = len(y)
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))

        dz = (_sigmoid(z) - y) / n
        g_w2 = hidden.T @ dz
        g_b2 = dz.sum()
        d_hidden = np.outer(dz, w2) * hidden * (1.0 - hidden)
        g_W1 = X.T @ d_hidden
        g_b1 = d_hidden.sum(axis=0)
        return loss, np.concatenate([g_W1.reshape(-1), g_b1, g_w2, [g_b2]])

    def accuracy(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        predictions = self.predict_proba(params, X) >= 0.5
        return float(np.mean(predictions == (np.asarray(y) >= 0.5)))


def local_train(
    params: np.ndarray,
    dataset: LocalDataset,
    epochs: int,
    lr: float,
    seed: Optional[int] = None,
    batch_size: Optional[int] = None,
) -> TrainResult:
    """
    Gradient descent on mean binary cross-entropy.

    Full batch by default, which makes the result a pure function of
    (params, dataset, epochs, lr). With ``batch_size`` the rows are shuffled
    each epoch with a generator seeded from ``seed``.

    Args:
        params (np.ndarray): Starting parameters
        dataset (LocalDataset): Training rows
        epochs (int): Number of passes
        lr (float): Learning rate, > 0

    Returns:
        TrainResult: Final parameters, final loss and per-epoch history
    """
    if len(dataset) == 0:
        raise EmptyDataset(f"Peer {dataset.peer_id or '-'} has no training rows")
    if lr <= 0:
        raise ValueError("lr must be > 0")
    model = FeedForwardModel.for_params(params, dataset.dimension)
    X, y = dataset.X, dataset.y
    current = np.array(params, dtype=float, copy=True)
    rng = np.random.default_rng(seed)
    losses: List[float] = []
    accuracies: List[float] = []

    for epoch in range(epochs):
        if batch_size is None or batch_size >= len(y):
            batches = [np.arange(len(y))]
        else:
            order = rng.permutation(len(y))
            batches = [order[i: i + batch_size] for i in range(0, len(y), batch_size)]
        for rows in batches:
            loss, grad = model.gradient(current, X[rows], y[rows])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise NonFinite(f"Non-finite loss or gradient at epoch {epoch} on peer {dataset.peer_id or '-'}")
            current = current - lr * grad
        losses.append(model.loss(current, X, y))
        accuracies.append(model.accuracy(current, X, y))

    final = losses[-1] if losses else model.loss(current, X, y)
    if not np.isfinite(final) or not np.all(np.isfinite(current)):
        raise NonFinite(f"Training diverged on peer {dataset.peer_id or '-'}")
    return TrainResult(current, final, losses, accuracies)


def predict_violation(params: np.ndarray, features: np.ndarray) -> float:
    """Probability that the SLO is about to be violated, from one feature row."""
    features = np.asarray(features, dtype=float).reshape(-1)
    model = FeedForwardModel.for_params(params, len(features))
    return float(model.predict_proba(params, features.reshape(1, -1))[0])
