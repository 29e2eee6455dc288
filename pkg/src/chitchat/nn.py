"""Small dense feed-forward networks with hand-rolled backprop.

Nothing here is clever: sigmoid hidden layers, a logistic or softmax head,
weighted cross-entropy, full analytic gradients (checked against central
finite differences in the test suite) and seeded mini-batch SGD with
momentum so training is reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class SgdConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 0.5
    momentum: float = 0.9
    l2: float = 1e-5
    seed: int = 0


class FeedForward:
    """Fully-connected net: sigmoid hiddens, logistic or softmax output."""

    def __init__(
        self,
        sizes: tuple[int, ...],
        output: Literal["logistic", "softmax"],
        weights: list[np.ndarray] | None = None,
        biases: list[np.ndarray] | None = None,
    ):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if output == "logistic" and sizes[-1] != 1:
            raise ValueError("logistic output requires a single output unit")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        if weights is None:
            raise ValueError("use FeedForward.init or pass explicit weights")
        self.weights = weights
        self.biases = biases or [np.zeros(s) for s in self.sizes[1:]]

    @classmethod
    def init(cls, sizes: tuple[int, ...], output: Literal["logistic", "softmax"], seed: int) -> "FeedForward":
        rng = np.random.default_rng(seed)
        weights = []
        biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            biases.append(np.zeros(fan_out))
        return cls(tuple(sizes), output, weights, biases)

    # -- forward ---------------------------------------------------------

    def _activations(self, X: np.ndarray) -> list[np.ndarray]:
        acts = [np.asarray(X, dtype=np.float64)]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ W + b
            if i < last:
                acts.append(sigmoid(z))
            elif self.output == "logistic":
                acts.append(sigmoid(z))
            else:
                acts.append(softmax(z))
        return acts

    def forward(self, X: np.ndarray) -> np.ndarray:
        return self._activations(np.atleast_2d(X))[-1]

    # -- loss + gradients --------------------------------------------------

    def loss_and_grad(
        self,
        X: np.ndarray,
        targets: np.ndarray,
        sample_weight: np.ndarray | None = None,
        l2: float = 0.0,
    ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Weighted mean cross-entropy plus L2; returns (loss, dWs, dbs).

        Weighting divides by the total weight, so k copies of an example at
        weight 1 and one copy at weight k produce the same loss.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n = X.shape[0]
        s = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        if s.shape != (n,):
            raise ValueError("sample_weight shape mismatch")
        total = float(s.sum())
        if total <= 0.0:
            raise ValueError("total sample weight must be positive")
        acts = self._activations(X)
        out = acts[-1]
        eps = 1e-12
        if self.output == "logistic":
            y = np.asarray(targets, dtype=np.float64).reshape(n)
            p = out[:, 0]
            ce = -(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps))
            delta = ((p - y) * s / total)[:, None]
        else:
            y = np.asarray(targets, dtype=np.int64).reshape(n)
            p = out[np.arange(n), y]
            ce = -np.log(p + eps)
            delta = out.copy()
            delta[np.arange(n), y] -= 1.0
            delta *= (s / total)[:, None]
        loss = float((ce * s).sum() / total)
        dWs: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        dbs: list[np.ndarray] = [np.empty(0)] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            dWs[i] = acts[i].T @ delta
            dbs[i] = delta.sum(axis=0)
            if l2 > 0.0:
                loss += 0.5 * l2 * float(np.sum(self.weights[i] ** 2))
                dWs[i] += l2 * self.weights[i]
            if i > 0:
                back = delta @ self.weights[i].T
                delta = back * acts[i] * (1.0 - acts[i])
        return loss, dWs, dbs

    # -- flat parameter access (finite-difference checks) -------------------

    def get_flat_params(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[offset : offset + W.size].reshape(W.shape).copy()
            offset += W.size
            self.biases[i] = flat[offset : offset + b.size].reshape(b.shape).copy()
            offset += b.size
        if offset != flat.size:
            raise ValueError("flat parameter vector has wrong length")

    def flat_grad(self, X, targets, sample_weight=None, l2: float = 0.0) -> tuple[float, np.ndarray]:
        loss, dWs, dbs = self.loss_and_grad(X, targets, sample_weight, l2)
        parts = []
        for dW, db in zip(dWs, dbs):
            parts.append(dW.ravel())
            parts.append(db.ravel())
        return loss, np.concatenate(parts)

    # -- training ----------------------------------------------------------

    def train(
        self,
        X: np.ndarray,
        targets: np.ndarray,
        sample_weight: np.ndarray | None,
        config: SgdConfig,
    ) -> list[float]:
        """Seeded mini-batch SGD with momentum; returns per-epoch losses."""
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        s = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        rng = np.random.default_rng(config.seed)
        vel_w = [np.zeros_like(W) for W in self.weights]
        vel_b = [np.zeros_like(b) for b in self.biases]
        history: list[float] = []
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                _, dWs, dbs = self.loss_and_grad(X[idx], targets[idx], s[idx], config.l2)
                for i in range(len(self.weights)):
                    vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * dWs[i]
                    vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * dbs[i]
                    self.weights[i] += vel_w[i]
                    self.biases[i] += vel_b[i]
            loss, _, _ = self.loss_and_grad(X, targets, s, config.l2)
            history.append(loss)
        return history

    # -- serialization -------------------------------------------------------

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"{prefix}W{i}"] = W
            arrays[f"{prefix}b{i}"] = b
        return arrays

    @classmethod
    def from_arrays(
        cls,
        sizes: tuple[int, ...],
        output: Literal["logistic", "softmax"],
        arrays: dict[str, np.ndarray],
        prefix: str,
    ) -> "FeedForward":
        weights = []
        biases = []
        for i in range(len(sizes) - 1):
            weights.append(np.array(arrays[f"{prefix}W{i}"], dtype=np.float64))
            biases.append(np.array(arrays[f"{prefix}b{i}"], dtype=np.float64))
        return cls(tuple(sizes), output, weights, biases)
