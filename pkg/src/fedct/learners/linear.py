"""Multinomial logistic regression trained by mini-batch gradient descent.

Parameters are packed as ``[W.ravel(), b]`` with ``W`` of shape ``(d, C)``.
"""

from __future__ import annotations

import numpy as np


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def n_params(d: int, C: int) -> int:
    return d * C + C


def unpack(theta, d: int, C: int):
    return theta[:d * C].reshape(d, C), theta[d * C:]


def scores(theta, X, C: int):
    W, b = unpack(theta, X.shape[1], C)
    return softmax(X @ W + b)


def loss_and_grad(theta, X, y, C: int, l2: float = 0.0):
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradient."""
    n, d = X.shape
    W, b = unpack(theta, d, C)
    P = softmax(X @ W + b)
    Y = np.zeros_like(P)
    Y[np.arange(n), y] = 1.0
    loss = -np.mean(np.log(np.clip(P[np.arange(n), y], 1e-300, None))) + 0.5 * l2 * np.sum(W * W)
    G = (P - Y) / n
    gW = X.T @ G + l2 * W
    gb = G.sum(axis=0)
    return float(loss), np.concatenate([gW.ravel(), gb])


def sgd(theta, X, y, C: int, grad_fn, learning_rate: float, epochs: int, rng, batch_size: int = 32):
    """Plain mini-batch gradient descent, reshuffling every epoch."""
    theta = np.array(theta, dtype=np.float64, copy=True)
    n = len(y)
    bs = min(batch_size, n)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            _, g = grad_fn(theta, X[idx], y[idx])
            theta -= learning_rate * g
    return theta
