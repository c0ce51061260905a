"""One-hidden-layer ReLU network with softmax output.

Packed parameter layout: ``[W1 (d*H), b1 (H), W2 (H*C), b2 (C)]``.
"""

from __future__ import annotations

import numpy as np

from .linear import softmax


def n_params(d: int, H: int, C: int) -> int:
    return d * H + H + H * C + C


def unpack(theta, d: int, H: int, C: int):
    i = 0
    W1 = theta[i:i + d * H].reshape(d, H)
    i += d * H
    b1 = theta[i:i + H]
    i += H
    W2 = theta[i:i + H * C].reshape(H, C)
    i += H * C
    b2 = theta[i:i + C]
    return W1, b1, W2, b2


def init_params(d: int, H: int, C: int, rng) -> np.ndarray:
    W1 = rng.standard_normal((d, H)) * np.sqrt(2.0 / d)
    W2 = rng.standard_normal((H, C)) * np.sqrt(1.0 / H)
    return np.concatenate([W1.ravel(), np.zeros(H), W2.ravel(), np.zeros(C)])


def scores(theta, X, H: int, C: int):
    W1, b1, W2, b2 = unpack(theta, X.shape[1], H, C)
    return softmax(np.maximum(X @ W1 + b1, 0.0) @ W2 + b2)


def loss_and_grad(theta, X, y, H: int, C: int):
    n, d = X.shape
    W1, b1, W2, b2 = unpack(theta, d, H, C)
    Z = X @ W1 + b1
    A = np.maximum(Z, 0.0)
    P = softmax(A @ W2 + b2)
    rows = np.arange(n)
    loss = -np.mean(np.log(np.clip(P[rows, y], 1e-300, None)))
    G = P.copy()
    G[rows, y] -= 1.0
    G /= n
    gW2 = A.T @ G
    gb2 = G.sum(axis=0)
    dA = G @ W2.T
    dZ = dA * (Z > 0)
    gW1 = X.T @ dZ
    gb1 = dZ.sum(axis=0)
    return float(loss), np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])
