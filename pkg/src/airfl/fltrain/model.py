"""Multinomial logistic regression on flattened MNIST images.

Parameters live in one flat vector of length ``D = 784 * 10 + 10``: the
weight matrix in row-major order followed by the biases.
"""

import numpy as np
from scipy.special import log_softmax, softmax

from .data import N_CLASSES, N_FEATURES

N_PARAMS = N_FEATURES * N_CLASSES + N_CLASSES


def zeros():
    return np.zeros(N_PARAMS)


def unpack(w):
    w = np.asarray(w, dtype=float)
    if w.shape != (N_PARAMS,):
        raise ValueError(f"parameter vector must have length {N_PARAMS}; got {w.shape}")
    return w[:N_FEATURES * N_CLASSES].reshape(N_FEATURES, N_CLASSES), w[N_FEATURES * N_CLASSES:]


def logits(w, X):
    W, b = unpack(w)
    return np.asarray(X, dtype=float) @ W + b


def predict_proba(w, X):
    return softmax(logits(w, X), axis=1)


def predict(w, X):
    return np.argmax(logits(w, X), axis=1)


def loss_grad(w, X, y):
    """Mean softmax cross-entropy over ``(X, y)`` and its gradient."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("loss needs at least one sample")
    z = logits(w, X)
    logp = log_softmax(z, axis=1)
    n = y.size
    loss = -float(np.mean(logp[np.arange(n), y]))
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, np.concatenate([(X.T @ delta).ravel(), delta.sum(axis=0)])


def local_loss_grad(w, shard):
    """Loss and gradient on one user's shard (a ``Dataset``)."""
    return loss_grad(w, shard.features, shard.labels)


def evaluate(w, ds):
    """``(mean cross-entropy, accuracy)`` on a dataset."""
    z = logits(w, ds.features)
    logp = log_softmax(z, axis=1)
    loss = -float(np.mean(logp[np.arange(len(ds)), ds.labels]))
    return loss, float(np.mean(np.argmax(z, axis=1) == ds.labels))
