"""Objectives and their gradients with respect to the frame feature.

Single-image functions mirror the math directly; the ``*_batch`` variants
are what the trainer uses and are tested against the single-image ones.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .assoc import NeighborSet

__all__ = [
    "LossParams",
    "CameraClassifier",
    "softmax",
    "matching_distribution",
    "pcm_loss",
    "ccm_loss",
    "stl_loss",
    "ce_loss",
    "pcm_loss_batch",
    "ce_loss_batch",
]


@dataclass(frozen=True)
class LossParams:
    tau: float = 0.1
    lam: float = 10.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def matching_distribution(x: np.ndarray, camera_bank: np.ndarray, tau: float) -> np.ndarray:
    """Temperature softmax of ``z_k . x / tau`` over one camera's tracklets."""
    camera_bank = np.atleast_2d(np.asarray(camera_bank, dtype=np.float64))
    if camera_bank.shape[0] == 0 or camera_bank.size == 0:
        raise ValueError("camera bank is empty")
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return softmax(camera_bank @ np.asarray(x, dtype=np.float64) / tau)


def _dense_weights(weights, n: int) -> np.ndarray:
    if isinstance(weights, Mapping):
        w = np.zeros(n)
        for j, v in weights.items():
            if not 0 <= j < n:
                raise IndexError(f"weight on index {j} outside camera bank of size {n}")
            w[j] = v
        return w
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise IndexError(f"weight vector of shape {w.shape} does not match camera bank of size {n}")
    return w


def pcm_loss(x: np.ndarray, camera_bank: np.ndarray, weights, tau: float):
    """Soft cross-entropy of the matching distribution against ``weights``.

    ``weights`` is a dense vector over the camera bank or a mapping from bank
    index to weight. Returns ``(loss, grad_x)``.
    """
    camera_bank = np.atleast_2d(np.asarray(camera_bank, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    w = _dense_weights(weights, camera_bank.shape[0])
    logp = log_softmax(camera_bank @ x / tau)
    support = w != 0
    loss = -float(np.sum(w[support] * logp[support]))
    grad = camera_bank.T @ (np.exp(logp) - w) / tau
    return loss, grad


def pcm_loss_batch(X: np.ndarray, camera_bank: np.ndarray, W: np.ndarray, tau: float):
    """Row-wise :func:`pcm_loss` for frames ``X`` (b, d) against dense weights ``W`` (b, N)."""
    logp = log_softmax(X @ camera_bank.T / tau, axis=1)
    losses = -np.sum(np.where(W != 0, W * logp, 0.0), axis=1)
    grads = (np.exp(logp) - W) @ camera_bank / tau
    return losses, grads


def ccm_loss(x: np.ndarray, cross_neighbors, bank) -> tuple:
    """Sum of ``1 - z' . x`` over the cross-camera neighbours.

    ``cross_neighbors`` is a :class:`NeighborSet` (resolved against ``bank``,
    an array of all tracklet representations) or a sequence of member ids.
    """
    x = np.asarray(x, dtype=np.float64)
    ids = cross_neighbors.ids if isinstance(cross_neighbors, NeighborSet) else list(cross_neighbors)
    if not ids:
        return 0.0, np.zeros_like(x)
    z = np.asarray(bank, dtype=np.float64)[ids]
    loss = float(np.sum(1.0 - z @ x))
    return loss, -z.sum(axis=0)


def stl_loss(pcm: float, ccm: float, lam: float) -> float:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return pcm + lam * ccm


class CameraClassifier:
    """One weight vector per tracklet label for each camera."""

    def __init__(self, weights: Sequence[np.ndarray]):
        self.weights = [np.array(w, dtype=np.float64) for w in weights]

    @classmethod
    def init(cls, counts: Sequence[int], dim: int, rng: np.random.Generator, scale: float = 0.01):
        return cls([scale * rng.standard_normal((n, dim)) for n in counts])

    def __getitem__(self, camera: int) -> np.ndarray:
        return self.weights[camera]


def ce_loss(x: np.ndarray, classifier: CameraClassifier, camera: int, label: int):
    """Parametric softmax cross-entropy over ``W_k . x`` (no temperature).

    Returns ``(loss, grad_x, grad_W)`` where ``grad_W`` has the camera's
    classifier shape.
    """
    W = classifier[camera]
    if not 0 <= label < W.shape[0]:
        raise IndexError(f"label {label} out of range for camera {camera} with {W.shape[0]} classes")
    x = np.asarray(x, dtype=np.float64)
    logp = log_softmax(W @ x)
    p = np.exp(logp)
    p[label] -= 1.0
    return -float(logp[label]), W.T @ p, np.outer(p, x)


def ce_loss_batch(X: np.ndarray, W: np.ndarray, labels: np.ndarray):
    """Row-wise :func:`ce_loss` for one camera; ``grad_W`` is summed over rows."""
    logp = log_softmax(X @ W.T, axis=1)
    rows = np.arange(len(labels))
    losses = -logp[rows, labels]
    d = np.exp(logp)
    d[rows, labels] -= 1.0
    return losses, d @ W, d.T @ X
