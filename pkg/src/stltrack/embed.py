"""Trainable embedding head: an affine map (optionally with one tanh hidden
layer) followed by L2 normalisation, with hand-written gradients."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = ["EmbedModel", "forward", "backward", "save_checkpoint", "load_checkpoint"]

DEGENERATE_NORM = 1e-12
CHECKPOINT_MAGIC = b"STLCKPT1\n"


def _orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


@dataclass
class EmbedModel:
    """Parameters of the embedding head.

    Without ``hidden_*`` parameters the head is ``normalize(W r + b)``; with
    them it is ``normalize(W tanh(W_h r + b_h) + b)``.
    """

    weight: np.ndarray
    bias: np.ndarray
    hidden_weight: Optional[np.ndarray] = None
    hidden_bias: Optional[np.ndarray] = None

    @classmethod
    def init(
        cls,
        d_in: int,
        d_out: int = 128,
        hidden: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> "EmbedModel":
        """Orthogonal rows scaled by ``1/sqrt(d_in)``, zero biases."""
        rng = np.random.default_rng(0) if rng is None else rng
        if hidden:
            hw = _orthogonal(rng, hidden, d_in) / np.sqrt(d_in)
            w = _orthogonal(rng, d_out, hidden) / np.sqrt(hidden)
            return cls(w, np.zeros(d_out), hw, np.zeros(hidden))
        w = _orthogonal(rng, d_out, d_in) / np.sqrt(d_in)
        return cls(w, np.zeros(d_out))

    @property
    def variant(self) -> str:
        return "linear" if self.hidden_weight is None else "hidden"

    @property
    def d_in(self) -> int:
        src = self.weight if self.hidden_weight is None else self.hidden_weight
        return src.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    def param_names(self) -> list[str]:
        names = ["weight", "bias"]
        if self.hidden_weight is not None:
            names += ["hidden_weight", "hidden_bias"]
        return names

    def params(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self.param_names()}

    def copy(self) -> "EmbedModel":
        return EmbedModel(**{n: p.copy() for n, p in self.params().items()})

    def scaled(self, c: float) -> "EmbedModel":
        """Copy with the output layer scaled by ``c``."""
        m = self.copy()
        m.weight *= c
        m.bias *= c
        return m

    def embed(self, raw: np.ndarray) -> np.ndarray:
        return forward(self, raw)


@dataclass
class Cache:
    raw: np.ndarray
    pre: np.ndarray
    norm: np.ndarray
    out: np.ndarray
    hidden: Optional[np.ndarray] = None
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _check_dims(model: EmbedModel, raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[-1] != model.d_in:
        raise ValueError(f"input dimension {raw.shape[-1]} != model d_in {model.d_in}")
    return raw


def forward_cached(model: EmbedModel, raw: np.ndarray) -> Cache:
    """Batched forward over rows of ``raw`` keeping what backward needs."""
    raw = np.atleast_2d(_check_dims(model, raw))
    h = None
    if model.hidden_weight is not None:
        h = np.tanh(raw @ model.hidden_weight.T + model.hidden_bias)
        pre = h @ model.weight.T + model.bias
    else:
        pre = raw @ model.weight.T + model.bias
    norm = np.linalg.norm(pre, axis=1, keepdims=True)
    degenerate = norm[:, 0] < DEGENERATE_NORM
    out = pre / np.where(degenerate[:, None], 1.0, norm)
    if degenerate.any():
        out[degenerate] = 0.0
        out[degenerate, 0] = 1.0
    return Cache(raw, pre, norm, out, h, degenerate)


def forward(model: EmbedModel, raw: np.ndarray) -> np.ndarray:
    """Unit-norm embedding of one input vector or each row of a matrix.

    A pre-normalisation norm below 1e-12 maps to the first basis vector.
    """
    raw = _check_dims(model, raw)
    out = forward_cached(model, raw).out
    return out[0] if raw.ndim == 1 else out


def backward_cached(model: EmbedModel, cache: Cache, upstream: np.ndarray):
    """Gradients for a batch; parameter gradients are summed over rows.

    Returns ``(param_grads, input_grad)``. Rows whose pre-normalisation norm
    is degenerate get zero gradient.
    """
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    x = cache.out
    # Jacobian of v/|v| applied to g: (g - x (x.g)) / |v|
    g_pre = (g - x * np.sum(x * g, axis=1, keepdims=True)) / np.where(cache.degenerate[:, None], 1.0, cache.norm)
    g_pre[cache.degenerate] = 0.0
    grads = {}
    if model.hidden_weight is None:
        grads["weight"] = g_pre.T @ cache.raw
        grads["bias"] = g_pre.sum(axis=0)
        g_in = g_pre @ model.weight
    else:
        h = cache.hidden
        grads["weight"] = g_pre.T @ h
        grads["bias"] = g_pre.sum(axis=0)
        g_h = (g_pre @ model.weight) * (1.0 - h * h)
        grads["hidden_weight"] = g_h.T @ cache.raw
        grads["hidden_bias"] = g_h.sum(axis=0)
        g_in = g_h @ model.hidden_weight
    return grads, g_in


def backward(model: EmbedModel, raw: np.ndarray, upstream_grad: np.ndarray):
    """Gradients of ``upstream_grad . forward(model, raw)``.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` keyed like
    :meth:`EmbedModel.params`.
    """
    raw = _check_dims(model, raw)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape[-1] != model.d_out:
        raise ValueError(f"upstream dimension {upstream_grad.shape[-1]} != d_out {model.d_out}")
    cache = forward_cached(model, raw)
    grads, g_in = backward_cached(model, cache, upstream_grad)
    return grads, (g_in[0] if raw.ndim == 1 else g_in)


def save_checkpoint(model: EmbedModel, path) -> Path:
    """Write a magic line, a JSON header line, then float32 LE parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "variant": model.variant,
        "d_in": model.d_in,
        "d_out": model.d_out,
        "params": [[n, list(p.shape)] for n, p in model.params().items()],
    }
    payload = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in model.params().values())
    path.write_bytes(CHECKPOINT_MAGIC + json.dumps(header).encode() + b"\n" + payload)
    return path


def load_checkpoint(path) -> EmbedModel:
    blob = Path(path).read_bytes()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path} is not a checkpoint")
    rest = blob[len(CHECKPOINT_MAGIC) :]
    line, _, payload = rest.partition(b"\n")
    header = json.loads(line)
    params, offset = {}, 0
    for name, shape in header["params"]:
        n = int(np.prod(shape))
        chunk = payload[offset : offset + 4 * n]
        if len(chunk) != 4 * n:
            raise ValueError(f"checkpoint payload truncated at {name}")
        params[name] = np.frombuffer(chunk, dtype="<f4").astype(np.float64).reshape(shape)
        offset += 4 * n
    if offset != len(payload):
        raise ValueError("checkpoint payload has trailing bytes")
    return EmbedModel(**params)
