"""Temporal aggregation of a (K, M) feature map into a length-K vector.

Two aggregators share one interface:

* attention pooling with a single trainable query: keys and values are linear
  projections of the feature map, each time step is scored by
  ``q . key / sqrt(d_k)``, and the output is the softmax-weighted sum of the
  value columns;
* temporal average pooling, the baseline.

All functions accept a single map ``(K, M)`` or a batch ``(N, K, M)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from spkcount.nn.functional import softmax
from spkcount.nn.init import kaiming_init


@dataclass
class AttentionParams:
    Wk: np.ndarray  # (d_k, K)
    Wv: np.ndarray  # (d_v, K)
    q: np.ndarray  # (d_k,)

    def __post_init__(self):
        if self.Wk.ndim != 2 or self.Wv.ndim != 2:
            raise ValueError("Wk and Wv must be matrices")
        if self.Wk.shape[1] != self.Wv.shape[1]:
            raise ValueError(f"Wk and Wv disagree on feature dim: {self.Wk.shape} vs {self.Wv.shape}")
        if self.q.shape != (self.Wk.shape[0],):
            raise ValueError(f"query length {self.q.shape} does not match d_k = {self.Wk.shape[0]}")

    @property
    def d_k(self) -> int:
        return self.Wk.shape[0]

    @property
    def d_v(self) -> int:
        return self.Wv.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.Wk.shape[1]

    @classmethod
    def init(cls, feature_dim: int, d_k: int | None = None, d_v: int | None = None, seed=0,
             dtype=np.float32) -> "AttentionParams":
        d_k = feature_dim if d_k is None else d_k
        d_v = feature_dim if d_v is None else d_v
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        ss = ss.spawn(3)
        return cls(
            Wk=kaiming_init((d_k, feature_dim), feature_dim, ss[0], dtype),
            Wv=kaiming_init((d_v, feature_dim), feature_dim, ss[1], dtype),
            q=kaiming_init((d_k,), d_k, ss[2], dtype),
        )


@dataclass
class AttentionScores:
    r: np.ndarray  # (..., M) pre-softmax similarities
    w: np.ndarray  # (..., M) weights, sum to 1 over M


@dataclass
class AttentionCache:
    x: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    w: np.ndarray


def project_key_value(x, p: AttentionParams):
    """keys = Wk @ x, values = Wv @ x (no bias)."""
    x = np.asarray(x)
    if x.ndim < 2 or x.shape[-2] != p.feature_dim:
        raise ValueError(f"feature map of shape {x.shape} does not have K = {p.feature_dim} rows")
    return p.Wk @ x, p.Wv @ x


def attention_scores(keys, q) -> AttentionScores:
    d_k = len(q)
    if d_k == 0:
        raise ValueError("key dimension d_k must be positive")
    if keys.shape[-2] != d_k:
        raise ValueError(f"keys have {keys.shape[-2]} rows, query has {d_k}")
    r = np.einsum("d,...dm->...m", q, keys) / math.sqrt(d_k)
    return AttentionScores(r=r, w=softmax(r, axis=-1))


def attention_pool(x, p: AttentionParams, return_cache: bool = False):
    """Softmax-weighted combination of value columns, (..., K, M) -> (..., d_v)."""
    keys, values = project_key_value(x, p)
    scores = attention_scores(keys, p.q)
    out = np.einsum("...dm,...m->...d", values, scores.w)
    if return_cache:
        return out, AttentionCache(x=np.asarray(x), keys=keys, values=values, w=scores.w)
    return out


def _flat(a, core_dims=2):
    # collapse leading batch dims (or add one) so einsum can sum over them
    return a.reshape((-1,) + a.shape[a.ndim - core_dims:])


def attention_backward(grad_out, cache: AttentionCache | None, p: AttentionParams):
    """Returns (grad_Wk, grad_Wv, grad_q, grad_x) for :func:`attention_pool`.

    Parameter gradients are summed over any leading batch dimensions.
    """
    if cache is None:
        raise RuntimeError("attention_backward called without a forward cache")
    x, keys, values, w = cache.x, cache.keys, cache.values, cache.w
    scale = 1.0 / math.sqrt(p.d_k)

    grad_values = grad_out[..., :, None] * w[..., None, :]
    grad_w = np.einsum("...d,...dm->...m", grad_out, values)
    # softmax Jacobian: dr = w * (dw - <dw, w>)
    grad_r = w * (grad_w - (grad_w * w).sum(axis=-1, keepdims=True))
    grad_keys = p.q[:, None] * grad_r[..., None, :] * scale
    grad_q = np.einsum("ndm,nm->d", _flat(keys), _flat(grad_r, 1)) * scale

    grad_Wk = np.einsum("ndm,nkm->dk", _flat(grad_keys), _flat(x))
    grad_Wv = np.einsum("ndm,nkm->dk", _flat(grad_values), _flat(x))
    grad_x = p.Wk.T @ grad_keys + p.Wv.T @ grad_values
    return grad_Wk, grad_Wv, grad_q, grad_x


def average_pool(x):
    """Mean over the time axis, (..., K, M) -> (..., K)."""
    x = np.asarray(x)
    if x.shape[-1] < 1:
        raise ValueError("average_pool needs at least one time step")
    return x.mean(axis=-1)


def average_pool_backward(grad_out, m: int):
    return np.repeat(grad_out[..., None] / m, m, axis=-1)
