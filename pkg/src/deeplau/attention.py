"""Additive attention fed with the previous target word.

Scores for source position ``j`` at decoder step ``t``::

    e[j] = v_a . tanh(s_prev @ W_a + h[j] @ U_a + y_prev @ W_y)
    alpha = softmax over j of e
    c = sum_j alpha[j] * h[j]

``s_prev`` is the first decoder layer's state from the previous step and
``y_prev`` the embedding of the previous target word.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import DEFAULT_DTYPE, INIT_STD, ShapeError, check_finite, gaussian_init


class AttentionParams:
    names = ("W_a", "U_a", "W_y", "v_a")

    def __init__(self, query_dim: int, ann_dim: int, emb_dim: int, attn_dim: Optional[int] = None,
                 dtype=DEFAULT_DTYPE):
        attn_dim = attn_dim or query_dim
        self.W_a = np.zeros((query_dim, attn_dim), dtype=dtype)
        self.U_a = np.zeros((ann_dim, attn_dim), dtype=dtype)
        self.W_y = np.zeros((emb_dim, attn_dim), dtype=dtype)
        self.v_a = np.zeros((attn_dim, 1), dtype=dtype)

    @property
    def attn_dim(self) -> int:
        return self.v_a.shape[0]

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self.names}

    def zeros_like(self) -> "AttentionParams":
        return AttentionParams(self.W_a.shape[0], self.U_a.shape[0], self.W_y.shape[0],
                               self.attn_dim, dtype=self.W_a.dtype)

    def init_gaussian(self, rng: np.random.Generator, std: float = INIT_STD) -> "AttentionParams":
        for n in self.names:
            t = getattr(self, n)
            t[...] = gaussian_init(*t.shape, rng, std=std, dtype=t.dtype)
        return self


@dataclass
class EncoderAnnotations:
    """Top encoder states ``(Tx, B, H)`` with their ``U_a`` projection cached."""

    states: np.ndarray
    proj: np.ndarray

    @classmethod
    def build(cls, p: AttentionParams, states: np.ndarray) -> "EncoderAnnotations":
        if states.ndim == 2:
            states = states[:, None, :]
        if states.shape[0] < 1:
            raise ShapeError("attention needs at least one source position")
        if states.shape[2] != p.U_a.shape[0]:
            raise ShapeError(f"annotation dim {states.shape[2]} != {p.U_a.shape[0]}")
        return cls(states, states @ p.U_a)

    @property
    def length(self) -> int:
        return self.states.shape[0]

    def select(self, rows) -> "EncoderAnnotations":
        """Annotations for a subset / repetition of batch rows (beam expansion)."""
        return EncoderAnnotations(self.states[:, rows], self.proj[:, rows])


@dataclass
class AttentionCache:
    s_prev: np.ndarray
    y_prev: np.ndarray
    act: np.ndarray  # tanh activations (Tx, B, A)
    alpha: np.ndarray  # (B, Tx)


def attend(p: AttentionParams, s_prev: np.ndarray, y_prev_emb: np.ndarray,
           ann: EncoderAnnotations):
    """Returns ``(c_t, alpha, cache)`` with ``c_t`` ``(B, H)`` and ``alpha`` ``(B, Tx)``."""
    if s_prev.shape[1] != p.W_a.shape[0] or y_prev_emb.shape[1] != p.W_y.shape[0]:
        raise ShapeError("query or embedding dimension does not match attention params")
    if s_prev.shape[0] != ann.states.shape[1]:
        raise ShapeError("batch size of query and annotations differ")
    q = s_prev @ p.W_a + y_prev_emb @ p.W_y
    act = np.tanh(ann.proj + q[None])
    e = (act @ p.v_a)[:, :, 0].T
    e = e - e.max(axis=1, keepdims=True)
    w = np.exp(e)
    alpha = w / w.sum(axis=1, keepdims=True)
    c = np.einsum("bt,tbh->bh", alpha, ann.states)
    check_finite(c, "context vector")
    return c, alpha, AttentionCache(s_prev, y_prev_emb, act, alpha)


def attend_backward_core(p: AttentionParams, cache: AttentionCache, ann: EncoderAnnotations,
                         dc: np.ndarray, grads: AttentionParams,
                         dalpha: Optional[np.ndarray] = None, detach_alpha: bool = False):
    """Backward without the ``U_a`` product: returns
    ``(ds_prev, dy_prev, d_states_direct, d_proj)`` where ``d_proj`` is the
    gradient on the cached ``U_a`` projection of the annotations."""
    alpha = cache.alpha
    d_states = alpha.T[:, :, None] * dc[None]
    if detach_alpha:
        zeros_q = np.zeros_like(cache.s_prev)
        return zeros_q, np.zeros_like(cache.y_prev), d_states, np.zeros_like(cache.act)
    da = np.einsum("bh,tbh->bt", dc, ann.states)
    if dalpha is not None:
        da = da + dalpha
    de = alpha * (da - (alpha * da).sum(axis=1, keepdims=True))  # (B, Tx)
    A = p.attn_dim
    grads.v_a += cache.act.reshape(-1, A).T @ de.T.reshape(-1, 1)
    d_pre = (de.T[:, :, None] * p.v_a[:, 0]) * (1.0 - cache.act * cache.act)
    dq = d_pre.sum(axis=0)
    grads.W_a += cache.s_prev.T @ dq
    grads.W_y += cache.y_prev.T @ dq
    return dq @ p.W_a.T, dq @ p.W_y.T, d_states, d_pre


def attend_backward(p: AttentionParams, cache: AttentionCache, ann: EncoderAnnotations,
                    dc: np.ndarray, grads: Optional[AttentionParams] = None,
                    dalpha: Optional[np.ndarray] = None, detach_alpha: bool = False):
    """Adjoint of :func:`attend`.

    Returns ``(ds_prev, dy_prev_emb, d_annotations, grads)``; ``d_annotations``
    is ``(Tx, B, H)``.  ``detach_alpha`` treats the weights as constants.
    """
    if grads is None:
        grads = p.zeros_like()
    if dc.shape != cache.s_prev.shape[:1] + ann.states.shape[2:]:
        raise ShapeError("upstream context gradient has the wrong shape")
    ds, dy, d_states, d_proj = attend_backward_core(p, cache, ann, dc, grads, dalpha, detach_alpha)
    Tx, B, H = ann.states.shape
    grads.U_a += ann.states.reshape(-1, H).T @ d_proj.reshape(Tx * B, -1)
    d_states = d_states + d_proj @ p.U_a.T
    return ds, dy, d_states, grads
