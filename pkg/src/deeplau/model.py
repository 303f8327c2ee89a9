"""The encoder / attention / decoder translation network.

The encoder is an alternating-direction stack over source embeddings.  The
first decoder layer consumes ``[c_t, y_prev]`` where ``c_t`` attends with the
first decoder layer's previous state; layers 2..L run left to right above
it, and the top state is projected by ``W_o`` (no bias) into vocabulary
logits.  Every decoder layer starts from the zero state.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .attention import (AttentionCache, AttentionParams, EncoderAnnotations, attend,
                        attend_backward_core)
from .cells import StepCache, step, step_backward
from .numerics import (INIT_STD, NonFiniteError, ShapeError, gaussian_init, log_softmax_rows,
                       resolve_dtype)
from .stack import (LayerActivations, StackActivations, StackConfig, StackParams,
                    layer_backward, layer_forward, stack_backward, stack_forward)


@dataclass(frozen=True)
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    embed_dim: int = 512
    hidden_dim: int = 512
    enc_layers: int = 4
    dec_layers: int = 4
    cell_kind: str = "lau"
    residual: bool = False
    dropout: float = 0.5
    attn_dim: Optional[int] = None
    init_std: float = INIT_STD
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("src_vocab", "tgt_vocab", "embed_dim", "hidden_dim", "enc_layers", "dec_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.cell_kind not in ("gru", "lau"):
            raise ValueError(f"unknown cell kind {self.cell_kind!r}")
        resolve_dtype(self.dtype)

    @property
    def encoder(self) -> StackConfig:
        return StackConfig(self.enc_layers, self.embed_dim, self.hidden_dim, self.cell_kind,
                           "alternating", self.residual)

    @property
    def decoder(self) -> StackConfig:
        return StackConfig(self.dec_layers, self.hidden_dim + self.embed_dim, self.hidden_dim,
                           self.cell_kind, "fixed_forward", self.residual)

    def to_dict(self) -> dict:
        return asdict(self)


class ModelParams:
    def __init__(self, cfg: ModelConfig):
        dt = resolve_dtype(cfg.dtype)
        self.cfg = cfg
        self.src_emb = np.zeros((cfg.src_vocab, cfg.embed_dim), dtype=dt)
        self.tgt_emb = np.zeros((cfg.tgt_vocab, cfg.embed_dim), dtype=dt)
        self.encoder = StackParams.zeros(cfg.encoder, dt)
        self.decoder = StackParams.zeros(cfg.decoder, dt)
        self.attention = AttentionParams(cfg.hidden_dim, cfg.hidden_dim, cfg.embed_dim,
                                         cfg.attn_dim, dtype=dt)
        self.W_o = np.zeros((cfg.hidden_dim, cfg.tgt_vocab), dtype=dt)

    @classmethod
    def init(cls, cfg: ModelConfig, rng: np.random.Generator, std: Optional[float] = None) -> "ModelParams":
        """Every weight drawn from N(0, std^2) (default ``cfg.init_std``); biases zero."""
        std = cfg.init_std if std is None else std
        p = cls(cfg)
        for name, buf in p.buffers().items():
            if name.endswith(".b"):
                continue
            buf[...] = gaussian_init(*buf.shape, rng, std=std, dtype=buf.dtype)
        return p

    def zeros_like(self) -> "ModelParams":
        return ModelParams(self.cfg)

    def _stacks(self):
        return (("enc", self.encoder), ("dec", self.decoder))

    def buffers(self) -> dict[str, np.ndarray]:
        """Storage arrays in a fixed order; the optimizer works on these."""
        out = {"src_emb": self.src_emb, "tgt_emb": self.tgt_emb}
        for prefix, stack in self._stacks():
            for l, cell in enumerate(stack.layers, start=1):
                for k, v in cell.buffers().items():
                    out[f"{prefix}.{l}.{k}"] = v
        for k, v in self.attention.named_tensors().items():
            out[f"att.{k}"] = v
        out["W_o"] = self.W_o
        return out

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Every individual weight matrix by name (cell matrices are views)."""
        out = {"src_emb": self.src_emb, "tgt_emb": self.tgt_emb}
        for prefix, stack in self._stacks():
            for l, cell in enumerate(stack.layers, start=1):
                for k, v in cell.named_tensors().items():
                    out[f"{prefix}.{l}.{k}"] = v
        for k, v in self.attention.named_tensors().items():
            out[f"att.{k}"] = v
        out["W_o"] = self.W_o
        return out

    def copy(self) -> "ModelParams":
        out = self.zeros_like()
        dst = out.buffers()
        for k, v in self.buffers().items():
            dst[k][...] = v
        return out


@dataclass
class Batch:
    """Equal-length batch. ``tgt_in`` starts with BOS, ``tgt_out`` ends with EOS."""

    src: np.ndarray  # (B, Tx)
    tgt_in: np.ndarray  # (B, Ty)
    tgt_out: np.ndarray  # (B, Ty)
    tgt_mask: Optional[np.ndarray] = None  # (B, Ty) weights; None = all ones

    @property
    def size(self) -> int:
        return self.src.shape[0]

    @property
    def num_tokens(self) -> float:
        return float(self.tgt_out.size if self.tgt_mask is None else self.tgt_mask.sum())


def _check_ids(ids: np.ndarray, vocab: int, side: str):
    if ids.size == 0 or ids.min() < 0 or ids.max() >= vocab:
        raise ShapeError(f"{side} token id out of range [0, {vocab})")


def encode(params: ModelParams, cfg: ModelConfig, src_ids: np.ndarray,
           keep: bool = False):
    """Annotations for ``src_ids`` ``(B, Tx)`` (or a 1-D sentence).

    With ``keep=True`` also returns the encoder activations for backward.
    """
    src = np.atleast_2d(np.asarray(src_ids))
    _check_ids(src, cfg.src_vocab, "source")
    acts = stack_forward(params.encoder, cfg.encoder, params.src_emb[src.T])
    ann = EncoderAnnotations.build(params.attention, acts.outputs)
    return (ann, acts) if keep else ann


def zero_states(cfg: ModelConfig, batch: int) -> list[np.ndarray]:
    return [np.zeros((batch, cfg.hidden_dim), dtype=resolve_dtype(cfg.dtype))
            for _ in range(cfg.dec_layers)]


def decode_step(params: ModelParams, cfg: ModelConfig, prev_states: list[np.ndarray],
                y_prev_ids: np.ndarray, ann: EncoderAnnotations):
    """One decoder step: returns ``(next_states, logits, alpha)``."""
    y_prev_ids = np.asarray(y_prev_ids).reshape(-1)
    _check_ids(y_prev_ids, cfg.tgt_vocab, "target")
    if len(prev_states) != cfg.dec_layers:
        raise ShapeError(f"expected {cfg.dec_layers} decoder states")
    y = params.tgt_emb[y_prev_ids]
    c, alpha, _ = attend(params.attention, prev_states[0], y, ann)
    x = np.concatenate([c, y], axis=1)
    states = []
    for l, (p, h_prev) in enumerate(zip(params.decoder.layers, prev_states), start=1):
        h, _ = step(p, p.project(x), h_prev)
        states.append(h)
        x = h + x if (cfg.residual and l >= 2) else h
    return states, x @ params.W_o, alpha


@dataclass
class ForwardCache:
    batch: Batch
    enc: StackActivations
    ann: EncoderAnnotations
    dec1: LayerActivations
    att: list[AttentionCache]
    upper: list[LayerActivations]
    top: np.ndarray  # (Ty, B, H) after dropout
    drop_mask: Optional[np.ndarray]
    logp: np.ndarray  # (Ty, B, V)
    weights: np.ndarray  # (Ty, B)
    extra: dict = field(default_factory=dict)


def forward_loss(params: ModelParams, cfg: ModelConfig, batch: Batch,
                 dropout_rng: Optional[np.random.Generator] = None):
    """Teacher-forced mean per-token negative log-likelihood.

    Dropout on the top decoder state (inverted scaling) is applied only when
    ``dropout_rng`` is given.
    """
    _check_ids(batch.tgt_in, cfg.tgt_vocab, "target")
    _check_ids(batch.tgt_out, cfg.tgt_vocab, "target")
    ann, enc = encode(params, cfg, batch.src, keep=True)
    B, Ty = batch.tgt_in.shape
    if batch.src.shape[0] != B:
        raise ShapeError("source and target batch sizes differ")
    Y = params.tgt_emb[batch.tgt_in.T]  # (Ty, B, E)
    H = cfg.hidden_dim
    p1 = params.decoder.layers[0]
    X1 = np.empty((Ty, B, H + cfg.embed_dim), dtype=Y.dtype)
    H1 = np.empty((Ty, B, H), dtype=Y.dtype)
    caches: list[StepCache] = []
    att_caches: list[AttentionCache] = []
    h = np.zeros((B, H), dtype=Y.dtype)
    for t in range(Ty):
        c, _, ac = attend(params.attention, h, Y[t], ann)
        X1[t, :, :H] = c
        X1[t, :, H:] = Y[t]
        h, sc = step(p1, X1[t] @ p1.W_in, h)
        H1[t] = h
        caches.append(sc)
        att_caches.append(ac)
    dec1 = LayerActivations(X1, H1, H1, caches, -1, False)
    X = H1
    upper = []
    for l, p in enumerate(params.decoder.layers[1:], start=2):
        la = layer_forward(p, X, -1, cfg.residual)
        upper.append(la)
        X = la.outputs
    mask = None
    if dropout_rng is not None and cfg.dropout > 0:
        keep = 1.0 - cfg.dropout
        mask = (dropout_rng.random(X.shape) < keep).astype(X.dtype) / keep
        X = X * mask
    logp = log_softmax_rows(X @ params.W_o)
    gold = np.take_along_axis(logp, batch.tgt_out.T[:, :, None], axis=2)[:, :, 0]
    w = np.ones((Ty, B), dtype=logp.dtype) if batch.tgt_mask is None else batch.tgt_mask.T.astype(logp.dtype)
    total = w.sum()
    loss = float(-(w * gold).sum() / total)
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite loss")
    return loss, ForwardCache(batch, enc, ann, dec1, att_caches, upper, X, mask, logp, w / total)


def backward(params: ModelParams, cfg: ModelConfig, cache: ForwardCache) -> ModelParams:
    """Gradients of the :func:`forward_loss` value w.r.t. every parameter."""
    g = params.zeros_like()
    b = cache.batch
    Ty, B, V = cache.logp.shape
    H = cfg.hidden_dim
    dlogits = np.exp(cache.logp)
    np.put_along_axis(dlogits, b.tgt_out.T[:, :, None],
                      np.take_along_axis(dlogits, b.tgt_out.T[:, :, None], axis=2) - 1.0, axis=2)
    dlogits *= cache.weights[:, :, None]
    g.W_o += cache.top.reshape(-1, H).T @ dlogits.reshape(-1, V)
    dS = dlogits @ params.W_o.T
    if cache.drop_mask is not None:
        dS *= cache.drop_mask
    for p, gp, la in zip(reversed(params.decoder.layers[1:]), reversed(g.decoder.layers[1:]),
                         reversed(cache.upper)):
        dS = layer_backward(p, la, dS, gp)

    p1, g1 = params.decoder.layers[0], g.decoder.layers[0]
    att, gatt = params.attention, g.attention
    ann = cache.ann
    dXP1 = np.empty((Ty, B, p1.W_in.shape[1]), dtype=dS.dtype)
    dY = np.empty((Ty, B, cfg.embed_dim), dtype=dS.dtype)
    d_states = np.zeros_like(ann.states)
    d_proj = np.zeros_like(ann.proj)
    carry = np.zeros((B, H), dtype=dS.dtype)
    for t in range(Ty - 1, -1, -1):
        dxp, dh_prev = step_backward(p1, cache.dec1.caches[t], dS[t] + carry, g1)
        dXP1[t] = dxp
        dx = dxp @ p1.W_in.T
        ds, dy, dst, dpr = attend_backward_core(att, cache.att[t], ann, dx[:, :H], gatt)
        d_states += dst
        d_proj += dpr
        dY[t] = dx[:, H:] + dy
        carry = dh_prev + ds
    g1.W_in += cache.dec1.inputs.reshape(Ty * B, -1).T @ dXP1.reshape(Ty * B, -1)
    Tx = ann.length
    gatt.U_a += ann.states.reshape(Tx * B, -1).T @ d_proj.reshape(Tx * B, -1)
    d_states += d_proj @ att.U_a.T
    d_src, _ = stack_backward(params.encoder, cfg.encoder, cache.enc, d_states, g.encoder)
    np.add.at(g.src_emb, b.src.T, d_src)
    np.add.at(g.tgt_emb, b.tgt_in.T, dY)
    return g


def loss_and_grads(params: ModelParams, cfg: ModelConfig, batch: Batch,
                   dropout_rng: Optional[np.random.Generator] = None):
    loss, cache = forward_loss(params, cfg, batch, dropout_rng)
    return loss, backward(params, cfg, cache)
