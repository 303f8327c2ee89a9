"""Vertically stacked recurrent layers with per-layer traversal direction.

Layers are numbered 1..L above the raw input.  Layer ``l`` runs with
direction term ``d``: ``d = -1`` reads ``h[t-1]`` (left to right) and
``d = +1`` reads ``h[t+1]`` (right to left).  The ``alternating`` policy
uses ``d = (-1)**l``, so layer 1 runs left to right and layer 2 right to
left; ``fixed_forward`` uses ``d = -1`` everywhere.  The state before the
first step in traversal order is zero.

With ``residual=True`` layers 2..L emit ``h + x`` (their input added to the
cell output); the recurrence itself still runs on ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cells import CellParams, StepCache, make_cell, step, step_backward
from .numerics import DEFAULT_DTYPE, INIT_STD, ShapeError, check_finite

POLICIES = ("alternating", "alternating_flipped", "fixed_forward")


@dataclass(frozen=True)
class StackConfig:
    num_layers: int
    input_dim: int
    hidden_dim: int
    cell_kind: str = "lau"
    direction_policy: str = "alternating"
    residual: bool = False

    def __post_init__(self):
        if self.num_layers < 1 or self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("stack dimensions and depth must be positive")
        if self.direction_policy not in POLICIES:
            raise ValueError(f"direction_policy must be one of {POLICIES}")

    def direction(self, layer: int) -> int:
        """Direction term of 1-based ``layer``: -1 left-to-right, +1 right-to-left."""
        if self.direction_policy == "fixed_forward":
            return -1
        d = (-1) ** layer
        return -d if self.direction_policy == "alternating_flipped" else d

    def layer_input_dim(self, layer: int) -> int:
        return self.input_dim if layer == 1 else self.hidden_dim


@dataclass
class StackParams:
    layers: list[CellParams]

    @classmethod
    def zeros(cls, cfg: StackConfig, dtype=DEFAULT_DTYPE) -> "StackParams":
        return cls([make_cell(cfg.cell_kind, cfg.layer_input_dim(l), cfg.hidden_dim, dtype)
                    for l in range(1, cfg.num_layers + 1)])

    @classmethod
    def init(cls, cfg: StackConfig, rng: np.random.Generator, std: float = INIT_STD,
             dtype=DEFAULT_DTYPE) -> "StackParams":
        p = cls.zeros(cfg, dtype)
        for layer in p.layers:
            layer.init_gaussian(rng, std)
        return p

    def zeros_like(self) -> "StackParams":
        return StackParams([c.zeros_like() for c in self.layers])


@dataclass
class LayerActivations:
    inputs: np.ndarray  # (T, B, in)
    hidden: np.ndarray  # (T, B, H) cell states
    outputs: np.ndarray  # (T, B, H) what the next layer sees
    caches: list[StepCache] = field(default_factory=list)  # indexed by position t
    direction: int = -1
    residual: bool = False


@dataclass
class StackActivations:
    layers: list[LayerActivations]

    @property
    def outputs(self) -> np.ndarray:
        return self.layers[-1].outputs

    def hidden(self, layer: int) -> np.ndarray:
        """Cell states of 1-based ``layer`` as a ``(T, B, H)`` array."""
        return self.layers[layer - 1].hidden


def _order(T: int, direction: int):
    return range(T) if direction == -1 else range(T - 1, -1, -1)


def layer_forward(p: CellParams, X: np.ndarray, direction: int, residual: bool = False,
                  force=None, h0: Optional[np.ndarray] = None) -> LayerActivations:
    T, B, _ = X.shape
    XP = p.project(X)
    hidden = np.empty((T, B, p.hidden_dim), dtype=XP.dtype)
    caches: list = [None] * T
    h = np.zeros((B, p.hidden_dim), dtype=XP.dtype) if h0 is None else h0
    for t in _order(T, direction):
        h, caches[t] = step(p, XP[t], h, force)
        hidden[t] = h
    outputs = hidden + X if residual else hidden
    return LayerActivations(X, hidden, outputs, caches, direction, residual)


def layer_backward(p: CellParams, acts: LayerActivations, d_out: np.ndarray,
                   grads: CellParams, state_grads: Optional[np.ndarray] = None) -> np.ndarray:
    """BPTT through one layer; returns dL/d(layer inputs).

    If ``state_grads`` is given it receives the total gradient on each cell
    state ``h[t]`` (direct plus recurrent).
    """
    T, B, _ = acts.inputs.shape
    dXP = np.empty((T, B, p.W_in.shape[1]), dtype=d_out.dtype)
    carry = np.zeros((B, p.hidden_dim), dtype=d_out.dtype)
    for t in reversed(_order(T, acts.direction)):
        dh = d_out[t] + carry
        if state_grads is not None:
            state_grads[t] = dh
        dXP[t], carry = step_backward(p, acts.caches[t], dh, grads)
    X2 = acts.inputs.reshape(T * B, -1)
    dXP2 = dXP.reshape(T * B, -1)
    grads.W_in += X2.T @ dXP2
    dX = (dXP2 @ p.W_in.T).reshape(acts.inputs.shape)
    if acts.residual:
        dX += d_out
    return dX


def _as_sequence(inputs) -> np.ndarray:
    if isinstance(inputs, np.ndarray):
        X = inputs
    else:
        X = np.stack(list(inputs))
    if X.ndim != 3 or X.shape[0] < 1:
        raise ShapeError("stack input must be a non-empty sequence of (batch, dim) tensors")
    return X


def stack_forward(params: StackParams, cfg: StackConfig, inputs: Sequence[np.ndarray] | np.ndarray,
                  force=None) -> StackActivations:
    """Run all layers over ``inputs`` (a ``(T, B, D)`` array or list of ``(B, D)``)."""
    X = _as_sequence(inputs)
    if X.shape[2] != cfg.input_dim or len(params.layers) != cfg.num_layers:
        raise ShapeError(f"stack expects input dim {cfg.input_dim} and {cfg.num_layers} layers")
    layers = []
    for l, p in enumerate(params.layers, start=1):
        acts = layer_forward(p, X, cfg.direction(l), cfg.residual and l >= 2, force)
        layers.append(acts)
        X = acts.outputs
    check_finite(X, "stack output")
    return StackActivations(layers)


def stack_backward(params: StackParams, cfg: StackConfig, acts: StackActivations,
                   d_outputs: np.ndarray, grads: Optional[StackParams] = None):
    """Returns ``(dL/dinputs, grads)``; ``grads`` is accumulated into if given."""
    if grads is None:
        grads = params.zeros_like()
    d = np.asarray(d_outputs)
    if d.shape != acts.outputs.shape:
        raise ShapeError(f"upstream gradient shape {d.shape} != outputs {acts.outputs.shape}")
    for p, g, la in zip(reversed(params.layers), reversed(grads.layers), reversed(acts.layers)):
        d = layer_backward(p, la, d, g)
    return d, grads
