"""GRU and LAU recurrent cells with exact single-step backward passes.

Batch runs along rows and weights are stored ``(in_dim, out_dim)``, so the
product ``W x`` of the usual column-vector notation is ``x @ W`` here.

Weights of one cell live in three fused buffers (``W_in``, ``W_hid``, ``b``)
so a whole sequence can be projected with one matmul; the individual
matrices (``W_xr``, ``W_hz``, ``b_g`` ...) are exposed as views.

LAU update, with ``f = 1 - r`` and ``H(x) = x @ W_x``::

    r, z, g = sigmoid(x @ W_x{r,z,g} + h_prev @ W_h{r,z,g} + b_{r,z,g})
    cand    = tanh(f * (x @ W_xh) + r * (h_prev @ W_hh) + b_h)
    h       = ((1 - z) * h_prev + z * cand) * (1 - g) + g * H(x)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .numerics import DEFAULT_DTYPE, INIT_STD, ShapeError, check_finite, gaussian_init

Force = Optional[Mapping[str, float]]


def _sig(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class CellParams:
    """Base for fused-storage cell parameters."""

    kind: str
    # (view name, buffer, column block index)
    _layout: tuple = ()
    _in_blocks: int
    _hid_blocks: int
    _bias_blocks: int

    def __init__(self, input_dim: int, hidden_dim: int, dtype=DEFAULT_DTYPE):
        if input_dim < 1 or hidden_dim < 1:
            raise ShapeError("cell dimensions must be positive")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        H = hidden_dim
        self.W_in = np.zeros((input_dim, self._in_blocks * H), dtype=dtype)
        self.W_hid = np.zeros((H, self._hid_blocks * H), dtype=dtype)
        self.b = np.zeros((1, self._bias_blocks * H), dtype=dtype)

    def __getattr__(self, name):
        for view, buf, k in type(self)._layout:
            if view == name:
                H = self.__dict__["hidden_dim"]
                return self.__dict__[buf][:, k * H:(k + 1) * H]
        raise AttributeError(name)

    @property
    def dtype(self):
        return self.W_in.dtype

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Named weight matrices (views into the fused buffers)."""
        return {view: getattr(self, view) for view, _, _ in self._layout}

    def buffers(self) -> dict[str, np.ndarray]:
        return {"W_in": self.W_in, "W_hid": self.W_hid, "b": self.b}

    def zeros_like(self) -> "CellParams":
        return type(self)(self.input_dim, self.hidden_dim, dtype=self.dtype)

    def copy(self) -> "CellParams":
        out = self.zeros_like()
        for k, v in self.buffers().items():
            out.buffers()[k][...] = v
        return out

    def init_gaussian(self, rng: np.random.Generator, std: float = INIT_STD) -> "CellParams":
        """Gaussian weights, zero biases."""
        for buf in (self.W_in, self.W_hid):
            buf[...] = gaussian_init(*buf.shape, rng, std=std, dtype=self.dtype)
        self.b[...] = 0.0
        return self

    def project(self, x: np.ndarray) -> np.ndarray:
        """Input-side pre-activations for every block; works on ``(..., in)``."""
        return x @ self.W_in


class GRUParams(CellParams):
    kind = "gru"
    _in_blocks, _hid_blocks, _bias_blocks = 3, 3, 3
    _layout = (
        ("W_xr", "W_in", 0), ("W_xz", "W_in", 1), ("W_xh", "W_in", 2),
        ("W_hr", "W_hid", 0), ("W_hz", "W_hid", 1), ("W_hh", "W_hid", 2),
        ("b_r", "b", 0), ("b_z", "b", 1), ("b_h", "b", 2),
    )


class LAUParams(CellParams):
    kind = "lau"
    _in_blocks, _hid_blocks, _bias_blocks = 5, 4, 4
    _layout = (
        ("W_xr", "W_in", 0), ("W_xz", "W_in", 1), ("W_xg", "W_in", 2),
        ("W_xh", "W_in", 3), ("W_x", "W_in", 4),
        ("W_hr", "W_hid", 0), ("W_hz", "W_hid", 1), ("W_hg", "W_hid", 2),
        ("W_hh", "W_hid", 3),
        ("b_r", "b", 0), ("b_z", "b", 1), ("b_g", "b", 2), ("b_h", "b", 3),
    )


CELL_KINDS = {"gru": GRUParams, "lau": LAUParams}


def make_cell(kind: str, input_dim: int, hidden_dim: int, dtype=DEFAULT_DTYPE) -> CellParams:
    try:
        cls = CELL_KINDS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown cell kind {kind!r}") from None
    return cls(input_dim, hidden_dim, dtype=dtype)


@dataclass
class StepCache:
    """Intermediates of one forward step, consumed by the backward step."""

    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    cand: np.ndarray
    a_h: np.ndarray  # input-side candidate term, x @ W_xh
    u_h: np.ndarray  # LAU: h_prev @ W_hh ; GRU: (r * h_prev) @ W_hh
    g: Optional[np.ndarray] = None
    hx: Optional[np.ndarray] = None  # LAU linear path x @ W_x
    m: Optional[np.ndarray] = None  # LAU: GRU-style mix before the g gate
    x: Optional[np.ndarray] = None
    forced: frozenset = frozenset()


def _gate(pre, name, force):
    if force and name in force:
        return np.full_like(pre, force[name])
    return _sig(pre)


# --- fused steps (input already projected) --------------------------------

def gru_step(p: GRUParams, xp: np.ndarray, h_prev: np.ndarray, force: Force = None):
    H = p.hidden_dim
    gates = xp[:, :2 * H] + h_prev @ p.W_hid[:, :2 * H] + p.b[:, :2 * H]
    r = _gate(gates[:, :H], "r", force)
    z = _gate(gates[:, H:], "z", force)
    a_h = xp[:, 2 * H:3 * H]
    u_h = (r * h_prev) @ p.W_hid[:, 2 * H:]
    cand = np.tanh(a_h + u_h + p.b[:, 2 * H:])
    h = (1.0 - z) * h_prev + z * cand
    cache = StepCache(h_prev=h_prev, r=r, z=z, cand=cand, a_h=a_h, u_h=u_h,
                      forced=frozenset(force or ()))
    return h, cache


def gru_step_backward(p: GRUParams, c: StepCache, dh: np.ndarray, grads: GRUParams):
    """Returns (d input projection, d h_prev); accumulates hidden-side grads."""
    H = p.hidden_dim
    dh_prev = dh * (1.0 - c.z)
    dz = dh * (c.cand - c.h_prev)
    dpre = dh * c.z * (1.0 - c.cand * c.cand)
    rh = c.r * c.h_prev
    grads.W_hid[:, 2 * H:] += rh.T @ dpre
    drh = dpre @ p.W_hid[:, 2 * H:].T
    dr = drh * c.h_prev
    dh_prev += drh * c.r
    dgr = np.zeros_like(dr) if "r" in c.forced else dr * c.r * (1.0 - c.r)
    dgz = np.zeros_like(dz) if "z" in c.forced else dz * c.z * (1.0 - c.z)
    dgates = np.concatenate([dgr, dgz], axis=1)
    grads.W_hid[:, :2 * H] += c.h_prev.T @ dgates
    dh_prev += dgates @ p.W_hid[:, :2 * H].T
    grads.b += np.concatenate([dgates, dpre], axis=1).sum(axis=0, keepdims=True)
    dxp = np.concatenate([dgates, dpre], axis=1)
    return dxp, dh_prev


def lau_step(p: LAUParams, xp: np.ndarray, h_prev: np.ndarray, force: Force = None):
    H = p.hidden_dim
    u = h_prev @ p.W_hid
    gates = xp[:, :3 * H] + u[:, :3 * H] + p.b[:, :3 * H]
    r = _gate(gates[:, :H], "r", force)
    z = _gate(gates[:, H:2 * H], "z", force)
    g = _gate(gates[:, 2 * H:], "g", force)
    a_h = xp[:, 3 * H:4 * H]
    hx = xp[:, 4 * H:]
    u_h = u[:, 3 * H:]
    cand = np.tanh((1.0 - r) * a_h + r * u_h + p.b[:, 3 * H:])
    m = (1.0 - z) * h_prev + z * cand
    h = m * (1.0 - g) + g * hx
    cache = StepCache(h_prev=h_prev, r=r, z=z, cand=cand, a_h=a_h, u_h=u_h,
                      g=g, hx=hx, m=m, forced=frozenset(force or ()))
    return h, cache


def lau_step_backward(p: LAUParams, c: StepCache, dh: np.ndarray, grads: LAUParams):
    """Returns (d input projection, d h_prev); accumulates hidden-side grads."""
    dm = dh * (1.0 - c.g)
    dg = dh * (c.hx - c.m)
    dhx = dh * c.g
    dh_prev = dm * (1.0 - c.z)
    dz = dm * (c.cand - c.h_prev)
    dpre = dm * c.z * (1.0 - c.cand * c.cand)
    da_h = dpre * (1.0 - c.r)
    du_h = dpre * c.r
    dr = dpre * (c.u_h - c.a_h)
    dgr = np.zeros_like(dr) if "r" in c.forced else dr * c.r * (1.0 - c.r)
    dgz = np.zeros_like(dz) if "z" in c.forced else dz * c.z * (1.0 - c.z)
    dgg = np.zeros_like(dg) if "g" in c.forced else dg * c.g * (1.0 - c.g)
    du = np.concatenate([dgr, dgz, dgg, du_h], axis=1)
    grads.W_hid += c.h_prev.T @ du
    dh_prev += du @ p.W_hid.T
    grads.b += np.concatenate([dgr, dgz, dgg, dpre], axis=1).sum(axis=0, keepdims=True)
    dxp = np.concatenate([dgr, dgz, dgg, da_h, dhx], axis=1)
    return dxp, dh_prev


_STEPS = {"gru": (gru_step, gru_step_backward), "lau": (lau_step, lau_step_backward)}


def step(p: CellParams, xp, h_prev, force: Force = None):
    return _STEPS[p.kind][0](p, xp, h_prev, force)


def step_backward(p: CellParams, cache: StepCache, dh, grads: CellParams):
    return _STEPS[p.kind][1](p, cache, dh, grads)


# --- public single-step API -----------------------------------------------

def _check_step_inputs(p: CellParams, x_t, h_prev):
    if x_t.ndim != 2 or x_t.shape[1] != p.input_dim:
        raise ShapeError(f"x_t must be (batch, {p.input_dim}), got {x_t.shape}")
    if h_prev.ndim != 2 or h_prev.shape != (x_t.shape[0], p.hidden_dim):
        raise ShapeError(f"h_prev must be ({x_t.shape[0]}, {p.hidden_dim}), got {h_prev.shape}")


def cell_forward(p: CellParams, x_t: np.ndarray, h_prev: np.ndarray, force: Force = None):
    """One step of either cell kind: returns ``(h_t, cache)``.

    ``force`` pins named gates (``"r"``, ``"z"``, ``"g"``) to constants,
    bypassing the sigmoid; used to make boundary cases exactly testable.
    """
    _check_step_inputs(p, x_t, h_prev)
    h, cache = step(p, p.project(x_t), h_prev, force)
    cache.x = x_t
    return check_finite(h, f"{p.kind} output"), cache


def cell_backward(p: CellParams, cache: StepCache, dh_t: np.ndarray, grads: CellParams):
    """Adjoint of :func:`cell_forward`; returns ``(dL/dx_t, dL/dh_prev)``.

    Parameter gradients are added into ``grads``.
    """
    if cache.x is None or cache.x.shape[1] != p.input_dim or dh_t.shape != cache.h_prev.shape:
        raise ShapeError("cache does not match these parameters")
    if type(grads) is not type(p):
        raise ShapeError("grads buffer has the wrong cell kind")
    dxp, dh_prev = step_backward(p, cache, dh_t, grads)
    grads.W_in += cache.x.T @ dxp
    return dxp @ p.W_in.T, dh_prev


def gru_forward(p: GRUParams, x_t, h_prev, force: Force = None):
    return cell_forward(p, x_t, h_prev, force)


def lau_forward(p: LAUParams, x_t, h_prev, force: Force = None):
    return cell_forward(p, x_t, h_prev, force)


gru_backward = cell_backward
lau_backward = cell_backward
