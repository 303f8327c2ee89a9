"""Adadelta, global-norm clipping and the dev-metric driven threshold halving."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .numerics import NonFiniteError

RHO = 0.95
EPSILON = 1e-6


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))


def clip_global(grads: Mapping[str, np.ndarray], tau: float) -> tuple[Mapping[str, np.ndarray], float]:
    """Scale all gradients in place by ``tau / norm`` if the joint l2 norm exceeds ``tau``.

    Returns ``(grads, applied_scale)``.
    """
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise NonFiniteError("non-finite gradient norm")
    if norm <= tau:
        return grads, 1.0
    scale = tau / norm
    for g in grads.values():
        g *= scale
    return grads, scale


@dataclass
class AdadeltaState:
    """Running averages of squared gradients and squared updates."""

    eg2: dict[str, np.ndarray]
    edx2: dict[str, np.ndarray]
    rho: float = RHO
    epsilon: float = EPSILON

    @classmethod
    def zeros_for(cls, params: Mapping[str, np.ndarray], rho: float = RHO,
                  epsilon: float = EPSILON) -> "AdadeltaState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, rho, epsilon)


def adadelta_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
                  state: AdadeltaState) -> None:
    """In-place Adadelta update of ``params`` and ``state``."""
    rho, eps = state.rho, state.epsilon
    for name, p in params.items():
        g = grads[name]
        eg2 = state.eg2[name]
        edx2 = state.edx2[name]
        if g.shape != p.shape or eg2.shape != p.shape:
            raise ValueError(f"shape mismatch for {name}")
        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        delta = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * g
        if not np.all(np.isfinite(delta)):
            raise NonFiniteError(f"non-finite update for {name}")
        edx2 *= rho
        edx2 += (1.0 - rho) * delta * delta
        p += delta


@dataclass
class ClipSchedule:
    """Clipping threshold that halves when the dev metric stalls.

    The threshold is halved when the best of the last ``window`` evaluations
    improves on the best before them by no more than ``delta_min`` points.
    It never drops below ``tau_min``.
    """

    tau: float = 1.0
    delta_min: float = 0.2
    window: int = 3
    tau_min: float = 0.125
    halved_at: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.tau <= 0 or self.tau_min <= 0 or self.window < 1:
            raise ValueError("tau, tau_min and window must be positive")


def stalled(history: Sequence[float], delta_min: float, window: int) -> bool:
    if len(history) < window:
        return False
    recent = history[-window:]
    # a window with no earlier reference compares against its own first entry
    reference = max(history[:-window]) if len(history) > window else recent[0]
    return max(recent) - reference <= delta_min


def maybe_halve_tau(schedule: ClipSchedule, history: Sequence[float]) -> ClipSchedule:
    """Halve ``schedule.tau`` in place if the dev history has stalled."""
    if schedule.tau <= schedule.tau_min:
        return schedule
    # only evaluations since the last halving count toward the stall window
    since = schedule.halved_at[-1] if schedule.halved_at else 0
    if stalled(list(history)[since:], schedule.delta_min, schedule.window):
        schedule.tau = max(schedule.tau / 2.0, schedule.tau_min)
        schedule.halved_at.append(len(history))
    return schedule
