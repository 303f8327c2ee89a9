"""Finite-difference verification of every hand-written backward pass.

Each component is checked on small random instances with non-trivial
parameters (std 0.5, random biases) in float64.  Scalar losses are random
linear read-outs so that no gradient vanishes by symmetry.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .attention import AttentionParams, EncoderAnnotations, attend, attend_backward
from .cells import cell_backward, cell_forward, make_cell
from .model import Batch, ModelConfig, ModelParams, forward_loss, loss_and_grads
from .numerics import finite_diff_grad, rel_error
from .stack import StackConfig, StackParams, stack_backward, stack_forward

TOLERANCE = 1e-4
STD = 0.5
COMPONENTS = ("cell.gru", "cell.lau", "stack.gru", "stack.gru+res", "stack.lau", "stack.lau+res",
              "attention", "model")


@dataclass
class GradcheckReport:
    tolerance: float = TOLERANCE
    errors: dict = field(default_factory=dict)  # component -> max relative error
    worst: dict = field(default_factory=dict)  # component -> (seed, tensor name)
    seeds: int = 0
    seconds: float = 0.0

    def record(self, component: str, seed: int, name: str, err: float) -> None:
        if err > self.errors.get(component, -1.0) or not np.isfinite(err):
            self.errors[component] = err
            self.worst[component] = (seed, name)

    @property
    def passed(self) -> bool:
        return bool(self.errors) and all(np.isfinite(e) and e < self.tolerance
                                         for e in self.errors.values())

    def to_kv(self) -> list[str]:
        lines = []
        for comp, err in self.errors.items():
            seed, name = self.worst[comp]
            ok = "pass" if np.isfinite(err) and err < self.tolerance else "FAIL"
            lines.append(f"{comp}.max_rel_error={err:.3e} {comp}.status={ok} "
                         f"{comp}.worst={name}@seed{seed}")
        lines.append(f"seeds={self.seeds}")
        lines.append(f"tolerance={self.tolerance:g}")
        lines.append(f"seconds={self.seconds:.1f}")
        lines.append(f"status={'pass' if self.passed else 'FAIL'}")
        return lines


def _randomize(buffers: dict, rng: np.random.Generator) -> None:
    for buf in buffers.values():
        buf[...] = rng.standard_normal(buf.shape) * STD


def _compare(report: GradcheckReport, component: str, seed: int, f: Callable[[], float],
             targets: dict, analytic: dict, fault: Optional[str]) -> None:
    """``targets`` are arrays ``f`` reads, perturbed in place; ``analytic`` their gradients."""
    for i, (name, x) in enumerate(targets.items()):
        a = analytic[name]
        if fault == component and i == 0:
            a = a.copy()
            a.flat[0] += 0.1 * (1.0 + np.abs(a).max())
        n = finite_diff_grad(lambda _: f(), x)
        report.record(component, seed, name, rel_error(a, n))


def check_cell(kind: str, seed: int, report: GradcheckReport, fault: Optional[str] = None) -> None:
    rng = np.random.default_rng([seed, 1])
    B, D, H = 3, 4, 5
    p = make_cell(kind, D, H)
    _randomize(p.buffers(), rng)
    x = rng.standard_normal((B, D))
    h0 = rng.standard_normal((B, H)) * 0.5
    R = rng.standard_normal((B, H))

    def f():
        h, _ = cell_forward(p, x, h0)
        return float((R * h).sum())

    _, cache = cell_forward(p, x, h0)
    g = p.zeros_like()
    dx, dh0 = cell_backward(p, cache, R, g)
    targets = {**p.buffers(), "x": x, "h_prev": h0}
    analytic = {**g.buffers(), "x": dx, "h_prev": dh0}
    _compare(report, f"cell.{kind}", seed, f, targets, analytic, fault)


def check_stack(kind: str, residual: bool, seed: int, report: GradcheckReport,
                fault: Optional[str] = None) -> None:
    rng = np.random.default_rng([seed, 2])
    T, B, D, H = 4, 2, 3, 4
    cfg = StackConfig(2, D, H, kind, "alternating", residual)
    params = StackParams.zeros(cfg)
    bufs = {f"{l}.{k}": v for l, c in enumerate(params.layers, 1) for k, v in c.buffers().items()}
    _randomize(bufs, rng)
    X = rng.standard_normal((T, B, D))
    R = rng.standard_normal((T, B, H))

    def f():
        return float((R * stack_forward(params, cfg, X).outputs).sum())

    acts = stack_forward(params, cfg, X)
    dX, grads = stack_backward(params, cfg, acts, R)
    gbufs = {f"{l}.{k}": v for l, c in enumerate(grads.layers, 1) for k, v in c.buffers().items()}
    comp = f"stack.{kind}" + ("+res" if residual else "")
    _compare(report, comp, seed, f, {**bufs, "X": X}, {**gbufs, "X": dX}, fault)


def check_attention(seed: int, report: GradcheckReport, fault: Optional[str] = None) -> None:
    rng = np.random.default_rng([seed, 3])
    B, Tx, Hq, Hs, E, A = 2, 4, 3, 5, 2, 4
    p = AttentionParams(Hq, Hs, E, A)
    _randomize(p.named_tensors(), rng)
    s = rng.standard_normal((B, Hq))
    y = rng.standard_normal((B, E))
    states = rng.standard_normal((Tx, B, Hs))
    Rc = rng.standard_normal((B, Hs))
    Ra = rng.standard_normal((B, Tx))

    def f():
        c, alpha, _ = attend(p, s, y, EncoderAnnotations.build(p, states))
        return float((Rc * c).sum() + (Ra * alpha).sum())

    ann = EncoderAnnotations.build(p, states)
    _, _, cache = attend(p, s, y, ann)
    ds, dy, dst, g = attend_backward(p, cache, ann, Rc, dalpha=Ra)
    targets = {**p.named_tensors(), "s_prev": s, "y_prev": y, "states": states}
    analytic = {**g.named_tensors(), "s_prev": ds, "y_prev": dy, "states": dst}
    _compare(report, "attention", seed, f, targets, analytic, fault)


MODEL_VARIANTS = (("lau", False), ("lau", True), ("gru", False), ("gru", True))


def micro_model(seed: int, kind: str = "lau", residual: bool = False, dropout: float = 0.5):
    """The V=7, embed 4, hidden 5, 2+2 layer model with random weights and a batch."""
    rng = np.random.default_rng([seed, 4])
    cfg = ModelConfig(7, 7, 4, 5, 2, 2, kind, residual, dropout)
    params = ModelParams(cfg)
    _randomize(params.buffers(), rng)
    B, Tx, Ty = 2, 3, 4
    src = rng.integers(0, 7, (B, Tx))
    tgt = rng.integers(0, 7, (B, Ty + 1))
    mask = (rng.random((B, Ty)) < 0.8).astype(np.float64)
    mask[:, 0] = 1.0
    return params, cfg, Batch(src, tgt[:, :-1], tgt[:, 1:], mask)


def check_model(seed: int, report: GradcheckReport, fault: Optional[str] = None) -> None:
    kind, residual = MODEL_VARIANTS[seed % len(MODEL_VARIANTS)]
    params, cfg, batch = micro_model(seed, kind, residual)

    def drop_rng():
        return np.random.default_rng([seed, 5])

    def f():
        return forward_loss(params, cfg, batch, drop_rng())[0]

    _, grads = loss_and_grads(params, cfg, batch, drop_rng())
    _compare(report, "model", seed, f, params.buffers(), grads.buffers(), fault)


def run_gradcheck(seeds: Sequence[int] = range(20), fault: Optional[str] = None,
                  tolerance: float = TOLERANCE) -> GradcheckReport:
    """Full suite; ``fault`` names a component whose analytic gradient is corrupted."""
    if fault is not None and fault not in COMPONENTS:
        raise ValueError(f"unknown component {fault!r}")
    report = GradcheckReport(tolerance)
    t0 = time.perf_counter()
    with np.errstate(all="raise"):
        for seed in seeds:
            check_cell("gru", seed, report, fault)
            check_cell("lau", seed, report, fault)
            for kind in ("gru", "lau"):
                for residual in (False, True):
                    check_stack(kind, residual, seed, report, fault)
            check_attention(seed, report, fault)
            check_model(seed, report, fault)
            report.seeds += 1
    report.seconds = time.perf_counter() - t0
    return report
