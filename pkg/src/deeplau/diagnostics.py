"""Gradient-flow probes at random initialization.

Time flow: a single recurrent stack reads ``T`` random inputs; the loss is
the sum of the final top-layer output and the probe records
``|dL/dx[T-k]| / |dL/dx[T]|`` for each separation ``k``.  With
``quantity="state"`` it records the gradient on the cell state instead.

Depth flow: the loss is the sum of every top-layer output of an ``L``-layer
alternating stack, and the probe records ``|dL/d inputs| / |dL/d outputs|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .numerics import INIT_STD, NonFiniteError
from .stack import StackConfig, StackParams, layer_backward, stack_backward, stack_forward

SEPARATIONS = (1, 5, 10, 20, 50)
DEPTHS = (1, 2, 4, 8)


@dataclass(frozen=True)
class FlowProbe:
    input_dim: int = 64
    hidden_dim: int = 64
    separations: tuple = SEPARATIONS
    depths: tuple = DEPTHS
    num_layers: int = 1  # stack depth used by the time probe
    seq_len: int = 10  # sequence length used by the depth probe
    trials: int = 100
    seed: int = 0
    init_std: float = INIT_STD
    quantity: str = "input"  # or "state"

    def __post_init__(self):
        if self.trials < 1 or any(k < 0 for k in self.separations):
            raise ValueError("trials must be >= 1 and separations >= 0")
        if self.quantity not in ("input", "state"):
            raise ValueError("quantity must be 'input' or 'state'")


@dataclass
class FlowReport:
    kind: str  # "time" or "depth"
    samples: dict = field(default_factory=dict)  # (key, cell) -> list of ratios

    def add(self, key, cell: str, ratio: float):
        self.samples.setdefault((key, cell), []).append(float(ratio))

    def rows(self) -> list[tuple]:
        """``(key, cell, median, mean)`` per probe point, in insertion order."""
        return [(key, cell, float(np.median(v)), float(np.mean(v)))
                for (key, cell), v in self.samples.items()]

    def median(self, key, cell: str) -> float:
        return float(np.median(self.samples[(key, cell)]))

    def merge(self, other: "FlowReport") -> "FlowReport":
        for k, v in other.samples.items():
            self.samples.setdefault(k, []).extend(v)
        return self

    def to_kv(self) -> list[str]:
        lines = []
        for key, cell, med, mean in self.rows():
            tag = f"{self.kind}.{cell}.{key}"
            lines.append(f"{tag}.median_ratio={med:.6e}")
            lines.append(f"{tag}.mean_ratio={mean:.6e}")
            lines.append(f"{tag}.trials={len(self.samples[(key, cell)])}")
        return lines

    def to_tsv(self) -> str:
        head = "separation" if self.kind == "time" else "depth"
        out = [f"{head}\tcell\tmedian_ratio\tmean_ratio"]
        out += [f"{key}\t{cell}\t{med:.6e}\t{mean:.6e}" for key, cell, med, mean in self.rows()]
        return "\n".join(out) + "\n"

    def raw_tsv(self) -> str:
        out = ["key\tcell\ttrial\tratio"]
        for (key, cell), vals in self.samples.items():
            out += [f"{key}\t{cell}\t{i}\t{v:.17e}" for i, v in enumerate(vals)]
        return "\n".join(out) + "\n"


def _trial_rngs(seed: int, trial: int):
    def rng(stream):
        return np.random.Generator(np.random.PCG64([int(seed), int(trial), stream]))
    return rng(0), rng(1)


def _label(cell_kind: str, residual: bool = False) -> str:
    return cell_kind + ("+res" if residual else "")


Hook = Optional[Callable[[StackParams, int], None]]


def measure_time_flow(probe: FlowProbe, cell_kind: str, force=None, hook: Hook = None) -> FlowReport:
    """Gradient ratios across time, one sample per trial and separation.

    ``hook(params, trial)`` may edit freshly initialized parameters.
    """
    T = max(probe.separations) + 1
    cfg = StackConfig(probe.num_layers, probe.input_dim, probe.hidden_dim, cell_kind,
                      "fixed_forward", False)
    report = FlowReport("time")
    label = _label(cell_kind)
    for trial in range(probe.trials):
        data_rng, param_rng = _trial_rngs(probe.seed, trial)
        X = data_rng.standard_normal((T, 1, probe.input_dim))
        params = StackParams.init(cfg, param_rng, probe.init_std)
        if hook is not None:
            hook(params, trial)
        acts = stack_forward(params, cfg, X, force=force)
        d_out = np.zeros_like(acts.outputs)
        d_out[-1] = 1.0
        if probe.quantity == "input":
            grad, _ = stack_backward(params, cfg, acts, d_out)
        else:
            grad = np.zeros_like(d_out)
            d = d_out
            for l in range(cfg.num_layers, 0, -1):
                p, la = params.layers[l - 1], acts.layers[l - 1]
                rec = grad if l == cfg.num_layers else None
                d = layer_backward(p, la, d, p.zeros_like(), state_grads=rec)
        norms = np.linalg.norm(grad.reshape(T, -1), axis=1)
        if not np.all(np.isfinite(norms)):
            raise NonFiniteError(f"non-finite gradient in time-flow trial {trial}")
        for k in probe.separations:
            report.add(k, label, 1.0 if k == 0 else norms[T - 1 - k] / norms[T - 1])
    return report


def measure_depth_flow(probe: FlowProbe, cell_kind: str, residual: bool = False,
                       hook: Hook = None, depths: Optional[Sequence[int]] = None) -> FlowReport:
    """Input/output gradient-norm ratio through stacks of each depth."""
    report = FlowReport("depth")
    label = _label(cell_kind, residual)
    for L in (depths or probe.depths):
        cfg = StackConfig(L, probe.input_dim, probe.hidden_dim, cell_kind, "alternating", residual)
        for trial in range(probe.trials):
            data_rng, param_rng = _trial_rngs(probe.seed, trial)
            X = data_rng.standard_normal((probe.seq_len, 1, probe.input_dim))
            params = StackParams.init(cfg, param_rng, probe.init_std)
            if hook is not None:
                hook(params, trial)
            acts = stack_forward(params, cfg, X)
            d_out = np.ones_like(acts.outputs)
            dX, _ = stack_backward(params, cfg, acts, d_out)
            ratio = np.linalg.norm(dX) / np.linalg.norm(d_out)
            if not np.isfinite(ratio):
                raise NonFiniteError(f"non-finite gradient in depth-flow trial {trial}")
            report.add(L, label, ratio)
    return report


def compare_time_flow(probe: FlowProbe, kinds: Sequence[str] = ("gru", "lau")) -> FlowReport:
    report = FlowReport("time")
    for kind in kinds:
        report.merge(measure_time_flow(probe, kind))
    return report


def compare_depth_flow(probe: FlowProbe, kinds: Sequence[str] = ("gru", "lau"),
                       residual_options: Sequence[bool] = (False, True)) -> FlowReport:
    report = FlowReport("depth")
    for kind in kinds:
        for res in residual_options:
            report.merge(measure_depth_flow(probe, kind, res))
    return report
