"""Run configuration: line-oriented ``key = value`` files with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Optional

from .model import ModelConfig


class ConfigError(ValueError):
    """Malformed configuration or unknown key."""


@dataclass
class RunConfig:
    # model
    embed_dim: int = 512
    hidden_dim: int = 512
    enc_layers: int = 4
    dec_layers: int = 4
    cell_kind: str = "lau"
    residual: bool = False
    dropout: float = 0.5
    attn_dim: int = 0  # 0 means hidden_dim
    init_std: float = 0.04
    dtype: str = "float64"
    # optimizer
    rho: float = 0.95
    epsilon: float = 1e-6
    tau: float = 1.0
    tau_delta_min: float = 0.2
    tau_window: int = 3
    tau_min: float = 0.125
    # data
    train_src: str = ""
    train_tgt: str = ""
    dev_src: str = ""
    dev_tgt: str = ""
    src_vocab: str = ""
    tgt_vocab: str = ""
    vocab_size: int = 30000
    batch_size: int = 128
    max_len: int = 80
    # decoding / evaluation
    beam_width: int = 10
    case_sensitive: bool = True
    # run
    seed: int = 1234
    max_updates: int = 1000
    eval_every: int = 500
    log_every: int = 10
    checkpoint_dir: str = "run"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ("embed_dim", "hidden_dim", "enc_layers", "dec_layers", "vocab_size",
                    "batch_size", "max_len", "beam_width", "max_updates", "eval_every", "log_every",
                    "tau_window")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.cell_kind not in ("gru", "lau"):
            raise ConfigError("cell_kind must be gru or lau")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if min(self.tau, self.tau_min, self.rho, self.epsilon) <= 0 or self.rho >= 1:
            raise ConfigError("tau, tau_min, epsilon must be positive and rho in (0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def model_config(self, src_vocab: int, tgt_vocab: int) -> ModelConfig:
        return ModelConfig(src_vocab, tgt_vocab, self.embed_dim, self.hidden_dim, self.enc_layers,
                           self.dec_layers, self.cell_kind, self.residual, self.dropout,
                           self.attn_dim or None, self.init_std, self.dtype)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.to_dict().items())

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _convert(name: str, raw: str):
    default = RunConfig.__dataclass_fields__[name].default
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw.strip()


def parse_overrides(items: Mapping[str, str]) -> dict:
    out = {}
    for key, raw in items.items():
        key = key.strip().replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _convert(key, raw)
    return out


def parse_config_text(text: str) -> dict:
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return parse_overrides(items)


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    """File values first, then ``overrides`` (e.g. from command-line flags)."""
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    values.update(parse_overrides(overrides or {}))
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
