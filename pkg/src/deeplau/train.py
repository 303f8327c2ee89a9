"""Training loop: forward/backward, clipping, Adadelta, dev BLEU, checkpoints.

A run directory holds::

    config.txt           resolved run configuration
    src.vocab tgt.vocab  vocabularies (one token per line, specials implicit)
    metrics.log          append-only key=value lines
    last.ckpt best.ckpt  checkpoints (model, optimizer and loop state)
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import checkpoint as ckpt
from .bleu import corpus_bleu
from .config import RunConfig
from .data import (ParallelCorpus, Vocab, build_vocab, encode_sources, epoch_order, make_batches,
                   read_parallel)
from .decoding import beam_search
from .model import ModelConfig, ModelParams, loss_and_grads
from .numerics import NonFiniteError, make_rng
from .optimizer import AdadeltaState, ClipSchedule, adadelta_step, clip_global, maybe_halve_tau

log = logging.getLogger(__name__)

FORMAT = "deeplau-checkpoint"


def model_manifest(cfg: ModelConfig, seed: int, vs: Vocab, vt: Vocab) -> dict:
    return {
        "format": FORMAT,
        "model": cfg.to_dict(),
        "seed": int(seed),
        "src_vocab_sha256": ckpt.vocab_fingerprint(vs.tokens),
        "tgt_vocab_sha256": ckpt.vocab_fingerprint(vt.tokens),
    }


def save_model(path, params: ModelParams, seed: int, vs: Vocab, vt: Vocab,
               extra: Optional[dict] = None, opt: Optional[AdadeltaState] = None) -> None:
    manifest = model_manifest(params.cfg, seed, vs, vt)
    if extra:
        manifest.update(extra)
    tensors = {f"model.{k}": v for k, v in params.named_tensors().items()}
    if opt is not None:
        tensors.update({f"opt.eg2.{k}": v for k, v in opt.eg2.items()})
        tensors.update({f"opt.edx2.{k}": v for k, v in opt.edx2.items()})
    ckpt.save(path, manifest, tensors)


def load_model(path, vs: Optional[Vocab] = None, vt: Optional[Vocab] = None):
    """Returns ``(params, manifest, tensors)``; vocabularies are checked if given."""
    manifest, tensors = ckpt.load(path)
    if manifest.get("format") != FORMAT:
        raise ckpt.CheckpointError(f"{path} is not a model checkpoint")
    cfg = ModelConfig(**manifest["model"])
    for vocab, side, size_key in ((vs, "src", "src_vocab"), (vt, "tgt", "tgt_vocab")):
        if vocab is None:
            continue
        if len(vocab) != manifest["model"][size_key] or \
                ckpt.vocab_fingerprint(vocab.tokens) != manifest[f"{side}_vocab_sha256"]:
            raise ckpt.CheckpointError(f"{side} vocabulary does not match the checkpoint manifest")
    params = ModelParams(cfg)
    ckpt.assign(params.named_tensors(), tensors, "model.")
    return params, manifest, tensors


def translate_corpus(params: ModelParams, sources: list[list[str]], vs: Vocab, vt: Vocab,
                     beam_width: int, max_len: Optional[int] = None) -> list[list[str]]:
    out = []
    for ids in encode_sources(sources, vs, max_len):
        out.append(vt.decode(beam_search(params, params.cfg, ids, beam_width)))
    return out


class Trainer:
    """Single-worker training; every quantity is a function of (config, data, seed)."""

    def __init__(self, cfg: RunConfig, train: ParallelCorpus, vs: Vocab, vt: Vocab,
                 dev: Optional[ParallelCorpus] = None, run_dir=None,
                 evaluate: Optional[Callable[["Trainer"], float]] = None):
        self.cfg = cfg
        self.vs, self.vt = vs, vt
        self.dev = dev
        self.run_dir = Path(run_dir or cfg.checkpoint_dir)
        self.evaluate_fn = evaluate
        self.mcfg = cfg.model_config(len(vs), len(vt))
        self.batches = make_batches(train, vs, vt, cfg.batch_size, cfg.max_len)
        self.params = ModelParams.init(self.mcfg, make_rng(cfg.seed))
        self.opt = AdadeltaState.zeros_for(self.params.buffers(), cfg.rho, cfg.epsilon)
        self.schedule = ClipSchedule(cfg.tau, cfg.tau_delta_min, cfg.tau_window, cfg.tau_min)
        self.dropout_rng = np.random.Generator(np.random.PCG64([cfg.seed, 1]))
        self.update = 0
        self.epoch = 0
        self.batch_pos = 0
        self.dev_history: list[float] = []
        self.best_dev: Optional[float] = None
        self._loss_sum = 0.0
        self._loss_n = 0

    # -- persistence -------------------------------------------------------
    def _loop_state(self) -> dict:
        return {
            "update": self.update, "epoch": self.epoch, "batch_pos": self.batch_pos,
            "tau": self.schedule.tau, "halved_at": list(self.schedule.halved_at),
            "dev_history": list(self.dev_history), "best_dev": self.best_dev,
            "dropout_rng": self.dropout_rng.bit_generator.state,
            "loss_sum": self._loss_sum, "loss_n": self._loss_n,
        }

    def save(self, path) -> None:
        # the run directory is where the file lives, not part of its content
        run_config = {k: v for k, v in self.cfg.to_dict().items() if k != "checkpoint_dir"}
        save_model(path, self.params, self.cfg.seed, self.vs, self.vt,
                   {"train_state": self._loop_state(), "run_config": run_config}, self.opt)

    def restore(self, path) -> None:
        params, manifest, tensors = load_model(path, self.vs, self.vt)
        if params.cfg != self.mcfg:
            raise ckpt.CheckpointError("checkpoint model config differs from the run config")
        self.params = params
        ckpt.assign(self.opt.eg2, tensors, "opt.eg2.")
        ckpt.assign(self.opt.edx2, tensors, "opt.edx2.")
        st = manifest["train_state"]
        self.update, self.epoch, self.batch_pos = st["update"], st["epoch"], st["batch_pos"]
        self.schedule.tau = st["tau"]
        self.schedule.halved_at = list(st["halved_at"])
        self.dev_history = list(st["dev_history"])
        self.best_dev = st["best_dev"]
        self.dropout_rng.bit_generator.state = st["dropout_rng"]
        self._loss_sum, self._loss_n = st["loss_sum"], st["loss_n"]

    def _log(self, **fields) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        line = " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())
        with open(self.run_dir / "metrics.log", "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    # -- evaluation --------------------------------------------------------
    def dev_bleu(self) -> float:
        hyps = translate_corpus(self.params, self.dev.sources, self.vs, self.vt, self.cfg.beam_width)
        return corpus_bleu(hyps, self.dev.targets, self.cfg.case_sensitive).bleu

    def _evaluate(self) -> None:
        if self.evaluate_fn is not None:
            metric = self.evaluate_fn(self)
        elif self.dev is not None and len(self.dev):
            metric = self.dev_bleu()
        else:
            return
        self.dev_history.append(float(metric))
        maybe_halve_tau(self.schedule, self.dev_history)
        self._log(update=self.update, dev_bleu=metric, tau=self.schedule.tau)
        if self.best_dev is None or metric > self.best_dev:
            self.best_dev = float(metric)
            self.save(self.run_dir / "best.ckpt")

    # -- training ----------------------------------------------------------
    def train_step(self, batch) -> float:
        loss, grads = loss_and_grads(self.params, self.mcfg, batch,
                                     self.dropout_rng if self.mcfg.dropout > 0 else None)
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite loss at update {self.update + 1}")
        gb = grads.buffers()
        clip_global(gb, self.schedule.tau)
        adadelta_step(self.params.buffers(), gb, self.opt)
        return loss

    def run(self, max_updates: Optional[int] = None) -> None:
        max_updates = self.cfg.max_updates if max_updates is None else max_updates
        self.run_dir.mkdir(parents=True, exist_ok=True)
        while self.update < max_updates:
            order = epoch_order(len(self.batches), self.cfg.seed, self.epoch)
            while self.batch_pos < len(order) and self.update < max_updates:
                loss = self.train_step(self.batches[order[self.batch_pos]])
                self.batch_pos += 1
                self.update += 1
                self._loss_sum += loss
                self._loss_n += 1
                if self.update % self.cfg.log_every == 0:
                    self._log(update=self.update, loss=self._loss_sum / self._loss_n,
                              tau=self.schedule.tau)
                    self._loss_sum, self._loss_n = 0.0, 0
                if self.update % self.cfg.eval_every == 0:
                    self._evaluate()
                    self.save(self.run_dir / "last.ckpt")
            if self.batch_pos >= len(order):
                self.epoch += 1
                self.batch_pos = 0
        self.save(self.run_dir / "last.ckpt")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def prepare_vocabs(cfg: RunConfig, train: ParallelCorpus) -> tuple[Vocab, Vocab]:
    vs = Vocab.load(cfg.src_vocab) if cfg.src_vocab else build_vocab(train.sources, cfg.vocab_size)
    vt = Vocab.load(cfg.tgt_vocab) if cfg.tgt_vocab else build_vocab(train.targets, cfg.vocab_size)
    return vs, vt


def run_training(cfg: RunConfig, resume: bool = False) -> Trainer:
    """Train from the corpus files named in ``cfg``; resumes from ``last.ckpt`` if asked."""
    train = read_parallel(cfg.train_src, cfg.train_tgt)
    dev = read_parallel(cfg.dev_src, cfg.dev_tgt) if cfg.dev_src else None
    vs, vt = prepare_vocabs(cfg, train)
    run_dir = Path(cfg.checkpoint_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(cfg, train, vs, vt, dev, run_dir)
    last = run_dir / "last.ckpt"
    if resume and last.exists():
        trainer.restore(last)
        log.info("resumed from %s at update %d", last, trainer.update)
    else:
        (run_dir / "metrics.log").unlink(missing_ok=True)
        vs.save(run_dir / "src.vocab")
        vt.save(run_dir / "tgt.vocab")
        (run_dir / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    trainer.run()
    return trainer
