"""Beam search with length-normalized ranking, and batched greedy decoding.

Search protocol:

* PAD and BOS are never generated, and EOS is not allowed as the first
  token (an empty translation scores minus infinity).
* Each step ranks every expansion of the live hypotheses by cumulative
  log-probability and walks down that list.  Expansions ending in EOS are
  moved to the finished pool; the others refill the live beam until it
  holds ``beam_width`` hypotheses.  Expansions below that cut are dropped.
* The search ends when no hypothesis is live, ``beam_width`` hypotheses
  have finished, or ``max_len`` tokens were generated.  At ``max_len`` the
  surviving live hypotheses join the pool unfinished.
* The pool is ranked by log-probability divided by the number of generated
  tokens (EOS included); the winner is returned without BOS/EOS.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import BOS, EOS, PAD
from .model import ModelConfig, ModelParams, decode_step, encode, zero_states
from .numerics import ShapeError, log_softmax_rows


@dataclass
class Hypothesis:
    tokens: list[int]
    logprob: float
    states: Optional[list[np.ndarray]] = None
    finished: bool = False

    @property
    def score(self) -> float:
        if not self.tokens:
            return -np.inf
        return self.logprob / len(self.tokens)


def default_max_len(src_len: int) -> int:
    return 2 * src_len + 5


def _blocked(step: int) -> list[int]:
    return [PAD, BOS, EOS] if step == 1 else [PAD, BOS]


def beam_search_hypotheses(params: ModelParams, cfg: ModelConfig, src_ids: Sequence[int],
                           beam_width: int = 10, max_len: Optional[int] = None) -> list[Hypothesis]:
    """Every hypothesis that reached the final pool, best first."""
    src = np.asarray(src_ids, dtype=np.int64).reshape(1, -1)
    if src.shape[1] == 0:
        raise ShapeError("cannot translate an empty source sentence")
    if beam_width < 1:
        raise ValueError("beam_width must be positive")
    max_len = default_max_len(src.shape[1]) if max_len is None else max_len
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ann = encode(params, cfg, src)
    live = [Hypothesis([], 0.0, zero_states(cfg, 1))]
    finished: list[Hypothesis] = []
    for t in range(1, max_len + 1):
        n = len(live)
        states = [np.concatenate([h.states[l] for h in live]) for l in range(cfg.dec_layers)]
        prev = np.array([h.tokens[-1] if h.tokens else BOS for h in live])
        new_states, logits, _ = decode_step(params, cfg, states, prev, ann.select(np.zeros(n, int)))
        logp = log_softmax_rows(logits)
        logp[:, _blocked(t)] = -np.inf
        total = np.array([h.logprob for h in live])[:, None] + logp
        flat = total.ravel()
        order = np.argsort(-flat, kind="stable")
        V = logp.shape[1]
        next_live: list[Hypothesis] = []
        done = False
        for idx in order:
            score = float(flat[idx])
            if score == -np.inf:
                break
            i, k = divmod(int(idx), V)
            toks = live[i].tokens + [k]
            if k == EOS:
                finished.append(Hypothesis(toks, score, None, True))
                if len(finished) >= beam_width:
                    done = True
                    break
            else:
                next_live.append(Hypothesis(toks, score, [s[i:i + 1] for s in new_states]))
                if len(next_live) == beam_width:
                    break
        if t == max_len:
            finished.extend(next_live)
            break
        live = next_live
        if done or not live:
            break
    if not finished:
        raise ShapeError("search produced no hypothesis (vocabulary has no generatable token)")
    # stable sort keeps pool order for exact score ties
    return sorted(finished, key=lambda h: -h.score)


def beam_search(params: ModelParams, cfg: ModelConfig, src_ids: Sequence[int],
                beam_width: int = 10, max_len: Optional[int] = None) -> list[int]:
    """Best translation of one source sentence (ids including its EOS)."""
    best = beam_search_hypotheses(params, cfg, src_ids, beam_width, max_len)[0]
    return [t for t in best.tokens if t != EOS]


def greedy_decode(params: ModelParams, cfg: ModelConfig, src: np.ndarray,
                  max_len: Optional[int] = None) -> list[list[int]]:
    """Argmax decoding of an equal-length source batch ``(B, Tx)``."""
    src = np.atleast_2d(np.asarray(src, dtype=np.int64))
    B = src.shape[0]
    max_len = default_max_len(src.shape[1]) if max_len is None else max_len
    ann = encode(params, cfg, src)
    states = zero_states(cfg, B)
    prev = np.full(B, BOS)
    out: list[list[int]] = [[] for _ in range(B)]
    active = np.ones(B, dtype=bool)
    for t in range(1, max_len + 1):
        states, logits, _ = decode_step(params, cfg, states, prev, ann)
        logits[:, _blocked(t)] = -np.inf
        prev = logits.argmax(axis=1)
        for b in np.flatnonzero(active):
            if prev[b] == EOS:
                active[b] = False
            else:
                out[b].append(int(prev[b]))
        if not active.any():
            break
    return out


def translate_greedy(params: ModelParams, cfg: ModelConfig, sources: Sequence[Sequence[int]],
                     max_len: Optional[int] = None, batch_size: int = 256) -> list[list[int]]:
    """Greedy translations for sources of mixed length, in input order."""
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(sources):
        by_len.setdefault(len(s), []).append(i)
    out: list[list[int]] = [[] for _ in sources]
    for length, idxs in sorted(by_len.items()):
        for j in range(0, len(idxs), batch_size):
            chunk = idxs[j:j + batch_size]
            hyps = greedy_decode(params, cfg, np.array([sources[i] for i in chunk]), max_len)
            for i, h in zip(chunk, hyps):
                out[i] = h
    return out
