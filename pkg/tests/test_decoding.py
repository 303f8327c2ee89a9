import itertools

import numpy as np
import pytest

from conftest import random_model
from deeplau.data import BOS, EOS
from deeplau.decoding import (Hypothesis, beam_search, beam_search_hypotheses, default_max_len,
                              greedy_decode, translate_greedy)
from deeplau.model import decode_step, encode, zero_states
from deeplau.numerics import log_softmax_rows


def exhaustive_best(params, cfg, src, max_len):
    """Best sequence over every candidate the search space admits.

    Candidates are EOS-terminated sequences of at most ``max_len`` tokens and
    unterminated sequences of exactly ``max_len`` tokens, never starting with
    EOS.  Score is log-probability per generated token.
    """
    ann = encode(params, cfg, np.asarray(src)[None])
    tokens = [EOS] + list(range(3, cfg.tgt_vocab))
    best, best_score = None, -np.inf
    for n in range(1, max_len + 1):
        for seq in itertools.product(tokens, repeat=n):
            if seq[0] == EOS or EOS in seq[:-1]:
                continue
            if seq[-1] != EOS and n < max_len:
                continue
            states, prev, lp = zero_states(cfg, 1), BOS, 0.0
            for tok in seq:
                states, logits, _ = decode_step(params, cfg, states, np.array([prev]), ann)
                lp += float(log_softmax_rows(logits)[0, tok])
                prev = tok
            if lp / n > best_score:
                best, best_score = [t for t in seq if t != EOS], lp / n
    return best, best_score


@pytest.mark.parametrize("seed", range(8))
def test_beam_matches_exhaustive_search(seed):
    params, cfg = random_model(100 + seed, V=5, E=3, H=4, kind="lau" if seed % 2 else "gru",
                               std=1.5)
    src = [3, 4, 3, EOS]
    best, score = exhaustive_best(params, cfg, src, 4)
    hyps = beam_search_hypotheses(params, cfg, src, beam_width=10, max_len=4)
    assert [t for t in hyps[0].tokens if t != EOS] == best
    assert abs(hyps[0].score - score) < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_width_one_is_greedy(seed):
    params, cfg = random_model(200 + seed, V=9, std=1.5)
    src = [5, 3, 8, 6, EOS]
    assert beam_search(params, cfg, src, beam_width=1) == greedy_decode(params, cfg, [src])[0]


def test_pool_ranking_and_determinism():
    params, cfg = random_model(300, V=9, std=1.0)
    src = [4, 5, 6, EOS]
    hyps = beam_search_hypotheses(params, cfg, src, beam_width=4)
    scores = [h.score for h in hyps]
    assert scores == sorted(scores, reverse=True)
    assert all(h.tokens and h.tokens[0] not in (0, 1, EOS) for h in hyps)
    assert all(len(h.tokens) <= default_max_len(4) for h in hyps)
    assert beam_search(params, cfg, src, 4) == beam_search(params, cfg, src, 4)


def test_empty_hypothesis_scores_minus_infinity():
    assert Hypothesis([], 0.0).score == -np.inf
    assert Hypothesis([5, EOS], -1.0).score == -0.5


def test_greedy_batch_matches_single(rng):
    params, cfg = random_model(301, V=9, std=1.0)
    sources = [[4, 5, EOS], [6, 7, 8, EOS], [3, 3, EOS]]
    batched = translate_greedy(params, cfg, sources)
    for s, out in zip(sources, batched):
        assert out == greedy_decode(params, cfg, [s])[0]


def test_default_max_len():
    assert default_max_len(10) == 25
