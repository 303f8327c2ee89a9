"""Corpus BLEU in the multi-bleu.pl formulation (single reference, no smoothing)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

MAX_ORDER = 4
LENGTH_THRESHOLDS = (10, 20, 30, 40, 50, 60)


@dataclass
class BleuReport:
    bleu: float
    precisions: list[float]
    bp: float
    hyp_len: int
    ref_len: int
    matches: list[int] = field(default_factory=list)
    totals: list[int] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.hyp_len / self.ref_len if self.ref_len else 0.0

    def to_text(self) -> str:
        p = "/".join(f"{100 * x:.1f}" for x in self.precisions)
        return (f"BLEU = {self.bleu:.2f}, {p} (BP={self.bp:.3f}, ratio={self.ratio:.3f}, "
                f"hyp_len={self.hyp_len}, ref_len={self.ref_len})")

    def to_kv(self) -> list[str]:
        lines = [f"bleu={self.bleu:.6f}", f"bp={self.bp:.6f}"]
        lines += [f"p{n}={p:.6f}" for n, p in enumerate(self.precisions, start=1)]
        lines += [f"ratio={self.ratio:.6f}", f"hyp_len={self.hyp_len}", f"ref_len={self.ref_len}"]
        return lines


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                case_sensitive: bool = True, max_order: int = MAX_ORDER) -> BleuReport:
    """Clipped n-gram counts are summed over the corpus before taking precisions."""
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        if not case_sensitive:
            hyp = [t.lower() for t in hyp]
            ref = [t.lower() for t in ref]
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            h, r = ngrams(hyp, n), ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if min(precisions) == 0.0:
        bleu = 0.0
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_order)
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len, matches, totals)


def bleu_by_length(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                   src_lengths: Sequence[int], thresholds: Sequence[int] = LENGTH_THRESHOLDS,
                   case_sensitive: bool = True) -> dict[int, Optional[BleuReport]]:
    """Corpus BLEU over pairs whose source is longer than each threshold.

    Empty buckets map to ``None``.
    """
    if not len(hypotheses) == len(references) == len(src_lengths):
        raise ValueError("hypotheses, references and source lengths must align")
    out: dict[int, Optional[BleuReport]] = {}
    for th in thresholds:
        keep = [i for i, n in enumerate(src_lengths) if n > th]
        out[th] = (corpus_bleu([hypotheses[i] for i in keep], [references[i] for i in keep],
                               case_sensitive) if keep else None)
    return out


def bucket_kv(buckets: dict[int, Optional[BleuReport]]) -> list[str]:
    return [f"bucket_gt{th}={rep.bleu:.6f}" for th, rep in buckets.items() if rep is not None]
