"""Text-overlap metrics over normalized answers.

Tokens are the whitespace split of :func:`normalize_answer` output. BLEU is
corpus level (orders 1 to 4, uniform weights, brevity penalty, one reference,
no smoothing). ROUGE-L is the per-pair LCS F1 with beta = 1.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Sequence

from .language import normalize_answer

MAX_ORDER = 4


def tokens(text: str) -> list[str]:
    return normalize_answer(text).split()


def exact_match(pred: str, gold: str) -> bool:
    return normalize_answer(pred) == normalize_answer(gold)


def clipped_precision(pred: Sequence[str], gold: Sequence[str]) -> float:
    """Share of predicted tokens found in the gold answer, counts clipped. Empty prediction: 0."""
    if not pred:
        return 0.0
    ref = Counter(gold)
    hits = sum(min(n, ref[w]) for w, n in Counter(pred).items())
    return hits / len(pred)


def _ngrams(toks: Sequence[str], n: int) -> Counter:
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu_components(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> dict:
    """Pooled clipped n-gram counts and lengths for ``(prediction, reference)`` token pairs."""
    hits = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    pred_len = ref_len = n_pairs = 0
    for pred, ref in pairs:
        n_pairs += 1
        pred_len += len(pred)
        ref_len += len(ref)
        for n in range(1, min(MAX_ORDER, len(pred)) + 1):
            r = _ngrams(ref, n)
            hits[n - 1] += sum(min(c, r[g]) for g, c in _ngrams(pred, n).items())
            totals[n - 1] += len(pred) - n + 1
    return {"hits": hits, "totals": totals, "pred_len": pred_len, "ref_len": ref_len, "pairs": n_pairs}


def bleu_from_components(comp: dict) -> float:
    """Geometric mean over the orders that have any predicted n-gram, times the brevity penalty.

    An order with predicted n-grams but no clipped match makes the score 0.
    Orders with no predicted n-gram at all (every prediction too short) are
    left out of the mean, so a corpus of exact one-word answers scores 1.
    """
    if comp["pairs"] == 0:
        raise ValueError("empty corpus")
    c, r = comp["pred_len"], comp["ref_len"]
    if c == 0:
        return 0.0
    logs = []
    for hit, total in zip(comp["hits"], comp["totals"]):
        if total == 0:
            continue
        if hit == 0:
            return 0.0
        logs.append(math.log(hit / total))
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(sum(logs) / len(logs))


def corpus_bleu(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> float:
    return bleu_from_components(bleu_components(pairs))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, 1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[-1]


def rouge_l(pred: Sequence[str], ref: Sequence[str]) -> float:
    """LCS-based F1. Zero when either side is empty."""
    if not pred or not ref:
        return 0.0
    lcs = lcs_length(pred, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(pred), lcs / len(ref)
    return 2 * p * r / (p + r)
