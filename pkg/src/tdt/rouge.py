"""ROUGE-N (clipped n-gram overlap) and ROUGE-L (longest common subsequence).

Tokens are compared verbatim; callers tokenize (whitespace + lowercase in the
CLI). F1 is 2PR/(P+R) with zero when both sides are empty of matches.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(ref_tokens, hyp_tokens, n: int) -> RougeScore:
    """Clipped n-gram overlap: recall against the reference counts, precision
    against the hypothesis counts."""
    if n < 1:
        raise ValueError("rouge_n requires n >= 1")
    ref = _ngrams(list(ref_tokens), n)
    hyp = _ngrams(list(hyp_tokens), n)
    ref_total = sum(ref.values())
    hyp_total = sum(hyp.values())
    if ref_total == 0 or hyp_total == 0:
        return RougeScore(0.0, 0.0, 0.0)
    overlap = sum(min(count, ref[gram]) for gram, count in hyp.items())
    precision = overlap / hyp_total
    recall = overlap / ref_total
    return RougeScore(precision, recall, _f1(precision, recall))


def lcs_length(a, b) -> int:
    """Classic dynamic program over token lists."""
    a, b = list(a), list(b)
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(ref_tokens, hyp_tokens) -> RougeScore:
    """Sentence-level LCS: P = LCS/|hyp|, R = LCS/|ref|."""
    ref, hyp = list(ref_tokens), list(hyp_tokens)
    if not ref or not hyp:
        return RougeScore(0.0, 0.0, 0.0)
    lcs = lcs_length(ref, hyp)
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    return RougeScore(precision, recall, _f1(precision, recall))


def rouge_all(ref_tokens, hyp_tokens) -> dict:
    """R-1, R-2 and R-L in one call."""
    return {
        "rouge1": rouge_n(ref_tokens, hyp_tokens, 1),
        "rouge2": rouge_n(ref_tokens, hyp_tokens, 2),
        "rougeL": rouge_l(ref_tokens, hyp_tokens),
    }
