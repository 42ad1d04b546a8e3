"""BLEU, ROUGE-1 and ROUGE-L for single-reference scoring.

Scores are computed on token sequences produced by :func:`tokenize`. BLEU is
the unsmoothed sentence-level variant: a missing n-gram order zeroes the
score.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

from .lcs import lcs_length

__all__ = [
    "RougeScore",
    "TokenSequence",
    "bleu",
    "modified_precision",
    "ngrams",
    "rouge1",
    "rougeL",
    "tokenize",
]


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> TokenSequence:
    """Case-fold, split on whitespace, and peel punctuation off word edges.

    Each leading or trailing punctuation character becomes its own token;
    punctuation inside a word (``opts-in``, ``insert_flow``) is kept.
    """
    tokens: list[str] = []
    for word in text.casefold().split():
        start, end = 0, len(word)
        while start < end and _is_punct(word[start]):
            start += 1
        while end > start and _is_punct(word[end - 1]):
            end -= 1
        tokens.extend(word[:start])
        if start < end:
            tokens.append(word[start:end])
        tokens.extend(word[end:])
    return TokenSequence(tuple(tokens))


def _tokens(seq: TokenSequence | list[str] | tuple[str, ...]) -> tuple[str, ...]:
    return seq.tokens if isinstance(seq, TokenSequence) else tuple(seq)


def ngrams(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(candidate, reference, n: int) -> Fraction:
    """Clipped n-gram precision; zero when the candidate has no n-grams."""
    cand, ref = _tokens(candidate), _tokens(reference)
    cand_counts = ngrams(cand, n)
    total = sum(cand_counts.values())
    if total == 0:
        return Fraction(0)
    ref_counts = ngrams(ref, n)
    clipped = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    return Fraction(clipped, total)


def bleu(candidate, reference, max_n: int = 4) -> float:
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    cand, ref = _tokens(candidate), _tokens(reference)
    if not cand:
        return 0.0
    precisions = [modified_precision(cand, ref, n) for n in range(1, max_n + 1)]
    if any(p == 0 for p in precisions):
        return 0.0
    if all(p == 1 for p in precisions) and len(cand) >= len(ref):
        return 1.0
    log_mean = math.fsum(math.log(p) for p in precisions) / max_n
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * math.exp(log_mean)


def _prf(overlap: int, n_cand: int, n_ref: int) -> RougeScore:
    if n_cand == 0 or n_ref == 0 or overlap == 0:
        return RougeScore(0.0, 0.0, 0.0)
    p = overlap / n_cand
    r = overlap / n_ref
    return RougeScore(p, r, 2 * p * r / (p + r))


def rouge1(candidate, reference) -> RougeScore:
    cand, ref = _tokens(candidate), _tokens(reference)
    overlap = sum((Counter(cand) & Counter(ref)).values())
    return _prf(overlap, len(cand), len(ref))


def rougeL(candidate, reference) -> RougeScore:
    cand, ref = _tokens(candidate), _tokens(reference)
    return _prf(lcs_length(cand, ref), len(cand), len(ref))
