"""Longest common subsequence by dynamic programming."""

from __future__ import annotations

from collections.abc import Sequence

__all__ = ["lcs_length", "lcs_pairs"]


def lcs_length(xs: Sequence, ys: Sequence) -> int:
    if len(ys) > len(xs):
        xs, ys = ys, xs
    row = [0] * (len(ys) + 1)
    for x in xs:
        prev_diag = 0
        for j, y in enumerate(ys):
            above = row[j + 1]
            if x == y:
                row[j + 1] = prev_diag + 1
            elif row[j] > above:
                row[j + 1] = row[j]
            prev_diag = above
    return row[-1]


def _suffix_table(xs: Sequence, ys: Sequence) -> list[list[int]]:
    n, m = len(xs), len(ys)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = table[i], table[i + 1]
        for j in range(m - 1, -1, -1):
            if xs[i] == ys[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = max(below[j], row[j + 1])
    return table


def lcs_pairs(xs: Sequence, ys: Sequence) -> list[tuple[int, int]]:
    """Index pairs ``(i, j)`` of one maximal common subsequence.

    Walks forward from the start of both sequences and takes a match as soon
    as it can be extended to a maximal subsequence, so among all maximal
    alignments the one that starts earliest is returned.
    """
    table = _suffix_table(xs, ys)
    pairs: list[tuple[int, int]] = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        if xs[i] == ys[j] and table[i][j] == table[i + 1][j + 1] + 1:
            pairs.append((i, j))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs
