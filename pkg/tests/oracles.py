"""Independent reference implementations used to check the package.

Each oracle follows the textbook definition directly and shares no code with
``citeaudit``.
"""
from __future__ import annotations

import math
from collections import Counter

import numpy as np


def edit_distance(a: str, b: str) -> int:
    """Quadratic-time Levenshtein distance (unit insert, delete, substitute)."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    m = max(len(a), len(b))
    lev = 1.0 if m == 0 else 1.0 - edit_distance(a, b) / m
    sa, sb = set(a.split()), set(b.split())
    jac = len(sa & sb) / len(sa | sb) if sa | sb else 1.0
    return max(lev, jac)


def idf_scores(titles: dict[str, str], query: str, min_len: int = 2) -> dict[str, float]:
    """Score every record that shares an indexed token with ``query``.

    Tokens are summed in ascending document-frequency order (then
    lexicographic) so that floating-point sums are reproducible.
    """
    tokens = {rid: {t for t in title.split() if len(t) >= min_len} for rid, title in titles.items()}
    df: Counter = Counter()
    for toks in tokens.values():
        df.update(toks)
    n = len(titles)
    q = sorted({t for t in query.split() if len(t) >= min_len and df[t]}, key=lambda t: (df[t], t))
    out = {}
    for rid, toks in tokens.items():
        score, hit = 0.0, False
        for t in q:
            if t in toks:
                score += math.log(1.0 + n / df[t])
                hit = True
        if hit:
            out[rid] = score
    return out


def brute_top1(titles: dict[str, str], query: str) -> str | None:
    """Exact title hits first, then best idf score with ascending record_id ties."""
    exact = sorted(rid for rid, t in titles.items() if t == query)
    if exact:
        return exact[0]
    scores = idf_scores(titles, query)
    if not scores:
        return None
    return min(scores, key=lambda rid: (-scores[rid], rid))


def normal_equations(X, y, w=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    XtW = X.T * w
    return np.linalg.solve(XtW @ X, XtW @ y)


def pearson(xs, ys) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    return cov / math.sqrt(vx * vy)


class BruteScorer:
    """Exhaustive idf scoring with token sets precomputed once per catalog."""

    def __init__(self, titles: dict[str, str], min_len: int = 2):
        self.titles = dict(titles)
        self.tokens = {rid: {t for t in title.split() if len(t) >= min_len} for rid, title in self.titles.items()}
        self.df: Counter = Counter()
        for toks in self.tokens.values():
            self.df.update(toks)
        self.n = len(self.titles)
        self.min_len = min_len

    def scores(self, query: str) -> dict[str, float]:
        q = sorted({t for t in query.split() if len(t) >= self.min_len and self.df[t]},
                   key=lambda t: (self.df[t], t))
        out = {}
        for rid, toks in self.tokens.items():
            shared = [t for t in q if t in toks]
            if shared:
                score = 0.0
                for t in shared:
                    score += math.log(1.0 + self.n / self.df[t])
                out[rid] = score
        return out

    def top1(self, query: str) -> str | None:
        exact = sorted(rid for rid, t in self.titles.items() if t == query)
        if exact:
            return exact[0]
        s = self.scores(query)
        return min(s, key=lambda rid: (-s[rid], rid)) if s else None
