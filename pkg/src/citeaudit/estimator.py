"""Population-level statistics over verdict streams.

Unmatched rates per month, the pooled pre-LLM baseline, excess counts,
mixture weights, the month/field fixed-effects rate regression, paper-level
share distributions, field breakdowns and the LLM-use correlation.
"""
from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.stats

from .matcher import Status
from .ols import RegressionResult, solve_ols

DEFAULT_WINDOW_END = "2022-11"
DEFAULT_MIN_N = 100
DEFAULT_UNMATCHED = frozenset({Status.UNMATCHED})
# excluded from reference totals: not references to academic works
EXCLUDED = frozenset({Status.NON_ACADEMIC})

_MONTH = re.compile(r"^(\d{4})-(0[1-9]|1[0-2])$")


def check_month(m: str) -> str:
    if not isinstance(m, str) or not _MONTH.match(m):
        raise ValueError(f"malformed month {m!r}; expected YYYY-MM")
    return m


def month_year(m: str) -> int:
    return int(m[:4])


def half_year(m: str) -> str:
    return f"{m[:4]}H{1 if int(m[5:7]) <= 6 else 2}"


def month_range(start: str, n: int) -> list[str]:
    y, mo = int(start[:4]), int(start[5:7])
    out = []
    for _ in range(n):
        out.append(f"{y:04d}-{mo:02d}")
        mo += 1
        if mo > 12:
            y, mo = y + 1, 1
    return out


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    corpus: str
    field: str
    month: str
    team_size: int
    author_ids: tuple[str, ...] = ()
    subfield: str | None = None
    llm_use_score: float | None = None
    moderation_label: str | None = None
    journal_id: str | None = None
    published_link: str | None = None
    title: str | None = None
    abstract: str | None = None

    def __post_init__(self):
        check_month(self.month)
        if self.team_size < 1:
            raise ValueError(f"{self.paper_id}: team_size must be positive")
        if self.author_ids and len(self.author_ids) != self.team_size:
            raise ValueError(f"{self.paper_id}: team_size disagrees with author_ids")
        if self.moderation_label not in (None, "ACCEPTED", "REJECTED"):
            raise ValueError(f"{self.paper_id}: bad moderation_label {self.moderation_label!r}")

    @classmethod
    def from_json(cls, o: dict) -> "PaperRecord":
        aids = tuple(o.get("author_ids") or ())
        return cls(
            paper_id=o["paper_id"], corpus=o.get("corpus", "default"), field=o["field"], month=o["month"],
            team_size=int(o.get("team_size") or len(aids) or 1), author_ids=aids, subfield=o.get("subfield"),
            llm_use_score=o.get("llm_use_score"), moderation_label=o.get("moderation_label"),
            journal_id=o.get("journal_id"), published_link=o.get("published_link"),
            title=o.get("title"), abstract=o.get("abstract"),
        )

    def to_json(self) -> dict:
        return {
            "paper_id": self.paper_id, "corpus": self.corpus, "field": self.field, "subfield": self.subfield,
            "month": self.month, "team_size": self.team_size, "author_ids": list(self.author_ids),
            "llm_use_score": self.llm_use_score, "moderation_label": self.moderation_label,
            "journal_id": self.journal_id, "published_link": self.published_link,
            "title": self.title, "abstract": self.abstract,
        }


class VerdictRow(NamedTuple):
    """Verdict as read back from a verdict file."""
    paper_id: str
    ref_index: int
    status: Status
    matched_record_id: str | None = None
    similarity: float | None = None
    stage: int = 4

    @classmethod
    def from_json(cls, o: dict) -> "VerdictRow":
        return cls(o["paper_id"], int(o["ref_index"]), Status(o["status"]), o.get("matched_record_id"),
                   o.get("similarity"), int(o.get("stage", 4)))


@dataclass
class MonthlySeries:
    month: str
    n_total: int
    n_unmatched: int
    rate: float
    baseline: float | None = None
    excess_rate: float | None = None
    excess_count: float | None = None
    low_sample: bool = False

    def __post_init__(self):
        if not 0 <= self.n_unmatched <= self.n_total:
            raise ValueError("need 0 <= n_unmatched <= n_total")


@dataclass(frozen=True)
class MixtureWeights:
    month: str
    p: float
    q: float


class UnknownPaperError(KeyError):
    pass


def _unmatched_set(statuses) -> frozenset:
    return frozenset(Status(s) for s in statuses)


def count_cells(verdicts: Iterable, papers: Mapping[str, PaperRecord], key: Callable[[PaperRecord], object],
                unmatched_statuses=DEFAULT_UNMATCHED) -> dict:
    """``{key(paper): [n_total, n_unmatched]}``; shard-additive."""
    unmatched = _unmatched_set(unmatched_statuses)
    cells: dict = defaultdict(lambda: [0, 0])
    last_pid, kv = None, None
    for v in verdicts:
        pid = v.paper_id
        if pid != last_pid:
            # verdicts usually arrive grouped by paper; evaluate the key once per run
            paper = papers.get(pid)
            if paper is None:
                raise UnknownPaperError(f"verdict references unknown paper {pid!r}")
            last_pid, kv = pid, key(paper)
        st = v.status
        if st in EXCLUDED:
            continue
        c = cells[kv]
        c[0] += 1
        if st in unmatched:
            c[1] += 1
    return dict(cells)


def series_from_counts(counts: Mapping[str, Sequence[int]], min_n: int = DEFAULT_MIN_N) -> list[MonthlySeries]:
    out = []
    for m in sorted(counts):
        n, u = counts[m]
        out.append(MonthlySeries(m, n, u, u / n if n else 0.0, low_sample=n < min_n))
    return out


def monthly_series(verdicts: Iterable, papers: Mapping[str, PaperRecord], unmatched_statuses=DEFAULT_UNMATCHED,
                   min_n: int = DEFAULT_MIN_N) -> list[MonthlySeries]:
    """Per-month unmatched rates, ordered by month; sparse months are flagged ``low_sample``."""
    return series_from_counts(count_cells(verdicts, papers, lambda p: p.month, unmatched_statuses), min_n)


def baseline_rate(series: Sequence[MonthlySeries], window_end: str = DEFAULT_WINDOW_END,
                  window_start: str | None = None, min_months: int = 3) -> float:
    """Reference-weighted pooled unmatched rate over months in the window."""
    check_month(window_end)
    win = [s for s in series if s.month <= window_end and (window_start is None or s.month >= window_start)]
    if len(win) < min_months:
        raise ValueError(f"baseline window through {window_end} has {len(win)} months (need {min_months})")
    tot = sum(s.n_total for s in win)
    if tot == 0:
        raise ValueError("baseline window contains no references")
    return sum(s.n_unmatched for s in win) / tot


def excess_counts(series: Sequence[MonthlySeries], b: float) -> tuple[list[MonthlySeries], dict[int, float]]:
    """Fill baseline/excess fields; return the series and per-year sums of excess counts."""
    annual: dict[int, float] = defaultdict(float)
    out = []
    for s in series:
        ex = max(0.0, s.rate - b)
        e = ex * s.n_total
        out.append(MonthlySeries(s.month, s.n_total, s.n_unmatched, s.rate, b, ex, e, s.low_sample))
        annual[month_year(s.month)] += e
    return out, dict(sorted(annual.items()))


def combine_annual(per_corpus: Mapping[str, Mapping[int, float]]) -> dict[int, float]:
    tot: dict[int, float] = defaultdict(float)
    for annual in per_corpus.values():
        for y, e in annual.items():
            tot[y] += e
    return dict(sorted(tot.items()))


def mixture_weights(series: Sequence[MonthlySeries], b: float) -> list[MixtureWeights]:
    out = []
    for s in series:
        p = min(1.0, max(0.0, (s.rate - b) / s.rate)) if s.rate > 0 else 0.0
        out.append(MixtureWeights(s.month, p, 1.0 - p))
    return out


# ---------------------------------------------------------------------------
# month/field fixed-effects regression


@dataclass
class RateRegression:
    months: list[str]
    delta: list[float]
    std_errors: list[float]
    center: float
    result: RegressionResult
    fields: list[str] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [{"month": m, "delta": d, "stderr": s} for m, d, s in zip(self.months, self.delta, self.std_errors)]


def fit_rate_regression(cells: Mapping[tuple[str, str], Sequence[int]], window_end: str = DEFAULT_WINDOW_END) -> RateRegression:
    """Regress the per-reference unmatched indicator on month and field indicators.

    ``cells`` maps ``(month, field)`` to ``(n_total, n_unmatched)``.  Each cell
    contributes two frequency-weighted rows (y=1 and y=0), which is exactly
    the per-reference least-squares problem.  Month coefficients are then
    re-centered on their reference-weighted mean over the baseline window.
    """
    months = sorted({m for m, _ in cells})
    fields_by_size: dict[str, int] = defaultdict(int)
    for (_, f), (n, _) in cells.items():
        fields_by_size[f] += n
    fields = sorted(fields_by_size)
    ref_field = fields[0] if fields else None
    other = [f for f in fields if f != ref_field]
    mi = {m: i for i, m in enumerate(months)}
    fi = {f: len(months) + j for j, f in enumerate(other)}
    names = [f"month[{m}]" for m in months] + [f"field[{f}]" for f in other]
    rows, ys, ws = [], [], []
    for (m, f), (n, u) in sorted(cells.items()):
        for yv, wv in ((1.0, u), (0.0, n - u)):
            if wv <= 0:
                continue
            x = np.zeros(len(names))
            x[mi[m]] = 1.0
            if f in fi:
                x[fi[f]] = 1.0
            rows.append(x)
            ys.append(yv)
            ws.append(float(wv))
    if not rows:
        raise ValueError("no references to regress")
    res = solve_ols(np.vstack(rows), np.asarray(ys), np.asarray(ws), names, freq_weights=True)

    month_n = defaultdict(int)
    for (m, _), (n, _) in cells.items():
        month_n[m] += n
    win = [m for m in months if m <= window_end]
    if not win:
        raise ValueError(f"no months at or before {window_end}")
    tot = sum(month_n[m] for m in win)
    c = np.zeros(len(names))
    for m in win:
        c[mi[m]] = month_n[m] / tot
    beta = res.estimates[: len(months)]
    center = float(c[: len(months)] @ beta)
    cov = res.covariance
    delta, ses = [], []
    for m in months:
        e = -c.copy()
        e[mi[m]] += 1.0
        delta.append(float(beta[mi[m]] - center))
        ses.append(float(math.sqrt(max(0.0, e @ cov @ e))))
    return RateRegression(months, delta, ses, center, res, fields)


def rate_regression(verdicts: Iterable, papers: Mapping[str, PaperRecord], window_end: str = DEFAULT_WINDOW_END,
                    unmatched_statuses=DEFAULT_UNMATCHED) -> RateRegression:
    cells = count_cells(verdicts, papers, lambda p: (p.month, p.field), unmatched_statuses)
    return fit_rate_regression(cells, window_end)


# ---------------------------------------------------------------------------
# paper-level distributions

ZERO_BIN = "0"
DEFAULT_BINS = ((0.0, 0.1), (0.1, 0.5), (0.5, 1.0))


def bin_label(lo: float, hi: float) -> str:
    return f"({lo:g},{hi:g}]"


def per_paper_counts(verdicts: Iterable, papers: Mapping[str, PaperRecord], unmatched_statuses=DEFAULT_UNMATCHED) -> dict:
    return count_cells(verdicts, papers, lambda p: p.paper_id, unmatched_statuses)


def share_bin(share: float, bins=DEFAULT_BINS) -> str:
    if share <= 0:
        return ZERO_BIN
    for lo, hi in bins:
        if lo < share <= hi:
            return bin_label(lo, hi)
    raise ValueError(f"share {share} outside the configured bins")


@dataclass
class ShareDistribution:
    periods: list[str]
    labels: list[str]
    fractions: dict  # period -> label -> fraction of papers
    n_papers: dict
    delta_pp: dict  # label -> pp change first -> last period


def paper_share_distribution(verdicts: Iterable, papers: Mapping[str, PaperRecord], bins=DEFAULT_BINS,
                             period: Callable[[str], str] = half_year,
                             unmatched_statuses=DEFAULT_UNMATCHED) -> ShareDistribution:
    counts = per_paper_counts(verdicts, papers, unmatched_statuses)
    labels = [ZERO_BIN] + [bin_label(lo, hi) for lo, hi in bins]
    tally: dict = defaultdict(lambda: dict.fromkeys(labels, 0))
    for pid, (n, u) in counts.items():
        if n == 0:
            continue
        tally[period(papers[pid].month)][share_bin(u / n, bins)] += 1
    periods = sorted(tally)
    fractions, n_papers = {}, {}
    for per in periods:
        tot = sum(tally[per].values())
        n_papers[per] = tot
        fractions[per] = {lab: tally[per][lab] / tot for lab in labels}
    delta = {}
    if periods:
        first, last = fractions[periods[0]], fractions[periods[-1]]
        delta = {lab: 100.0 * (last[lab] - first[lab]) for lab in labels}
    return ShareDistribution(periods, labels, fractions, n_papers, delta)


# ---------------------------------------------------------------------------
# group breakdowns


@dataclass
class GroupExcess:
    group: str
    n_total: int
    n_unmatched: int
    baseline: float | None
    excess_rate: float | None
    excess_count: float | None
    flagged: bool


def group_excess(counts: Mapping[tuple, Sequence[int]], window_end: str, in_target: Callable[[str], bool],
                 min_n: int = DEFAULT_MIN_N, common_baseline: float | None = None) -> list[GroupExcess]:
    """Excess over a per-group (or common) baseline for ``{(group, month): (n, u)}`` counts."""
    by_group: dict = defaultdict(dict)
    for (g, m), nu in counts.items():
        by_group[g][m] = nu
    out = []
    for g in sorted(by_group):
        series = series_from_counts(by_group[g], min_n)
        b = common_baseline
        if b is None:
            try:
                b = baseline_rate(series, window_end)
            except ValueError:
                b = None
        target = [s for s in series if in_target(s.month)]
        n = sum(s.n_total for s in target)
        u = sum(s.n_unmatched for s in target)
        if b is None or n == 0:
            out.append(GroupExcess(g, n, u, b, None, None, True))
            continue
        filled, _ = excess_counts(target, b)
        e = sum(s.excess_count for s in filled)
        out.append(GroupExcess(g, n, u, b, e / n, e, n < min_n))
    return out


def field_breakdown(verdicts: Iterable, papers: Mapping[str, PaperRecord], year: int,
                    window_end: str = DEFAULT_WINDOW_END, min_n: int = DEFAULT_MIN_N,
                    unmatched_statuses=DEFAULT_UNMATCHED, level: str = "field") -> list[GroupExcess]:
    """Per-field excess rate and count for ``year``, highest rate first; absent rates sort last."""
    get = (lambda p: p.field) if level == "field" else (lambda p: p.subfield or p.field)
    counts = count_cells(verdicts, papers, lambda p: (get(p), p.month), unmatched_statuses)
    rows = group_excess(counts, window_end, lambda m: month_year(m) == year, min_n)
    return sorted(rows, key=lambda r: (r.excess_rate is None, -(r.excess_rate or 0.0), r.group))


# ---------------------------------------------------------------------------
# LLM-use correlation


class UndefinedCorrelationError(ValueError):
    pass


def correlate_llm_use(units: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Pearson r between per-unit rates and LLM-use scores, with a two-sided t-test p-value."""
    if len(units) < 3:
        raise ValueError("need at least 3 units")
    x = np.asarray([u[0] for u in units], dtype=float)
    y = np.asarray([u[1] for u in units], dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite value in units")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero variance; correlation undefined")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    n = len(x)
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, float(2.0 * scipy.stats.t.sf(abs(t), n - 2))


def llm_use_units(verdicts, papers: Mapping[str, PaperRecord], level: str = "subfield",
                  window_end: str = DEFAULT_WINDOW_END, unmatched_statuses=DEFAULT_UNMATCHED) -> list[tuple[str, float, float]]:
    """``(unit, rate, mean llm_use_score)``; subfield units use post-window excess rates, papers their unmatched share."""
    verdicts = list(verdicts)
    if level == "paper":
        counts = per_paper_counts(verdicts, papers, unmatched_statuses)
        return [(pid, u / n, float(papers[pid].llm_use_score)) for pid, (n, u) in sorted(counts.items())
                if n and papers[pid].llm_use_score is not None]
    scores: dict = defaultdict(list)
    for p in papers.values():
        if p.llm_use_score is not None:
            scores[p.subfield or p.field].append(p.llm_use_score)
    counts = count_cells(verdicts, papers, lambda p: (p.subfield or p.field, p.month), unmatched_statuses)
    rows = group_excess(counts, window_end, lambda m: m > window_end, min_n=0)
    return [(r.group, r.excess_rate, float(np.mean(scores[r.group]))) for r in rows
            if r.excess_rate is not None and scores.get(r.group)]
