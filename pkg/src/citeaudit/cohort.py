"""Matched controls and structural analyses of who cites unverifiable references."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .bibindex import AuthorDirectory, AuthorProfile, index_tokens
from .estimator import (DEFAULT_UNMATCHED, DEFAULT_WINDOW_END, GroupExcess, MixtureWeights, PaperRecord,
                        baseline_rate, count_cells, group_excess, per_paper_counts, series_from_counts, _unmatched_set)
from .ols import RegressionResult, solve_ols
from .refparse import ParsedReference, normalize_title

DEFAULT_TAU = 0.3
DEFAULT_KEYS = ("month", "field")
TEAM_BUCKETS = ((1, 1), (2, 2), (3, 4), (5, 9), (10, None))


# ---------------------------------------------------------------------------
# matched controls


@dataclass(frozen=True)
class CohortPair:
    treated: str
    control: str
    keys: tuple[str, ...]
    key_values: tuple
    with_replacement: bool = False

    def __post_init__(self):
        if self.treated == self.control:
            raise ValueError("treated and control must differ")

    def to_json(self) -> dict:
        return {"treated": self.treated, "control": self.control, "keys": list(self.keys),
                "key_values": list(self.key_values), "with_replacement": self.with_replacement}


@dataclass
class MatchResult:
    pairs: list[CohortPair]
    unmatched_treated: list[str]

    @property
    def n_with_replacement(self) -> int:
        return sum(p.with_replacement for p in self.pairs)


def ref_band(n_refs: int, width: int = 10) -> int:
    return n_refs // width


def key_of(paper: PaperRecord, keys: Sequence[str], ref_counts: Mapping[str, int] | None = None,
           band_width: int = 10) -> tuple:
    out = []
    for k in keys:
        if k == "ref_band":
            if ref_counts is None:
                raise ValueError("ref_band key needs reference counts")
            out.append(ref_band(ref_counts.get(paper.paper_id, 0), band_width))
        elif k == "year":
            out.append(paper.month[:4])
        else:
            out.append(getattr(paper, k))
    return tuple(out)


def match_controls(treated: Iterable[PaperRecord], pool: Iterable[PaperRecord], keys: Sequence[str] = DEFAULT_KEYS,
                   seed: int = 0, ratio: int = 1, ref_counts: Mapping[str, int] | None = None,
                   band_width: int = 10) -> MatchResult:
    """Exact matching on ``keys`` with uniform seeded draws.

    Draws are without replacement inside a key cell until the cell runs dry,
    after which they continue with replacement and are flagged.
    """
    treated = sorted(treated, key=lambda p: p.paper_id)
    pool = sorted(pool, key=lambda p: p.paper_id)
    if not pool:
        raise ValueError("control pool is empty")
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    overlap = {p.paper_id for p in treated} & {p.paper_id for p in pool}
    if overlap:
        raise ValueError(f"{len(overlap)} papers are in both the treated set and the pool")
    keys = tuple(keys)
    cells: dict[tuple, list[str]] = defaultdict(list)
    for p in pool:
        cells[key_of(p, keys, ref_counts, band_width)].append(p.paper_id)
    remaining = {k: list(v) for k, v in cells.items()}
    rng = np.random.default_rng(seed)
    pairs, unmatched = [], []
    for t in treated:
        kv = key_of(t, keys, ref_counts, band_width)
        cell = cells.get(kv)
        if not cell:
            unmatched.append(t.paper_id)
            continue
        for _ in range(ratio):
            left = remaining[kv]
            if left:
                control = left.pop(int(rng.integers(len(left))))
                pairs.append(CohortPair(t.paper_id, control, keys, kv))
            else:
                control = cell[int(rng.integers(len(cell)))]
                pairs.append(CohortPair(t.paper_id, control, keys, kv, with_replacement=True))
    return MatchResult(pairs, unmatched)


def split_treated(verdicts, papers: Mapping[str, PaperRecord],
                  unmatched_statuses=DEFAULT_UNMATCHED) -> tuple[list[PaperRecord], list[PaperRecord]]:
    """Papers with at least one unmatched reference, and papers with none."""
    counts = per_paper_counts(verdicts, papers, unmatched_statuses)
    treated = [papers[pid] for pid, (_, u) in sorted(counts.items()) if u > 0]
    pool = [papers[pid] for pid, (n, u) in sorted(counts.items()) if n > 0 and u == 0]
    return treated, pool


# ---------------------------------------------------------------------------
# citer productivity


@dataclass
class ProductivityGap:
    treated_mean: float
    control_mean: float
    gap: float  # 1 - treated/control; 0.75 reads "75% fewer"
    treated_zero_share: float
    control_zero_share: float
    growth_ratio: float | None
    n_treated: int
    n_control: int
    n_unresolved: int

    def rows(self) -> list[dict]:
        return [
            {"statistic": "mean_prior_pubs", "group": "treated", "value": self.treated_mean, "n": self.n_treated},
            {"statistic": "mean_prior_pubs", "group": "control", "value": self.control_mean, "n": self.n_control},
            {"statistic": "gap", "group": "all", "value": self.gap, "n": self.n_treated + self.n_control},
            {"statistic": "zero_prior_share", "group": "treated", "value": self.treated_zero_share, "n": self.n_treated},
            {"statistic": "zero_prior_share", "group": "control", "value": self.control_zero_share, "n": self.n_control},
            {"statistic": "growth_ratio", "group": "all", "value": self.growth_ratio, "n": self.n_treated + self.n_control},
        ]


def _last_author(paper: PaperRecord, profiles: Mapping[str, AuthorProfile]) -> AuthorProfile | None:
    if not paper.author_ids:
        return None
    return profiles.get(paper.author_ids[-1])


def citer_productivity(pairs: Sequence[CohortPair], papers: Mapping[str, PaperRecord],
                       profiles: Mapping[str, AuthorProfile]) -> ProductivityGap:
    """Last-author prior output of treated vs control papers.

    ``growth_ratio`` compares post-cutoff to pre-cutoff output in each cohort
    and divides the treated ratio by the control ratio.
    """
    treated, control, unresolved = [], [], 0
    for side, ids in ((treated, sorted({p.treated for p in pairs})), (control, [p.control for p in pairs])):
        for pid in ids:
            a = _last_author(papers[pid], profiles)
            if a is None:
                unresolved += 1
            else:
                side.append(a)

    def mean(xs):
        return sum(xs) / len(xs) if xs else float("nan")

    tm = mean([a.n_pubs_pre_cutoff for a in treated])
    cm = mean([a.n_pubs_pre_cutoff for a in control])
    gap = 1.0 - tm / cm if cm else float("nan")

    def growth(side):
        pre = sum(a.n_pubs_pre_cutoff for a in side)
        post = sum(a.n_pubs_total - a.n_pubs_pre_cutoff for a in side)
        return post / pre if pre else None

    gt, gc = growth(treated), growth(control)
    ratio = gt / gc if gt is not None and gc else None
    return ProductivityGap(
        tm, cm, gap,
        mean([a.n_pubs_pre_cutoff == 0 for a in treated]), mean([a.n_pubs_pre_cutoff == 0 for a in control]),
        ratio, len(treated), len(control), unresolved,
    )


# ---------------------------------------------------------------------------
# team size


def bucket_label(lo: int, hi: int | None) -> str:
    if hi is None:
        return f"{lo}+"
    return str(lo) if lo == hi else f"{lo}-{hi}"


def team_bucket(size: int, buckets=TEAM_BUCKETS) -> str:
    for lo, hi in buckets:
        if size >= lo and (hi is None or size <= hi):
            return bucket_label(lo, hi)
    raise ValueError(f"team size {size} outside the configured buckets")


@dataclass
class TeamSizeRate:
    bucket: str
    excess_rate: float | None
    normalized: float | None
    n_total: int
    flagged: bool


def teamsize_rates(verdicts, papers: Mapping[str, PaperRecord], window_end: str = DEFAULT_WINDOW_END,
                   buckets=TEAM_BUCKETS, unmatched_statuses=DEFAULT_UNMATCHED, min_n: int = 100) -> list[TeamSizeRate]:
    """Post-window excess rate per team-size bucket divided by the corpus-wide excess rate."""
    verdicts = list(verdicts)
    post = lambda m: m > window_end  # noqa: E731
    by_bucket = count_cells(verdicts, papers, lambda p: (team_bucket(p.team_size, buckets), p.month), unmatched_statuses)
    overall = count_cells(verdicts, papers, lambda p: ("all", p.month), unmatched_statuses)
    total = group_excess(overall, window_end, post, min_n=0)
    ref = total[0].excess_rate if total else None
    rows = {g.group: g for g in group_excess(by_bucket, window_end, post, min_n)}
    out = []
    for lo, hi in buckets:
        lab = bucket_label(lo, hi)
        g = rows.get(lab)
        if g is None or g.excess_rate is None:
            out.append(TeamSizeRate(lab, None, None, g.n_total if g else 0, True))
            continue
        norm = g.excess_rate / ref if ref else None
        out.append(TeamSizeRate(lab, g.excess_rate, norm, g.n_total, g.flagged))
    return out


# ---------------------------------------------------------------------------
# attribution


class Embedder(Protocol):
    def embed_text(self, text: str): ...
    def embed_profile(self, profile: AuthorProfile): ...
    def cosine(self, a, b) -> float: ...


class TfIdfEmbedder:
    """Sparse tf-idf vectors with idf fitted on author term profiles.

    Vectors are stored at unit length, so the cosine is a sparse dot product.
    """

    def __init__(self, profiles: Iterable[AuthorProfile]):
        df: dict[str, int] = defaultdict(int)
        n = 0
        for p in profiles:
            n += 1
            for t in p.term_profile:
                df[t] += 1
        self.n = n
        self.idf = {t: math.log(1.0 + n / d) for t, d in df.items()}
        self._default_idf = math.log(1.0 + n) if n else 1.0
        self._cache: dict[str, dict] = {}

    def _weigh(self, counts: Mapping[str, float]) -> dict[str, float]:
        v = {t: c * self.idf.get(t, self._default_idf) for t, c in counts.items() if c > 0}
        norm = math.sqrt(sum(w * w for w in v.values()))
        return {t: w / norm for t, w in v.items()} if norm > 0 else {}

    def embed_text(self, text: str) -> dict[str, float]:
        counts: dict[str, float] = defaultdict(float)
        for t in index_tokens(normalize_title(text or "")) if text and text.strip() else ():
            counts[t] += 1.0
        return self._weigh(counts)

    def embed_profile(self, profile: AuthorProfile) -> dict[str, float]:
        v = self._cache.get(profile.author_id)
        if v is None:
            v = self._cache[profile.author_id] = self._weigh(profile.term_profile)
        return v

    def cosine(self, a, b) -> float:
        if len(a) > len(b):
            a, b = b, a
        get = b.get
        return max(-1.0, min(1.0, sum(w * get(t, 0.0) for t, w in a.items())))


class VectorEmbedder:
    """Dense externally supplied vectors keyed by paper id and author id."""

    def __init__(self, paper_vectors: Mapping[str, Sequence[float]], profile_vectors: Mapping[str, Sequence[float]]):
        self.paper_vectors = {k: np.asarray(v, dtype=float) for k, v in paper_vectors.items()}
        self.profile_vectors = {k: np.asarray(v, dtype=float) for k, v in profile_vectors.items()}

    def embed_text(self, paper_id: str):
        return self.paper_vectors[paper_id]

    def embed_profile(self, profile: AuthorProfile):
        return self.profile_vectors.get(profile.author_id)

    def cosine(self, a, b) -> float:
        if a is None or b is None:
            return 0.0
        na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return max(-1.0, min(1.0, float(a @ b) / (na * nb)))


@dataclass(frozen=True)
class Attribution:
    reference: ParsedReference
    cited_name: str
    position: int
    resolved_author: str | None = None
    cosine_to_profile: float | None = None
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if self.resolved_author is not None and (self.cosine_to_profile is None or self.cosine_to_profile < self.tau):
            raise ValueError("resolved attribution below the cosine threshold")

    def to_json(self) -> dict:
        return {"paper_id": self.reference.raw.paper_id, "ref_index": self.reference.raw.index_in_paper,
                "cited_name": self.cited_name, "position": self.position, "resolved_author": self.resolved_author,
                "cosine": None if self.cosine_to_profile is None else round(self.cosine_to_profile, 6)}


def attribute_cited_authors(reference: ParsedReference, citing_vector, directory: AuthorDirectory,
                            embedder: Embedder, tau: float = DEFAULT_TAU) -> list[Attribution]:
    """Resolve each cited name to the same-name profile closest to the citing paper.

    The best candidate is chosen independently of ``tau``; ``tau`` only
    decides whether it is accepted, which makes resolution monotone in
    ``tau``.  Cosine ties go to the lower author_id.
    """
    if not reference.authors:
        raise ValueError(f"{reference.key}: reference has no parsed authors")
    out = []
    for pos, name in enumerate(reference.authors):
        best, best_cos = None, None
        for prof in directory.lookup(name) if name.strip() else ():
            c = embedder.cosine(citing_vector, embedder.embed_profile(prof))
            if best_cos is None or c > best_cos:
                best, best_cos = prof, c
        if best is not None and best_cos >= tau:
            out.append(Attribution(reference, name, pos, best.author_id, best_cos, tau))
        else:
            out.append(Attribution(reference, name, pos, None, best_cos, tau))
    return out


# ---------------------------------------------------------------------------
# beneficiary statistics

MALE_LABELS = frozenset({"M", "MALE"})
FEMALE_LABELS = frozenset({"F", "FEMALE"})


@dataclass
class Stat:
    name: str
    delta: float | None
    stderr: float | None
    hallucinated: float | None
    control: float | None
    n_hallucinated: int
    n_control: int
    unit: str

    def row(self, group: str = "hallucinated_vs_control") -> dict:
        return {"statistic": self.name, "group": group, "value": self.delta, "stderr": self.stderr,
                "hallucinated": self.hallucinated, "control": self.control,
                "n": self.n_hallucinated + self.n_control, "unit": self.unit}


@dataclass
class BeneficiaryStats:
    profile_match: Stat
    publications: Stat
    citations: Stat
    male_share: Stat
    team_size: Stat
    hierarchy: Stat

    def stats(self) -> list[Stat]:
        return [self.profile_match, self.publications, self.citations, self.male_share, self.team_size, self.hierarchy]

    def rows(self, group: str = "hallucinated_vs_control") -> list[dict]:
        return [s.row(group) for s in self.stats()]


def _mean_se(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    m = sum(xs) / n
    if n < 2:
        return m, float("nan")
    var = sum((x - m) ** 2 for x in xs) / (n - 1)
    return m, math.sqrt(var / n)


def _relative(name: str, h: Sequence[float], c: Sequence[float], unit: str = "pct") -> Stat:
    """100 * (mean_h / mean_c - 1) with a delta-method standard error."""
    if not h or not c:
        return Stat(name, None, None, None, None, len(h), len(c), unit)
    mh, sh = _mean_se(h)
    mc, sc = _mean_se(c)
    if mc == 0:
        return Stat(name, None, None, mh, mc, len(h), len(c), unit)
    r = mh / mc
    se = None
    if mh != 0 and math.isfinite(sh) and math.isfinite(sc):
        se = 100.0 * r * math.sqrt((sh / mh) ** 2 + (sc / mc) ** 2)
    elif mh == 0 and math.isfinite(sh):
        se = 100.0 * sh / mc
    return Stat(name, 100.0 * (r - 1.0), se, mh, mc, len(h), len(c), unit)


def _share_diff(name: str, h: Sequence[float], c: Sequence[float]) -> Stat:
    if not h or not c:
        return Stat(name, None, None, None, None, len(h), len(c), "pp")
    sh, sc = sum(h) / len(h), sum(c) / len(c)
    se = 100.0 * math.sqrt(sh * (1 - sh) / len(h) + sc * (1 - sc) / len(c))
    return Stat(name, 100.0 * (sh - sc), se, sh, sc, len(h), len(c), "pp")


def _by_reference(attrs: Iterable[Attribution]) -> dict[tuple, list[Attribution]]:
    refs: dict[tuple, list[Attribution]] = defaultdict(list)
    for a in attrs:
        refs[a.reference.key].append(a)
    for v in refs.values():
        v.sort(key=lambda a: a.position)
    return dict(sorted(refs.items()))


def hierarchy_indicators(attrs: Iterable[Attribution], profiles: Mapping[str, AuthorProfile]) -> list[float]:
    """1 when the last cited author out-publishes the first, 0 when the first does.

    References with fewer than two resolved authors, or with a tie, yield no
    indicator.
    """
    out = []
    for group in _by_reference(attrs).values():
        if len(group) < 2:
            continue
        first, last = group[0].resolved_author, group[-1].resolved_author
        if first is None or last is None:
            continue
        a, b = profiles[first].n_pubs_pre_cutoff, profiles[last].n_pubs_pre_cutoff
        if a != b:
            out.append(1.0 if b > a else 0.0)
    return out


def hierarchy_share(attrs: Iterable[Attribution], profiles: Mapping[str, AuthorProfile]) -> float:
    xs = hierarchy_indicators(attrs, profiles)
    return sum(xs) / len(xs) if xs else 0.0


def beneficiary_stats(hallucinated: Sequence[Attribution], control: Sequence[Attribution],
                      profiles: Mapping[str, AuthorProfile]) -> BeneficiaryStats:
    if not hallucinated or not control:
        raise ValueError("both attribution sets must be non-empty")

    def resolved(attrs):
        return [profiles[a.resolved_author] for a in attrs if a.resolved_author is not None]

    def genders(attrs):
        out = []
        for p in resolved(attrs):
            g = (p.gender_label or "UNKNOWN").upper()
            if g in MALE_LABELS:
                out.append(1.0)
            elif g in FEMALE_LABELS:
                out.append(0.0)
        return out

    rh, rc = resolved(hallucinated), resolved(control)
    match_h = [1.0 if a.resolved_author else 0.0 for a in hallucinated]
    match_c = [1.0 if a.resolved_author else 0.0 for a in control]
    team_h = [float(len(g[0].reference.authors)) for g in _by_reference(hallucinated).values()]
    team_c = [float(len(g[0].reference.authors)) for g in _by_reference(control).values()]
    mt_h, se_th = _mean_se(team_h)
    mt_c, se_tc = _mean_se(team_c)
    team_se = math.sqrt(se_th ** 2 + se_tc ** 2) if math.isfinite(se_th) and math.isfinite(se_tc) else None
    return BeneficiaryStats(
        profile_match=_relative("profile_match", match_h, match_c),
        publications=_relative("publications", [float(p.n_pubs_pre_cutoff) for p in rh],
                               [float(p.n_pubs_pre_cutoff) for p in rc]),
        citations=_relative("citations", [float(p.n_citations) for p in rh], [float(p.n_citations) for p in rc]),
        male_share=_share_diff("male_share", genders(hallucinated), genders(control)),
        team_size=Stat("team_size", mt_h - mt_c, team_se, mt_h, mt_c, len(team_h), len(team_c), "authors"),
        hierarchy=_share_diff("hierarchy", hierarchy_indicators(hallucinated, profiles),
                              hierarchy_indicators(control, profiles)),
    )


# ---------------------------------------------------------------------------
# mixture regression


def reference_pq(months: Sequence[str], unmatched: Sequence[bool],
                 weights: Sequence[MixtureWeights]) -> tuple[np.ndarray, np.ndarray]:
    """Per-reference (p, q): the month's weights when unmatched, zero otherwise."""
    by_month = {w.month: w for w in weights}
    p = np.zeros(len(months))
    q = np.zeros(len(months))
    for i, (m, u) in enumerate(zip(months, unmatched)):
        if u:
            w = by_month[m]
            p[i], q[i] = w.p, w.q
    return p, q


def mixture_regression(y: Sequence[float], categories: Sequence[str], months: Sequence[str],
                       p: Sequence[float], q: Sequence[float], allow_drop: bool = True) -> RegressionResult:
    """OLS of ``y`` on an intercept, category and month indicators, and the p and q weights.

    The coefficients named ``p`` (hallucination deviation) and ``q``
    (ordinary mismatch deviation) are relative to matched references.
    Collinear columns are reported in ``dropped``.
    """
    n = len(y)
    if not (len(categories) == len(months) == len(p) == len(q) == n):
        raise ValueError("inputs must share length")
    cats = sorted(set(categories))
    mons = sorted(set(months))
    names = ["intercept"] + [f"category[{c}]" for c in cats[1:]] + [f"month[{m}]" for m in mons[1:]] + ["p", "q"]
    col = {name: j for j, name in enumerate(names)}
    X = np.zeros((n, len(names)))
    X[:, 0] = 1.0
    for i, (c, m) in enumerate(zip(categories, months)):
        if c != cats[0]:
            X[i, col[f"category[{c}]"]] = 1.0
        if m != mons[0]:
            X[i, col[f"month[{m}]"]] = 1.0
    X[:, -2] = np.asarray(p, dtype=float)
    X[:, -1] = np.asarray(q, dtype=float)
    return solve_ols(X, np.asarray(y, dtype=float), names=names, allow_drop=allow_drop)


def contrast(result: RegressionResult, a: str = "p", b: str = "q") -> tuple[float, float]:
    """Estimate and standard error of coef(a) - coef(b)."""
    i, j = result.index(a), result.index(b)
    cov = result.covariance
    est = result.estimates[i] - result.estimates[j]
    var = cov[i, i] + cov[j, j] - 2 * cov[i, j]
    return float(est), float(math.sqrt(max(0.0, var))) if np.isfinite(var) else float("nan")


# ---------------------------------------------------------------------------
# systemic responses


@dataclass
class Leakage:
    leakage: float | None
    ratio: float | None
    accepted_unmatched: int
    rejected_unmatched: int
    accepted_total: int
    rejected_total: int
    unlabeled_papers: int

    def rows(self) -> list[dict]:
        acc = self.accepted_unmatched / self.accepted_total if self.accepted_total else None
        rej = self.rejected_unmatched / self.rejected_total if self.rejected_total else None
        n = self.accepted_total + self.rejected_total
        return [
            {"statistic": "leakage", "group": "all", "value": self.leakage, "n": n},
            {"statistic": "rate_ratio", "group": "rejected_vs_accepted", "value": self.ratio, "n": n},
            {"statistic": "unmatched_rate", "group": "ACCEPTED", "value": acc, "n": self.accepted_total},
            {"statistic": "unmatched_rate", "group": "REJECTED", "value": rej, "n": self.rejected_total},
            {"statistic": "unlabeled_papers", "group": "all", "value": self.unlabeled_papers, "n": None},
        ]


def screening_leakage(verdicts, papers: Mapping[str, PaperRecord],
                      unmatched_statuses=DEFAULT_UNMATCHED) -> Leakage:
    counts = per_paper_counts(verdicts, papers, unmatched_statuses)
    tot = {"ACCEPTED": [0, 0], "REJECTED": [0, 0]}
    unlabeled = 0
    for pid, (n, u) in counts.items():
        lab = papers[pid].moderation_label
        if lab is None:
            unlabeled += 1
            continue
        tot[lab][0] += n
        tot[lab][1] += u
    (na, ua), (nr, ur) = tot["ACCEPTED"], tot["REJECTED"]
    leak = ua / (ua + ur) if ua + ur else None
    ratio = (ur / nr) / (ua / na) if na and nr and ua else None
    return Leakage(leak, ratio, ua, ur, na, nr, unlabeled)


@dataclass
class Persistence:
    share: float | None
    persisted: int
    preprint_unmatched: int
    linked: int
    unlinked: int


def _unmatched_titles(verdicts, unmatched: frozenset) -> dict[str, set]:
    out: dict[str, set] = defaultdict(set)
    for v in verdicts:
        if v.status in unmatched and v.reference.title_norm:
            out[v.paper_id].add(v.reference.title_norm)
    return out


def persistence(preprint_verdicts, published_verdicts, links: Mapping[str, str],
                unmatched_statuses=DEFAULT_UNMATCHED) -> Persistence:
    """Share of preprint unmatched titles that reappear unmatched in the linked published version."""
    unmatched = _unmatched_set(unmatched_statuses)
    pre = _unmatched_titles(preprint_verdicts, unmatched)
    pub = _unmatched_titles(published_verdicts, unmatched)
    persisted = total = linked = unlinked = 0
    for pid in sorted(pre):
        target = links.get(pid)
        if target is None:
            unlinked += 1
            continue
        linked += 1
        titles = pre[pid]
        total += len(titles)
        persisted += len(titles & pub.get(target, set()))
    return Persistence(persisted / total if total else None, persisted, total, linked, unlinked)


def journal_deciles(impact: Mapping[str, float], n_bins: int = 10) -> dict[str, int]:
    """Decile per journal (1 = lowest impact), equal-count bins, ties broken by journal_id."""
    if len(impact) < n_bins:
        raise ValueError(f"need at least {n_bins} journals, got {len(impact)}")
    ranked = sorted(impact, key=lambda j: (impact[j], j))
    out = {}
    for d, chunk in enumerate(np.array_split(np.arange(len(ranked)), n_bins), start=1):
        for i in chunk:
            out[ranked[int(i)]] = d
    return out


def journal_decile_rates(verdicts, papers: Mapping[str, PaperRecord], impact: Mapping[str, float],
                         window_end: str = DEFAULT_WINDOW_END, target: Callable[[str], bool] | None = None,
                         unmatched_statuses=DEFAULT_UNMATCHED) -> list[GroupExcess]:
    """Excess rate per impact decile against one corpus-wide baseline."""
    decile = journal_deciles(impact)
    verdicts = [v for v in verdicts if papers[v.paper_id].journal_id in decile]
    overall = count_cells(verdicts, papers, lambda p: p.month, unmatched_statuses)
    b = baseline_rate(series_from_counts(overall), window_end)
    counts = count_cells(verdicts, papers, lambda p: (f"{decile[p.journal_id]:02d}", p.month), unmatched_statuses)
    target = target or (lambda m: m > window_end)
    return group_excess(counts, window_end, target, min_n=0, common_baseline=b)
