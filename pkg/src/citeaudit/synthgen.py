"""Synthetic catalogs and citing corpora with planted ground truth.

Every output is a pure function of the config (which carries the seed).
Labelled reference counts are stratified exactly per (month, field) cell so
recovery checks compare against the planted schedule rather than a noisy
draw of it; ``exact_counts=False`` switches to independent Bernoulli labels.
"""
from __future__ import annotations

import enum
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse
from rapidfuzz import process
from rapidfuzz.distance import Levenshtein

from .bibindex import SCHEMA_VERSION, AuthorDirectory, AuthorProfile, CatalogRecord
from .estimator import MonthlySeries, PaperRecord, month_range
from .fileio import atomic_write_text, dumps_line
from .matcher import Status
from .refparse import normalize_title

_CONS = "bdfghklmnprstvz"
_VOWELS = "aeiou"
_RESERVED = frozenset(
    "and et al in of on the for pp vol no van von de der den del della di da du le la dos das ter ten "
    "journal proc conference review letters annals studies research science press trans rev".split()
)
MARGIN = 0.7
MIN_VOCAB = 600  # 500 reserved for author signatures + topical words


class MarginError(RuntimeError):
    """A title with the required distance from the catalog could not be drawn."""


class Label(str, enum.Enum):
    REAL = "REAL"
    BASELINE_NOISE = "BASELINE_NOISE"
    FABRICATED = "FABRICATED"
    NON_ACADEMIC = "NON_ACADEMIC"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_catalog_records: int = 20_000
    n_authors: int = 8_000
    n_clusters: int = 40
    vocab_size: int = 6_000
    zipf_a: float = 1.05
    start_month: str = "2021-12"
    n_baseline_months: int = 12
    n_ramp_months: int = 36
    h_max: float = 0.02
    schedule: tuple[float, ...] | None = None
    refs_per_month: int = 5_000
    fields: tuple[str, ...] = ("cs", "bio")
    field_noise: tuple[float, ...] = (0.01, 0.02)
    field_fab_mult: tuple[float, ...] = (4 / 3, 2 / 3)
    refs_per_paper_mean: float = 20.0
    refs_per_paper_min: int = 5
    team_probs: tuple[float, ...] = (0.15, 0.20, 0.30, 0.25, 0.10)
    team_multipliers: tuple[float, ...] = (3.0, 2.5, 2.0, 1.5, 1.0)
    typo_rate: float = 0.01
    typo_sim_floor: float = 0.97
    nonacademic_rate: float = 0.01
    shared_fab_share: float = 0.10
    beneficiary_multiplier: float = 2.0
    lognormal_mu: float = 1.5
    lognormal_sigma: float = 1.0
    pre_cutoff_share: float = 0.75
    n_persistence_pairs: int = 1_000
    persistence: float = 0.85
    n_moderated_refs: int = 20_000
    accepted_volume: float = 0.8
    accepted_rate: float = 0.02
    rejected_ratio: float = 4.0
    n_journals: int = 30
    margin: float = MARGIN
    exact_counts: bool = True
    llm_use_slope: float = 10.0
    llm_use_noise: float = 0.1

    def __post_init__(self):
        if not (len(self.fields) == len(self.field_noise) == len(self.field_fab_mult)) or not self.fields:
            raise ValueError("fields, field_noise and field_fab_mult must be non-empty and share length")
        if len(self.team_probs) != 5 or len(self.team_multipliers) != 5 or abs(sum(self.team_probs) - 1) > 1e-9:
            raise ValueError("team_probs must be 5 probabilities summing to 1")
        if self.schedule is not None and len(self.schedule) != self.n_months:
            raise ValueError("schedule length must equal the number of months")
        rates = list(self.field_noise) + list(self.hallucination_schedule) + [
            self.typo_rate, self.nonacademic_rate, self.shared_fab_share, self.persistence, self.accepted_volume,
            self.accepted_rate, self.accepted_rate * self.rejected_ratio,
        ]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError("all rates must lie in [0, 1]")
        worst = max(n + m * max(self.hallucination_schedule, default=0.0)
                    for n, m in zip(self.field_noise, self.field_fab_mult))
        if self.baseline_noise_rate + max(self.hallucination_schedule, default=0.0) >= 1 or worst >= 1:
            raise ValueError("noise plus hallucination rate must stay below 1")

    @property
    def n_months(self) -> int:
        return self.n_baseline_months + self.n_ramp_months

    @property
    def months(self) -> list[str]:
        return month_range(self.start_month, self.n_months)

    @property
    def baseline_end(self) -> str:
        return self.months[self.n_baseline_months - 1]

    @property
    def baseline_noise_rate(self) -> float:
        return sum(self.field_noise) / len(self.field_noise)

    @property
    def hallucination_schedule(self) -> tuple[float, ...]:
        if self.schedule is not None:
            return tuple(self.schedule)
        ramp = [self.h_max * i / (self.n_ramp_months - 1) if self.n_ramp_months > 1 else self.h_max
                for i in range(self.n_ramp_months)]
        return tuple([0.0] * self.n_baseline_months + ramp)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: Mapping) -> "SynthConfig":
        kw = dict(obj)
        for k in ("schedule", "fields", "field_noise", "field_fab_mult", "team_probs", "team_multipliers"):
            if kw.get(k) is not None:
                kw[k] = tuple(kw[k])
        return cls(**kw)


@dataclass(frozen=True)
class TruthRow:
    paper_id: str
    ref_index: int
    label: Label
    record_id: str | None = None

    def __post_init__(self):
        if self.label is Label.FABRICATED and self.record_id is not None:
            raise ValueError("fabricated references have no record")

    def to_json(self) -> dict:
        return {"paper_id": self.paper_id, "ref_index": self.ref_index, "label": self.label.value,
                "record_id": self.record_id}

    @classmethod
    def from_json(cls, o: Mapping) -> "TruthRow":
        return cls(o["paper_id"], int(o["ref_index"]), Label(o["label"]), o.get("record_id"))


@dataclass
class GroundTruth:
    rows: list[TruthRow]
    month_rates: dict  # (corpus, month) -> {"n_academic", "n_noise", "n_fabricated", ...}
    planted: dict

    def by_key(self) -> dict[tuple[str, int], TruthRow]:
        return {(r.paper_id, r.ref_index): r for r in self.rows}

    def month_table(self, corpus: str) -> list[dict]:
        return [dict(month=m, **v) for (c, m), v in sorted(self.month_rates.items()) if c == corpus]


@dataclass
class SynthPaper:
    record: PaperRecord
    references: list[str]

    def to_json(self) -> dict:
        o = self.record.to_json()
        o["references"] = list(self.references)
        return o


@dataclass
class Catalog:
    records: list[CatalogRecord]
    titles: dict[str, str]  # record_id -> display title
    authors: list[dict]  # author dump lines
    profiles: list[AuthorProfile]
    cluster_of: dict[str, int]
    vocab: list[str]
    cluster_words: list[list[str]]
    signature: dict[str, list[str]]


# ---------------------------------------------------------------------------
# vocabulary and names


def make_vocabulary(rng: np.random.Generator, n: int, min_syll: int = 2, max_syll: int = 3) -> list[str]:
    words: dict[str, None] = {}
    attempts = 0
    while len(words) < n:
        attempts += 1
        if attempts > 50 * n + 1000:
            raise MarginError(f"could not draw {n} distinct words")
        k = int(rng.integers(min_syll, max_syll + 1))
        w = "".join(_CONS[rng.integers(len(_CONS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(k))
        if rng.random() < 0.3:
            w += _CONS[rng.integers(len(_CONS))]
        if w not in _RESERVED:
            words[w] = None
    return list(words)


def zipf_probs(n: int, a: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** a
    return w / w.sum()


class TitleSampler:
    def __init__(self, vocab: Sequence[str], zipf_a: float, rng: np.random.Generator):
        self.vocab = list(vocab)
        self.cum = np.cumsum(zipf_probs(len(vocab), zipf_a))
        self.rng = rng

    def global_words(self, k: int) -> list[str]:
        idx = np.searchsorted(self.cum, self.rng.random(k) * self.cum[-1])
        return [self.vocab[min(int(i), len(self.vocab) - 1)] for i in idx]

    def words(self, k: int, topical: Sequence[str] = (), signature: Sequence[str] = (), p_topic: float = 0.5,
              p_signature: float = 0.15) -> list[str]:
        glob = self.global_words(k)
        u = self.rng.random(k)
        pick = self.rng.integers(1 << 30, size=k)
        out = []
        for i in range(k):
            if signature and u[i] < p_signature:
                out.append(signature[pick[i] % len(signature)])
            elif topical and u[i] < p_signature + p_topic:
                out.append(topical[pick[i] % len(topical)])
            else:
                out.append(glob[i])
        return out

    def title(self, topical: Sequence[str] = (), signature: Sequence[str] = (), p_topic: float = 0.5,
              p_signature: float = 0.15) -> str:
        k = int(self.rng.integers(4, 11))
        return " ".join(self.words(k, topical, signature, p_topic, p_signature)).capitalize()


def _cap(w: str) -> str:
    return w[:1].upper() + w[1:]


# ---------------------------------------------------------------------------
# catalog


def _seeds(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def gen_catalog(config: SynthConfig) -> Catalog:
    """Catalog records plus author profiles, deterministic in ``config.seed``."""
    r_vocab, r_auth, r_rec = _seeds(config.seed, 3)
    if config.n_catalog_records == 0:
        return Catalog([], {}, [], [], {}, [], [], {})
    if config.vocab_size < MIN_VOCAB:
        raise MarginError(f"vocabulary of {config.vocab_size} words is too small; need at least {MIN_VOCAB}")
    vocab = make_vocabulary(r_vocab, config.vocab_size)
    names = make_vocabulary(r_vocab, 2_500 + 300, 2, 3)
    surnames, givens = [_cap(w) for w in names[:2_500]], [_cap(w) for w in names[2_500:2_540]]
    n_cl = max(1, config.n_clusters)
    cluster_words = [list(r_vocab.choice(vocab[200:], size=60, replace=False)) for _ in range(n_cl)]

    n_auth = max(1, config.n_authors)
    raw = r_auth.lognormal(config.lognormal_mu, config.lognormal_sigma, n_auth)
    n_total = np.maximum(1, np.rint(raw)).astype(int)
    n_pre = r_auth.binomial(n_total, config.pre_cutoff_share)
    cit_rate = r_auth.lognormal(1.5, 0.8, n_auth)
    gender_u = r_auth.random(n_auth)
    clusters = r_auth.integers(n_cl, size=n_auth)
    sur_idx = r_auth.integers(len(surnames), size=n_auth)
    giv_idx = r_auth.integers(len(givens), size=n_auth)
    author_ids = [f"A{i:05d}" for i in range(n_auth)]
    signature = {aid: list(dict.fromkeys(vocab[500 + int(j)] for j in r_auth.integers(len(vocab) - 500, size=5)))
                 for aid in author_ids}
    cluster_of = {aid: int(c) for aid, c in zip(author_ids, clusters)}
    members: dict[int, list[int]] = defaultdict(list)
    for i, c in enumerate(clusters):
        members[int(c)].append(i)

    sampler = TitleSampler(vocab, config.zipf_a, r_rec)
    weights = n_total / n_total.sum()
    seen: set[str] = set()
    records, titles = [], {}
    papers_of: dict[int, list[str]] = defaultdict(list)
    team_sizes = np.array([1, 2, 3, 4, 5, 6])
    team_p = np.array([0.15, 0.25, 0.25, 0.15, 0.12, 0.08])
    lead_draws = r_rec.choice(n_auth, size=config.n_catalog_records * 2, p=weights)
    li = 0
    while len(records) < config.n_catalog_records:
        lead = int(lead_draws[li % len(lead_draws)])
        li += 1
        aid = author_ids[lead]
        t = sampler.title(cluster_words[clusters[lead]], signature[aid])
        tn = normalize_title(t)
        if tn in seen:
            if li > 20 * config.n_catalog_records:
                raise MarginError("catalog titles keep colliding; enlarge the vocabulary")
            continue
        seen.add(tn)
        k = int(r_rec.choice(team_sizes, p=team_p))
        pool = members[int(clusters[lead])]
        co = [int(x) for x in r_rec.choice(pool, size=min(k - 1, len(pool)), replace=False)] if k > 1 else []
        team = [lead] + [c for c in co if c != lead]
        rid = f"R{len(records):06d}"
        year = int(r_rec.integers(1995, 2023))
        venue = _venue(r_rec, vocab)
        cites = int(r_rec.geometric(0.05)) - 1
        records.append(CatalogRecord(rid, tn, year, venue, tuple(author_ids[a] for a in team), cites))
        titles[rid] = t
        for a in team:
            papers_of[a].append(t)

    authors, profiles = [], []
    for i, aid in enumerate(author_ids):
        g = "M" if gender_u[i] < 0.45 else ("F" if gender_u[i] < 0.85 else None)
        own = papers_of.get(i) or [sampler.title(cluster_words[clusters[i]], signature[aid])]
        line = {
            "author_id": aid,
            "name": f"{givens[giv_idx[i]]} {surnames[sur_idx[i]]}",
            "n_pubs_pre_cutoff": int(n_pre[i]),
            "n_pubs_total": int(n_total[i]),
            "n_citations": int(round(n_total[i] * cit_rate[i])),
            "gender_label": g,
            "paper_titles": own,
        }
        authors.append(line)
    from .bibindex import _profile_from  # shared parsing of the dump format

    profiles = [_profile_from(a) for a in authors]
    return Catalog(records, titles, authors, profiles, cluster_of, vocab, cluster_words, signature)


_VENUE_FORMS = ("Journal of {} Research", "Proceedings of the {} Conference", "{} Letters", "Annals of {} Science",
                "Transactions on {} Systems", "International Journal of {} Studies")


def _venue(rng: np.random.Generator, vocab: Sequence[str]) -> str:
    form = _VENUE_FORMS[int(rng.integers(len(_VENUE_FORMS)))]
    return form.format(_cap(vocab[int(rng.integers(50, 400))]))


def catalog_lines(cat: Catalog) -> list[str]:
    out = [dumps_line({"schema_version": SCHEMA_VERSION})]
    for rec in cat.records:
        o = rec.to_json()
        o["title"] = cat.titles[rec.record_id]
        del o["title_norm"]
        out.append(dumps_line(o))
    return out


def author_lines(cat: Catalog) -> list[str]:
    return [dumps_line({"schema_version": SCHEMA_VERSION})] + [dumps_line(a) for a in cat.authors]


# ---------------------------------------------------------------------------
# margin enforcement


def _token_sets_matrix(titles: Sequence[str], vocab_index: dict[str, int]):
    rows, cols = [], []
    for i, t in enumerate(titles):
        for tok in set(t.split()):
            j = vocab_index.setdefault(tok, len(vocab_index))
            rows.append(i)
            cols.append(j)
    return rows, cols


class MarginChecker:
    """Brute-force nearest-title similarity against every catalog title."""

    chunk = 256

    def __init__(self, catalog_titles: Sequence[str], margin: float = MARGIN):
        self.titles = list(catalog_titles)
        self.margin = margin
        self.vocab: dict[str, int] = {}
        r, c = _token_sets_matrix(self.titles, self.vocab)
        self._rows, self._cols = r, c
        self._sizes = np.array([len(set(t.split())) for t in self.titles], dtype=float)
        self._C = None

    def _catalog_matrix(self, ncols: int):
        if self._C is None or self._C.shape[1] < ncols:
            self._C = scipy.sparse.csr_matrix(
                (np.ones(len(self._rows)), (self._rows, self._cols)), shape=(len(self.titles), ncols))
        return self._C

    def max_similarity(self, queries: Sequence[str]) -> np.ndarray:
        """``max over catalog of max(levenshtein_sim, token_jaccard)`` per query."""
        out = np.zeros(len(queries))
        if not self.titles or not queries:
            return out
        for lo in range(0, len(queries), self.chunk):
            sims = process.cdist(queries[lo: lo + self.chunk], self.titles, scorer=Levenshtein.normalized_similarity,
                                 score_cutoff=self.margin, dtype=np.float32)
            out[lo: lo + self.chunk] = sims.max(axis=1)
        r, c = _token_sets_matrix(queries, self.vocab)
        ncols = len(self.vocab)
        Q = scipy.sparse.csr_matrix((np.ones(len(r)), (r, c)), shape=(len(queries), ncols))
        C = self._catalog_matrix(ncols)
        if C.shape[1] < ncols:
            C = scipy.sparse.hstack([C, scipy.sparse.csr_matrix((C.shape[0], ncols - C.shape[1]))]).tocsr()
        inter = (Q @ C.T).tocoo()
        qsize = np.asarray(Q.sum(axis=1)).ravel()
        jac = inter.data / (qsize[inter.row] + self._sizes[inter.col] - inter.data)
        np.maximum.at(out, inter.row, jac)
        return out


# ---------------------------------------------------------------------------
# reference rendering


def _initials(given: str) -> str:
    return given[:1]


def _ieee(names, title, venue, year, rng) -> str:
    shown = [f"{_initials(g)}. {s}" for g, s in names]
    if len(shown) > 3:
        auth = f"{shown[0]} et al."
    elif len(shown) == 3:
        auth = f"{shown[0]}, {shown[1]}, and {shown[2]}"
    elif len(shown) == 2:
        auth = f"{shown[0]} and {shown[1]}"
    else:
        auth = shown[0]
    pages = int(rng.integers(1, 900))
    return f'{auth}, "{title}," in {venue}, {year}, pp. {pages}-{pages + int(rng.integers(2, 20))}.'


def _apa(names, title, venue, year, rng) -> str:
    shown = [f"{s}, {_initials(g)}." for g, s in names]
    auth = shown[0] if len(shown) == 1 else ", ".join(shown[:-1]) + ", & " + shown[-1]
    vol, iss, p = int(rng.integers(1, 80)), int(rng.integers(1, 12)), int(rng.integers(1, 900))
    return f"{auth} ({year}). {title}. {venue}, {vol}({iss}), {p}-{p + int(rng.integers(2, 20))}."


def _vancouver(names, title, venue, year, rng) -> str:
    shown = [f"{s} {_initials(g)}" for g, s in names]
    auth = ", ".join(shown[:6]) + (", et al" if len(shown) > 6 else "")
    vol, iss, p = int(rng.integers(1, 80)), int(rng.integers(1, 12)), int(rng.integers(1, 900))
    return f"{auth}. {title}. {venue}. {year};{vol}({iss}):{p}-{p + int(rng.integers(2, 20))}."


def _glued(names, title, venue, year, rng) -> str:
    shown = [f"{s} {_initials(g)}" for g, s in names]
    return f"{', '.join(shown)}. {title}, {venue}, {year}."


STYLES = (_ieee, _apa, _vancouver, _glued)
STYLE_WEIGHTS = (0.35, 0.3, 0.25, 0.10)

_NONACADEMIC = (
    "{org} documentation. Available at https://www.{w}.com/docs/{w2}, accessed {year}.",
    "{org}. {W} user guide. https://{w}.io/guide, {year}.",
    "{W} {W2}: online tool. Retrieved from https://github.com/{w}/{w2}",
)


def _nonacademic(rng, vocab) -> str:
    w, w2 = vocab[int(rng.integers(100, 600))], vocab[int(rng.integers(100, 600))]
    form = _NONACADEMIC[int(rng.integers(len(_NONACADEMIC)))]
    return form.format(org=f"{_cap(w)} Foundation", w=w, w2=w2, W=_cap(w), W2=_cap(w2),
                       year=int(rng.integers(2015, 2026)))


def apply_typos(title: str, rate: float, floor: float, rng: np.random.Generator, norm_len: int | None = None) -> str:
    """Substitute letters at ``rate`` while keeping normalized similarity >= ``floor``."""
    if norm_len is None:
        norm_len = len(normalize_title(title))
    cap = int(math.floor((1.0 - floor) * norm_len + 1e-9))
    if cap <= 0 or rate <= 0:
        return title
    k = min(cap, int(rng.binomial(len(title), rate)))
    if k == 0:
        return title
    positions = [i for i, ch in enumerate(title) if ch.isalpha()]
    k = min(k, len(positions))
    chars = list(title)
    for i in rng.choice(positions, size=k, replace=False):
        orig = chars[i].lower()
        pool = [c for c in "abcdefghijklmnopqrstuvwxyz" if c != orig]
        new = pool[int(rng.integers(len(pool)))]
        chars[i] = new.upper() if chars[i].isupper() else new
    return "".join(chars)


# ---------------------------------------------------------------------------
# corpus generation


@dataclass
class SynthOutput:
    config: SynthConfig
    catalog: Catalog
    papers: list[SynthPaper]
    truth: GroundTruth
    links: dict[str, str]
    journal_impact: dict[str, float]

    @property
    def paper_records(self) -> dict[str, PaperRecord]:
        return {p.record.paper_id: p.record for p in self.papers}


def _team_size(rng, probs) -> tuple[int, int]:
    b = int(rng.choice(5, p=probs))
    size = (1, 2, int(rng.integers(3, 5)), int(rng.integers(5, 10)), int(rng.integers(10, 16)))[b]
    return b, size


class _TitleFactory:
    """Out-of-catalog titles with an enforced margin, drawn in verified batches."""

    def __init__(self, sampler: TitleSampler, checker: MarginChecker, taken: set[str], max_rounds: int = 20):
        self.sampler = sampler
        self.checker = checker
        self.taken = taken
        self.max_rounds = max_rounds

    def draw(self, n: int, topical_for: Sequence[Sequence[str]] | None = None) -> list[str]:
        out: list[str | None] = [None] * n
        todo = list(range(n))
        for _ in range(self.max_rounds):
            if not todo:
                break
            cand = [self.sampler.title(topical_for[i] if topical_for else ()) for i in todo]
            norms = [normalize_title(c) for c in cand]
            sims = self.checker.max_similarity(norms)
            left = []
            for i, c, tn, s in zip(todo, cand, norms, sims):
                if s <= self.checker.margin and tn not in self.taken:
                    self.taken.add(tn)
                    out[i] = c
                else:
                    left.append(i)
            todo = left
        if todo:
            raise MarginError(f"{len(todo)} titles could not clear the similarity margin {self.checker.margin}")
        return out  # type: ignore[return-value]


def _allocate(rng, n: int, k: int, weights: np.ndarray | None = None, exact: bool = True,
              rate: float | None = None, exclude: np.ndarray | None = None) -> np.ndarray:
    """Indices of ``k`` slots among ``n`` (weighted, without replacement)."""
    avail = np.ones(n, dtype=bool) if exclude is None else ~exclude
    idx = np.flatnonzero(avail)
    if not exact and rate is not None:
        p = np.full(len(idx), rate)
        if weights is not None:
            w = weights[idx]
            p = np.clip(rate * w / w.mean(), 0, 1)
        return idx[rng.random(len(idx)) < p]
    k = min(k, len(idx))
    if k == 0:
        return np.array([], dtype=int)
    p = None
    if weights is not None:
        w = weights[idx].astype(float)
        p = w / w.sum()
    return np.sort(rng.choice(idx, size=k, replace=False, p=p))


def gen_corpus(config: SynthConfig, catalog: Catalog) -> SynthOutput:
    """Citing corpora over the catalog with labelled references.

    Corpora: ``pre`` carries the monthly schedule, ``pub`` holds published
    copies of linked preprints, and ``mod`` carries moderation labels.
    """
    r_cell, r_render, r_titles, r_mod, r_pers = _seeds(config.seed + 1, 5)
    if not catalog.records:
        raise ValueError("catalog is empty")
    profiles = {p.author_id: p for p in catalog.profiles}
    names = {a["author_id"]: tuple(a["name"].split(" ", 1)) for a in catalog.authors}
    author_ids = sorted(profiles)
    by_cluster: dict[int, list[str]] = defaultdict(list)
    for aid in author_ids:
        by_cluster[catalog.cluster_of[aid]].append(aid)
    pubs = np.array([profiles[a].n_pubs_pre_cutoff for a in author_ids], dtype=float)
    prominent = {a for a, x in zip(author_ids, pubs) if x >= np.median(pubs)}
    rec_by_cluster: dict[int, list[CatalogRecord]] = defaultdict(list)
    for rec in catalog.records:
        rec_by_cluster[catalog.cluster_of[rec.author_ids[0]]].append(rec)
    n_cl = max(rec_by_cluster) + 1 if rec_by_cluster else 1

    sampler = TitleSampler(catalog.vocab, config.zipf_a, r_titles)
    checker = MarginChecker([r.title_norm for r in catalog.records], config.margin)
    factory = _TitleFactory(sampler, checker, {r.title_norm for r in catalog.records})
    style_p = np.array(STYLE_WEIGHTS)

    def citer_authors(rng, cluster, size):
        pool = by_cluster.get(cluster, ())
        if len(pool) < size:
            pool = author_ids
        return tuple(str(a) for a in rng.choice(pool, size=min(size, len(pool)), replace=False))

    def credit(rng, cluster, biased: bool):
        pool = by_cluster.get(cluster) or author_ids
        w = np.array([config.beneficiary_multiplier if (biased and a in prominent) else 1.0 for a in pool])
        k = int(rng.integers(1, 4))
        return [names[a] for a in rng.choice(pool, size=min(k, len(pool)), replace=False, p=w / w.sum())]

    style_cum = np.cumsum(style_p)

    def render(rng, names_, title, venue, year):
        style = STYLES[min(int(np.searchsorted(style_cum, rng.random() * style_cum[-1])), len(STYLES) - 1)]
        return style(names_, title, venue, year, rng)

    papers: list[SynthPaper] = []
    truth: list[TruthRow] = []
    month_rates: dict = {}
    team_mult = np.array(config.team_multipliers)
    schedule = config.hallucination_schedule
    # pending title assignments: (paper position, ref index, kind, cluster)
    slots_noise: list[tuple[int, int, int]] = []
    slots_fab: list[tuple[int, int, int]] = []
    plans: list[list] = []  # per paper: list of (label, record|None)
    paper_cluster: list[int] = []

    def lay_out(rng, month, fld, n_refs, prefix):
        """Split ``n_refs`` academic references over papers for one cell."""
        out = []
        left = n_refs
        k = 0
        while left > 0:
            n = max(config.refs_per_paper_min, int(rng.poisson(config.refs_per_paper_mean)))
            n = min(n, left)
            left -= n
            bucket, size = _team_size(rng, config.team_probs)
            cluster = int(rng.integers(n_cl))
            pid = f"{prefix}-{month}-{fld}-{k:04d}"
            k += 1
            out.append((pid, n, bucket, size, cluster))
        return out

    def add_cell(corpus, month, fld, n_acad, noise_rate, fab_rate, rng, mod_label=None, team_weighted=True):
        layout = lay_out(rng, month, fld, n_acad, corpus if mod_label is None else f"{corpus}{mod_label[0].lower()}")
        weights = np.concatenate([np.full(n, team_mult[b] if team_weighted else 1.0) for _, n, b, _, _ in layout])
        n_fab = int(round(fab_rate * n_acad))
        n_noise = int(round(noise_rate * n_acad))
        fab = _allocate(rng, n_acad, n_fab, weights, config.exact_counts, fab_rate)
        mask = np.zeros(n_acad, dtype=bool)
        mask[fab] = True
        noise = _allocate(rng, n_acad, n_noise, None, config.exact_counts, noise_rate, exclude=mask)
        labels = np.zeros(n_acad, dtype=np.int8)
        labels[noise] = 1
        labels[fab] = 2
        pos = 0
        for pid, n, bucket, size, cluster in layout:
            p_index = len(papers)
            cl_recs = rec_by_cluster.get(cluster) or catalog.records
            plan = []
            for j in range(n):
                lab = int(labels[pos + j])
                if lab == 0:
                    pool = cl_recs if rng.random() < 0.8 else catalog.records
                    plan.append((Label.REAL, pool[int(rng.integers(len(pool)))]))
                elif lab == 1:
                    plan.append((Label.BASELINE_NOISE, None))
                    slots_noise.append((p_index, j, cluster))
                else:
                    plan.append((Label.FABRICATED, None))
                    slots_fab.append((p_index, j, cluster))
            n_non = int(rng.binomial(n, config.nonacademic_rate)) if config.nonacademic_rate else 0
            for _ in range(n_non):
                plan.insert(int(rng.integers(len(plan) + 1)), (Label.NON_ACADEMIC, None))
            pos += n
            words = catalog.cluster_words[cluster % len(catalog.cluster_words)]
            rec = PaperRecord(
                paper_id=pid, corpus=corpus, field=fld, month=month, team_size=size,
                author_ids=citer_authors(rng, cluster, size), moderation_label=mod_label,
                title=sampler.title(words), abstract=" ".join(sampler.words(30, words)),
            )
            papers.append(SynthPaper(rec, []))
            plans.append(plan)
            paper_cluster.append(cluster)
        key = (corpus if mod_label is None else f"{corpus}:{mod_label}", month)
        month_rates[key] = _accumulate(month_rates.get(key), n_acad, int((labels == 1).sum()), int((labels == 2).sum()))

    # main monthly schedule
    n_fields = len(config.fields)
    per_field = [config.refs_per_month // n_fields + (1 if i < config.refs_per_month % n_fields else 0)
                 for i in range(n_fields)]
    for m, h in zip(config.months, schedule):
        for fi, fld in enumerate(config.fields):
            add_cell("pre", m, fld, per_field[fi], config.field_noise[fi], h * config.field_fab_mult[fi], r_cell)

    # moderated corpus: no baseline noise, planted rate ratio and volume split
    if config.n_moderated_refs:
        n_acc = int(round(config.accepted_volume * config.n_moderated_refs))
        n_rej = config.n_moderated_refs - n_acc
        mod_month = config.months[-1]
        if n_acc:
            add_cell("mod", mod_month, config.fields[0], n_acc, 0.0, config.accepted_rate, r_mod, "ACCEPTED", False)
        if n_rej:
            add_cell("mod", mod_month, config.fields[0], n_rej, 0.0,
                     config.accepted_rate * config.rejected_ratio, r_mod, "REJECTED", False)

    # titles for noise and fabrications
    noise_titles = factory.draw(len(slots_noise), [catalog.cluster_words[c % len(catalog.cluster_words)]
                                                   for _, _, c in slots_noise])
    fab_titles = _fabricated_titles(slots_fab, factory, catalog, config.shared_fab_share, r_titles)

    noise_at = {(p, j): t for (p, j, _), t in zip(slots_noise, noise_titles)}
    fab_at = {(p, j): t for (p, j, _), t in zip(slots_fab, fab_titles)}

    def render_plan(p_index, plan, rng):
        paper = papers[p_index].record
        cluster_guess = paper_cluster[p_index]
        strings, rows = [], []
        j_acad = 0
        for lab, rec in plan:
            idx = len(strings)
            if lab is Label.NON_ACADEMIC:
                strings.append(_nonacademic(rng, catalog.vocab))
                rows.append(TruthRow(paper.paper_id, idx, lab))
                continue
            if lab is Label.REAL:
                title = apply_typos(catalog.titles[rec.record_id], config.typo_rate, config.typo_sim_floor, rng,
                                    len(rec.title_norm))
                nm = [names[a] for a in rec.author_ids]
                strings.append(render(rng, nm, title, rec.venue, rec.year))
                rows.append(TruthRow(paper.paper_id, idx, lab, rec.record_id))
            elif lab is Label.BASELINE_NOISE:
                title = noise_at[(p_index, j_acad)]
                nm = credit(rng, cluster_guess, False)
                strings.append(render(rng, nm, title, _venue(rng, catalog.vocab), int(rng.integers(1995, 2023))))
                rows.append(TruthRow(paper.paper_id, idx, lab))
            else:
                title = fab_at[(p_index, j_acad)]
                nm = credit(rng, cluster_guess, True)
                year = int(paper.month[:4]) - int(rng.integers(0, 4))
                strings.append(render(rng, nm, title, _venue(rng, catalog.vocab), year))
                rows.append(TruthRow(paper.paper_id, idx, lab))
            j_acad += 1
        return strings, rows

    for p_index, plan in enumerate(plans):
        strings, rows = render_plan(p_index, plan, r_render)
        papers[p_index].references = strings
        truth.extend(rows)

    _plant_llm_use(config, papers, plans)
    links, extra_papers, extra_truth, impact = _published_copies(config, papers, truth, r_pers)
    papers.extend(extra_papers)
    truth.extend(extra_truth)

    planted = {
        "baseline_noise_rate": config.baseline_noise_rate,
        "baseline_end": config.baseline_end,
        "schedule": dict(zip(config.months, schedule)),
        "field_noise": dict(zip(config.fields, config.field_noise)),
        "field_fab_mult": dict(zip(config.fields, config.field_fab_mult)),
        "team_multipliers": dict(zip(("1", "2", "3-4", "5-9", "10+"), config.team_multipliers)),
        "leakage": expected_leakage(config.accepted_volume, config.rejected_ratio),
        "rate_ratio": config.rejected_ratio,
        "persistence": config.persistence,
        "llm_use_slope": config.llm_use_slope,
    }
    return SynthOutput(config, catalog, papers, GroundTruth(truth, month_rates, planted), links, impact)


def _plant_llm_use(config: SynthConfig, papers: list[SynthPaper], plans: list[list]) -> None:
    """Score = 0.2 + slope * fabricated share + noise, clipped to [0, 1]; own RNG stream."""
    if not config.llm_use_slope:
        return
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7]))
    for paper, plan in zip(papers, plans):
        n = sum(lab is not Label.NON_ACADEMIC for lab, _ in plan)
        share = sum(lab is Label.FABRICATED for lab, _ in plan) / n if n else 0.0
        score = 0.2 + config.llm_use_slope * share + config.llm_use_noise * float(rng.standard_normal())
        paper.record = PaperRecord(**{**_record_kwargs(paper.record), "llm_use_score": round(min(1.0, max(0.0, score)), 6)})


def _record_kwargs(rec: PaperRecord) -> dict:
    return {k: getattr(rec, k) for k in PaperRecord.__dataclass_fields__}


def _accumulate(prev, n, n_noise, n_fab) -> dict:
    prev = prev or {"n_academic": 0, "n_noise": 0, "n_fabricated": 0}
    out = {"n_academic": prev["n_academic"] + n, "n_noise": prev["n_noise"] + n_noise,
           "n_fabricated": prev["n_fabricated"] + n_fab}
    out["noise_rate"] = out["n_noise"] / out["n_academic"] if out["n_academic"] else 0.0
    out["fabricated_rate"] = out["n_fabricated"] / out["n_academic"] if out["n_academic"] else 0.0
    return out


def expected_leakage(accepted_volume: float, rejected_ratio: float) -> float:
    """Accepted share of unmatched references when rejected papers carry ``rejected_ratio`` times the rate."""
    a = accepted_volume
    return a / (a + (1.0 - a) * rejected_ratio)


def _fabricated_titles(slots, factory: _TitleFactory, catalog: Catalog, shared_share: float,
                       rng: np.random.Generator) -> list[str]:
    """Unique fabrications, with a share reused across at least three papers."""
    n = len(slots)
    out: list[str | None] = [None] * n
    n_shared = int(round(shared_share * n))
    order = [int(i) for i in rng.permutation(n)][:n_shared]
    groups: list[list[int]] = []
    current: list[int] = []
    for i in order:
        if any(slots[j][0] == slots[i][0] for j in current):
            continue
        current.append(i)
        if len(current) == 3:
            groups.append(current)
            current = []
    if groups:
        pool = factory.draw(len(groups))
        for g, t in zip(groups, pool):
            for i in g:
                out[i] = t
    rest = [i for i in range(n) if out[i] is None]
    fresh = factory.draw(len(rest), [catalog.cluster_words[slots[i][2] % len(catalog.cluster_words)] for i in rest])
    for i, t in zip(rest, fresh):
        out[i] = t
    return out  # type: ignore[return-value]


def _published_copies(config: SynthConfig, papers: list[SynthPaper], truth: list[TruthRow], rng: np.random.Generator):
    """Journal versions of preprints; unmatched-labelled references survive at the planted share."""
    if not config.n_persistence_pairs:
        return {}, [], [], {}
    rows_of: dict[str, list[TruthRow]] = defaultdict(list)
    for r in truth:
        rows_of[r.paper_id].append(r)
    bad = (Label.BASELINE_NOISE, Label.FABRICATED)
    baseline_end = config.baseline_end
    eligible = [i for i, p in enumerate(papers)
                if p.record.corpus == "pre" and p.record.month > baseline_end
                and any(r.label in bad for r in rows_of[p.record.paper_id])]
    if len(eligible) < config.n_persistence_pairs:
        raise ValueError(f"only {len(eligible)} preprints carry unmatched references; "
                         f"{config.n_persistence_pairs} pairs requested")
    chosen = sorted(int(i) for i in rng.choice(eligible, size=config.n_persistence_pairs, replace=False))
    slots = [(i, r.ref_index) for i in chosen for r in rows_of[papers[i].record.paper_id] if r.label in bad]
    keep_n = int(round(config.persistence * len(slots)))
    keep = {slots[int(k)] for k in rng.choice(len(slots), size=keep_n, replace=False)}
    journals = [f"J{j:03d}" for j in range(config.n_journals)]
    impact = {j: round(float(rng.random()), 6) for j in journals}
    links, extra, extra_truth = {}, [], []
    for i in chosen:
        pre = papers[i]
        pid = pre.record.paper_id.replace("pre-", "pub-", 1)
        refs, rows = [], []
        for r in rows_of[pre.record.paper_id]:
            if r.label in bad and (i, r.ref_index) not in keep:
                continue
            rows.append(TruthRow(pid, len(refs), r.label, r.record_id))
            refs.append(pre.references[r.ref_index])
        kw = _record_kwargs(pre.record)
        kw.update(paper_id=pid, corpus="pub", journal_id=journals[int(rng.integers(len(journals)))])
        extra.append(SynthPaper(PaperRecord(**kw), refs))
        extra_truth.extend(rows)
        links[pre.record.paper_id] = pid
        papers[i].record = PaperRecord(**{**_record_kwargs(pre.record), "published_link": pid})
    return links, extra, extra_truth, impact


def generate(config: SynthConfig) -> SynthOutput:
    return gen_corpus(config, gen_catalog(config))


def write_synth(out: SynthOutput, out_dir) -> dict[str, Path]:
    """Write catalog, authors, corpus, truth, links and journal files; return their paths."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "catalog": d / "catalog.jsonl",
        "authors": d / "authors.jsonl",
        "corpus": d / "corpus.jsonl",
        "truth": d / "truth.jsonl",
        "links": d / "links.jsonl",
        "journals": d / "journals.json",
        "planted": d / "planted.json",
        "synth_config": d / "synth_config.json",
    }
    atomic_write_text(paths["catalog"], "\n".join(catalog_lines(out.catalog)) + "\n")
    atomic_write_text(paths["authors"], "\n".join(author_lines(out.catalog)) + "\n")
    atomic_write_text(paths["corpus"], "".join(dumps_line(p.to_json()) + "\n" for p in out.papers))
    atomic_write_text(paths["truth"], "".join(dumps_line(r.to_json()) + "\n" for r in out.truth.rows))
    atomic_write_text(paths["links"], "".join(dumps_line({"preprint_id": k, "published_id": v}) + "\n"
                                              for k, v in sorted(out.links.items())))
    atomic_write_text(paths["journals"], json.dumps(out.journal_impact, sort_keys=True, indent=1) + "\n")
    planted = dict(out.truth.planted)
    planted["month_rates"] = {f"{c}|{m}": v for (c, m), v in sorted(out.truth.month_rates.items())}
    atomic_write_text(paths["planted"], json.dumps(planted, sort_keys=True, indent=1) + "\n")
    atomic_write_text(paths["synth_config"], json.dumps(out.config.to_json(), sort_keys=True, indent=1) + "\n")
    return paths


def read_truth(lines: Iterable[str]) -> list[TruthRow]:
    return [TruthRow.from_json(json.loads(x)) for x in lines if x.strip()]


# ---------------------------------------------------------------------------
# recovery evaluation


@dataclass(frozen=True)
class Tolerances:
    excess_pp: float = 0.3
    baseline_pp: float = 0.2
    real_matched: float = 0.99
    fabricated_unmatched: float = 0.95
    fabricated_matched_max: int = 0
    leakage_pp: float = 2.0
    ratio_abs: float = 0.3
    persistence_pp: float = 3.0
    team_ratio_rel: float = 0.25
    field_ratio_rel: float = 0.20


@dataclass
class Check:
    name: str
    value: float | None
    target: float | None
    tolerance: float
    passed: bool

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class RecoveryReport:
    per_month: list[dict]
    baseline_error: float
    confusion: dict
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"passed": self.passed, "baseline_error": self.baseline_error, "confusion": self.confusion,
                "checks": [c.to_json() for c in self.checks], "per_month": self.per_month}


MATCHED_OK = (Status.MATCHED, Status.MATCHED_AFTER_RETITLE)
UNMATCHED_OK = (Status.UNMATCHED, Status.CITATION_ONLY)


def confusion_matrix(truth: Iterable[TruthRow], statuses: Mapping[tuple[str, int], Status]) -> dict:
    out: dict[str, Counter] = defaultdict(Counter)
    for r in truth:
        s = statuses.get((r.paper_id, r.ref_index))
        if s is not None:
            out[r.label.value][Status(s).value] += 1
    return {lab: dict(sorted(c.items())) for lab, c in sorted(out.items())}


def _share(conf: Mapping, label: str, statuses) -> float | None:
    c = conf.get(label, {})
    tot = sum(c.values())
    return sum(c.get(s.value, 0) for s in statuses) / tot if tot else None


def evaluate_recovery(planted: Mapping, series: Sequence[MonthlySeries], b: float,
                      confusion: Mapping | None = None, extras: Mapping[str, float | None] | None = None,
                      tol: Tolerances = Tolerances()) -> RecoveryReport:
    """Compare estimates with planted values.

    ``planted`` is :attr:`GroundTruth.planted`; ``series`` must carry
    excess rates for exactly the planted months.
    """
    schedule = planted["schedule"]
    months = [s.month for s in series]
    if sorted(months) != sorted(schedule):
        raise ValueError("estimated months do not match the planted schedule")
    per_month, checks = [], []
    worst = 0.0
    for s in series:
        h = schedule[s.month]
        ex = s.excess_rate if s.excess_rate is not None else max(0.0, s.rate - b)
        err = abs(ex - h)
        worst = max(worst, err)
        per_month.append({"month": s.month, "planted": h, "excess_rate": ex, "abs_error": err})
    checks.append(Check("excess_rate_max_abs_error_pp", 100 * worst, 0.0, tol.excess_pp, 100 * worst <= tol.excess_pp))
    berr = abs(b - planted["baseline_noise_rate"])
    checks.append(Check("baseline_abs_error_pp", 100 * berr, 0.0, tol.baseline_pp, 100 * berr <= tol.baseline_pp))
    if confusion is not None:
        real = _share(confusion, Label.REAL.value, MATCHED_OK)
        fab = _share(confusion, Label.FABRICATED.value, UNMATCHED_OK)
        fab_m = confusion.get(Label.FABRICATED.value, {}).get(Status.MATCHED.value, 0)
        checks.append(Check("real_matched_share", real, 1.0, tol.real_matched, real is not None and real >= tol.real_matched))
        checks.append(Check("fabricated_unmatched_share", fab, 1.0, tol.fabricated_unmatched,
                            fab is not None and fab >= tol.fabricated_unmatched))
        checks.append(Check("fabricated_matched_count", fab_m, 0, tol.fabricated_matched_max,
                            fab_m <= tol.fabricated_matched_max))
    extras = extras or {}

    def near(name, target, width, scale=1.0, relative=False):
        v = extras.get(name)
        if name not in extras:
            return
        if v is None:
            checks.append(Check(name, None, target, width, False))
            return
        err = abs(v / target - 1.0) if relative else abs(v - target) * scale
        checks.append(Check(name, v, target, width, err <= width))

    near("leakage", planted.get("leakage"), tol.leakage_pp, scale=100.0)
    near("rate_ratio", planted.get("rate_ratio"), tol.ratio_abs)
    near("persistence", planted.get("persistence"), tol.persistence_pp, scale=100.0)
    tm = planted.get("team_multipliers") or {}
    if tm:
        near("team_ratio_solo_vs_large", tm["1"] / tm["10+"], tol.team_ratio_rel, relative=True)
    fm = planted.get("field_fab_mult") or {}
    if len(fm) >= 2:
        vals = sorted(fm.values(), reverse=True)
        near("field_ratio", vals[0] / vals[-1], tol.field_ratio_rel, relative=True)
    return RecoveryReport(per_month, berr, dict(confusion or {}), checks)


# ---------------------------------------------------------------------------
# focused scenarios


@dataclass
class BeneficiaryScenario:
    hallucinated: list
    control: list
    profiles: dict[str, AuthorProfile]
    planted_delta: float  # percent change in mean prior publications


def expected_publication_delta(pubs: np.ndarray, base: np.ndarray, mult: np.ndarray) -> float:
    """Percent difference in mean publications between mult-weighted and base-weighted draws."""
    e_c = float(base @ pubs / base.sum())
    w = base * mult
    e_h = float(w @ pubs / w.sum())
    return 100.0 * (e_h / e_c - 1.0)


def beneficiary_scenario(seed: int, multiplier: float = 2.0, n_authors: int = 2_000, n_refs: int = 1_000,
                         mu: float = 1.5, sigma: float = 1.0, tau: float = 0.3) -> BeneficiaryScenario:
    """Single-author references crediting authors with a productivity-linked weight.

    Control references pick authors uniformly; fabricated ones multiply the
    weight of authors at or above median prior output by ``multiplier``.
    Names are unique so every attribution resolves.
    """
    from .cohort import TfIdfEmbedder, attribute_cited_authors
    from .refparse import ParsedReference, RawReference

    rng = np.random.default_rng(seed)
    words = make_vocabulary(rng, n_authors * 4 + 200, 3, 3)
    surnames = [_cap(w) for w in words[:n_authors]]
    lex = words[n_authors:]
    total = np.maximum(1, np.rint(rng.lognormal(mu, sigma, n_authors))).astype(int)
    pre = rng.binomial(total, 0.75)
    profiles = {}
    texts = {}
    for i in range(n_authors):
        aid = f"B{i:05d}"
        sig = lex[3 * i: 3 * i + 3]
        terms = {w: 3.0 for w in sig}
        profiles[aid] = AuthorProfile(aid, f"Alex {surnames[i]}", int(pre[i]), int(total[i]), int(total[i] * 5),
                                      "M" if i % 2 else "F", terms)
        texts[aid] = " ".join(sig)
    ids = sorted(profiles)
    pubs = np.array([profiles[a].n_pubs_pre_cutoff for a in ids], dtype=float)
    mult = np.where(pubs >= np.median(pubs), multiplier, 1.0)
    base = np.ones(len(ids))
    planted = expected_publication_delta(pubs, base, mult)
    directory = AuthorDirectory(profiles.values())
    embedder = TfIdfEmbedder(profiles.values())

    def draw(weights, tag):
        out = []
        for k, a in enumerate(rng.choice(len(ids), size=n_refs, p=weights / weights.sum())):
            aid = ids[int(a)]
            raw = RawReference(f"{tag}{k:05d}", 0, f"{profiles[aid].name}. Some title. 2021.")
            ref = ParsedReference(raw, "Some title", "some title", (profiles[aid].name,), 2021, None, 1.0)
            out.extend(attribute_cited_authors(ref, embedder.embed_text(texts[aid]), directory, embedder, tau))
        return out

    return BeneficiaryScenario(draw(base * mult, "h"), draw(base, "c"), profiles, planted)


def disambiguation_suite(seed: int, n_cases: int = 200, n_terms: int = 8, overlap: int = 2):
    """Pairs of same-name authors with distinct vocabularies.

    Returns ``(profiles, cases)`` where each case is
    ``(cited_name, citing_text, true_author_id)``.  The citing text mixes the
    true author's terms with a few shared ones.
    """
    rng = np.random.default_rng(seed)
    words = make_vocabulary(rng, n_cases * (2 * n_terms + overlap + 1) + 100, 2, 3)
    surnames = [_cap(w) for w in words[: n_cases]]
    lex = words[n_cases:]
    profiles, cases = [], []
    pos = 0
    for c in range(n_cases):
        shared = lex[pos: pos + overlap]
        pos += overlap
        name = f"Kim {surnames[c]}"
        vocabs = []
        for side in range(2):
            own = lex[pos: pos + n_terms]
            pos += n_terms
            terms = {w: float(rng.integers(1, 5)) for w in own}
            terms.update({w: 1.0 for w in shared})
            aid = f"D{c:04d}{side}"
            profiles.append(AuthorProfile(aid, name, 3, 5, 10, "UNKNOWN", terms))
            vocabs.append(own)
        truth_side = int(rng.integers(2))
        own = vocabs[truth_side]
        text = " ".join(list(rng.choice(own, size=6)) + list(shared))
        cases.append((name, text, f"D{c:04d}{truth_side}"))
    return profiles, cases
