"""Staged verification funnel: index match, non-academic filter, retitle retry, external lookup."""
from __future__ import annotations

import enum
import json
import logging
import multiprocessing as mp
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
from rapidfuzz import process
from rapidfuzz.distance import Levenshtein

from .bibindex import DEFAULT_K, TitleIndex, candidate_positions, full_cover, query_candidates
from .lookup import LookupPort, NullLookup
from .refparse import ParsedReference, RawReference, reference_from_json, reference_to_json, retitle

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    MATCHED = "MATCHED"
    NON_ACADEMIC = "NON_ACADEMIC"
    MATCHED_AFTER_RETITLE = "MATCHED_AFTER_RETITLE"
    EXTERNALLY_VERIFIED = "EXTERNALLY_VERIFIED"
    CITATION_ONLY = "CITATION_ONLY"
    UNMATCHED = "UNMATCHED"


STAGE_OF = {
    Status.MATCHED: 1,
    Status.NON_ACADEMIC: 2,
    Status.MATCHED_AFTER_RETITLE: 3,
    Status.EXTERNALLY_VERIFIED: 4,
    Status.CITATION_ONLY: 4,
    Status.UNMATCHED: 4,
}


class RefClass(str, enum.Enum):
    ACADEMIC = "ACADEMIC"
    NON_ACADEMIC = "NON_ACADEMIC"


@dataclass(frozen=True)
class MatchConfig:
    sim_threshold: float = 0.95
    sim_threshold_year: float = 0.90
    year_window: int = 1
    k: int = DEFAULT_K

    def __post_init__(self):
        for v in (self.sim_threshold, self.sim_threshold_year):
            if not 0.0 < v <= 1.0:
                raise ValueError("similarity thresholds must lie in (0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def floor(self) -> float:
        return min(self.sim_threshold, self.sim_threshold_year)


@dataclass(frozen=True)
class Verdict:
    reference: ParsedReference
    status: Status
    matched_record_id: str | None = None
    similarity: float | None = None
    stage: int = 1
    lookup_error: bool = False

    @property
    def paper_id(self) -> str:
        return self.reference.raw.paper_id

    @property
    def ref_index(self) -> int:
        return self.reference.raw.index_in_paper

    def to_json(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "ref_index": self.ref_index,
            "status": self.status.value,
            "matched_record_id": self.matched_record_id,
            "similarity": None if self.similarity is None else round(self.similarity, 6),
            "stage": self.stage,
        }


@dataclass
class FunnelReport:
    total: int = 0
    counts: dict = field(default_factory=dict)
    survival: dict = field(default_factory=dict)
    classifier_failures: int = 0
    lookup_failures: int = 0

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "counts": dict(self.counts),
            "survival": {str(k): v for k, v in self.survival.items()},
            "classifier_failures": self.classifier_failures,
            "lookup_failures": self.lookup_failures,
        }


def funnel_report(verdicts: Sequence[Verdict], classifier_failures: int = 0, lookup_failures: int = 0) -> FunnelReport:
    c = Counter(v.status for v in verdicts)
    counts = {s.value: c.get(s, 0) for s in Status}
    total = len(verdicts)
    resolved = 0
    survival = {}
    for stage, statuses in ((1, [Status.MATCHED]), (2, [Status.NON_ACADEMIC]),
                            (3, [Status.MATCHED_AFTER_RETITLE]), (4, [Status.EXTERNALLY_VERIFIED])):
        resolved += sum(c.get(s, 0) for s in statuses)
        survival[stage] = (total - resolved) / total if total else 0.0
    return FunnelReport(total, counts, survival, classifier_failures, lookup_failures)


# ---------------------------------------------------------------------------
# similarity


def levenshtein_similarity(a: str, b: str) -> float:
    m = max(len(a), len(b))
    if m == 0:
        return 1.0
    return 1.0 - Levenshtein.distance(a, b) / m


def token_jaccard(a: str, b: str) -> float:
    sa, sb = set(a.split()), set(b.split())
    union = len(sa | sb)
    return len(sa & sb) / union if union else 1.0


def title_similarity(a: str, b: str) -> float:
    return max(levenshtein_similarity(a, b), token_jaccard(a, b))


def _best_at(parsed: ParsedReference, positions: Sequence[int], n_exact: int, index: TitleIndex,
             config: MatchConfig) -> tuple[str, float] | None:
    """Acceptance and tie-breaking over candidate positions (exact hits first)."""
    q = parsed.title_norm
    qtok = set(q.split())
    qn = len(qtok)
    titles, recs, ntok = index.titles, index.records, index.n_tokens
    floor = config.floor
    sims: list[tuple[int, float]] = []
    if n_exact:
        # nothing beats an identical title; only token-set twins can tie it
        sims = [(p, 1.0) for p in positions[:n_exact]]
        sims += [(p, 1.0) for p in positions[n_exact:] if ntok[p] == qn and set(titles[p].split()) == qtok]
    elif positions:
        pos = np.asarray(positions)
        lens = index.title_len[pos]
        m = np.maximum(lens, len(q))
        maxd = int((1.0 - floor) * int(m.max()) + 1e-9)
        d = process.cdist([q], [titles[p] for p in positions], scorer=Levenshtein.distance,
                          score_cutoff=maxd, dtype=np.int32, workers=1)[0]
        lev = 1.0 - d / m
        tn = ntok[pos]
        ratio_ok = np.minimum(tn, qn) / np.maximum(tn, qn) >= floor - 1e-12
        for j in np.flatnonzero((lev >= floor) | ratio_ok).tolist():
            sim = float(lev[j]) if d[j] <= maxd else 0.0
            if ratio_ok[j]:
                bt = set(titles[positions[j]].split())
                jac = len(qtok & bt) / len(qtok | bt)
                if jac > sim:
                    sim = jac
            if sim >= floor:
                sims.append((positions[j], sim))
    best_key = None
    best = None
    for p, sim in sims:
        rec = recs[p]
        years_close = (parsed.year is not None and rec.year is not None
                       and abs(parsed.year - rec.year) <= config.year_window)
        if not (sim >= config.sim_threshold or (sim >= config.sim_threshold_year and years_close)):
            continue
        same_year = parsed.year is not None and parsed.year == rec.year
        key = (-sim, not same_year, -rec.n_citations, rec.record_id)
        if best_key is None or key < best_key:
            best_key, best = key, (rec.record_id, sim)
    return best


def match_title(parsed: ParsedReference, candidates: Sequence[tuple[str, float]], index: TitleIndex,
                config: MatchConfig = MatchConfig()) -> tuple[str, float] | None:
    """Best acceptable candidate as ``(record_id, similarity)``, or None."""
    q = parsed.title_norm
    if q is None:
        raise ValueError("match_title needs a normalized title")
    positions = [index.position[rid] for rid, _ in candidates]
    # exact hits behave the same wherever they sit in the list
    exact = [p for p in positions if index.titles[p] == q]
    rest = [p for p in positions if index.titles[p] != q]
    return _best_at(parsed, exact + rest, len(exact), index, config)


def _match(parsed: ParsedReference, index: TitleIndex, config: MatchConfig) -> tuple[str, float] | None:
    """``match_title`` over the top-k candidates, computed without ranking when an exact hit exists."""
    q = parsed.title_norm
    hit = index.exact.get(q)
    if hit is not None:
        exact = hit.tolist()[: config.k]
        need = config.k - len(exact)
        # the next-ranked candidates are the full-score records, in position order
        rest = []
        if need > 0 and frozenset(q.split()) in index.token_twins:
            rest = full_cover(index, q)[:need].tolist()
        return _best_at(parsed, exact + rest, len(exact), index, config)
    exact, ranked = candidate_positions(index, q, config.k)
    return _best_at(parsed, exact + [p for p, _ in ranked], len(exact), index, config)


# ---------------------------------------------------------------------------
# non-academic filter

DEFAULT_ALLOW_DOMAINS = (
    "doi.org", "arxiv.org", "biorxiv.org", "medrxiv.org", "ssrn.com", "ncbi.nlm.nih.gov", "pubmed",
    "europepmc.org", "jstor.org", "springer.com", "link.springer.com", "sciencedirect.com", "wiley.com",
    "ieeexplore.ieee.org", "dl.acm.org", "nature.com", "science.org", "plos.org", "aclanthology.org",
    "openreview.net", "proceedings.mlr.press", "neurips.cc", "tandfonline.com", "sagepub.com",
    "cambridge.org", "oup.com", "academic.oup.com", "semanticscholar.org", "openalex.org", "scholar.google",
)
DEFAULT_DENY_DOMAINS = (
    "github.com", "gitlab.com", "youtube.com", "twitter.com", "x.com", "wikipedia.org", "medium.com",
    "reddit.com", "facebook.com", "news.", "blog.",
)
DEFAULT_DENY_PATTERNS = (
    r"\b(?:software|source code|python package|r package|version\s+\d+(?:\.\d+)+)\b",
    r"\b(?:data ?set|data repository|database release)\b",
    r"\b(?:news|newspaper|press release|blog post|podcast|tweet)\b",
    r"\b(?:retrieved from|available online)\b",
)
_URL_DOMAIN = re.compile(r"(?:https?://|www\.)([^/\s,;]+)", re.I)


class ReferenceClassifier(Protocol):
    def classify(self, parsed: ParsedReference) -> RefClass: ...


class RuleClassifier:
    """Deterministic rule set for excluding non-academic reference strings."""

    def __init__(self, allow_domains: Iterable[str] = DEFAULT_ALLOW_DOMAINS,
                 deny_domains: Iterable[str] = DEFAULT_DENY_DOMAINS,
                 deny_patterns: Iterable[str] = DEFAULT_DENY_PATTERNS):
        self.allow = tuple(d.lower() for d in allow_domains)
        self.deny = tuple(d.lower() for d in deny_domains)
        self.patterns = [re.compile(p, re.I) for p in deny_patterns]

    @classmethod
    def from_file(cls, path) -> "RuleClassifier":
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
        return cls(cfg.get("allow_domains", DEFAULT_ALLOW_DOMAINS),
                   cfg.get("deny_domains", DEFAULT_DENY_DOMAINS),
                   cfg.get("deny_patterns", DEFAULT_DENY_PATTERNS))

    def _scholarly(self, domain: str) -> bool:
        domain = domain.lower().removeprefix("www.")
        if any(d in domain for d in self.deny):
            return False
        return any(domain == d or domain.endswith("." + d) or d in domain for d in self.allow)

    def classify(self, parsed: ParsedReference) -> RefClass:
        if parsed.title_norm is None:
            return RefClass.NON_ACADEMIC
        text = parsed.raw.text
        for m in _URL_DOMAIN.finditer(text):
            if not self._scholarly(m.group(1)):
                return RefClass.NON_ACADEMIC
        if parsed.year is None and not parsed.authors:
            return RefClass.NON_ACADEMIC
        if any(p.search(text) for p in self.patterns):
            return RefClass.NON_ACADEMIC
        return RefClass.ACADEMIC


@dataclass
class Ports:
    classifier: ReferenceClassifier = field(default_factory=RuleClassifier)
    lookup: LookupPort = field(default_factory=NullLookup)


def classify_reference(parsed: ParsedReference, classifier: ReferenceClassifier) -> tuple[RefClass, bool]:
    """Classification plus a failure flag; port failures fall back to ACADEMIC."""
    try:
        return RefClass(classifier.classify(parsed)), False
    except Exception as exc:  # port boundary
        log.debug("classifier failed on %s: %s", parsed.key, exc)
        return RefClass.ACADEMIC, True


# ---------------------------------------------------------------------------
# citation-only detection


def build_cross_ref_index(refs: Iterable[ParsedReference]) -> dict[str, frozenset]:
    acc: dict[str, set] = defaultdict(set)
    for r in refs:
        if r.title_norm:
            acc[r.title_norm].add(r.raw.paper_id)
    return {t: frozenset(p) for t, p in acc.items()}


def detect_citation_only(title_norm: str, cross_ref_index: Mapping[str, frozenset], paper_id: str | None = None,
                         index: TitleIndex | None = None, config: MatchConfig = MatchConfig()) -> bool:
    """True when the title is cited by at least two other papers yet matches no record.

    Inside the funnel the no-match condition is already established; pass
    ``index`` to have it checked here.
    """
    others = cross_ref_index.get(title_norm, frozenset()) - {paper_id}
    if len(others) < 2:
        return False
    if index is not None:
        probe = ParsedReference(raw=_probe_raw(title_norm), title=title_norm, title_norm=title_norm)
        if match_title(probe, query_candidates(index, title_norm, config.k), index, config) is not None:
            return False
    return True


def _probe_raw(title_norm):
    return RawReference("", 0, title_norm)


# ---------------------------------------------------------------------------
# the funnel

_PENDING = "PENDING"


def _stages_1_to_3(parsed: ParsedReference, index: TitleIndex, classifier: ReferenceClassifier,
                   config: MatchConfig) -> tuple[str, ParsedReference, str | None, float | None, bool]:
    """Pure part of the funnel; returns (status-or-PENDING, reference, record_id, sim, classifier_failed)."""
    if parsed.title_norm is not None:
        hit = _match(parsed, index, config)
        if hit is not None:
            return Status.MATCHED.value, parsed, hit[0], hit[1], False
    cls, failed = classify_reference(parsed, classifier)
    if cls is RefClass.NON_ACADEMIC:
        return Status.NON_ACADEMIC.value, parsed, None, None, failed
    alt, changed = retitle(parsed)
    if changed and alt.title_norm is not None:
        hit = _match(alt, index, config)
        if hit is not None:
            return Status.MATCHED_AFTER_RETITLE.value, alt, hit[0], hit[1], failed
    return _PENDING, parsed, None, None, failed


def _stage_4(parsed: ParsedReference, lookup: LookupPort, cross_ref: Mapping[str, frozenset]) -> Verdict:
    error = False
    if parsed.title_norm is not None:
        try:
            res = lookup.lookup(parsed.title_norm)
            if res.verified:
                return Verdict(parsed, Status.EXTERNALLY_VERIFIED, None, None, 4)
        except Exception as exc:  # timeouts and port errors are recorded, never fatal
            log.debug("external lookup failed for %s: %s", parsed.key, exc)
            error = True
        if detect_citation_only(parsed.title_norm, cross_ref, parsed.raw.paper_id):
            return Verdict(parsed, Status.CITATION_ONLY, None, None, 4, error)
    return Verdict(parsed, Status.UNMATCHED, None, None, 4, error)


def verify_reference(parsed: ParsedReference, index: TitleIndex, cross_ref_index: Mapping[str, frozenset],
                     ports: Ports | None = None, config: MatchConfig = MatchConfig()) -> Verdict:
    ports = ports or Ports()
    status, ref, rid, sim, _ = _stages_1_to_3(parsed, index, ports.classifier, config)
    if status != _PENDING:
        st = Status(status)
        return Verdict(ref, st, rid, sim, STAGE_OF[st])
    return _stage_4(ref, ports.lookup, cross_ref_index)


# worker-process state, inherited through fork
_W: dict = {}


def _work_chunk(bounds: tuple[int, int]):
    refs, index, classifier, config = _W["refs"], _W["index"], _W["classifier"], _W["config"]
    out = []
    for i in range(*bounds):
        status, ref, rid, sim, failed = _stages_1_to_3(refs[i], index, classifier, config)
        out.append((status, ref.title if ref is not refs[i] else None, rid, sim, failed))
    return out


def verify_corpus(refs: Iterable[ParsedReference], index: TitleIndex, ports: Ports | None = None,
                  config: MatchConfig = MatchConfig(), workers: int = 1, chunk_size: int = 2000,
                  cross_ref_index: Mapping[str, frozenset] | None = None) -> tuple[list[Verdict], FunnelReport]:
    """Verify every reference; output order is (paper_id, index_in_paper) regardless of ``workers``."""
    ports = ports or Ports()
    refs = sorted(refs, key=lambda r: r.key)
    if cross_ref_index is None:
        cross_ref_index = build_cross_ref_index(refs)
    bounds = [(s, min(s + chunk_size, len(refs))) for s in range(0, len(refs), chunk_size)]
    if workers > 1 and len(bounds) > 1 and "fork" in mp.get_all_start_methods():
        _W.update(refs=refs, index=index, classifier=ports.classifier, config=config)
        try:
            with mp.get_context("fork").Pool(workers) as pool:
                parts = pool.map(_work_chunk, bounds, chunksize=1)
        finally:
            _W.clear()
    else:
        _W.update(refs=refs, index=index, classifier=ports.classifier, config=config)
        try:
            parts = [_work_chunk(b) for b in bounds]
        finally:
            _W.clear()

    verdicts: list[Verdict] = []
    cls_fail = 0
    lookup_fail = 0
    i = 0
    for part in parts:
        for status, new_title, rid, sim, failed in part:
            ref = refs[i]
            i += 1
            cls_fail += failed
            if status == _PENDING:
                v = _stage_4(ref, ports.lookup, cross_ref_index)
                lookup_fail += v.lookup_error
            else:
                if new_title is not None:
                    ref, _ = retitle(ref)
                st = Status(status)
                v = Verdict(ref, st, rid, sim, STAGE_OF[st])
            verdicts.append(v)
    return verdicts, funnel_report(verdicts, cls_fail, lookup_fail)


def verdict_record(v: Verdict) -> dict:
    """Verdict fields plus the (possibly re-titled) reference, enough to rebuild the verdict."""
    row = v.to_json()
    row["lookup_error"] = v.lookup_error
    row["reference"] = reference_to_json(v.reference)
    return row


def verdict_from_record(obj: dict) -> Verdict:
    sim = obj.get("similarity")
    return Verdict(reference_from_json(obj["reference"]), Status(obj["status"]), obj.get("matched_record_id"),
                   None if sim is None else float(sim), int(obj.get("stage", 4)), bool(obj.get("lookup_error")))


def verdict_rows(verdicts: Iterable[Verdict]) -> Iterable[dict]:
    for v in verdicts:
        yield verdict_record(v)
