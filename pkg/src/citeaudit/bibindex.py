"""Catalog ingestion, title index, and author-profile lookup."""
from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import struct
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .refparse import EmptyTitleError, normalize_title, split_name, try_normalize

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SNAPSHOT_MAGIC = b"CFIX1"
SNAPSHOT_VERSION = 1
DEFAULT_K = 50
MIN_TOKEN_LEN = 2
DENSE_FRACTION = 64


class SchemaVersionError(RuntimeError):
    pass


class StaleSnapshotError(RuntimeError):
    pass


@dataclass(frozen=True)
class CatalogRecord:
    record_id: str
    title_norm: str
    year: int | None = None
    venue: str | None = None
    author_ids: tuple[str, ...] = ()
    n_citations: int = 0

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "title_norm": self.title_norm,
            "year": self.year,
            "venue": self.venue,
            "author_ids": list(self.author_ids),
            "n_citations": self.n_citations,
        }


@dataclass(frozen=True)
class AuthorProfile:
    author_id: str
    name: str
    n_pubs_pre_cutoff: int = 0
    n_pubs_total: int = 0
    n_citations: int = 0
    gender_label: str = "UNKNOWN"
    term_profile: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_pubs_pre_cutoff > self.n_pubs_total:
            raise ValueError(f"{self.author_id}: n_pubs_pre_cutoff exceeds n_pubs_total")
        if any(w < 0 for w in self.term_profile.values()):
            raise ValueError(f"{self.author_id}: negative term weight")


@dataclass
class IngestReport:
    read: int = 0
    accepted: int = 0
    rejected: int = 0
    malformed: int = 0

    def to_json(self) -> dict:
        return dict(read=self.read, accepted=self.accepted, rejected=self.rejected, malformed=self.malformed)


# ---------------------------------------------------------------------------
# ingestion


def _check_header(obj: dict) -> bool:
    """True when ``obj`` is a schema header line (and the version is supported)."""
    if "schema_version" not in obj:
        return False
    if obj["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported schema_version {obj['schema_version']!r} (expected {SCHEMA_VERSION})")
    return True


def _iter_json(lines: Iterable[str | bytes], report: IngestReport):
    for line in lines:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            report.read += 1
            report.malformed += 1
            continue
        if isinstance(obj, dict) and _check_header(obj):
            continue
        report.read += 1
        yield obj


def _nonneg_int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ValueError(v)
    return v


def _record_from(obj: dict) -> CatalogRecord:
    rid = obj["record_id"]
    if not isinstance(rid, str) or not rid:
        raise ValueError("record_id")
    title = obj.get("title")
    if not isinstance(title, str):
        raise ValueError("title")
    year = obj.get("year")
    if year is not None and (isinstance(year, bool) or not isinstance(year, int)):
        raise ValueError("year")
    venue = obj.get("venue")
    if venue is not None and not isinstance(venue, str):
        raise ValueError("venue")
    aids = obj.get("author_ids") or []
    if not all(isinstance(a, str) for a in aids):
        raise ValueError("author_ids")
    return CatalogRecord(rid, normalize_title(title), year, venue, tuple(aids), _nonneg_int(obj.get("n_citations", 0)))


def _profile_from(obj: dict) -> AuthorProfile:
    g = obj.get("gender_label")
    gender = g if g in ("M", "F") else "UNKNOWN"
    terms: Counter = Counter()
    for t in obj.get("paper_titles") or []:
        norm = try_normalize(t) if isinstance(t, str) else None
        if norm:
            terms.update(tok for tok in norm.split() if len(tok) >= MIN_TOKEN_LEN)
    return AuthorProfile(
        author_id=str(obj["author_id"]),
        name=str(obj["name"]),
        n_pubs_pre_cutoff=_nonneg_int(obj.get("n_pubs_pre_cutoff", 0)),
        n_pubs_total=_nonneg_int(obj.get("n_pubs_total", 0)),
        n_citations=_nonneg_int(obj.get("n_citations", 0)),
        gender_label=gender,
        term_profile=dict(sorted(terms.items())),
    )


def ingest_catalog(
    catalog_lines: Iterable[str | bytes],
    author_lines: Iterable[str | bytes] | None = None,
) -> tuple[list[CatalogRecord], list[AuthorProfile], IngestReport]:
    """Read catalog (and optional author) dumps; duplicates keep the first record.

    Malformed lines are counted and skipped.  The returned report covers the
    catalog stream; author-stream problems are logged.
    """
    report = IngestReport()
    seen: set[str] = set()
    records: list[CatalogRecord] = []
    for obj in _iter_json(catalog_lines, report):
        try:
            rec = _record_from(obj)
        except (KeyError, TypeError, ValueError, EmptyTitleError):
            report.malformed += 1
            continue
        if rec.record_id in seen:
            report.rejected += 1
            continue
        seen.add(rec.record_id)
        records.append(rec)
        report.accepted += 1

    profiles: list[AuthorProfile] = []
    if author_lines is not None:
        arep = IngestReport()
        aseen: set[str] = set()
        for obj in _iter_json(author_lines, arep):
            try:
                prof = _profile_from(obj)
            except (KeyError, TypeError, ValueError):
                arep.malformed += 1
                continue
            if prof.author_id in aseen:
                arep.rejected += 1
                continue
            aseen.add(prof.author_id)
            profiles.append(prof)
        if arep.malformed or arep.rejected:
            log.warning("author dump: %d malformed, %d duplicate lines skipped", arep.malformed, arep.rejected)
    return records, profiles, report


def catalog_hash(records: Sequence[CatalogRecord]) -> str:
    h = hashlib.sha256()
    for rec in sorted(records, key=lambda r: r.record_id):
        h.update(json.dumps(rec.to_json(), sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# title index


def index_tokens(title_norm: str) -> list[str]:
    return [t for t in title_norm.split() if len(t) >= MIN_TOKEN_LEN]


class TitleIndex:
    """Immutable inverted index over normalized catalog titles.

    Records are stored sorted by ``record_id`` so that a record's position is
    also its tie-break rank.  ``postings[token]`` holds sorted int32 positions.
    """

    def __init__(self, records: Sequence[CatalogRecord], postings: dict[str, np.ndarray], chash: str):
        self.records = list(records)
        self.record_ids = [r.record_id for r in self.records]
        self.titles = [r.title_norm for r in self.records]
        self.postings = postings
        self.df = {t: int(len(p)) for t, p in postings.items()}
        self.n = len(self.records)
        self.catalog_hash = chash
        self.idf = {t: math.log(1.0 + self.n / d) for t, d in self.df.items()}
        exact: dict[str, list[int]] = defaultdict(list)
        for i, t in enumerate(self.titles):
            exact[t].append(i)
        self.exact = {t: np.asarray(v, dtype=np.int32) for t, v in exact.items()}
        self.position = {rid: i for i, rid in enumerate(self.record_ids)}
        self._scratch = np.zeros(self.n, dtype=np.float64)
        self._seen = np.zeros(self.n, dtype=np.int8)
        # bitmaps for frequent tokens make membership tests O(1) per candidate
        self.dense = {}
        for t, post in postings.items():
            if len(post) * DENSE_FRACTION >= self.n:
                mask = np.zeros(self.n, dtype=bool)
                mask[post] = True
                self.dense[t] = mask
        self.title_len = np.array([len(t) for t in self.titles], dtype=np.int64)
        groups: dict[frozenset, list[int]] = defaultdict(list)
        for i, t in enumerate(self.titles):
            groups[frozenset(t.split())].append(i)
        # only sets shared by several distinct titles matter for tie detection
        self.token_twins = {k: v for k, v in groups.items() if len({self.titles[i] for i in v}) > 1}
        self.n_tokens = np.array([len(set(t.split())) for t in self.titles], dtype=np.int32)

    def __len__(self):
        return self.n

    def record(self, record_id: str) -> CatalogRecord:
        return self.records[self.position[record_id]]

    @property
    def metadata(self) -> dict:
        return {"catalog_hash": self.catalog_hash, "record_count": self.n}

    def query_terms(self, title_norm: str) -> list[tuple[str, float]]:
        """Distinct indexed query tokens in scoring order: rarest first, then lexicographic."""
        toks = {t for t in index_tokens(title_norm) if t in self.df}
        return [(t, self.idf[t]) for t in sorted(toks, key=lambda t: (self.df[t], t))]


def build_index(records: Sequence[CatalogRecord]) -> TitleIndex:
    if not records:
        raise ValueError("cannot index an empty catalog")
    ordered = sorted(records, key=lambda r: r.record_id)
    lists: dict[str, list[int]] = defaultdict(list)
    for pos, rec in enumerate(ordered):
        for tok in sorted(set(index_tokens(rec.title_norm))):
            lists[tok].append(pos)
    postings = {t: np.asarray(v, dtype=np.int32) for t, v in sorted(lists.items())}
    return TitleIndex(ordered, postings, catalog_hash(ordered))


def _rank(positions: np.ndarray, scores: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top-k (position, score) by descending score then ascending position."""
    if len(positions) > k:
        kth = np.partition(scores, len(scores) - k)[len(scores) - k]
        keep = scores >= kth
        positions, scores = positions[keep], scores[keep]
    order = np.lexsort((positions, -scores))[:k]
    return list(zip(positions[order].tolist(), scores[order].tolist()))


def _without_mask(positions: np.ndarray, drop: np.ndarray) -> np.ndarray:
    keep = np.ones(len(positions), dtype=bool)
    for p in drop.tolist():
        keep &= positions != p
    return keep


def _without(positions: np.ndarray, drop: np.ndarray) -> np.ndarray:
    return positions[_without_mask(positions, drop)]


def _contains(index: TitleIndex, tok: str, positions: np.ndarray) -> np.ndarray:
    """Boolean mask of ``positions`` listed in ``tok``'s postings."""
    dense = index.dense.get(tok)
    if dense is not None:
        return dense[positions]
    post = index.postings[tok]
    at = np.searchsorted(post, positions)
    at[at == len(post)] = 0
    return post[at] == positions


def candidate_positions(index: TitleIndex, title_norm: str, k: int = DEFAULT_K) -> tuple[list[int], list[tuple[int, float]]]:
    """``(exact positions, ranked (position, score) for the rest)`` with at most ``k`` entries in total."""
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = index.query_terms(title_norm) if title_norm else []
    exact = index.exact.get(title_norm)
    exact_pos = exact.tolist()[:k] if exact is not None else []
    need = k - len(exact_pos)
    if need <= 0 or not terms:
        return exact_pos, []
    # remaining[i]: best score a record unseen before term i could still reach
    remaining = [0.0] * (len(terms) + 1)
    for i in range(len(terms) - 1, -1, -1):
        remaining[i] = remaining[i + 1] + terms[i][1]

    acc, seen = index._scratch, index._seen
    parts: list[np.ndarray] = []
    n_touched = 0
    target = need + len(exact_pos)
    split = len(terms)
    for i, (tok, w) in enumerate(terms):
        # kth cannot exceed the score already accumulated, so skip hopeless checks
        if n_touched > target and remaining[0] - remaining[i] > remaining[i]:
            touched = np.concatenate(parts) if len(parts) > 1 else parts[0]
            cur = acc[touched]
            kth = np.partition(cur, n_touched - target)[n_touched - target]
            if kth > remaining[i] * (1 + 1e-12):
                split = i
                break
        post = index.postings[tok]
        acc[post] += w
        fresh = post[seen[post] == 0]
        seen[fresh] = 1
        parts.append(fresh)
        n_touched += len(fresh)
    touched = np.concatenate(parts) if len(parts) > 1 else parts[0]
    for tok, w in terms[split:]:
        acc[touched[_contains(index, tok, touched)]] += w
    scores = acc[touched].copy()
    acc[touched] = 0.0
    seen[touched] = 0
    if exact_pos:
        keep = _without_mask(touched, exact)
        touched, scores = touched[keep], scores[keep]
    return exact_pos, _rank(touched, scores, need)


def full_cover(index: TitleIndex, title_norm: str) -> np.ndarray:
    """Sorted positions of non-identical titles containing every indexed token of ``title_norm``.

    These are exactly the records tying the top retrieval score.
    """
    terms = index.query_terms(title_norm)
    if not terms:
        return np.empty(0, dtype=np.int32)
    cur = index.postings[terms[0][0]]
    for tok, _ in terms[1:]:
        if not len(cur):
            break
        cur = cur[_contains(index, tok, cur)]
    exact = index.exact.get(title_norm)
    if exact is not None and len(cur):
        cur = _without(cur, exact)
    return cur


def query_candidates(index: TitleIndex, title_norm: str, k: int = DEFAULT_K) -> list[tuple[str, float]]:
    """Rank records sharing indexed tokens with ``title_norm``.

    Score is the sum of ``ln(1 + N/df)`` over shared distinct tokens, summed
    in :meth:`TitleIndex.query_terms` order.  Records whose normalized title
    equals the query exactly are listed first.  Ties break on record_id.
    """
    exact_pos, ranked = candidate_positions(index, title_norm, k)
    out: list[tuple[str, float]] = []
    if exact_pos:
        full = 0.0
        for _, w in index.query_terms(title_norm):
            full += w
        out = [(index.record_ids[p], full) for p in exact_pos]
    out.extend((index.record_ids[p], sc) for p, sc in ranked)
    return out


# ---------------------------------------------------------------------------
# snapshot persistence


def save_snapshot(index: TitleIndex, path) -> None:
    recs = "\n".join(json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) for r in index.records)
    tokens = list(index.postings)
    lens = np.asarray([len(index.postings[t]) for t in tokens], dtype=np.int64)
    flat = np.concatenate([index.postings[t] for t in tokens]).astype("<i4") if tokens else np.zeros(0, "<i4")
    sections = [
        zlib.compress(recs.encode("utf-8"), 6),
        zlib.compress(json.dumps(tokens, ensure_ascii=False).encode("utf-8"), 6),
        lens.astype("<i8").tobytes(),
        flat.tobytes(),
    ]
    header = json.dumps(
        {"catalog_hash": index.catalog_hash, "record_count": index.n, "sections": [len(s) for s in sections]},
        sort_keys=True,
    ).encode("utf-8")
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(struct.pack("<HI", SNAPSHOT_VERSION, len(header)))
    buf.write(header)
    for s in sections:
        buf.write(s)
    from .fileio import atomic_write_bytes

    atomic_write_bytes(path, buf.getvalue())


def is_snapshot(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(SNAPSHOT_MAGIC)) == SNAPSHOT_MAGIC


def load_snapshot(path, expected_hash: str | None = None) -> TitleIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a title-index snapshot")
    off = len(SNAPSHOT_MAGIC)
    version, hlen = struct.unpack_from("<HI", data, off)
    if version != SNAPSHOT_VERSION:
        raise SchemaVersionError(f"snapshot version {version} unsupported")
    off += struct.calcsize("<HI")
    header = json.loads(data[off: off + hlen])
    off += hlen
    chunks = []
    for n in header["sections"]:
        chunks.append(data[off: off + n])
        off += n
    if expected_hash is not None and header["catalog_hash"] != expected_hash:
        raise StaleSnapshotError(f"snapshot built from catalog {header['catalog_hash'][:12]}, expected {expected_hash[:12]}")
    records = []
    for line in zlib.decompress(chunks[0]).decode("utf-8").split("\n"):
        if line:
            o = json.loads(line)
            records.append(CatalogRecord(o["record_id"], o["title_norm"], o["year"], o["venue"], tuple(o["author_ids"]), o["n_citations"]))
    tokens = json.loads(zlib.decompress(chunks[1]))
    lens = np.frombuffer(chunks[2], dtype="<i8")
    flat = np.frombuffer(chunks[3], dtype="<i4").astype(np.int32)
    bounds = np.concatenate([[0], np.cumsum(lens)])
    postings = {t: flat[bounds[i]: bounds[i + 1]].copy() for i, t in enumerate(tokens)}
    index = TitleIndex(records, postings, header["catalog_hash"])
    if len(records) != header["record_count"]:
        raise ValueError("snapshot record count mismatch")
    return index


# ---------------------------------------------------------------------------
# author lookup


def _initials_compatible(a: str, b: str) -> bool:
    if not a or not b:
        return True
    return a.startswith(b) or b.startswith(a)


class AuthorDirectory:
    """Surname-keyed view over author profiles."""

    def __init__(self, profiles: Iterable[AuthorProfile]):
        self.profiles = sorted(profiles, key=lambda p: p.author_id)
        self.by_id = {p.author_id: p for p in self.profiles}
        self._by_surname: dict[str, list[tuple[str, AuthorProfile]]] = defaultdict(list)
        for p in self.profiles:
            sur, ini = split_name(p.name)
            if sur:
                self._by_surname[sur].append((ini, p))

    def lookup(self, name: str) -> list[AuthorProfile]:
        sur, ini = split_name(name)
        if not sur:
            return []
        return [p for pini, p in self._by_surname.get(sur, ()) if _initials_compatible(ini, pini)]


def lookup_author(profiles: Iterable[AuthorProfile] | AuthorDirectory, name: str) -> list[AuthorProfile]:
    """Profiles whose surname matches and whose initials are compatible, ordered by author_id."""
    if not name or not name.strip():
        raise ValueError("name must be non-empty")
    directory = profiles if isinstance(profiles, AuthorDirectory) else AuthorDirectory(profiles)
    return directory.lookup(name)
