"""Bibliography extraction and reference-string parsing.

Raw documents (``thebibliography`` lists, JATS ``<ref-list>`` blocks, or one
reference per line) become :class:`RawReference` items, which
:func:`parse_reference` turns into field-structured :class:`ParsedReference`
objects.  Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import datetime
import enum
import functools
import re
import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace

MIN_YEAR = 1500


def max_year() -> int:
    return datetime.date.today().year + 1


class SourceFormat(str, enum.Enum):
    PLAIN = "PLAIN"
    LATEX_BBL = "LATEX_BBL"
    JATS_XML = "JATS_XML"
    PREPARSED = "PREPARSED"


class EmptyTitleError(ValueError):
    """Raised when a title contains no letters or digits."""


class StructuralParseError(ValueError):
    """A bibliography container is malformed; ``offset`` is a byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class RawReference:
    paper_id: str
    index_in_paper: int
    text: str
    source_format: SourceFormat = SourceFormat.PLAIN

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"empty reference text for {self.paper_id}#{self.index_in_paper}")
        if self.index_in_paper < 0:
            raise ValueError("index_in_paper must be non-negative")


@dataclass(frozen=True)
class ParsedReference:
    raw: RawReference
    title: str | None = None
    title_norm: str | None = None
    authors: tuple[str, ...] = field(default_factory=tuple)
    year: int | None = None
    venue: str | None = None
    parse_confidence: float = 0.0

    @property
    def key(self) -> tuple[str, int]:
        return (self.raw.paper_id, self.raw.index_in_paper)


# ---------------------------------------------------------------------------
# title normalization


_ASCII_NON_ALNUM = re.compile(r"[^a-z0-9]+")


def _strip_marks(s: str) -> str:
    s = unicodedata.normalize("NFKD", s)
    return "".join(c for c in s if not unicodedata.combining(c))


# Latin letters NFKD leaves intact: ligatures and letters with strokes or bars
_LATIN_SPECIAL = {"ß": "ss", "æ": "ae", "œ": "oe", "þ": "th", "ð": "d", "ĸ": "q", "ŋ": "ng", "ı": "i", "ʼ": " "}
_LATIN_WITH = re.compile(r"^LATIN (?:SMALL|CAPITAL) LETTER ([A-Z]) WITH ")


@functools.lru_cache(maxsize=4096)
def _fold_latin(c: str) -> str:
    if c in _LATIN_SPECIAL:
        return _LATIN_SPECIAL[c]
    m = _LATIN_WITH.match(unicodedata.name(c, ""))
    return m.group(1).lower() if m else c


def normalize_title(title: str) -> str:
    """Lowercase, strip diacritics, and reduce punctuation runs to single spaces.

    Latin letters are folded to ASCII; other scripts are kept as they are.

    >>> normalize_title("Épidémiologie: étude")
    'epidemiologie etude'
    >>> normalize_title("Søren Łukasz Straße")
    'soren lukasz strasse'
    """
    if title is None or not title.strip():
        raise EmptyTitleError("title is empty")
    if title.isascii():
        out = " ".join(_ASCII_NON_ALNUM.sub(" ", title.lower()).split())
    else:
        s = _strip_marks(title).lower()
        # lowercasing can surface new decomposable characters (e.g. U+0130)
        s = _strip_marks(s)
        s = "".join(c if c.isascii() else _fold_latin(c) for c in s)
        s = "".join(c if c.isalnum() else " " for c in s)
        out = " ".join(s.split())
    if not out:
        raise EmptyTitleError(f"title has no alphanumeric content: {title!r}")
    return out


def try_normalize(title: str | None) -> str | None:
    if title is None:
        return None
    try:
        return normalize_title(title)
    except EmptyTitleError:
        return None


# ---------------------------------------------------------------------------
# bibliography extraction

_BEGIN_BIB = re.compile(r"\\begin\{thebibliography\}(?:\{[^}]*\})?")
_END_BIB = re.compile(r"\\end\{thebibliography\}")
_BIBITEM = re.compile(r"\\bibitem\s*(?:\[[^\]]*\])?\s*\{[^}]*\}")
_REF_OPEN = re.compile(r"<ref(?=[\s>/])[^>]*?(/?)>")
_REFLIST_OPEN = re.compile(r"<ref-list(?=[\s>])[^>]*>")
_REFLIST_CLOSE = re.compile(r"</ref-list\s*>")


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


def _balanced_braces(s: str) -> bool:
    depth = 0
    for i, c in enumerate(s):
        if c == "{" and (i == 0 or s[i - 1] != "\\"):
            depth += 1
        elif c == "}" and (i == 0 or s[i - 1] != "\\"):
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def _extract_bbl(text: str) -> list[tuple[str, SourceFormat]]:
    items: list[tuple[str, SourceFormat]] = []
    pos = 0
    found_env = False
    while True:
        m = _BEGIN_BIB.search(text, pos)
        if not m:
            break
        found_env = True
        end = _END_BIB.search(text, m.end())
        if not end:
            raise StructuralParseError("unclosed thebibliography environment", _byte_offset(text, m.start()))
        body = text[m.end():end.start()]
        marks = list(_BIBITEM.finditer(body))
        for i, bm in enumerate(marks):
            stop = marks[i + 1].start() if i + 1 < len(marks) else len(body)
            item = body[bm.end():stop].strip()
            if not item:
                continue
            fmt = SourceFormat.LATEX_BBL if _balanced_braces(item) else SourceFormat.PLAIN
            items.append((item, fmt))
        pos = end.end()
    if not found_env and _BIBITEM.search(text):
        raise StructuralParseError("\\bibitem outside a thebibliography environment", _byte_offset(text, _BIBITEM.search(text).start()))
    return items


def _jats_error_offset(text: str, err: ET.ParseError) -> int:
    line, col = err.position
    lines = text.split("\n")
    char_index = sum(len(x) + 1 for x in lines[: line - 1]) + col
    return _byte_offset(text, min(char_index, len(text)))


def _extract_jats(text: str) -> list[tuple[str, SourceFormat]]:
    try:
        ET.fromstring(text)
    except ET.ParseError as err:
        raise StructuralParseError(f"malformed XML: {err}", _jats_error_offset(text, err)) from None
    items: list[tuple[str, SourceFormat]] = []
    pos = 0
    while True:
        m = _REFLIST_OPEN.search(text, pos)
        if not m:
            break
        close = _REFLIST_CLOSE.search(text, m.end())
        list_end = close.start() if close else len(text)
        body_pos = m.end()
        while True:
            r = _REF_OPEN.search(text, body_pos, list_end)
            if not r:
                break
            if r.group(1) == "/":
                body_pos = r.end()
                continue
            c = text.find("</ref>", r.end(), list_end)
            if c < 0:
                raise StructuralParseError("unclosed <ref> element", _byte_offset(text, r.start()))
            fragment = text[r.start():c + len("</ref>")]
            if _xml_text(fragment).strip():
                fmt = SourceFormat.JATS_XML if _jats_fragment(fragment) is not None else SourceFormat.PLAIN
                items.append((fragment if fmt is SourceFormat.JATS_XML else _xml_text(fragment).strip(), fmt))
            body_pos = c + len("</ref>")
        pos = close.end() if close else len(text)
    return items


def extract_bibliography(document: bytes | str, fmt: SourceFormat | str, paper_id: str = "") -> list[RawReference]:
    """Split a bibliography container into raw reference items, in document order."""
    fmt = SourceFormat(fmt)
    text = document.decode("utf-8") if isinstance(document, bytes) else document
    if fmt is SourceFormat.LATEX_BBL:
        items = _extract_bbl(text)
    elif fmt is SourceFormat.JATS_XML:
        items = _extract_jats(text)
    elif fmt is SourceFormat.PLAIN:
        items = [(line.strip(), SourceFormat.PLAIN) for line in text.split("\n") if line.strip()]
    else:
        raise ValueError("PREPARSED records are read as structured lines, not extracted")
    return [RawReference(paper_id, i, t, f) for i, (t, f) in enumerate(items)]


# ---------------------------------------------------------------------------
# reference parsing

_NS_WRAP = (
    '<wrap xmlns:xlink="http://www.w3.org/1999/xlink" '
    'xmlns:mml="http://www.w3.org/1998/Math/MathML" '
    'xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance">{}</wrap>'
)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1] if isinstance(tag, str) else ""


def _jats_fragment(fragment: str) -> ET.Element | None:
    try:
        root = ET.fromstring(_NS_WRAP.format(fragment))
    except ET.ParseError:
        return None
    return root[0] if len(root) else None


def _xml_text(fragment: str) -> str:
    return " ".join(re.sub(r"<[^>]+>", " ", fragment).split())


def _find_all(el: ET.Element, name: str) -> list[ET.Element]:
    return [e for e in el.iter() if _local(e.tag) == name]


def _elem_text(el: ET.Element | None) -> str | None:
    if el is None:
        return None
    s = " ".join("".join(el.itertext()).split())
    return s or None


_LATEX_CMD = re.compile(r"\\(?:em|it|bf|sc|rm|sl|tt|newblock|textit|textbf|emph|textsc|textrm|url|href)\b\s*")


def clean_latex(s: str) -> str:
    s = s.replace("``", "\u201c").replace("''", "\u201d")
    s = s.replace("\\&", "&").replace("~", " ").replace("\\\\", " ")
    s = _LATEX_CMD.sub("", s)
    s = re.sub(r"\\[a-zA-Z]+\*?", "", s)
    s = s.replace("{", "").replace("}", "")
    return " ".join(s.split())


_URL = re.compile(r"(?:https?://|www\.)\S+|\bdoi:\s*\S+|\b10\.\d{4,9}/\S+", re.I)
_YEAR_TOKEN = re.compile(r"(?<![\d])(\d{4})(?![\d])")
_QUOTES = [
    re.compile(r"\u201c([^\u201d]+)\u201d"),
    re.compile(r'"([^"]+)"'),
    re.compile(r"\u2018([^\u2019]+)\u2019"),
]
_LIST_MARKER = re.compile(r"^\s*(?:\[\s*[\w\-+.]+\s*\]|\(\s*\d+\s*\)|\d+\s*[.)])\s*")

_UP = "A-Z\u00c0-\u00d6\u00d8-\u00de"
_PARTICLES = ("van", "von", "de", "der", "den", "del", "della", "di", "da", "du", "le", "la", "dos", "das", "ter", "ten")
_PARTICLE = rf"(?:(?:{'|'.join(_PARTICLES)})\s+)"
_SURNAME = rf"{_PARTICLE}*[{_UP}][\w'\u2019\-]*[\w]"
_GIVEN = rf"[{_UP}][a-z\u00df-\u00ff][\w'\-]*"
_INIT_DOT = rf"(?:[{_UP}]\.\s?-?){{1,3}}"
_INIT_BARE = rf"[{_UP}]{{1,3}}"
_NAME = (
    rf"(?:{_INIT_DOT}\s*{_SURNAME}"  # A. B. Smith
    rf"|{_SURNAME},\s*{_INIT_DOT}"  # Smith, A. B.
    rf"|{_SURNAME},\s*{_GIVEN}(?:\s+{_INIT_DOT})?(?=\s*(?:,|&|\band\b|;|\(|\.\s))"  # Smith, John
    rf"|{_SURNAME}\s+{_INIT_BARE}(?![\w])"  # Smith AB
    rf"|{_GIVEN}(?:\s+{_INIT_DOT})?\s+{_SURNAME})"  # John Smith / John B. Smith
)
_SEP = r"(?:\s*,\s*(?:and\s+|&\s*)?|\s+and\s+|\s*&\s*|\s*;\s*)"
_ETAL = r"(?:,?\s*et\.?\s*al\.?)"
_AUTHOR_BLOCK = re.compile(rf"^\s*(?P<block>{_NAME}(?:{_SEP}{_NAME})*{_ETAL}?)(?P<end>\s*[.,:]?\s*)")
_NAME_RE = re.compile(_NAME)
_APA_YEAR = re.compile(r"^\s*\(\s*(\d{4})[a-z]?\s*(?:,[^)]*)?\)\s*[.,:]?\s*")
_SENT_END = re.compile(r"(?<=[^\s.][.?!])\s+|(?<=[\u201d\"])[.,]?\s+")
_VENUE_TAIL = re.compile(r",?\s*(?:\b(?:vol|no|pp|p)\.?\s*\d|\d{4}|\d+\s*[(:]|\d+\s*$|\d+\s*,)", re.I)
_VENUE_WORDS = re.compile(
    r"\b(?:journal|j|proc|proceedings|conference|conf|transactions|trans|review|rev|letters|lett|"
    r"symposium|workshop|int|international|annals|ann|bulletin|bull|magazine|quarterly|press|arxiv|"
    r"preprint|acta|advances|adv|research|reports|science|nature|society|soc|physical|phys|chem|"
    r"med|medicine|ieee|acm|lecture notes|communications|comm|studies)\b",
    re.I,
)


def _find_year(text: str) -> int | None:
    hi = max_year()
    scrubbed = _URL.sub(" ", text)
    for m in reversed(list(_YEAR_TOKEN.finditer(scrubbed))):
        y = int(m.group(1))
        if MIN_YEAR <= y <= hi:
            return y
    return None


def _quoted_spans(text: str) -> list[str]:
    spans = []
    for q in _QUOTES:
        for m in q.finditer(text):
            s = m.group(1).strip().rstrip(",.;:").strip()
            if try_normalize(s):
                spans.append(s)
    # longest first; stable for equal lengths
    return sorted(dict.fromkeys(spans), key=len, reverse=True)


def _first_sentence(s: str) -> str:
    s = s.strip()
    m = _SENT_END.search(s)
    head = s[: m.start()] if m else s
    return head.strip().rstrip(".,;:").strip()


def _cut_trailing_meta(s: str) -> str:
    """Drop a trailing ``, 2021`` / volume / page block from a span."""
    m = re.search(r"(?:,\s*|\s+)(?:\(?\d{4}[a-z]?\)?|vol\.?\s*\d+|pp?\.?\s*\d+)[\s\S]*$", s, re.I)
    if m and m.start() > 0:
        s = s[: m.start()]
    return s.strip().rstrip(".,;:").strip()


def _venue_from(rest: str) -> str | None:
    rest = rest.strip().lstrip(".,;: ").strip()
    if not rest:
        return None
    rest = re.sub(r"^in:?\s+", "", rest, flags=re.I)
    m = _VENUE_TAIL.search(rest)
    v = rest[: m.start()] if m else _first_sentence(rest)
    v = v.strip().rstrip(".,;:").strip()
    return v if try_normalize(v) else None


def _split_authors(block: str) -> tuple[str, ...]:
    block = re.sub(_ETAL + r"\s*$", "", block).strip()
    names = [m.group(0).strip() for m in _NAME_RE.finditer(block)]
    return tuple(n.rstrip(",;") for n in names if n)


def _assemble(raw: RawReference, title, authors, year, venue) -> ParsedReference:
    tnorm = try_normalize(title) if title else None
    if tnorm is None:
        title = None
    if venue is not None and not try_normalize(venue):
        venue = None
    found = (title is not None) + (year is not None) + bool(authors)
    return ParsedReference(
        raw=raw,
        title=title,
        title_norm=tnorm,
        authors=tuple(authors),
        year=year,
        venue=venue,
        parse_confidence=found / 3.0,
    )


def _parse_jats(raw: RawReference) -> ParsedReference | None:
    el = _jats_fragment(raw.text)
    if el is None:
        return None
    title = None
    for name in ("article-title", "chapter-title", "data-title", "part-title"):
        hits = _find_all(el, name)
        if hits:
            title = _elem_text(hits[0])
            break
    venue = _elem_text(next(iter(_find_all(el, "source")), None))
    if title is None:
        # books cite the source as the title
        kinds = {e.get("publication-type") for e in el.iter() if _local(e.tag) in ("element-citation", "mixed-citation")}
        if venue and kinds & {"book", "thesis", "report"}:
            title, venue = venue, None
        else:
            return None
    year = None
    ytxt = _elem_text(next(iter(_find_all(el, "year")), None))
    if ytxt:
        y = _find_year(ytxt)
        year = y
    authors = []
    for nm in _find_all(el, "name") + _find_all(el, "string-name"):
        sur = _elem_text(next(iter(_find_all(nm, "surname")), None))
        giv = _elem_text(next(iter(_find_all(nm, "given-names")), None))
        if sur:
            authors.append(f"{giv} {sur}" if giv else sur)
        elif _elem_text(nm):
            authors.append(_elem_text(nm))
    for c in _find_all(el, "collab"):
        if _elem_text(c):
            authors.append(_elem_text(c))
    return _assemble(raw, title.rstrip("."), authors, year, venue)


def _plain_text(raw: RawReference) -> str:
    t = raw.text
    if raw.source_format is SourceFormat.LATEX_BBL:
        t = clean_latex(t)
    elif raw.source_format is SourceFormat.JATS_XML:
        t = _xml_text(t)
    return _LIST_MARKER.sub("", " ".join(t.split()))


def _heuristic_fields(text: str) -> tuple[str | None, tuple[str, ...], str | None]:
    """(title, authors, venue) from an unstructured reference string."""
    authors: tuple[str, ...] = ()
    rest = text
    m = _AUTHOR_BLOCK.match(text)
    if m:
        authors = _split_authors(m.group("block"))
        rest = text[m.end():]
    quoted = _quoted_spans(text)
    if quoted:
        title = quoted[0]
        after = text.split(title, 1)[1] if title in text else ""
        after = re.sub(r"^[\s,.;:\u201d\"\u2019]*", "", after)
        return title, authors, _venue_from(after)
    if not authors:
        return None, authors, None
    apa = _APA_YEAR.match(rest)
    if apa:
        rest = rest[apa.end():]
    title = _first_sentence(rest)
    remainder = rest[len(title):] if rest.startswith(title) else rest.split(title, 1)[-1]
    if not apa:
        title = _cut_trailing_meta(title)
    if not try_normalize(title or "") or not re.search(r"[^\W\d_]{2}", title or ""):
        return None, authors, None
    return title, authors, _venue_from(remainder)


def parse_reference(raw: RawReference) -> ParsedReference:
    """Best-effort extraction of title, authors, year and venue."""
    if raw.source_format is SourceFormat.JATS_XML:
        parsed = _parse_jats(raw)
        if parsed is not None:
            return parsed
    text = _plain_text(raw)
    year = _find_year(text)
    title, authors, venue = _heuristic_fields(text)
    return _assemble(raw, title, authors, year, venue)


# ---------------------------------------------------------------------------
# title re-extraction


def _pre_venue_span(title: str, venue: str | None) -> str | None:
    chunks = [c.strip() for c in re.split(r",\s+|\.\s+", title) if c.strip()]
    if len(chunks) < 2:
        return None
    for i in range(1, len(chunks)):
        tail = ", ".join(chunks[i:])
        if _VENUE_WORDS.search(chunks[i]) or (venue and try_normalize(tail) == try_normalize(venue)):
            head = title[: title.find(chunks[i])].strip().rstrip(",.;:").strip()
            return head or None
    head = title[: title.rfind(chunks[-1])].strip().rstrip(",.;:").strip()
    return head if len(head.split()) >= 2 else None


def _post_year_span(text: str, year: int | None) -> str | None:
    if year is None:
        return None
    m = re.search(rf"(?<!\d){year}(?!\d)[a-z]?\)?[.,:;]?\s*", text)
    if not m:
        return None
    span = _first_sentence(text[m.end():])
    return span or None


def title_hypotheses(parsed: ParsedReference) -> list[str]:
    """Alternative title spans, in the order :func:`retitle` tries them."""
    if parsed.title is None:
        return []
    text = _plain_text(parsed.raw)
    out = []
    quoted = _quoted_spans(text)
    if parsed.title in quoted:
        nxt = quoted.index(parsed.title) + 1
        if nxt < len(quoted):
            out.append(quoted[nxt])
    pre = _pre_venue_span(parsed.title, parsed.venue)
    if pre:
        out.append(pre)
    post = _post_year_span(text, parsed.year)
    if post:
        out.append(post)
    return out


def retitle(parsed: ParsedReference) -> tuple[ParsedReference, bool]:
    """Re-parse under the next title hypothesis; ``changed`` is False when none applies."""
    try:
        current = parsed.title_norm
        for cand in title_hypotheses(parsed):
            norm = try_normalize(cand)
            if norm and norm != current and re.search(r"[^\W\d_]{2}", cand):
                return replace(parsed, title=cand, title_norm=norm), True
    except Exception:  # never raises, by contract
        pass
    return parsed, False


# ---------------------------------------------------------------------------
# name helpers shared with author lookup


def split_name(name: str) -> tuple[str, str]:
    """Return ``(normalized surname, initials)`` for a printed author name."""
    s = " ".join(name.replace("\u2019", "'").split()).strip(" ,;.")
    if not s:
        return "", ""
    if "," in s:
        sur, given = [p.strip() for p in s.split(",", 1)]
    else:
        parts = s.split()
        if len(parts) >= 2 and re.fullmatch(rf"[{_UP}]{{1,3}}", parts[-1]):
            sur, given = " ".join(parts[:-1]), parts[-1]
            given = " ".join(given)  # "AB" -> "A B"
        else:
            # surname is the trailing run starting at the last non-initial token, with particles
            idx = len(parts) - 1
            while idx > 0 and parts[idx - 1].lower() in _PARTICLES:
                idx -= 1
            sur, given = " ".join(parts[idx:]), " ".join(parts[:idx])
    initials = "".join(tok[0] for tok in re.split(r"[\s.\-]+", given) if tok and tok[0].isalpha()).upper()
    sur_norm = try_normalize(sur) or ""
    return sur_norm, _strip_marks(initials)


# ---------------------------------------------------------------------------
# line-record serialization


def preparsed_reference(obj: dict) -> ParsedReference:
    """Reference from a structured record with ``paper_id, index, title, authors, year, venue``."""
    title = obj.get("title")
    authors = tuple(str(a) for a in obj.get("authors") or ())
    year = obj.get("year")
    venue = obj.get("venue")
    text = obj.get("text") or ". ".join(str(x) for x in (", ".join(authors), title, venue, year) if x)
    raw = RawReference(str(obj["paper_id"]), int(obj["index"]), text, SourceFormat.PREPARSED)
    return _assemble(raw, title, authors, int(year) if year is not None else None, venue)


def reference_to_json(p: ParsedReference) -> dict:
    return {
        "paper_id": p.raw.paper_id,
        "index": p.raw.index_in_paper,
        "text": p.raw.text,
        "source_format": p.raw.source_format.value,
        "title": p.title,
        "title_norm": p.title_norm,
        "authors": list(p.authors),
        "year": p.year,
        "venue": p.venue,
        "parse_confidence": round(p.parse_confidence, 6),
    }


def reference_from_json(obj: dict) -> ParsedReference:
    """Inverse of :func:`reference_to_json`; records without ``text`` are treated as PREPARSED input."""
    if "text" not in obj or "title_norm" not in obj:
        return preparsed_reference(obj)
    raw = RawReference(str(obj["paper_id"]), int(obj["index"]), obj["text"],
                       SourceFormat(obj.get("source_format", "PLAIN")))
    return ParsedReference(raw, obj.get("title"), obj.get("title_norm"), tuple(obj.get("authors") or ()),
                           obj.get("year"), obj.get("venue"), float(obj.get("parse_confidence", 0.0)))
