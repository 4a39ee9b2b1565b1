from __future__ import annotations

import json
import re

import pytest
from hypothesis import given, settings, strategies as st

from citeaudit.refparse import (
    EmptyTitleError, ParsedReference, RawReference, SourceFormat, StructuralParseError, extract_bibliography,
    max_year, normalize_title, parse_reference, reference_from_json, reference_to_json, retitle, split_name,
)

ASCII_CHARSET = re.compile(r"^[a-z0-9 ]*$")


def raw(text: str, i: int = 0, fmt=SourceFormat.PLAIN) -> RawReference:
    return RawReference("p1", i, text, fmt)


# ---------------------------------------------------------------------------
# normalize_title


@pytest.mark.parametrize("title, expected", [
    ("The Science of Science!", "the science of science"),
    ("Épidémiologie \u2014 étude", "epidemiologie etude"),
    ("  AI   &  Society  ", "ai society"),
    ("Søren Kierkegaard and Łódź", "soren kierkegaard and lodz"),
    ("Straße", "strasse"),
    ("ﬁnite ﬁelds", "finite fields"),
])
def test_normalize_examples(title, expected):
    assert normalize_title(title) == expected


@pytest.mark.parametrize("title", ["", "   ", "!!! ---", "\u2014"])
def test_normalize_rejects_empty_content(title):
    with pytest.raises(EmptyTitleError):
        normalize_title(title)


def test_normalize_keeps_non_latin_scripts():
    assert normalize_title("深度 学习！") == "深度 学习"
    assert normalize_title("Теория графов") == "теория графов"


@settings(max_examples=500, deadline=None)
@given(st.text(min_size=1, max_size=60))
def test_normalize_idempotent(text):
    try:
        once = normalize_title(text)
    except EmptyTitleError:
        return
    assert normalize_title(once) == once


LATIN = st.text(
    alphabet=st.characters(min_codepoint=0x20, max_codepoint=0x17F, blacklist_characters="\u00b5"),
    min_size=1, max_size=60,
)


@settings(max_examples=500, deadline=None)
@given(LATIN)
def test_normalize_latin_text_is_ascii_alnum(text):
    try:
        out = normalize_title(text)
    except EmptyTitleError:
        return
    assert ASCII_CHARSET.match(out), out


# ---------------------------------------------------------------------------
# extract_bibliography

BBL3 = r"""\begin{thebibliography}{3}
\bibitem{a} A. One. First title. J. A, 2001.
\bibitem[B(2002)]{b} B. Two. Second title. J. B, 2002.
\bibitem{c}
C. Three. Third title. J. C, 2003.
\end{thebibliography}
"""


def test_bbl_three_items():
    refs = extract_bibliography(BBL3.encode(), "LATEX_BBL", "p")
    assert [r.index_in_paper for r in refs] == [0, 1, 2]
    assert [r.text for r in refs] == ["A. One. First title. J. A, 2001.", "B. Two. Second title. J. B, 2002.",
                                      "C. Three. Third title. J. C, 2003."]


def test_bbl_golden_file(fixtures_dir):
    got = [r.text for r in extract_bibliography((fixtures_dir / "two_items.bbl").read_bytes(), "LATEX_BBL")]
    expected = json.loads((fixtures_dir / "two_items.expected.json").read_text(encoding="utf-8"))
    assert got == expected


def test_bbl_unbalanced_item_is_kept_as_plain():
    doc = "\\begin{thebibliography}{1}\n\\bibitem{x} Broken {brace item, 2004.\n\\end{thebibliography}"
    (ref,) = extract_bibliography(doc, "LATEX_BBL")
    assert ref.source_format is SourceFormat.PLAIN
    assert ref.text == "Broken {brace item, 2004."


def test_bbl_unclosed_environment_reports_offset():
    doc = "preamble é\n\\begin{thebibliography}{1}\n\\bibitem{a} x"
    with pytest.raises(StructuralParseError) as err:
        extract_bibliography(doc, "LATEX_BBL")
    assert err.value.offset == len("preamble é\n".encode("utf-8"))


def test_jats_empty_ref_list():
    assert extract_bibliography("<article><back><ref-list></ref-list></back></article>", "JATS_XML") == []


def test_jats_refs_in_order():
    doc = ("<article><back><ref-list>"
           "<ref id='r1'><element-citation><article-title>Alpha study</article-title><year>2010</year>"
           "</element-citation></ref>"
           "<ref id='r2'><mixed-citation>Beta, B. (2011). Beta study. J. Beta.</mixed-citation></ref>"
           "</ref-list></back></article>")
    refs = extract_bibliography(doc, "JATS_XML", "p")
    assert [r.index_in_paper for r in refs] == [0, 1]
    assert parse_reference(refs[0]).title == "Alpha study"
    assert parse_reference(refs[0]).year == 2010


def test_jats_malformed_reports_offset():
    with pytest.raises(StructuralParseError) as err:
        extract_bibliography("<a><ref-list><ref>x</ref-list></a>", "JATS_XML")
    assert err.value.offset == 21


def test_plain_one_per_line():
    refs = extract_bibliography("first ref\n\n  second ref  \n", "PLAIN")
    assert [r.text for r in refs] == ["first ref", "second ref"]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters="\\{}"),
                        min_size=1, max_size=40).filter(lambda s: s.strip()), min_size=0, max_size=12))
def test_bbl_item_count_and_bytes_preserved(items):
    body = "".join(f"\\bibitem{{k{i}}} {t}\n" for i, t in enumerate(items))
    doc = f"\\begin{{thebibliography}}{{9}}\n{body}\\end{{thebibliography}}"
    refs = extract_bibliography(doc, "LATEX_BBL")
    assert len(refs) == len(items)
    assert [r.text for r in refs] == [t.strip() for t in items]


# ---------------------------------------------------------------------------
# parse_reference


def test_parse_fielded_reference():
    p = parse_reference(raw('A. Author, "A real title," J. Venue, 2021.'))
    assert p.title == "A real title"
    assert p.title_norm == "a real title"
    assert p.year == 2021
    assert p.authors == ("A. Author",)
    assert p.venue == "J. Venue"
    assert p.parse_confidence == 1.0


def test_parse_untitled_fragment():
    p = parse_reference(raw("Untitled fragment 2019"))
    assert p.title is None and p.title_norm is None
    assert p.year == 2019
    assert p.parse_confidence == pytest.approx(1 / 3)


def test_year_scan_skips_out_of_range_and_doi():
    p = parse_reference(raw('X. Y, "Some work," J. Z, 2015, doi:10.1000/2999.1234 pp. 3000'))
    assert p.year == 2015


def test_hand_labeled_title_accuracy(fixtures_dir):
    rows = [json.loads(x) for x in (fixtures_dir / "labeled_refs.jsonl").read_text(encoding="utf-8").splitlines()]
    assert len(rows) == 50
    hits = sum(parse_reference(raw(r["text"], i)).title == r["title"] for i, r in enumerate(rows))
    assert hits / len(rows) >= 0.9


REF_TEXT = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=120).filter(
    lambda s: s.strip())
TITLE_TEXT = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters='"'),
                     min_size=1, max_size=40).filter(lambda s: s.strip())
QUOTED_REF = TITLE_TEXT.map(lambda t: f'A. Author, "{t}," J. Venue, 2021.')


@settings(max_examples=400, deadline=None)
@given(st.one_of(REF_TEXT, QUOTED_REF))
def test_parsed_reference_field_invariants(text):
    p = parse_reference(raw(text))
    assert (p.title is None) == (p.title_norm is None)
    if p.title is not None:
        assert p.title_norm == normalize_title(p.title)
    if p.year is not None:
        assert 1500 <= p.year <= max_year()
    assert 0.0 <= p.parse_confidence <= 1.0
    assert all(a for a in p.authors)


@settings(max_examples=400, deadline=None)
@given(st.one_of(REF_TEXT, QUOTED_REF))
def test_parsed_title_norm_charset(text):
    p = parse_reference(raw(text))
    if p.title_norm is not None:
        assert ASCII_CHARSET.match(p.title_norm), p.title_norm


# ---------------------------------------------------------------------------
# retitle


def test_retitle_shrinks_to_pre_venue_span():
    p = parse_reference(raw("K. Osei. Reef fish recruitment, Marine Ecology Progress Series, 2012."))
    assert p.title == "Reef fish recruitment, Marine Ecology Progress Series"
    alt, changed = retitle(p)
    assert changed
    assert alt.title == "Reef fish recruitment"
    assert alt.raw == p.raw


def test_retitle_next_quoted_span():
    p = parse_reference(raw('M. Ho, "Notes on the long title here," in "Short one," 2009.'))
    alt, changed = retitle(p)
    assert changed and alt.title == "Short one"


def test_retitle_single_span_unchanged():
    p = parse_reference(raw('J. Smith, "Only title," 2020.'))
    alt, changed = retitle(p)
    assert not changed and alt is p


def test_retitle_without_title_unchanged():
    p = parse_reference(raw("Ibid., p. 45."))
    alt, changed = retitle(p)
    assert p.title is None and not changed and alt is p


@settings(max_examples=300, deadline=None)
@given(REF_TEXT)
def test_retitle_total_and_keeps_provenance(text):
    p = parse_reference(raw(text, 3))
    alt, changed = retitle(p)
    assert alt.raw == p.raw
    assert changed == (alt.title_norm != p.title_norm)
    if changed:
        assert alt.title_norm == normalize_title(alt.title)


# ---------------------------------------------------------------------------
# serialization and name helpers


def test_reference_json_round_trip():
    p = parse_reference(raw('A. Author, "A real title," J. Venue, 2021.', 4))
    assert reference_from_json(json.loads(json.dumps(reference_to_json(p)))) == p


def test_preparsed_record():
    p = reference_from_json({"paper_id": "q", "index": 2, "title": "Given Title", "authors": ["Z. Q"],
                             "year": 2001, "venue": "V"})
    assert isinstance(p, ParsedReference)
    assert p.raw.source_format is SourceFormat.PREPARSED
    assert (p.title_norm, p.year, p.authors) == ("given title", 2001, ("Z. Q",))


@pytest.mark.parametrize("name, expected", [
    ("J. Smith", ("smith", "J")),
    ("Smith, John A.", ("smith", "JA")),
    ("Smith JA", ("smith", "JA")),
    ("Ludwig van Beethoven", ("van beethoven", "L")),
    ("John Smith", ("smith", "J")),
])
def test_split_name(name, expected):
    assert split_name(name) == expected


def test_raw_reference_rejects_blank_text():
    with pytest.raises(ValueError):
        RawReference("p", 0, "   ")
