from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from citeaudit.bibindex import build_index  # noqa: E402
from citeaudit.matcher import verify_corpus  # noqa: E402
from citeaudit.refparse import RawReference, parse_reference  # noqa: E402
from citeaudit.synthgen import SynthConfig, generate  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

SMALL = dict(
    seed=11, n_catalog_records=2_000, n_authors=800, vocab_size=3_000, refs_per_month=500,
    n_baseline_months=4, n_ramp_months=8, h_max=0.05, n_moderated_refs=2_000,
    n_persistence_pairs=60, n_journals=20,
)


def small_config(**overrides) -> SynthConfig:
    return SynthConfig(**{**SMALL, **overrides})


@dataclass
class Pipeline:
    synth: object
    index: object
    refs: list
    verdicts: list
    funnel: object

    @property
    def papers(self):
        return self.synth.paper_records


def parse_synth(out) -> list:
    return [parse_reference(RawReference(p.record.paper_id, i, t))
            for p in out.papers for i, t in enumerate(p.references)]


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def small_synth():
    return generate(small_config())


@pytest.fixture(scope="session")
def small_index(small_synth):
    return build_index(small_synth.catalog.records)


@pytest.fixture(scope="session")
def pipeline(small_synth, small_index) -> Pipeline:
    refs = parse_synth(small_synth)
    verdicts, funnel = verify_corpus(refs, small_index)
    return Pipeline(small_synth, small_index, refs, verdicts, funnel)


# acceptance criteria append (number, name, passed, detail) here; listed after the run
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n} {name}: {detail}")
