from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from citeaudit.estimator import MonthlySeries
from citeaudit.matcher import Status
from citeaudit.synthgen import (
    Label, MarginChecker, MarginError, SynthConfig, TruthRow, confusion_matrix, evaluate_recovery, gen_catalog,
    generate, write_synth,
)
from conftest import small_config
from oracles import similarity

TINY = dict(n_catalog_records=400, n_authors=200, refs_per_month=200, n_moderated_refs=0, n_persistence_pairs=0)


def test_empty_catalog():
    cat = gen_catalog(small_config(n_catalog_records=0))
    assert cat.records == [] and cat.profiles == []
    with pytest.raises(ValueError):
        generate(small_config(n_catalog_records=0))


def test_generation_is_byte_identical(tmp_path):
    cfg = small_config(**TINY)
    a = write_synth(generate(cfg), tmp_path / "a")
    b = write_synth(generate(cfg), tmp_path / "b")
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].read_bytes() == b[k].read_bytes(), k


def test_seed_changes_output(tmp_path):
    a = write_synth(generate(small_config(**TINY)), tmp_path / "a")
    b = write_synth(generate(small_config(seed=12, **TINY)), tmp_path / "b")
    assert a["corpus"].read_bytes() != b["corpus"].read_bytes()


def test_lognormal_publication_mean():
    cfg = small_config(n_catalog_records=200, n_authors=10_000)
    pubs = np.array([p.n_pubs_total for p in gen_catalog(cfg).profiles])
    expected = math.exp(cfg.lognormal_mu + cfg.lognormal_sigma ** 2 / 2)
    assert abs(pubs.mean() / expected - 1) <= 0.05


def test_catalog_invariants(small_synth):
    cat = small_synth.catalog
    assert len({r.title_norm for r in cat.records}) == len(cat.records)
    known = {p.author_id for p in cat.profiles}
    assert all(r.author_ids and set(r.author_ids) <= known for r in cat.records)
    assert all(p.n_pubs_pre_cutoff <= p.n_pubs_total for p in cat.profiles)


def test_zero_schedule_plants_no_fabrications():
    cfg = small_config(h_max=0.0, **TINY)
    labels = Counter(r.label for r in generate(cfg).truth.rows)
    assert labels[Label.FABRICATED] == 0 and labels[Label.BASELINE_NOISE] > 0


def test_zero_noise_and_schedule_all_real():
    cfg = small_config(h_max=0.0, field_noise=(0.0, 0.0), nonacademic_rate=0.0, **TINY)
    assert {r.label for r in generate(cfg).truth.rows} == {Label.REAL}


def test_truth_covers_every_reference(small_synth):
    n_refs = sum(len(p.references) for p in small_synth.papers)
    keys = {(r.paper_id, r.ref_index) for r in small_synth.truth.rows}
    assert len(small_synth.truth.rows) == len(keys) == n_refs
    assert sum(Counter(r.label for r in small_synth.truth.rows).values()) == n_refs


def test_exact_counts_per_month(small_synth):
    cfg = small_synth.config
    papers = small_synth.paper_records
    got: dict = {}
    for r in small_synth.truth.rows:
        p = papers[r.paper_id]
        if p.corpus != "pre":
            continue
        c = got.setdefault(p.month, Counter())
        c[r.label] += 1
    fields = dict(zip(cfg.fields, zip(cfg.field_noise, cfg.field_fab_mult)))
    per_field = cfg.refs_per_month // len(cfg.fields)
    for m, h in zip(cfg.months, cfg.hallucination_schedule):
        rates = small_synth.truth.month_rates[("pre", m)]
        assert got[m][Label.FABRICATED] == rates["n_fabricated"]
        assert got[m][Label.BASELINE_NOISE] == rates["n_noise"]
        assert rates["n_fabricated"] == sum(round(h * mult * per_field) for _, mult in fields.values())
        assert rates["n_noise"] == sum(round(noise * per_field) for noise, _ in fields.values())
        assert rates["n_academic"] == cfg.refs_per_month


def test_bernoulli_labels_when_not_exact():
    cfg = small_config(exact_counts=False, **TINY)
    out = generate(cfg)
    fab = sum(v["n_fabricated"] for (c, _), v in out.truth.month_rates.items() if c == "pre")
    assert fab > 0


def test_margin_checker_matches_brute_force(small_synth):
    titles = [r.title_norm for r in small_synth.catalog.records[:300]]
    checker = MarginChecker(titles)
    rng = np.random.default_rng(0)
    queries = [titles[i] for i in rng.integers(len(titles), size=10)]
    queries += [" ".join(titles[i].split()[:-1]) or titles[i] for i in rng.integers(len(titles), size=10)]
    queries += [" ".join(rng.choice(small_synth.catalog.vocab, size=5)) for _ in range(10)]
    got = checker.max_similarity(queries)
    for q, g in zip(queries, got):
        brute = max(similarity(q, t) for t in titles)
        if brute >= checker.margin:
            assert g == pytest.approx(brute, abs=1e-6)
        else:
            assert g < checker.margin


def test_planted_unmatchables_clear_margin(small_synth, pipeline):
    wanted = {(r.paper_id, r.ref_index) for r in small_synth.truth.rows
              if r.label in (Label.FABRICATED, Label.BASELINE_NOISE)}
    titles = [p.title_norm for p in pipeline.refs if (p.raw.paper_id, p.raw.index_in_paper) in wanted
              and p.title_norm]
    assert len(titles) >= 0.95 * len(wanted)
    rng = np.random.default_rng(1)
    sample = [titles[i] for i in rng.choice(len(titles), size=5, replace=False)]
    catalog = [r.title_norm for r in small_synth.catalog.records]
    for q in sample:
        assert max(similarity(q, t) for t in catalog) < small_synth.config.margin
    checker = MarginChecker(catalog, small_synth.config.margin)
    assert checker.max_similarity(titles).max() < small_synth.config.margin


def test_impossible_margin_raises():
    with pytest.raises(MarginError):
        generate(small_config(margin=0.05, n_catalog_records=300, refs_per_month=100, n_moderated_refs=0,
                              n_persistence_pairs=0))


def test_tiny_vocabulary_raises():
    with pytest.raises(MarginError):
        gen_catalog(small_config(vocab_size=10))


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(team_probs=(0.5, 0.5, 0.0, 0.0, 0.5))
    with pytest.raises(ValueError):
        SynthConfig(field_noise=(0.5, 0.6), h_max=0.6)
    with pytest.raises(ValueError):
        SynthConfig(fields=("cs",))
    cfg = small_config()
    assert SynthConfig.from_json(cfg.to_json()) == cfg


def test_truth_row_invariant():
    with pytest.raises(ValueError):
        TruthRow("p", 0, Label.FABRICATED, "R000001")


def test_published_copies_linked(small_synth):
    papers = small_synth.paper_records
    assert len(small_synth.links) == small_synth.config.n_persistence_pairs
    for pre, pub in small_synth.links.items():
        assert papers[pre].corpus == "pre" and papers[pub].corpus == "pub"
        assert papers[pre].published_link == pub


# ---------------------------------------------------------------------------
# recovery evaluation


def _series(planted, excess):
    return [MonthlySeries(m, 1000, 0, 0.0, planted["baseline_noise_rate"], excess(h), None)
            for m, h in sorted(planted["schedule"].items())]


def test_perfect_estimates_pass(small_synth):
    planted = small_synth.truth.planted
    conf = {"REAL": {"MATCHED": 10}, "FABRICATED": {"UNMATCHED": 5}}
    extras = {"leakage": planted["leakage"], "rate_ratio": planted["rate_ratio"]}
    rep = evaluate_recovery(planted, _series(planted, lambda h: h), planted["baseline_noise_rate"], conf, extras)
    assert rep.passed and rep.baseline_error == 0.0
    assert all(row["abs_error"] == 0.0 for row in rep.per_month)


def test_zero_estimates_fail(small_synth):
    planted = small_synth.truth.planted
    rep = evaluate_recovery(planted, _series(planted, lambda h: 0.0), planted["baseline_noise_rate"])
    failed = {c.name for c in rep.checks if not c.passed}
    assert failed == {"excess_rate_max_abs_error_pp"}
    assert max(row["abs_error"] for row in rep.per_month) == pytest.approx(max(planted["schedule"].values()))


def test_missing_extra_fails(small_synth):
    planted = small_synth.truth.planted
    rep = evaluate_recovery(planted, _series(planted, lambda h: h), planted["baseline_noise_rate"],
                            extras={"persistence": None})
    assert not rep.passed


def test_month_mismatch_rejected(small_synth):
    planted = small_synth.truth.planted
    with pytest.raises(ValueError):
        evaluate_recovery(planted, _series(planted, lambda h: h)[1:], 0.0)


def test_confusion_matrix_counts():
    truth = [TruthRow("p", 0, Label.REAL, "R1"), TruthRow("p", 1, Label.FABRICATED), TruthRow("p", 2, Label.REAL)]
    statuses = {("p", 0): Status.MATCHED, ("p", 1): Status.UNMATCHED}
    assert confusion_matrix(truth, statuses) == {"FABRICATED": {"UNMATCHED": 1}, "REAL": {"MATCHED": 1}}
