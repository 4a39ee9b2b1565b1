from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from citeaudit.estimator import (
    PaperRecord, UndefinedCorrelationError, UnknownPaperError, VerdictRow, baseline_rate, combine_annual,
    correlate_llm_use, excess_counts, field_breakdown, fit_rate_regression, mixture_weights, monthly_series,
    paper_share_distribution, rate_regression, series_from_counts, share_bin,
)
from citeaudit.matcher import Status
from citeaudit.ols import RankDeficientError, solve_ols
from oracles import normal_equations, pearson

U = Status.UNMATCHED
M = Status.MATCHED
UNMATCHED_ALL = {Status.UNMATCHED, Status.CITATION_ONLY}


def paper(pid, month="2022-01", field="cs", team=1, **kw):
    return PaperRecord(pid, "pre", field, month, team, **kw)


def rows(pid, n, n_unmatched, status=U):
    return [VerdictRow(pid, i, status if i < n_unmatched else M) for i in range(n)]


def one_month(n, u, month="2022-01"):
    p = {"p": paper("p", month)}
    return monthly_series(rows("p", n, u), p)


# ---------------------------------------------------------------------------
# monthly series and baseline


def test_rate_one_in_ten():
    (s,) = one_month(10, 1)
    assert (s.n_total, s.n_unmatched, s.rate) == (10, 1, 0.1)
    assert s.low_sample


def test_no_unmatched_gives_zero_rates():
    papers = {f"p{i}": paper(f"p{i}", f"2022-0{i + 1}") for i in range(3)}
    series = monthly_series([v for pid in papers for v in rows(pid, 50, 0)], papers)
    assert [s.rate for s in series] == [0.0, 0.0, 0.0]


def test_non_academic_excluded_from_totals():
    papers = {"p": paper("p")}
    verdicts = rows("p", 10, 2) + [VerdictRow("p", 10 + i, Status.NON_ACADEMIC) for i in range(5)]
    (s,) = monthly_series(verdicts, papers)
    assert (s.n_total, s.n_unmatched) == (10, 2)


def test_citation_only_is_configurable():
    papers = {"p": paper("p")}
    verdicts = rows("p", 10, 1) + [VerdictRow("p", 10, Status.CITATION_ONLY)]
    assert monthly_series(verdicts, papers)[0].n_unmatched == 1
    assert monthly_series(verdicts, papers, UNMATCHED_ALL)[0].n_unmatched == 2


def test_unknown_paper_is_a_hard_error():
    with pytest.raises(UnknownPaperError):
        monthly_series([VerdictRow("ghost", 0, U)], {"p": paper("p")})


def test_paper_record_checks():
    with pytest.raises(ValueError):
        paper("p", month="2022-13")
    with pytest.raises(ValueError):
        paper("p", team=2, author_ids=("a",))


def test_baseline_constant_rate():
    series = series_from_counts({"2022-01": (100, 2), "2022-02": (200, 4), "2022-03": (50, 1)})
    assert baseline_rate(series, "2022-11") == pytest.approx(0.02)


def test_baseline_reference_weighted():
    series = series_from_counts({"2022-01": (100, 1), "2022-02": (300, 9), "2022-03": (0, 0),
                                 "2023-01": (100, 50)})
    assert baseline_rate(series, "2022-11") == 10 / 400


def test_baseline_needs_three_months():
    with pytest.raises(ValueError):
        baseline_rate(series_from_counts({"2022-01": (100, 1), "2022-02": (100, 1)}), "2022-11")
    with pytest.raises(ValueError):
        baseline_rate(series_from_counts({"2023-01": (100, 1)}), "2022-11")


# ---------------------------------------------------------------------------
# excess counts and mixture weights


def test_excess_count_formula():
    series = series_from_counts({"2025-08": (10_000, 350)})
    (s,), annual = excess_counts(series, 0.015)
    assert s.excess_rate == pytest.approx(0.02)
    assert s.excess_count == pytest.approx(200.0)
    assert annual == {2025: pytest.approx(200.0)}


def test_excess_clamped_at_zero():
    (s,), annual = excess_counts(series_from_counts({"2025-01": (1000, 5)}), 0.015)
    assert s.excess_rate == 0.0 and s.excess_count == 0.0 and annual == {2025: 0.0}


def test_annual_and_multi_corpus_sums():
    series = series_from_counts({"2024-12": (100, 5), "2025-01": (100, 7), "2025-02": (100, 3)})
    _, annual = excess_counts(series, 0.01)
    assert annual[2024] == pytest.approx(4.0) and annual[2025] == pytest.approx(8.0)
    assert combine_annual({"a": annual, "b": {2025: 2.0, 2026: 1.0}}) == {
        2024: pytest.approx(4.0), 2025: pytest.approx(10.0), 2026: 1.0}


def test_mixture_examples():
    series = series_from_counts({"2023-01": (1000, 30), "2023-02": (1000, 10), "2023-03": (1000, 0)})
    w = mixture_weights(series, 0.015)
    assert w[0].p == pytest.approx(0.5)
    assert w[1].p == 0.0 and w[2].p == 0.0
    assert all(x.p + x.q == 1.0 for x in w)


CELL = st.tuples(st.integers(0, 500), st.integers(0, 500)).map(lambda t: (max(t), min(t)))


@settings(max_examples=300, deadline=None)
@given(st.lists(CELL, min_size=1, max_size=24), st.floats(0.0, 1.0))
def test_series_invariants(cells, b):
    counts = {f"{2020 + i // 12}-{i % 12 + 1:02d}": c for i, c in enumerate(cells)}
    filled, _ = excess_counts(series_from_counts(counts), b)
    for s, w in zip(filled, mixture_weights(filled, b)):
        assert s.n_unmatched <= s.n_total
        assert s.excess_count <= s.n_unmatched + 1e-9
        assert s.excess_rate == max(0.0, s.rate - b)
        assert w.p + w.q == 1.0 and 0.0 <= w.p <= 1.0
        assert w.p * s.rate <= s.rate


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.sampled_from([U, M, Status.CITATION_ONLY, Status.NON_ACADEMIC])),
                min_size=1, max_size=200),
       st.lists(st.integers(0, 199), max_size=6), st.floats(0.0, 0.2))
def test_excess_is_shard_additive(items, cuts, b):
    months = [f"2023-0{i + 1}" for i in range(6)]
    papers = {m: paper(m, m) for m in months}
    verdicts = [VerdictRow(months[m], i, s) for i, (m, s) in enumerate(items)]
    whole, annual = excess_counts(monthly_series(verdicts, papers, min_n=0), b)
    bounds = [0] + sorted(c for c in cuts if c < len(verdicts)) + [len(verdicts)]
    totals: dict = {}
    for lo, hi in zip(bounds, bounds[1:]):
        for s in monthly_series(verdicts[lo:hi], papers, min_n=0):
            t = totals.setdefault(s.month, [0, 0])
            t[0] += s.n_total
            t[1] += s.n_unmatched
    merged, annual2 = excess_counts(series_from_counts(totals, 0), b)
    assert [(s.month, s.n_total, s.n_unmatched, s.excess_count) for s in whole] == \
        [(s.month, s.n_total, s.n_unmatched, s.excess_count) for s in merged]
    assert annual == annual2


# ---------------------------------------------------------------------------
# OLS


def test_ols_exact_fit():
    x = np.arange(1.0, 11.0)
    res = solve_ols(x[:, None], 2 * x)
    assert res.estimates[0] == pytest.approx(2.0, abs=1e-12)
    assert res.residual_variance == pytest.approx(0.0, abs=1e-20)


def test_ols_intercept_only():
    y = np.array([1.0, 4.0, 2.5, 8.0])
    res = solve_ols(np.ones((4, 1)), y)
    assert res.estimates[0] == pytest.approx(y.mean(), rel=1e-14)
    assert res.std_errors[0] == pytest.approx(y.std(ddof=1) / 2, rel=1e-12)


def test_ols_matches_normal_equations_on_100_systems():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        n, k = int(rng.integers(20, 60)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, k))
        y = X @ rng.normal(size=k) + rng.normal(size=n)
        w = rng.uniform(0.5, 2.0, size=n)
        got = solve_ols(X, y, w).estimates
        ref = normal_equations(X, y, w)
        worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300))))
    assert worst <= 1e-8


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_ols_residuals_orthogonal(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    w = rng.uniform(0.1, 3.0, size=30)
    res = solve_ols(X, y, w)
    resid = y - X @ res.estimates
    assert np.all(np.abs(X.T @ (w * resid)) <= 1e-9 * (1 + np.abs(X.T @ (w * y))))
    assert np.all(res.std_errors >= 0)


def test_ols_rank_deficient_names_columns():
    X = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(RankDeficientError) as err:
        solve_ols(X, np.arange(10.0), names=["const", "t", "t2"])
    assert set(err.value.columns) <= {"t", "t2"} and len(err.value.columns) == 1
    res = solve_ols(X, np.arange(10.0), names=["const", "t", "t2"], allow_drop=True)
    assert len(res.dropped) == 1 and np.isnan(res.coef(res.dropped[0]))


def test_ols_input_checks():
    with pytest.raises(ValueError):
        solve_ols(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        solve_ols(np.array([[1.0], [np.nan]]), np.ones(2))


def test_frequency_weights_match_expanded_rows():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(8, 2))
    y = rng.normal(size=8)
    counts = rng.integers(1, 5, size=8)
    fw = solve_ols(X, y, counts.astype(float), freq_weights=True)
    ex = solve_ols(np.repeat(X, counts, axis=0), np.repeat(y, counts))
    assert np.allclose(fw.estimates, ex.estimates, rtol=1e-10)
    assert np.allclose(fw.std_errors, ex.std_errors, rtol=1e-10)


# ---------------------------------------------------------------------------
# rate regression


def test_single_field_regression_identity():
    rng = np.random.default_rng(1)
    months = [f"2022-{m:02d}" for m in range(1, 13)] + [f"2023-{m:02d}" for m in range(1, 13)]
    cells = {}
    for m in months:
        n = int(rng.integers(100, 2000))
        cells[(m, "cs")] = (n, int(rng.binomial(n, 0.03)))
    reg = fit_rate_regression(cells, "2022-11")
    series = series_from_counts({m: cells[(m, "cs")] for m in months})
    b = baseline_rate(series, "2022-11")
    assert reg.center == pytest.approx(b, abs=1e-12)
    for s, d in zip(series, reg.delta):
        assert abs(d - (s.rate - b)) <= 1e-10
        assert abs(d + reg.center - s.rate) <= 1e-10


def test_all_zero_unmatched_regression():
    cells = {(f"2022-0{m}", f): (100, 0) for m in range(1, 6) for f in ("a", "b")}
    reg = fit_rate_regression(cells, "2022-03")
    assert all(abs(d) <= 1e-12 for d in reg.delta)


def test_two_field_synthetic_regression(pipeline):
    cfg = pipeline.synth.config
    sched = pipeline.synth.truth.planted["schedule"]
    pre = [v for v in pipeline.verdicts if pipeline.papers[v.paper_id].corpus == "pre"]
    reg = rate_regression(pre, pipeline.papers, cfg.baseline_end, UNMATCHED_ALL)
    assert reg.fields == ["bio", "cs"]
    assert max(abs(d - sched[m]) for m, d in zip(reg.months, reg.delta)) <= 0.003


# ---------------------------------------------------------------------------
# synthetic recovery of rates


@pytest.fixture(scope="module")
def pre(pipeline):
    verdicts = [v for v in pipeline.verdicts if pipeline.papers[v.paper_id].corpus == "pre"]
    return verdicts, monthly_series(verdicts, pipeline.papers, UNMATCHED_ALL)


def test_monthly_rates_within_binomial_ci(pipeline, pre):
    _, series = pre
    rates = pipeline.synth.truth.month_rates
    for s in series:
        planted = rates[("pre", s.month)]
        p = planted["noise_rate"] + planted["fabricated_rate"]
        half = 2.576 * math.sqrt(max(p * (1 - p), 1e-12) / s.n_total) + 1 / s.n_total
        assert abs(s.rate - p) <= half, s.month


def test_synthetic_baseline(pipeline, pre):
    _, series = pre
    b = baseline_rate(series, pipeline.synth.config.baseline_end)
    assert abs(b - pipeline.synth.truth.planted["baseline_noise_rate"]) <= 0.002


def test_synthetic_mixture_weights(pipeline, pre):
    _, series = pre
    b = baseline_rate(series, pipeline.synth.config.baseline_end)
    rates = pipeline.synth.truth.month_rates
    for w in mixture_weights(series, b):
        r = rates[("pre", w.month)]
        bad = r["n_noise"] + r["n_fabricated"]
        assert abs(w.p - (r["n_fabricated"] / bad if bad else 0.0)) <= 0.05


# ---------------------------------------------------------------------------
# share distribution and field breakdown


@pytest.mark.parametrize("share, label", [(0.0, "0"), (0.05, "(0,0.1]"), (0.1, "(0,0.1]"), (0.3, "(0.1,0.5]"),
                                          (0.5, "(0.1,0.5]"), (0.75, "(0.5,1]"), (1.0, "(0.5,1]")])
def test_share_bins(share, label):
    assert share_bin(share) == label


def test_share_distribution_periods():
    papers = {"a": paper("a", "2022-02"), "b": paper("b", "2022-03"), "c": paper("c", "2023-08")}
    verdicts = rows("a", 20, 0) + rows("b", 20, 1) + rows("c", 20, 12)
    d = paper_share_distribution(verdicts, papers)
    assert d.periods == ["2022H1", "2023H2"]
    assert d.fractions["2022H1"] == {"0": 0.5, "(0,0.1]": 0.5, "(0.1,0.5]": 0.0, "(0.5,1]": 0.0}
    assert d.delta_pp["(0.5,1]"] == pytest.approx(100.0)
    assert d.delta_pp["0"] == pytest.approx(-50.0)


def test_field_breakdown_single_field():
    months = {f"2022-{m:02d}": (1000, 15) for m in range(1, 13)}
    months.update({f"2023-{m:02d}": (1000, 15 + m) for m in range(1, 13)})
    papers = {m: paper(m, m) for m in months}
    verdicts = [v for m, (n, u) in months.items() for v in rows(m, n, u)]
    (row,) = field_breakdown(verdicts, papers, 2023, "2022-11")
    series, annual = excess_counts(monthly_series(verdicts, papers), 0.015)
    assert row.group == "cs" and row.excess_count == pytest.approx(annual[2023])
    assert row.excess_rate == pytest.approx(annual[2023] / 12_000)


def test_field_breakdown_flags_empty_field():
    papers = {f"c{m}": paper(f"c{m}", f"2022-0{m}") for m in range(1, 5)}
    papers.update({f"b{m}": paper(f"b{m}", f"2022-0{m}", field="bio") for m in range(1, 5)})
    papers["late"] = paper("late", "2023-02")
    verdicts = [v for pid in papers for v in rows(pid, 200, 3)]
    table = {r.group: r for r in field_breakdown(verdicts, papers, 2023, "2022-11")}
    assert table["bio"].flagged and table["bio"].excess_rate is None
    assert table["cs"].excess_rate is not None
    assert list(table) == ["cs", "bio"]


def test_field_ratio_recovered(pipeline, pre):
    verdicts, _ = pre
    cfg = pipeline.synth.config
    year = int(cfg.months[-1][:4])
    table = {r.group: r.excess_rate for r in field_breakdown(verdicts, pipeline.papers, year, cfg.baseline_end,
                                                              unmatched_statuses=UNMATCHED_ALL)}
    planted = cfg.field_fab_mult[0] / cfg.field_fab_mult[1]
    assert abs(table["cs"] / table["bio"] / planted - 1.0) <= 0.20


# ---------------------------------------------------------------------------
# correlation


def test_correlation_perfect():
    assert correlate_llm_use([(x, 3 * x + 1) for x in range(5)])[0] == pytest.approx(1.0)
    assert correlate_llm_use([(x, -x) for x in range(5)])[0] == pytest.approx(-1.0)


def test_correlation_matches_direct_formula():
    rng = np.random.default_rng(12)
    xs, ys = rng.normal(size=50), rng.normal(size=50)
    units = list(zip(xs.tolist(), ys.tolist()))
    r, p = correlate_llm_use(units)
    assert abs(r - pearson(xs.tolist(), ys.tolist())) <= 1e-12
    t = r * math.sqrt(48 / (1 - r * r))
    from scipy.stats import t as tdist
    assert p == pytest.approx(2 * tdist.sf(abs(t), 48), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=40),
       st.floats(0.1, 10), st.floats(-5, 5))
def test_correlation_affine_invariant(units, a, c):
    xs = [u[0] for u in units]
    ys = [u[1] for u in units]
    if np.std(xs) < 1e-3 or np.std(ys) < 1e-3:
        return
    r, _ = correlate_llm_use(units)
    r2, _ = correlate_llm_use([(a * x + c, y) for x, y in units])
    assert -1.0 <= r <= 1.0
    assert r2 == pytest.approx(r, abs=1e-9)


def test_correlation_errors():
    with pytest.raises(UndefinedCorrelationError):
        correlate_llm_use([(1.0, 0.2), (1.0, 0.4), (1.0, 0.5)])
    with pytest.raises(ValueError):
        correlate_llm_use([(1.0, 2.0), (2.0, 3.0)])
