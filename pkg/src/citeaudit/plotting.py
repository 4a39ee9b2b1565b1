"""Figures rendered from stage tables, written as byte-stable PNG files."""
from __future__ import annotations

import io
from collections import defaultdict
from pathlib import Path
from typing import Callable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .fileio import atomic_write_bytes  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "svg.hashsalt": "citeaudit",
}


def num(v) -> float | None:
    if v is None or v == "":
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())
    return Path(path)


def _tick_every(ax, labels: Sequence[str], every: int = 6) -> None:
    ax.set_xticks(range(0, len(labels), every))
    ax.set_xticklabels(labels[::every], rotation=45, ha="right")


def monthly_rates(rows: Sequence[Mapping], path) -> Path:
    """Unmatched rate per month against the baseline, one line per corpus."""
    by_corpus: dict[str, list] = defaultdict(list)
    for r in rows:
        by_corpus[r["corpus"]].append(r)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        months = sorted({r["month"] for r in rows})
        pos = {m: i for i, m in enumerate(months)}
        for corpus, rs in sorted(by_corpus.items()):
            rs = sorted(rs, key=lambda r: r["month"])
            xs = [pos[r["month"]] for r in rs]
            ax.plot(xs, [100 * (num(r["rate"]) or 0.0) for r in rs], marker=".", lw=1, label=f"{corpus} rate")
            b = num(rs[0].get("baseline"))
            if b is not None:
                ax.axhline(100 * b, ls="--", lw=0.8, color=ax.lines[-1].get_color(), label=f"{corpus} baseline")
        _tick_every(ax, months)
        ax.set_ylabel("unmatched references (%)")
        ax.set_title("Monthly unmatched rate")
        ax.legend(fontsize=7)
        return _save(fig, path)


def annual_excess(rows: Sequence[Mapping], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        years = [r["year"] for r in rows]
        ax.bar(years, [num(r["excess_count"]) or 0.0 for r in rows], color="#b4463c")
        ax.set_ylabel("excess unmatched references")
        ax.set_title("Annual excess over baseline")
        return _save(fig, path)


def rate_regression(rows: Sequence[Mapping], path) -> Path:
    """Re-centred month effects with 95% intervals."""
    rows = sorted(rows, key=lambda r: r["month"])
    months = [r["month"] for r in rows]
    d = [100 * (num(r["delta"]) or 0.0) for r in rows]
    se = [100 * (num(r["stderr"]) or 0.0) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        xs = range(len(months))
        ax.fill_between(xs, [a - 1.96 * s for a, s in zip(d, se)], [a + 1.96 * s for a, s in zip(d, se)],
                        alpha=0.25, lw=0)
        ax.plot(xs, d, lw=1.2)
        ax.axhline(0.0, color="black", lw=0.6)
        _tick_every(ax, months)
        ax.set_ylabel("month effect (pp)")
        ax.set_title("Unmatched rate relative to the baseline window")
        return _save(fig, path)


def share_distribution(rows: Sequence[Mapping], path) -> Path:
    periods = sorted({r["period"] for r in rows})
    labels = list(dict.fromkeys(r["bin"] for r in rows))
    frac = {(r["period"], r["bin"]): num(r["fraction"]) or 0.0 for r in rows}
    width = 0.8 / max(1, len(labels))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for j, lab in enumerate(labels):
            if lab == "0":
                continue
            ax.bar([i + j * width for i in range(len(periods))], [100 * frac.get((p, lab), 0.0) for p in periods],
                   width, label=lab)
        ax.set_xticks([i + 0.4 for i in range(len(periods))])
        ax.set_xticklabels(periods, rotation=45, ha="right")
        ax.set_ylabel("papers (%)")
        ax.set_title("Papers by share of unmatched references")
        ax.legend(title="share", fontsize=7)
        return _save(fig, path)


def _barh(rows: Sequence[Mapping], value: str, label: str, path, title: str, xlabel: str,
          scale: float = 1.0, err: str | None = None) -> Path:
    rows = [r for r in rows if num(r.get(value)) is not None]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, max(2.0, 0.35 * len(rows) + 1)))
        ys = range(len(rows))
        xerr = None
        if err is not None:
            xerr = [1.96 * scale * (num(r.get(err)) or 0.0) for r in rows]
        ax.barh(list(ys), [scale * num(r[value]) for r in rows], xerr=xerr, color="#3c6eb4")
        ax.set_yticks(list(ys))
        ax.set_yticklabels([str(r[label]) for r in rows])
        ax.axvline(0.0, color="black", lw=0.6)
        ax.set_xlabel(xlabel)
        ax.set_title(title)
        return _save(fig, path)


def field_breakdown(rows, path) -> Path:
    return _barh(rows, "excess_rate", "group", path, "Excess unmatched rate by field", "excess rate (pp)", 100.0)


def teamsize(rows, path) -> Path:
    return _barh(rows, "normalized", "bucket", path, "Excess rate by team size, relative to all papers",
                 "normalized excess")


def beneficiary(rows, path) -> Path:
    rows = [dict(r, label=f"{r['statistic']} [{r['unit']}] {r['group']}") for r in rows]
    return _barh(rows, "value", "label", path, "Cited-author differences", "difference", err="stderr")


def journal_deciles(rows, path) -> Path:
    return _barh(rows, "excess_rate", "group", path, "Excess rate by journal impact decile", "excess rate (pp)", 100.0)


def llm_use(rows: Sequence[Mapping], path) -> Path:
    """Unmatched rate against mean LLM-use score, one panel per unit level."""
    levels = sorted({r["level"] for r in rows})
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(levels), squeeze=False)
        for ax, level in zip(axes[0], levels):
            pts = [(num(r["llm_use_score"]), num(r["rate"])) for r in rows if r["level"] == level]
            pts = [(x, y) for x, y in pts if x is not None and y is not None]
            ax.scatter([x for x, _ in pts], [100 * y for _, y in pts], s=4, alpha=0.4, lw=0)
            ax.set_xlabel("LLM-use score")
            ax.set_ylabel("unmatched rate (%)")
            ax.set_title(f"{level} units")
        return _save(fig, path)


FIGURES: dict[str, tuple[str, Callable]] = {
    "monthly_series": ("fig_monthly_rates.png", monthly_rates),
    "annual_excess": ("fig_annual_excess.png", annual_excess),
    "rate_regression": ("fig_rate_regression.png", rate_regression),
    "paper_share": ("fig_paper_share.png", share_distribution),
    "field_breakdown": ("fig_field_breakdown.png", field_breakdown),
    "teamsize": ("fig_teamsize.png", teamsize),
    "beneficiary": ("fig_beneficiary.png", beneficiary),
    "journal_deciles": ("fig_journal_deciles.png", journal_deciles),
    "llm_use_units": ("fig_llm_use.png", llm_use),
}
