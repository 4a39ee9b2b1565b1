"""Command-line entry point: ``citeaudit <command> [flags]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import cohort as co
from . import estimator as est
from .bibindex import (AuthorProfile, SchemaVersionError, StaleSnapshotError, TitleIndex, build_index,
                       catalog_hash, ingest_catalog, is_snapshot, load_snapshot, save_snapshot)
from .fileio import atomic_write_text, read_csv, sha256_file, write_csv, write_jsonl
from .lookup import CachedLookup, NullLookup
from .matcher import (STAGE_OF, MatchConfig, Ports, RuleClassifier, Status, Verdict, verdict_from_record, verdict_rows,
                      verify_corpus)
from .refparse import (ParsedReference, RawReference, SourceFormat, StructuralParseError, extract_bibliography,
                       parse_reference, preparsed_reference, reference_from_json, reference_to_json)
from .synthgen import SynthConfig, Tolerances, confusion_matrix, evaluate_recovery, generate, write_synth

log = logging.getLogger("citeaudit")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_TOLERANCE = 0, 1, 2, 3
FORMATS = ("csv", "structured-report")
COHORT_KEYS = ("month", "field", "subfield", "year", "ref_band", "corpus")
MATCHED_STATUSES = frozenset({Status.MATCHED, Status.MATCHED_AFTER_RETITLE})


class ValidationError(Exception):
    """Bad flags or configuration values."""


class DataError(Exception):
    """Missing or malformed input data."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    catalog: str | None = None
    corpus: list[str] = field(default_factory=list)
    authors: str | None = None
    journals: str | None = None
    baseline_end: str = est.DEFAULT_WINDOW_END
    sim_threshold: float = 0.95
    sim_threshold_year: float = 0.90
    candidates_k: int = 50
    unmatched_statuses: list[str] = field(default_factory=lambda: [Status.UNMATCHED.value])
    cohort_keys: list[str] = field(default_factory=lambda: list(co.DEFAULT_KEYS))
    tau: float = co.DEFAULT_TAU
    seed: int = 0
    cache_dir: str | None = None
    replay: bool = False
    workers: int | None = None
    out: str = "out"
    format: str = "csv"
    min_n: int = est.DEFAULT_MIN_N
    primary_corpus: str | None = None
    breakdown_year: int | None = None
    attribution_sample: int = 10_000
    synth: dict = field(default_factory=dict)

    # fields left out of the echoed config: they never change output bytes
    UNECHOED = ("out", "workers")

    def validate(self) -> "RunConfig":
        for name in ("sim_threshold", "sim_threshold_year"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not 0.0 < v <= 1.0:
                raise ValidationError(f"{name} must lie in (0, 1], got {v!r}")
        if not isinstance(self.candidates_k, int) or self.candidates_k < 1:
            raise ValidationError(f"candidates_k must be an integer >= 1, got {self.candidates_k!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError(f"tau must lie in [0, 1], got {self.tau!r}")
        try:
            est.check_month(self.baseline_end)
        except ValueError as exc:
            raise ValidationError(f"baseline_end: {exc}") from None
        bad = [s for s in self.unmatched_statuses if s not in Status.__members__]
        if bad or not self.unmatched_statuses:
            raise ValidationError(f"unmatched_statuses must name verdict statuses, got {self.unmatched_statuses!r}")
        bad = [k for k in self.cohort_keys if k not in COHORT_KEYS]
        if bad or not self.cohort_keys:
            raise ValidationError(f"cohort_keys must be drawn from {', '.join(COHORT_KEYS)}; got {self.cohort_keys!r}")
        if self.format not in FORMATS:
            raise ValidationError(f"format must be one of {', '.join(FORMATS)}")
        if self.workers is not None and self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.min_n < 0 or self.attribution_sample < 1:
            raise ValidationError("min_n must be >= 0 and attribution_sample >= 1")
        if not isinstance(self.synth, dict):
            raise ValidationError("synth must be an object of generator settings")
        if self.replay and not self.cache_dir:
            raise ValidationError("--replay needs --cache-dir")
        return self

    @property
    def statuses(self) -> frozenset:
        return frozenset(Status(s) for s in self.unmatched_statuses)

    @property
    def match_config(self) -> MatchConfig:
        return MatchConfig(self.sim_threshold, self.sim_threshold_year, k=self.candidates_k)

    @property
    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def echo(self) -> dict:
        """Effective settings; paths under the output dir are written relative to it."""
        d = dataclasses.asdict(self)
        for k in self.UNECHOED:
            d.pop(k, None)
        root = self.out_dir.resolve()

        def rel(p):
            if p is None:
                return None
            try:
                return "$OUT/" + Path(p).resolve().relative_to(root).as_posix()
            except ValueError:
                return p

        for k in ("catalog", "authors", "journals", "cache_dir"):
            d[k] = rel(d[k])
        d["corpus"] = [rel(c) for c in d["corpus"]]
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    out = {}
    for k, v in obj.items():
        key = k.replace("-", "_")
        if key not in _FIELDS:
            raise ValidationError(f"{path}: unknown setting {k!r}")
        out[key] = v
    if isinstance(out.get("corpus"), str):
        out["corpus"] = [out["corpus"]]
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    settings = load_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None and v is not False:
            settings[name] = v
    try:
        cfg = RunConfig(**settings)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    return cfg.validate()


def write_effective_config(cfg: RunConfig) -> None:
    atomic_write_text(cfg.out_dir / "config.json", json.dumps(cfg.echo(), sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# input readers


def _need_file(path, what: str) -> Path:
    if path is None:
        raise ValidationError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise DataError(f"missing input: {what} file {p} does not exist")
    return p


def _need_stage_output(cfg: RunConfig, name: str, producer: str) -> Path:
    p = cfg.out_dir / name
    if not p.is_file():
        raise DataError(f"missing input: {p} not found; run `citeaudit {producer}` first")
    return p


def _jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected an object per line")
            yield lineno, obj


@dataclass
class ParseOutput:
    refs: list[ParsedReference]
    papers: dict[str, est.PaperRecord]
    failures: list[dict]
    by_format: dict[str, int]

    def report(self) -> dict:
        return {"papers": len(self.papers), "references": len(self.refs), "failures": self.failures,
                "by_format": dict(sorted(self.by_format.items()))}


def read_corpus(paths: Sequence[str]) -> ParseOutput:
    """Papers and parsed references from corpus files.

    A line is either a paper (metadata plus ``references``, or ``document``
    with ``format``) or a standalone pre-parsed reference carrying ``index``.
    Structural errors in one paper's bibliography are recorded and that
    paper's references are skipped.
    """
    refs: list[ParsedReference] = []
    papers: dict[str, est.PaperRecord] = {}
    failures: list[dict] = []
    by_format: dict[str, int] = defaultdict(int)
    for path in paths:
        p = _need_file(path, "corpus")
        for lineno, obj in _jsonl(p):
            where = f"{p}:{lineno}"
            try:
                if "references" not in obj and "document" not in obj and "index" in obj:
                    r = preparsed_reference(obj)
                    refs.append(r)
                    by_format[r.raw.source_format.value] += 1
                    continue
                rec = est.PaperRecord.from_json(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{where}: invalid record ({exc})") from None
            if rec.paper_id in papers:
                raise DataError(f"{where}: duplicate paper_id {rec.paper_id!r}")
            papers[rec.paper_id] = rec
            try:
                raws = _raw_references(rec.paper_id, obj)
            except StructuralParseError as exc:
                failures.append({"paper_id": rec.paper_id, "error": str(exc), "offset": exc.offset})
                continue
            except (TypeError, ValueError) as exc:
                raise DataError(f"{where}: invalid references ({exc})") from None
            for raw in raws:
                r = raw if isinstance(raw, ParsedReference) else parse_reference(raw)
                refs.append(r)
                by_format[r.raw.source_format.value] += 1
    refs.sort(key=lambda r: r.key)
    for a, b in zip(refs, refs[1:]):
        if a.key == b.key:
            raise DataError(f"duplicate reference {a.key[0]}#{a.key[1]}")
    return ParseOutput(refs, papers, failures, dict(by_format))


def _raw_references(pid: str, obj: dict) -> list:
    if "document" in obj:
        return extract_bibliography(obj["document"], obj.get("format", "PLAIN"), pid)
    out = []
    for i, item in enumerate(obj.get("references") or []):
        if isinstance(item, dict):
            out.append(preparsed_reference({**item, "paper_id": pid, "index": item.get("index", i)}))
        elif isinstance(item, str) and item.strip():
            out.append(RawReference(pid, i, item, SourceFormat.PLAIN))
    return out


def load_index(cfg: RunConfig) -> TitleIndex:
    p = _need_file(cfg.catalog, "catalog")
    try:
        if is_snapshot(p):
            return load_snapshot(p)
        with open(p, encoding="utf-8") as fh:
            records, _, report = ingest_catalog(fh)
    except (SchemaVersionError, StaleSnapshotError, ValueError) as exc:
        raise DataError(f"{p}: {exc}") from None
    log.info("catalog: %d records accepted, %d malformed", report.accepted, report.malformed)
    return build_index(records)


def load_profiles(path) -> dict[str, AuthorProfile]:
    p = _need_file(path, "authors")
    try:
        with open(p, encoding="utf-8") as fh:
            _, profiles, _ = ingest_catalog([], fh)
    except SchemaVersionError as exc:
        raise DataError(f"{p}: {exc}") from None
    return {a.author_id: a for a in profiles}


def load_papers(cfg: RunConfig) -> dict[str, est.PaperRecord]:
    p = _need_stage_output(cfg, "papers.jsonl", "parse")
    try:
        return {o["paper_id"]: est.PaperRecord.from_json(o) for _, o in _jsonl(p)}
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{p}: invalid paper record ({exc})") from None


def load_verdicts(cfg: RunConfig) -> list[Verdict]:
    p = _need_stage_output(cfg, "verdicts.jsonl", "verify")
    try:
        return [verdict_from_record(o) for _, o in _jsonl(p)]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{p}: invalid verdict record ({exc})") from None


def load_impact(path) -> dict[str, float]:
    p = _need_file(path, "journals")
    try:
        with open(p, encoding="utf-8") as fh:
            obj = json.load(fh)
        return {str(k): float(v) for k, v in obj.items()}
    except (json.JSONDecodeError, AttributeError, TypeError, ValueError) as exc:
        raise DataError(f"{p}: expected an object of journal_id -> impact ({exc})") from None


# ---------------------------------------------------------------------------
# provenance


def _provenance(cfg: RunConfig, stage: str, inputs: dict[str, Path | None], outputs: Sequence[str]) -> None:
    """Hashes tying a stage's tables to its inputs; keyed by role and file name, never by directory."""
    rec = {
        "stage": stage,
        "inputs": {k: sha256_file(v) for k, v in sorted(inputs.items()) if v is not None and Path(v).is_file()},
        "outputs": {name: sha256_file(cfg.out_dir / name) for name in sorted(outputs)
                    if (cfg.out_dir / name).is_file()},
    }
    atomic_write_text(cfg.out_dir / "provenance" / f"{stage}.json", json.dumps(rec, sort_keys=True, indent=1) + "\n")


def _write_json(cfg: RunConfig, name: str, obj) -> str:
    atomic_write_text(cfg.out_dir / name, json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n")
    return name


def _clean(obj):
    """Round floats to 10 significant digits and map non-finite values to null."""
    if isinstance(obj, float):
        return float(f"{obj:.10g}") if np.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _corpus_paths(cfg: RunConfig) -> dict[str, Path]:
    return {f"corpus{i}": Path(c) for i, c in enumerate(cfg.corpus)}


# ---------------------------------------------------------------------------
# stages


def stage_ingest(cfg: RunConfig) -> tuple[TitleIndex, dict]:
    p = _need_file(cfg.catalog, "catalog")
    if is_snapshot(p):
        raise ValidationError(f"{p} is already a snapshot; ingest expects a catalog dump")
    try:
        with open(p, encoding="utf-8") as fh:
            records, _, report = ingest_catalog(fh)
    except SchemaVersionError as exc:
        raise DataError(f"{p}: {exc}") from None
    index = build_index(records)
    save_snapshot(index, cfg.out_dir / "index.cfix")
    summary = {**report.to_json(), "catalog_hash": catalog_hash(records), "tokens": len(index.postings)}
    _write_json(cfg, "ingest_report.json", summary)
    _provenance(cfg, "ingest", {"catalog": p}, ["index.cfix", "ingest_report.json"])
    return index, summary


def stage_parse(cfg: RunConfig) -> ParseOutput:
    if not cfg.corpus:
        raise ValidationError("--corpus is required")
    po = read_corpus(cfg.corpus)
    write_jsonl(cfg.out_dir / "parsed.jsonl", (reference_to_json(r) for r in po.refs))
    write_jsonl(cfg.out_dir / "papers.jsonl", (po.papers[k].to_json() for k in sorted(po.papers)))
    _write_json(cfg, "parse_report.json", po.report())
    if po.failures:
        log.warning("%d papers had malformed bibliographies; see parse_report.json", len(po.failures))
    _provenance(cfg, "parse", _corpus_paths(cfg), ["parsed.jsonl", "papers.jsonl", "parse_report.json"])
    return po


def _ports(cfg: RunConfig) -> Ports:
    if cfg.cache_dir:
        cache = Path(cfg.cache_dir) / "lookup_cache.jsonl"
        return Ports(RuleClassifier(), CachedLookup(None if cfg.replay else NullLookup(), cache, cfg.replay))
    return Ports(RuleClassifier(), NullLookup())


def stage_verify(cfg: RunConfig, refs: Sequence[ParsedReference], index: TitleIndex) -> tuple[list[Verdict], dict]:
    t0 = time.perf_counter()
    verdicts, funnel = verify_corpus(refs, index, _ports(cfg), cfg.match_config, workers=cfg.n_workers)
    log.info("verified %d references in %.1fs", len(verdicts), time.perf_counter() - t0)
    write_jsonl(cfg.out_dir / "verdicts.jsonl", verdict_rows(verdicts))
    fj = funnel.to_json()
    _write_json(cfg, "funnel.json", fj)
    write_csv(cfg.out_dir / "funnel.csv", ["stage", "status", "count", "survival_after_stage"],
              _funnel_rows(fj))
    _provenance(cfg, "verify", {"catalog": Path(cfg.catalog) if cfg.catalog else None,
                                "parsed": cfg.out_dir / "parsed.jsonl"},
                ["verdicts.jsonl", "funnel.json", "funnel.csv"])
    return verdicts, fj


def _funnel_rows(fj: dict) -> list[dict]:
    return [{"stage": STAGE_OF[s], "status": s.value, "count": fj["counts"][s.value],
             "survival_after_stage": fj["survival"][str(STAGE_OF[s])]} for s in Status]


def _by_corpus(verdicts: Sequence[Verdict], papers: dict[str, est.PaperRecord]) -> dict[str, list[Verdict]]:
    out: dict[str, list[Verdict]] = defaultdict(list)
    for v in verdicts:
        rec = papers.get(v.paper_id)
        if rec is None:
            raise DataError(f"verdict for {v.paper_id!r} has no paper record in papers.jsonl")
        out[rec.corpus].append(v)
    return dict(sorted(out.items()))


def _primary(cfg: RunConfig, groups: dict[str, list]) -> str | None:
    if cfg.primary_corpus is not None:
        if cfg.primary_corpus not in groups:
            raise DataError(f"primary corpus {cfg.primary_corpus!r} has no references")
        return cfg.primary_corpus
    if not groups:
        return None
    return max(sorted(groups), key=lambda c: len(groups[c]))


SERIES_COLS = ["corpus", "month", "n_total", "n_unmatched", "rate", "baseline", "excess_rate", "excess_count",
               "low_sample", "p", "q"]
GROUP_COLS = ["corpus", "year", "group", "n_total", "n_unmatched", "baseline", "excess_rate", "excess_count",
              "flagged"]


@dataclass
class CorpusEstimate:
    corpus: str
    series: list[est.MonthlySeries]
    baseline: float | None
    weights: list[est.MixtureWeights]
    annual: dict[int, float]
    note: str | None = None


def estimate_corpus(cfg: RunConfig, corpus: str, verdicts: Sequence[Verdict],
                    papers: dict[str, est.PaperRecord]) -> CorpusEstimate:
    series = est.monthly_series(verdicts, papers, cfg.statuses, cfg.min_n)
    try:
        b = est.baseline_rate(series, cfg.baseline_end)
    except ValueError as exc:
        return CorpusEstimate(corpus, series, None, [], {}, f"no baseline: {exc}")
    filled, annual = est.excess_counts(series, b)
    return CorpusEstimate(corpus, filled, b, est.mixture_weights(filled, b), annual)


def stage_estimate(cfg: RunConfig, verdicts: Sequence[Verdict], papers: dict[str, est.PaperRecord]) -> dict:
    groups = _by_corpus(verdicts, papers)
    primary = _primary(cfg, groups)
    estimates = {c: estimate_corpus(cfg, c, vs, papers) for c, vs in groups.items()}

    series_rows, annual_rows, reg_rows, share_rows, field_rows = [], [], [], [], []
    regressions: dict = {}
    summary: dict = {"primary_corpus": primary, "baseline_end": cfg.baseline_end,
                     "unmatched_statuses": sorted(cfg.unmatched_statuses), "corpora": {}}
    for c, ce in estimates.items():
        w = {x.month: x for x in ce.weights}
        for s in ce.series:
            row = dataclasses.asdict(s)
            row.update(corpus=c, p=w[s.month].p if s.month in w else None, q=w[s.month].q if s.month in w else None)
            series_rows.append(row)
        info = {"baseline": ce.baseline, "n_references": sum(s.n_total for s in ce.series),
                "n_unmatched": sum(s.n_unmatched for s in ce.series), "months": len(ce.series), "note": ce.note}
        for y, e in ce.annual.items():
            annual_rows.append({"corpus": c, "year": y, "excess_count": e})
        if ce.baseline is not None:
            vs = groups[c]
            reg = est.rate_regression(vs, papers, cfg.baseline_end, cfg.statuses)
            reg_rows += [dict(r, corpus=c) for r in reg.rows()]
            info["regression_center"] = reg.center
            info["regression_fields"] = reg.fields
            regressions[c] = dict(reg.result.to_json(), center=reg.center, window_end=cfg.baseline_end,
                                  months=reg.rows())
            dist = est.paper_share_distribution(vs, papers, unmatched_statuses=cfg.statuses)
            for per in dist.periods:
                for lab in dist.labels:
                    share_rows.append({"corpus": c, "period": per, "bin": lab, "fraction": dist.fractions[per][lab],
                                       "n_papers": dist.n_papers[per]})
            info["share_delta_pp"] = dist.delta_pp
            year = cfg.breakdown_year or est.month_year(ce.series[-1].month)
            for g in est.field_breakdown(vs, papers, year, cfg.baseline_end, cfg.min_n, cfg.statuses):
                field_rows.append(dict(dataclasses.asdict(g), corpus=c, year=year))
        summary["corpora"][c] = info
    for y, e in est.combine_annual({c: ce.annual for c, ce in estimates.items()}).items():
        annual_rows.append({"corpus": "all", "year": y, "excess_count": e})
    summary["llm_use"], llm_rows = _llm_use(cfg, verdicts, papers)

    write_csv(cfg.out_dir / "monthly_series.csv", SERIES_COLS, series_rows)
    write_csv(cfg.out_dir / "annual_excess.csv", ["corpus", "year", "excess_count"], annual_rows)
    write_csv(cfg.out_dir / "rate_regression.csv", ["corpus", "month", "delta", "stderr"], reg_rows)
    write_csv(cfg.out_dir / "paper_share.csv", ["corpus", "period", "bin", "fraction", "n_papers"], share_rows)
    write_csv(cfg.out_dir / "field_breakdown.csv", GROUP_COLS, field_rows)
    write_csv(cfg.out_dir / "llm_use_units.csv", ["level", "unit", "rate", "llm_use_score"], llm_rows)
    _write_json(cfg, "regression.json", {"primary_corpus": primary, "corpora": regressions})
    _write_json(cfg, "estimate.json", summary)
    outs = ["monthly_series.csv", "annual_excess.csv", "rate_regression.csv", "paper_share.csv",
            "field_breakdown.csv", "llm_use_units.csv", "regression.json", "estimate.json"]
    _provenance(cfg, "estimate", {"verdicts": cfg.out_dir / "verdicts.jsonl", "papers": cfg.out_dir / "papers.jsonl"},
                outs)
    summary["_estimates"] = estimates
    return summary


def _llm_use(cfg: RunConfig, verdicts, papers) -> tuple[dict, list[dict]]:
    """Correlation summary per unit level, plus the plotted unit rows."""
    if not any(p.llm_use_score is not None for p in papers.values()):
        return {"note": "no llm_use_score values"}, []
    out, rows = {}, []
    for level in ("subfield", "paper"):
        units = est.llm_use_units(verdicts, papers, level, cfg.baseline_end, cfg.statuses)
        rows += [{"level": level, "unit": u, "rate": r, "llm_use_score": sc} for u, r, sc in units]
        try:
            r, pv = est.correlate_llm_use([(u[1], u[2]) for u in units])
            out[level] = {"r": r, "p_value": pv, "n_units": len(units)}
        except ValueError as exc:
            out[level] = {"r": None, "p_value": None, "n_units": len(units), "note": str(exc)}
    return out, rows


# cohort ---------------------------------------------------------------------


def _sample(items: list, k: int, rng: np.random.Generator) -> list:
    if len(items) <= k:
        return items
    keep = np.sort(rng.choice(len(items), size=k, replace=False))
    return [items[int(i)] for i in keep]


def _attribute(refs: Sequence[Verdict], papers, directory, embedder, tau: float, cache: dict) -> list[co.Attribution]:
    out = []
    for v in refs:
        pid = v.paper_id
        vec = cache.get(pid)
        if vec is None:
            p = papers[pid]
            vec = cache[pid] = embedder.embed_text(" ".join(x for x in (p.title, p.abstract) if x))
        out.extend(co.attribute_cited_authors(v.reference, vec, directory, embedder, tau))
    return out


def stage_cohort(cfg: RunConfig, verdicts: Sequence[Verdict], papers: dict[str, est.PaperRecord],
                 profiles: dict[str, AuthorProfile] | None, impact: dict[str, float] | None) -> dict:
    groups = _by_corpus(verdicts, papers)
    primary = _primary(cfg, groups)
    summary: dict = {"primary_corpus": primary}
    outs: list[str] = []
    rng = np.random.default_rng(cfg.seed)

    # team size per corpus with a baseline window
    team_rows = []
    for c, vs in groups.items():
        if not any(papers[v.paper_id].month <= cfg.baseline_end for v in vs):
            continue
        for t in co.teamsize_rates(vs, papers, cfg.baseline_end, unmatched_statuses=cfg.statuses, min_n=cfg.min_n):
            team_rows.append(dict(dataclasses.asdict(t), corpus=c))
    write_csv(cfg.out_dir / "teamsize.csv", ["corpus", "bucket", "excess_rate", "normalized", "n_total", "flagged"],
              team_rows)
    outs.append("teamsize.csv")
    summary["teamsize"] = team_rows

    lk = co.screening_leakage(verdicts, papers, cfg.statuses)
    write_csv(cfg.out_dir / "leakage.csv", ["statistic", "group", "value", "n"], lk.rows())
    outs.append("leakage.csv")
    summary["leakage"] = dataclasses.asdict(lk)

    links = {p.paper_id: p.published_link for p in papers.values() if p.published_link}
    if links:
        pers = co.persistence(verdicts, verdicts, links, cfg.statuses)
        summary["persistence"] = dataclasses.asdict(pers)
        write_csv(cfg.out_dir / "persistence.csv", ["statistic", "value"],
                  [{"statistic": k, "value": v} for k, v in dataclasses.asdict(pers).items()])
        outs.append("persistence.csv")

    if impact:
        try:
            rows = co.journal_decile_rates(verdicts, papers, impact, cfg.baseline_end,
                                           unmatched_statuses=cfg.statuses)
            write_csv(cfg.out_dir / "journal_deciles.csv", GROUP_COLS[2:], [dataclasses.asdict(g) for g in rows])
            outs.append("journal_deciles.csv")
        except ValueError as exc:
            summary["journal_deciles_note"] = str(exc)

    if primary is not None and profiles is not None:
        summary.update(_cohort_primary(cfg, groups[primary], papers, profiles, rng, outs))

    _write_json(cfg, "cohort.json", summary)
    outs.append("cohort.json")
    inputs = {"verdicts": cfg.out_dir / "verdicts.jsonl", "papers": cfg.out_dir / "papers.jsonl",
              "authors": Path(cfg.authors) if cfg.authors else None,
              "journals": Path(cfg.journals) if cfg.journals else None}
    _provenance(cfg, "cohort", inputs, outs)
    return summary


def _cohort_primary(cfg: RunConfig, verdicts: Sequence[Verdict], papers, profiles, rng, outs: list[str]) -> dict:
    out: dict = {}
    post = [v for v in verdicts if papers[v.paper_id].month > cfg.baseline_end]
    treated, pool = co.split_treated(post, papers, cfg.statuses)
    if not treated or not pool:
        out["cohort_note"] = "no treated papers or no control pool after the baseline window"
        return out
    ref_counts = {pid: n for pid, (n, _) in est.per_paper_counts(post, papers, cfg.statuses).items()}
    mr = co.match_controls(treated, pool, cfg.cohort_keys, seed=cfg.seed, ref_counts=ref_counts)
    write_csv(cfg.out_dir / "cohort_pairs.csv", ["treated", "control", "key_values", "with_replacement"],
              [{"treated": p.treated, "control": p.control, "key_values": "|".join(map(str, p.key_values)),
                "with_replacement": p.with_replacement} for p in mr.pairs])
    outs.append("cohort_pairs.csv")
    out["matching"] = {"treated": len(treated), "pairs": len(mr.pairs), "unmatched_treated": len(mr.unmatched_treated),
                       "with_replacement": mr.n_with_replacement, "keys": list(cfg.cohort_keys)}

    gap = co.citer_productivity(mr.pairs, papers, profiles)
    write_csv(cfg.out_dir / "citer_productivity.csv", ["statistic", "group", "value", "n"], gap.rows())
    outs.append("citer_productivity.csv")
    out["citer_productivity"] = dataclasses.asdict(gap)

    treated_ids = {p.treated for p in mr.pairs}
    control_ids = {p.control for p in mr.pairs}
    hall, cocited, control = [], [], []
    for v in post:
        if not v.reference.authors:
            continue
        if v.paper_id in treated_ids:
            if v.status in cfg.statuses:
                hall.append(v)
            elif v.status in MATCHED_STATUSES:
                cocited.append(v)
        elif v.paper_id in control_ids and v.status in MATCHED_STATUSES:
            control.append(v)
    k = cfg.attribution_sample
    hall, cocited, control = _sample(hall, k, rng), _sample(cocited, k, rng), _sample(control, k, rng)
    if not hall or not control:
        out["beneficiary_note"] = "no attributable references"
        return out
    directory = co.AuthorDirectory(profiles.values())
    embedder = co.TfIdfEmbedder(profiles.values())
    cache: dict = {}
    a_h = _attribute(hall, papers, directory, embedder, cfg.tau, cache)
    a_k = _attribute(cocited, papers, directory, embedder, cfg.tau, cache)
    a_c = _attribute(control, papers, directory, embedder, cfg.tau, cache)
    rows = co.beneficiary_stats(a_h, a_c, profiles).rows("hallucinated_vs_control")
    if a_k:
        rows += co.beneficiary_stats(a_k, a_c, profiles).rows("cocited_vs_control")
    write_csv(cfg.out_dir / "beneficiary.csv",
              ["statistic", "group", "value", "stderr", "hallucinated", "control", "n", "unit"], rows)
    outs.append("beneficiary.csv")
    out["attributions"] = {"hallucinated": len(a_h), "cocited": len(a_k), "control": len(a_c), "tau": cfg.tau}

    reg = _mixture(cfg, hall + cocited + control, a_h + a_k + a_c, verdicts, papers, profiles)
    if reg is not None:
        out["mixture_regression"] = reg
    return out


def _mixture(cfg, refs, attrs, verdicts, papers, profiles) -> dict | None:
    """log1p(first resolved author's prior output) on field and month indicators plus p and q."""
    series = est.monthly_series(verdicts, papers, cfg.statuses, cfg.min_n)
    try:
        b = est.baseline_rate(series, cfg.baseline_end)
    except ValueError:
        return None
    weights = est.mixture_weights(series, b)
    first: dict[tuple, str] = {}
    for a in sorted(attrs, key=lambda a: (a.reference.key, a.position)):
        if a.resolved_author is not None:
            first.setdefault(a.reference.key, a.resolved_author)
    units = sorted({v.reference.key: v for v in refs if v.reference.key in first}.values(), key=lambda v: v.reference.key)
    if len(units) < 10:
        return None
    months = [papers[v.paper_id].month for v in units]
    p, q = co.reference_pq(months, [v.status in cfg.statuses for v in units], weights)
    y = [float(np.log1p(profiles[first[v.reference.key]].n_pubs_pre_cutoff)) for v in units]
    try:
        res = co.mixture_regression(y, [papers[v.paper_id].field for v in units], months, p, q)
    except ValueError as exc:
        return {"note": str(exc)}
    d, se = co.contrast(res, "p", "q")
    return {"n": len(units), "coef_p": res.coef("p"), "se_p": res.se("p"), "coef_q": res.coef("q"),
            "se_q": res.se("q"), "contrast_p_minus_q": d, "contrast_se": se, "dropped": res.dropped}


# report ---------------------------------------------------------------------

REPORT_TABLES = ("funnel.csv", "monthly_series.csv", "annual_excess.csv", "rate_regression.csv", "paper_share.csv",
                 "field_breakdown.csv", "teamsize.csv", "citer_productivity.csv", "beneficiary.csv", "leakage.csv",
                 "persistence.csv", "journal_deciles.csv", "llm_use_units.csv", "recovery.csv")
REPORT_SUMMARIES = ("ingest_report.json", "parse_report.json", "funnel.json", "estimate.json", "regression.json",
                    "cohort.json", "recovery.json")


def stage_report(cfg: RunConfig) -> dict:
    """Join existing stage outputs into one report and render figures; nothing is recomputed."""
    from . import plotting  # matplotlib is only needed here

    d = cfg.out_dir
    tables = {name[:-4]: read_csv(d / name) for name in REPORT_TABLES if (d / name).is_file()}
    summaries = {}
    for name in REPORT_SUMMARIES:
        if (d / name).is_file():
            with open(d / name, encoding="utf-8") as fh:
                summaries[name[:-5]] = json.load(fh)
    if not tables:
        raise DataError(f"missing input: no stage tables in {d}; run `citeaudit estimate` first")
    primary = (summaries.get("estimate") or summaries.get("cohort") or {}).get("primary_corpus")

    figures = {}
    for key, (fname, fn) in plotting.FIGURES.items():
        rows = tables.get(key)
        if not rows:
            continue
        if key == "annual_excess":
            rows = [r for r in rows if r["corpus"] == "all"]
        elif key in ("rate_regression", "paper_share", "field_breakdown", "teamsize") and primary:
            rows = [r for r in rows if r.get("corpus") == primary]
        if rows:
            fn(rows, d / "figures" / fname)
            figures[fname] = f"figures/{fname}"

    if cfg.format == "csv":
        report_name = "report.txt"
        parts = []
        for name, rows in tables.items():
            with open(d / f"{name}.csv", encoding="utf-8") as fh:
                parts.append(f"### {name}\n{fh.read()}")
        atomic_write_text(d / report_name, "\n".join(parts))
    else:
        report_name = "report.json"
        _write_json(cfg, report_name, {"tables": tables, "summaries": summaries, "figures": figures})

    provenance = {}
    for f in sorted((d / "provenance").glob("*.json")) if (d / "provenance").is_dir() else []:
        with open(f, encoding="utf-8") as fh:
            provenance[f.stem] = json.load(fh)
    manifest = {
        "report": {report_name: sha256_file(d / report_name)},
        "tables": {f"{n}.csv": sha256_file(d / f"{n}.csv") for n in tables},
        "summaries": {f"{n}.json": sha256_file(d / f"{n}.json") for n in summaries},
        "figures": {p: sha256_file(d / p) for p in figures.values()},
        "stages": provenance,
    }
    _write_json(cfg, "manifest.json", manifest)
    return manifest


# check ----------------------------------------------------------------------


def _synth_config(cfg: RunConfig) -> SynthConfig:
    try:
        return SynthConfig.from_json({**cfg.synth, "seed": cfg.seed})
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"synth settings: {exc}") from None


def stage_synth(cfg: RunConfig, out_dir: Path | None = None):
    sc = _synth_config(cfg)
    t0 = time.perf_counter()
    out = generate(sc)
    paths = write_synth(out, out_dir or cfg.out_dir)
    log.info("synthetic corpus: %d papers, %d references in %.1fs", len(out.papers),
             sum(len(p.references) for p in out.papers), time.perf_counter() - t0)
    return out, paths


def stage_check(cfg: RunConfig) -> tuple[bool, dict]:
    """Generate, run every stage, and compare estimates with the planted values."""
    t0 = time.perf_counter()
    synth_dir = cfg.out_dir / "synth"
    out, paths = stage_synth(cfg, synth_dir)
    sc = out.config
    statuses = sorted(set(cfg.unmatched_statuses) | {Status.UNMATCHED.value, Status.CITATION_ONLY.value})
    run = dataclasses.replace(cfg, catalog=str(paths["catalog"]), corpus=[str(paths["corpus"])],
                              authors=str(paths["authors"]), journals=str(paths["journals"]),
                              baseline_end=sc.baseline_end, unmatched_statuses=statuses, primary_corpus="pre").validate()
    write_effective_config(run)
    index, _ = stage_ingest(run)
    po = stage_parse(run)
    verdicts, _ = stage_verify(run, po.refs, index)
    summary = stage_estimate(run, verdicts, po.papers)
    cs = stage_cohort(run, verdicts, po.papers, load_profiles(run.authors), load_impact(run.journals))

    pre = summary["_estimates"]["pre"]
    if pre.baseline is None:
        raise DataError("synthetic primary corpus has no baseline window")
    post = [s for s in pre.series if s.month in out.truth.planted["schedule"]]
    conf = confusion_matrix(out.truth.rows, {v.reference.key: v.status for v in verdicts})
    extras = {"leakage": cs["leakage"]["leakage"], "rate_ratio": cs["leakage"]["ratio"],
              "persistence": (cs.get("persistence") or {}).get("share")}
    team = {r["bucket"]: r["normalized"] for r in cs["teamsize"] if r["corpus"] == "pre"}
    extras["team_ratio_solo_vs_large"] = (team["1"] / team["10+"]) if team.get("1") and team.get("10+") else None
    fb = {g.group: g.excess_rate for g in est.field_breakdown(
        [v for v in verdicts if po.papers[v.paper_id].corpus == "pre"], po.papers,
        est.month_year(sc.months[-1]), run.baseline_end, run.min_n, run.statuses)}
    rates = sorted((fb[f] for f in sc.fields if fb.get(f) is not None), reverse=True)
    extras["field_ratio"] = rates[0] / rates[-1] if len(rates) >= 2 and rates[-1] else None

    rep = evaluate_recovery(out.truth.planted, post, pre.baseline, conf, extras, Tolerances())
    elapsed = time.perf_counter() - t0
    body = rep.to_json()
    body["elapsed_seconds"] = round(elapsed, 1)
    _write_json(cfg, "recovery.json", {k: v for k, v in body.items() if k != "elapsed_seconds"})
    write_csv(cfg.out_dir / "recovery.csv", ["name", "value", "target", "tolerance", "passed"],
              [c.to_json() for c in rep.checks])
    _provenance(run, "check", {"synth_config": paths["synth_config"], "truth": paths["truth"]},
                ["recovery.json", "recovery.csv"])
    return rep.passed, body


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("inputs")
    g.add_argument("--catalog", help="catalog dump (JSONL) or index snapshot")
    g.add_argument("--corpus", action="append", help="corpus file (JSONL); repeatable")
    g.add_argument("--authors", help="author dump (JSONL)")
    g.add_argument("--journals", help="journal impact file (JSON object)")
    g.add_argument("--config", help="JSON config file; flags override its values")
    g = p.add_argument_group("settings")
    g.add_argument("--baseline-end", dest="baseline_end", metavar="YYYY-MM")
    g.add_argument("--sim-threshold", dest="sim_threshold", type=float)
    g.add_argument("--sim-threshold-year", dest="sim_threshold_year", type=float)
    g.add_argument("--candidates-k", dest="candidates_k", type=int)
    g.add_argument("--tau", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--cache-dir", dest="cache_dir")
    g.add_argument("--replay", action="store_true", default=None, help="serve external lookups from the cache only")
    g.add_argument("--workers", type=int)
    g.add_argument("--out", help="output directory (default: out)")
    g.add_argument("--format", choices=FORMATS)
    g.add_argument("-v", "--verbose", action="store_true")


COMMANDS = {
    "ingest": "catalog dump -> index snapshot",
    "parse": "corpus documents -> parsed references",
    "verify": "parsed references + catalog -> verdicts and funnel report",
    "estimate": "verdicts -> monthly rates, baseline, excess, regression and breakdowns",
    "cohort": "verdicts + author profiles -> matched cohorts, attribution and systemic tables",
    "synth": "generate a synthetic corpus with planted ground truth",
    "check": "synthetic corpus through the full pipeline, compared with the planted values",
    "report": "join stage tables into one report with figures and a hash manifest",
}


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="citeaudit", description="Reference verification and unmatched-rate estimation.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, help_ in COMMANDS.items():
        _add_common(sub.add_parser(name, help=help_, description=help_))
    return parser


def run(cfg: RunConfig, command: str) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if command != "report":
        write_effective_config(cfg)
    if command == "ingest":
        _, s = stage_ingest(cfg)
        print(f"ingested {s['accepted']} records ({s['malformed']} malformed, {s['rejected']} duplicate)")
    elif command == "parse":
        po = stage_parse(cfg)
        print(f"parsed {len(po.refs)} references from {len(po.papers)} papers")
    elif command == "verify":
        index = load_index(cfg)
        if cfg.corpus:
            refs = stage_parse(cfg).refs
        else:
            p = _need_stage_output(cfg, "parsed.jsonl", "parse")
            try:
                refs = [reference_from_json(o) for _, o in _jsonl(p)]
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{p}: invalid reference record ({exc})") from None
        verdicts, fj = stage_verify(cfg, refs, index)
        print(f"verified {fj['total']} references: " + ", ".join(f"{k}={v}" for k, v in fj["counts"].items()))
    elif command == "estimate":
        verdicts = load_verdicts(cfg)
        s = stage_estimate(cfg, verdicts, load_papers(cfg))
        for c, info in s["corpora"].items():
            b = info["baseline"]
            print(f"{c}: {info['n_references']} references, baseline "
                  + ("n/a" if b is None else f"{100 * b:.3f}%"))
    elif command == "cohort":
        verdicts = load_verdicts(cfg)
        papers = load_papers(cfg)
        profiles = load_profiles(cfg.authors) if cfg.authors else None
        if profiles is None:
            log.warning("no --authors given; attribution and citer productivity are skipped")
        impact = load_impact(cfg.journals) if cfg.journals else None
        s = stage_cohort(cfg, verdicts, papers, profiles, impact)
        print(f"cohort tables written for primary corpus {s['primary_corpus']}")
    elif command == "synth":
        out, paths = stage_synth(cfg)
        print(f"wrote {len(out.papers)} papers to {paths['corpus']}")
    elif command == "check":
        passed, body = stage_check(cfg)
        for c in body["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: value={c['value']} "
                  f"target={c['target']} tolerance={c['tolerance']}")
        print(f"check {'passed' if passed else 'FAILED'} in {body['elapsed_seconds']}s")
        return EXIT_OK if passed else EXIT_TOLERANCE
    elif command == "report":
        m = stage_report(cfg)
        print(f"report with {len(m['tables'])} tables and {len(m['figures'])} figures in {cfg.out_dir}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        return run(cfg, args.command)
    except ValidationError as exc:
        print(f"citeaudit: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DataError as exc:
        print(f"citeaudit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
