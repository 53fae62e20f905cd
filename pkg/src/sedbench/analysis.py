"""Comparison artifacts built from score reports and score tables:
suite-to-suite differences, tag-grouped means, per-bin breakdowns and the
precision/recall export."""

from __future__ import annotations

import csv
import io
import math
import os
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .metrics import (
    AnnotationSet,
    EventAnnotation,
    MetricConfig,
    ScoreReport,
    evaluate,
    match_events,
)
from .suites import GRID_CELLS, ONSET_WINDOWS, SUITE_NAMES
from . import svg

# Score columns a table may carry: every suite plus the recorded official set.
EVAL_COLUMN = "eval2020"
SCORE_COLUMNS = (EVAL_COLUMN, *SUITE_NAMES)

DEFAULT_DURATION_EDGES = (0.0, 1.0, 3.0, 5.0, 10.0)
DEFAULT_ONSET_EDGES = (0.0, 2.5, 5.0, 7.5, 10.0)
EVENT_FACTORS = ("duration", "onset")
SUITE_FACTORS = ("onset-window", "tntsnr", "reverb")


class SchemaError(ValueError):
    pass


class BreakdownError(ValueError):
    pass


@dataclass
class ScoreRow:
    system: str
    tags: dict[str, str] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)


@dataclass
class SystemScoreTable:
    rows: list[ScoreRow]
    tag_columns: list[str]
    score_columns: list[str]

    def row(self, system: str) -> ScoreRow:
        for r in self.rows:
            if r.system == system:
                return r
        raise KeyError(system)


def _write_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def read_score_table(path: str | os.PathLike) -> SystemScoreTable:
    """Parse ``system,<tags...>,<suites...>`` CSV. Lines starting with ``#``
    are comments. Columns named after a known suite (or ``eval2020``) are
    scores; the others are tags."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.lstrip().startswith("#") and ln.strip()]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{path}: empty table") from None
    if not header or header[0] != "system":
        raise SchemaError(f"{path}: first column must be 'system'")
    score_cols = [h for h in header[1:] if h in SCORE_COLUMNS]
    tag_cols = [h for h in header[1:] if h not in SCORE_COLUMNS]
    if not score_cols:
        raise SchemaError(f"{path}: no score columns (expected some of {', '.join(SCORE_COLUMNS)})")
    rows = []
    for lineno, values in enumerate(reader, start=2):
        if len(values) != len(header):
            raise SchemaError(f"{path}: row {lineno} has {len(values)} fields, header has {len(header)}")
        rec = dict(zip(header, (v.strip() for v in values)))
        row = ScoreRow(rec["system"], {t: rec[t] for t in tag_cols})
        for col in score_cols:
            if rec[col] == "":
                continue
            try:
                value = float(rec[col])
            except ValueError:
                raise SchemaError(f"{path}: row {lineno} column {col}: not a number: {rec[col]!r}") from None
            if not 0.0 <= value <= 100.0:
                raise SchemaError(f"{path}: row {lineno} column {col}: score {value} outside [0, 100]")
            row.scores[col] = value
        rows.append(row)
    return SystemScoreTable(rows, tag_cols, score_cols)


def diff_table(table: SystemScoreTable, suite_a: str, suite_b: str) -> list[tuple[str, float, float, float]]:
    """Rows ``(system, a, b, b - a)``; the difference is rounded to one decimal."""
    out = []
    for row in table.rows:
        for suite in (suite_a, suite_b):
            if suite not in row.scores:
                raise SchemaError(f"system {row.system!r} has no score for suite {suite!r}")
        a, b = row.scores[suite_a], row.scores[suite_b]
        out.append((row.system, a, b, round(b - a, 1)))
    return out


def diff_csv(rows, suite_a: str, suite_b: str) -> str:
    return _write_csv(
        ["system", suite_a, suite_b, f"{suite_b}-{suite_a}"],
        [(s, a, b, f"{d:.1f}") for s, a, b, d in rows],
    )


def group_mean(table: SystemScoreTable, group_key: str | Sequence[str]) -> dict[tuple, dict[str, float]]:
    """Unweighted mean of every score column per group of tag values."""
    keys = (group_key,) if isinstance(group_key, str) else tuple(group_key)
    groups: dict[tuple, list[ScoreRow]] = defaultdict(list)
    for row in table.rows:
        missing = [k for k in keys if k not in row.tags]
        if missing:
            raise SchemaError(f"system {row.system!r} has no tag {missing[0]!r}")
        groups[tuple(row.tags[k] for k in keys)].append(row)
    if not groups:
        raise SchemaError("empty group: table has no rows")
    result = {}
    for gk in sorted(groups):
        members = groups[gk]
        means = {}
        for col in table.score_columns:
            values = [r.scores[col] for r in members if col in r.scores]
            if values:
                means[col] = math.fsum(values) / len(values)
        result[gk] = means
    return result


def group_csv(groups: Mapping[tuple, Mapping[str, float]], keys: Sequence[str], columns: Sequence[str]) -> str:
    rows = []
    for gk, means in groups.items():
        rows.append([*gk, *(repr(means[c]) if c in means else "" for c in columns)])
    return _write_csv([*keys, *columns], rows)


# ---------------------------------------------------------------------------
# Per-event breakdowns


@dataclass(frozen=True)
class BreakdownSpec:
    factor: str
    edges: tuple[float, ...] = ()

    def __post_init__(self):
        if self.factor not in EVENT_FACTORS:
            raise BreakdownError(f"per-event factor must be one of {EVENT_FACTORS}, got {self.factor!r}")
        edges = tuple(float(e) for e in self.edges) or (
            DEFAULT_DURATION_EDGES if self.factor == "duration" else DEFAULT_ONSET_EDGES
        )
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise BreakdownError(f"bin edges must be strictly increasing: {edges}")
        object.__setattr__(self, "edges", edges)

    def value(self, ev: EventAnnotation) -> float:
        return ev.duration if self.factor == "duration" else ev.onset

    def labels(self) -> list[str]:
        e = self.edges
        out = [f"[{a:g},{b:g})" for a, b in zip(e[:-2], e[1:-1])]
        out.append(f"[{e[-2]:g},{e[-1]:g}]")
        return out

    def bin_of(self, value: float) -> int:
        """Half-open bins, the last one closed on the right."""
        e = self.edges
        if value == e[-1]:
            return len(e) - 2
        if value < e[0] or value > e[-1]:
            raise BreakdownError(f"value {value} outside all bins {e}")
        return bisect_right(e, value) - 1

    def clamped_bin(self, value: float) -> int:
        return self.bin_of(min(max(value, self.edges[0]), self.edges[-1]))


def _attribute_estimates(refs, ests, ref_bins, spec: BreakdownSpec, cfg) -> list[int]:
    """Bin of each estimate: its matched reference's bin; otherwise the bin of
    the nearest-onset reference of the same class in the clip, then of any
    class; with no reference in the clip, its own factor value (clamped)."""
    bins = [-1] * len(ests)
    for i, j in match_events(refs, ests, cfg):
        bins[j] = ref_bins[i]
    for j, est in enumerate(ests):
        if bins[j] >= 0:
            continue
        candidates = [i for i, r in enumerate(refs) if r.label == est.label] or list(range(len(refs)))
        if candidates:
            nearest = min(candidates, key=lambda i: (abs(refs[i].onset - est.onset), i))
            bins[j] = ref_bins[nearest]
        else:
            bins[j] = spec.clamped_bin(spec.value(est))
    return bins


def breakdown(
    reference: AnnotationSet,
    estimate: AnnotationSet,
    cfg: MetricConfig,
    spec: BreakdownSpec,
    vocabulary: Sequence[str] | None = None,
) -> list[tuple[str, ScoreReport]]:
    """One report per bin of the reference events' duration or onset.

    Bins partition both sides, so per-bin counts sum to the global counts.
    """
    per_bin_refs = defaultdict(list)
    per_bin_ests = defaultdict(list)
    for clip in reference.roster:
        refs = reference.events(clip)
        ests = estimate.events(clip)
        ref_bins = [spec.bin_of(spec.value(r)) for r in refs]
        for r, b in zip(refs, ref_bins):
            per_bin_refs[b].append(r)
        for e, b in zip(ests, _attribute_estimates(refs, ests, ref_bins, spec, cfg)):
            per_bin_ests[b].append(e)
    vocab = list(vocabulary) if vocabulary is not None else sorted(reference.labels())
    roster = reference.roster
    return [
        (label, evaluate(AnnotationSet(per_bin_refs[b], roster), AnnotationSet(per_bin_ests[b], roster), cfg, vocab))
        for b, label in enumerate(spec.labels())
    ]


def breakdown_csv(per_system: Mapping[str, list[tuple[str, ScoreReport]]], factor: str) -> str:
    rows = []
    for system, bins in per_system.items():
        for label, rep in bins:
            tot = rep.totals()
            rows.append([system, label, tot.tp, tot.fp, tot.fn, f"{rep.macro_f1:.2f}"])
    return _write_csv(["system", factor, "tp", "fp", "fn", "macro_f1"], rows)


def breakdown_svg(per_system: Mapping[str, list[tuple[str, ScoreReport]]], factor: str) -> str:
    systems = list(per_system)
    categories = [label for label, _ in per_system[systems[0]]] if systems else []
    series = {s: [rep.macro_f1 for _, rep in per_system[s]] for s in systems}
    return svg.grouped_bars(categories, series, f"F-score by {factor}", factor, "F-score (%)")


# ---------------------------------------------------------------------------
# Suite-level factors (each factor level is its own suite)


def suite_factor_levels(factor: str) -> list[tuple[str, str]]:
    """``(level label, suite name)`` pairs for a suite-level factor.

    TNTSNR levels are read without reverberation and reverberation levels
    without non-target events, so only one factor moves at a time.
    """
    if factor == "onset-window":
        return [(name, name) for name in ONSET_WINDOWS]
    if factor == "tntsnr":
        return [(c.name.split("_")[1], c.name) for c in GRID_CELLS if c.reverb.value == "none"]
    if factor == "reverb":
        return [(c.reverb.suite_tag, c.name) for c in GRID_CELLS if math.isinf(c.tntsnr)]
    raise BreakdownError(f"suite-level factor must be one of {SUITE_FACTORS}, got {factor!r}")


def suite_breakdown(reports: Mapping[str, Mapping[str, ScoreReport]], factor: str) -> list[tuple[str, str, float]]:
    """Rows ``(system, level, macro F)`` from per-system, per-suite reports."""
    rows = []
    for system, by_suite in reports.items():
        for level, suite in suite_factor_levels(factor):
            if suite not in by_suite:
                raise SchemaError(f"system {system!r} has no report for suite {suite!r}")
            rows.append((system, level, by_suite[suite].macro_f1))
    return rows


def suite_breakdown_csv(rows, factor: str) -> str:
    return _write_csv(["system", factor, "macro_f1"], [(s, lvl, f"{f:.2f}") for s, lvl, f in rows])


def suite_breakdown_svg(rows, factor: str) -> str:
    levels = list(dict.fromkeys(lvl for _, lvl, _ in rows))
    series: dict[str, list[float]] = defaultdict(list)
    for system, _, f in rows:
        series[system].append(f)
    return svg.grouped_bars(levels, dict(series), f"F-score by {factor}", factor, "F-score (%)")


# ---------------------------------------------------------------------------
# Precision / recall


def precision_recall_points(reports: Mapping[str, ScoreReport]) -> list[tuple[str, float, float]]:
    if not reports:
        raise SchemaError("no reports to export")
    return [(name, rep.macro_precision, rep.macro_recall) for name, rep in reports.items()]


def precision_recall_csv(points) -> str:
    return _write_csv(["system", "precision", "recall"], [(n, repr(p), repr(r)) for n, p, r in points])


def read_precision_recall_csv(text: str) -> list[tuple[str, float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["system", "precision", "recall"]:
        raise SchemaError(f"unexpected header {header}")
    return [(n, float(p), float(r)) for n, p, r in reader]


def precision_recall_svg(points) -> str:
    return svg.scatter(points, "Precision and recall", "Recall (%)", "Precision (%)")


def precision_recall_export(reports: Mapping[str, ScoreReport], out_dir: str | os.PathLike, stem: str = "precision_recall"):
    """Write ``<stem>.csv`` and ``<stem>.svg``; the CSV is the canonical output."""
    points = precision_recall_points(reports)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    svg_path = os.path.join(out_dir, f"{stem}.svg")
    with open(csv_path, "w", newline="") as fh:
        fh.write(precision_recall_csv(points))
    with open(svg_path, "w") as fh:
        fh.write(precision_recall_svg([(n, r, p) for n, p, r in points]))
    return csv_path, svg_path
