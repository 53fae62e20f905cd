"""Collar-based event F-score.

A predicted event matches a reference event when the labels agree, the
onsets differ by at most the onset collar, and the offsets differ by at most
``max(offset_collar_min, offset_collar_pct * reference_length)``. Per class
and clip, references and predictions are paired by a maximum-cardinality
bipartite matching; counts are summed over clips, turned into per-class
precision/recall/F (percent) and averaged without weighting into macro F.

Boundary comparisons use the decimal value of each time as written (the
shortest repr of the float), so ``1.2 - 1.0 <= 0.2`` holds as it reads.
"""

from __future__ import annotations

import io
import json
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from functools import lru_cache
from typing import Iterable, Mapping, Sequence


class AnnotationError(ValueError):
    """Malformed annotation input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)
        self.line = line


@lru_cache(maxsize=65536)
def _dec(x: float) -> Decimal:
    return Decimal(repr(float(x)))


@dataclass(frozen=True)
class EventAnnotation:
    clip_id: str
    label: str
    onset: float
    offset: float

    def __post_init__(self):
        if not (math.isfinite(self.onset) and math.isfinite(self.offset)):
            raise AnnotationError(f"non-finite time in {self}")
        if self.onset < 0 or self.offset < 0:
            raise AnnotationError(f"negative time in {self}")
        if not self.onset < self.offset:
            raise AnnotationError(f"onset {self.onset} not before offset {self.offset} ({self.clip_id}, {self.label})")

    @property
    def duration(self) -> float:
        return float(_dec(self.offset) - _dec(self.onset))

    def sort_key(self):
        return (self.onset, self.offset, self.label)


@dataclass(frozen=True)
class MetricConfig:
    onset_collar: float = 0.200
    offset_collar_min: float = 0.200
    offset_collar_pct: float = 0.20

    def __post_init__(self):
        if not (self.onset_collar > 0 and self.offset_collar_min > 0 and self.offset_collar_pct > 0):
            raise ValueError("collar parameters must be positive")
        if not self.offset_collar_pct < 1:
            raise ValueError("offset_collar_pct must be below 1")


def _offset_collar_dec(ref: EventAnnotation, cfg: MetricConfig) -> Decimal:
    length = _dec(ref.offset) - _dec(ref.onset)
    return max(_dec(cfg.offset_collar_min), _dec(cfg.offset_collar_pct) * length)


def offset_collar(ref: EventAnnotation, cfg: MetricConfig = MetricConfig()) -> float:
    return float(_offset_collar_dec(ref, cfg))


def is_valid_pair(ref: EventAnnotation, est: EventAnnotation, cfg: MetricConfig = MetricConfig()) -> bool:
    if ref.label != est.label:
        return False
    if abs(_dec(ref.onset) - _dec(est.onset)) > _dec(cfg.onset_collar):
        return False
    return abs(_dec(ref.offset) - _dec(est.offset)) <= _offset_collar_dec(ref, cfg)


def maximum_matching(adjacency: Sequence[Sequence[int]], n_right: int) -> list[int]:
    """Maximum-cardinality bipartite matching by augmenting paths (Kuhn).

    ``adjacency[i]`` lists the right vertices left vertex ``i`` may pair
    with. Returns ``match_left`` with the matched right index or -1.
    """
    match_right = [-1] * n_right
    match_left = [-1] * len(adjacency)

    def augment(u: int, seen: list[bool]) -> bool:
        for v in adjacency[u]:
            if seen[v]:
                continue
            seen[v] = True
            if match_right[v] == -1 or augment(match_right[v], seen):
                match_right[v] = u
                match_left[u] = v
                return True
        return False

    for u in range(len(adjacency)):
        if adjacency[u]:
            augment(u, [False] * n_right)
    return match_left


def match_events(
    refs: Sequence[EventAnnotation],
    ests: Sequence[EventAnnotation],
    cfg: MetricConfig = MetricConfig(),
) -> list[tuple[int, int]]:
    """Pairs ``(ref_index, est_index)`` of a maximum matching over valid pairs.

    Pairs only ever join equal labels, so one matching over the whole clip is
    the union of the per-class matchings.
    """
    adjacency = [[j for j, e in enumerate(ests) if is_valid_pair(r, e, cfg)] for r in refs]
    match = maximum_matching(adjacency, len(ests))
    return [(i, j) for i, j in enumerate(match) if j >= 0]


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __iadd__(self, other: "Counts"):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self


def count_matches(refs, ests, cfg: MetricConfig = MetricConfig()) -> Counts:
    tp = len(match_events(refs, ests, cfg))
    return Counts(tp, len(ests) - tp, len(refs) - tp)


@dataclass(frozen=True)
class ClassScore:
    label: str
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return 100.0 * self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class ScoreReport:
    classes: tuple[ClassScore, ...]
    config: MetricConfig = field(default_factory=MetricConfig)
    operating_point: str = "single fixed decision threshold per system"

    @property
    def macro_f1(self) -> float:
        return sum(c.f1 for c in self.classes) / len(self.classes) if self.classes else 0.0

    @property
    def macro_precision(self) -> float:
        return sum(c.precision for c in self.classes) / len(self.classes) if self.classes else 0.0

    @property
    def macro_recall(self) -> float:
        return sum(c.recall for c in self.classes) / len(self.classes) if self.classes else 0.0

    def __getitem__(self, label: str) -> ClassScore:
        for c in self.classes:
            if c.label == label:
                return c
        raise KeyError(label)

    def totals(self) -> Counts:
        total = Counts()
        for c in self.classes:
            total += Counts(c.tp, c.fp, c.fn)
        return total

    def to_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "operating_point": self.operating_point,
            "config": {
                "onset_collar": self.config.onset_collar,
                "offset_collar_min": self.config.offset_collar_min,
                "offset_collar_pct": self.config.offset_collar_pct,
            },
            "classes": [
                {
                    "label": c.label,
                    "tp": c.tp,
                    "fp": c.fp,
                    "fn": c.fn,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                }
                for c in self.classes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoreReport":
        cfg = MetricConfig(**d.get("config", {}))
        classes = tuple(ClassScore(c["label"], int(c["tp"]), int(c["fp"]), int(c["fn"])) for c in d["classes"])
        return cls(classes, cfg, d.get("operating_point", cls.operating_point))

    def to_text(self) -> str:
        width = max([len("class")] + [len(c.label) for c in self.classes])
        lines = [f"{'class':<{width}}  {'tp':>6} {'fp':>6} {'fn':>6}  {'P%':>6} {'R%':>6} {'F%':>6}"]
        for c in self.classes:
            lines.append(
                f"{c.label:<{width}}  {c.tp:>6} {c.fp:>6} {c.fn:>6}  "
                f"{c.precision:>6.1f} {c.recall:>6.1f} {c.f1:>6.1f}"
            )
        lines.append(f"{'macro':<{width}}  {'':>6} {'':>6} {'':>6}  "
                     f"{self.macro_precision:>6.1f} {self.macro_recall:>6.1f} {self.macro_f1:>6.1f}")
        return "\n".join(lines) + "\n"


class AnnotationSet:
    """Strong labels grouped by clip, with an explicit clip roster so clips
    without any event still count."""

    def __init__(self, events: Iterable[EventAnnotation] = (), roster: Iterable[str] = ()):
        self._events: dict[str, list[EventAnnotation]] = {clip: [] for clip in roster}
        for ev in events:
            self._events.setdefault(ev.clip_id, []).append(ev)
        for evs in self._events.values():
            evs.sort(key=EventAnnotation.sort_key)

    @property
    def roster(self) -> list[str]:
        return sorted(self._events)

    def events(self, clip_id: str) -> list[EventAnnotation]:
        return self._events.get(clip_id, [])

    def all_events(self) -> list[EventAnnotation]:
        return [ev for clip in self.roster for ev in self._events[clip]]

    def labels(self) -> set[str]:
        return {ev.label for evs in self._events.values() for ev in evs}

    def __len__(self):
        return sum(len(v) for v in self._events.values())

    def __eq__(self, other):
        if not isinstance(other, AnnotationSet):
            return NotImplemented
        return self._events == other._events

    def subset(self, keep) -> "AnnotationSet":
        """Same roster, only events for which ``keep(ev)`` is true."""
        return AnnotationSet((ev for ev in self.all_events() if keep(ev)), self.roster)

    def to_tsv(self, header: bool = True) -> str:
        buf = io.StringIO()
        if header:
            buf.write("filename\tonset\toffset\tevent_label\n")
        for clip in self.roster:
            evs = self._events[clip]
            if not evs:
                buf.write(f"{clip}\n")
            for ev in evs:
                buf.write(f"{clip}\t{ev.onset:.3f}\t{ev.offset:.3f}\t{ev.label}\n")
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str, path: str | None = None) -> "AnnotationSet":
        """Parse ``clip<TAB>onset<TAB>offset<TAB>label`` lines.

        A line holding only a clip id declares a clip with no events. An
        optional header starting with ``filename`` or ``clip_id`` is skipped.
        """
        events, roster = [], []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if lineno == 1 and fields[0] in ("filename", "clip_id"):
                continue
            if len(fields) == 1:
                roster.append(fields[0])
                continue
            if len(fields) != 4 or not fields[0] or not fields[3]:
                raise AnnotationError(f"expected 4 tab-separated fields, got {len(fields)}", lineno, path)
            try:
                onset, offset = float(fields[1]), float(fields[2])
            except ValueError:
                raise AnnotationError(f"non-numeric time in {line!r}", lineno, path) from None
            try:
                events.append(EventAnnotation(fields[0], fields[3], onset, offset))
            except AnnotationError as exc:
                raise AnnotationError(str(exc), lineno, path) from None
            roster.append(fields[0])
        return cls(events, roster)

    @classmethod
    def read(cls, path: str | os.PathLike) -> "AnnotationSet":
        with open(path) as fh:
            return cls.from_tsv(fh.read(), os.fspath(path))


def evaluate(
    reference: AnnotationSet,
    estimate: AnnotationSet,
    cfg: MetricConfig = MetricConfig(),
    vocabulary: Sequence[str] | None = None,
    ignore_unknown_labels: bool = False,
) -> ScoreReport:
    """Score ``estimate`` against ``reference``.

    Reference clips absent from ``estimate`` count as empty predictions.
    Macro F averages over ``vocabulary`` (default: labels seen in the
    reference), so a class with no events anywhere contributes 0.
    """
    ref_roster = set(reference.roster)
    unknown_clips = sorted(set(estimate.roster) - ref_roster)
    if unknown_clips:
        raise AnnotationError(f"estimate references unknown clip(s): {unknown_clips[:5]}")
    vocab = list(vocabulary) if vocabulary is not None else sorted(reference.labels())
    vocab_set = set(vocab)
    for name, anns in (("reference", reference), ("estimate", estimate)):
        stray = sorted(anns.labels() - vocab_set)
        if stray and not ignore_unknown_labels:
            raise AnnotationError(f"{name} label(s) outside vocabulary: {stray}")

    counts = defaultdict(Counts)
    for clip in reference.roster:
        refs = [ev for ev in reference.events(clip) if ev.label in vocab_set]
        ests = [ev for ev in estimate.events(clip) if ev.label in vocab_set]
        by_label_ref, by_label_est = defaultdict(list), defaultdict(list)
        for ev in refs:
            by_label_ref[ev.label].append(ev)
        for ev in ests:
            by_label_est[ev.label].append(ev)
        for label in set(by_label_ref) | set(by_label_est):
            counts[label] += count_matches(by_label_ref[label], by_label_est[label], cfg)

    classes = tuple(ClassScore(lab, counts[lab].tp, counts[lab].fp, counts[lab].fn) for lab in vocab)
    return ScoreReport(classes, cfg)
