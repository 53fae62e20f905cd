"""Soundscape specification sampling and rendering.

A :class:`SoundscapeSpec` is a complete, serializable recipe for one clip:
which background segment at which level, which source excerpts at which
onsets and gains, and which RIRs. :func:`render` turns a spec into audio
plus strong labels and is a pure function of (spec, bank).

Levels are RMS levels in dBFS over each source's active support. All times
in a spec sit on a 1 ms grid so exported annotations are exact.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .bank import SourceBank, SourceClip
from .metrics import EventAnnotation
from .reverb import ReverbMode, RirAssignment, convolve, truncate_rir
from .rng import make_rng

SILENT_DB = float("-inf")
BACKGROUND_LEVEL_DB = -30.0
DEFAULT_MAX_NON_TARGETS = 3
_WEIGHT_TOL = 1e-9


class ProfileError(ValueError):
    pass


class SilentSourceError(ValueError):
    pass


class SpecError(ValueError):
    pass


def rms_level(samples: np.ndarray) -> float:
    """RMS level in dB (20 log10 of the root mean square).

    All-zero input returns ``SILENT_DB`` (negative infinity), never NaN.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("rms_level of an empty signal")
    ms = float(np.mean(np.square(samples)))
    if ms == 0.0:
        return SILENT_DB
    return 10.0 * math.log10(ms)


def gain_for_snr(event: np.ndarray, background: np.ndarray, target_snr: float) -> float:
    """Linear gain that puts ``event`` exactly ``target_snr`` dB above ``background``."""
    event_db = rms_level(event)
    background_db = rms_level(background)
    if event_db == SILENT_DB or background_db == SILENT_DB:
        raise SilentSourceError("silent source")
    return 10.0 ** ((target_snr - (event_db - background_db)) / 20.0)


def _ms_floor(t: float) -> float:
    return math.floor(t * 1000.0 + 1e-7) / 1000.0


def _samples(t: float, sample_rate: int) -> int:
    return int(round(t * sample_rate))


# ---------------------------------------------------------------------------
# Spec types


@dataclass(frozen=True)
class ConditionTag:
    tntsnr: float = math.inf
    reverb: ReverbMode = ReverbMode.NONE
    # False lets reverberation change an event's level (wet signal not rescaled)
    renormalize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "reverb", ReverbMode(self.reverb))
        object.__setattr__(self, "tntsnr", float(self.tntsnr))

    @property
    def is_reference(self) -> bool:
        return math.isinf(self.tntsnr) and self.reverb is ReverbMode.NONE

    @property
    def name(self) -> str:
        snr = "inf" if math.isinf(self.tntsnr) else f"{self.tntsnr:g}"
        return f"TNTSNR_{snr}_{self.reverb.suite_tag}"

    def to_dict(self) -> dict:
        out = {
            "tntsnr": "inf" if math.isinf(self.tntsnr) else self.tntsnr,
            "reverb": self.reverb.value,
        }
        if not self.renormalize:
            out["renormalize"] = False
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConditionTag":
        return cls(float(d["tntsnr"]), ReverbMode(d["reverb"]), bool(d.get("renormalize", True)))


@dataclass(frozen=True)
class PlacedEvent:
    source_id: str
    label: str | None  # None marks a non-target event
    onset: float
    trim_start: float
    trim_length: float
    gain: float
    snr_db: float
    rir: RirAssignment | None = None

    def __post_init__(self):
        if not (self.gain > 0 and math.isfinite(self.gain)):
            raise SpecError(f"{self.source_id}: gain must be positive and finite, got {self.gain}")
        if not self.trim_length > 0:
            raise SpecError(f"{self.source_id}: excerpt length must be positive")

    @property
    def is_target(self) -> bool:
        return self.label is not None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rir"] = None if self.rir is None else [self.rir.room_id, self.rir.rir_index]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlacedEvent":
        d = dict(d)
        rir = d.pop("rir", None)
        return cls(**d, rir=None if rir is None else RirAssignment(rir[0], int(rir[1])))


@dataclass(frozen=True)
class SoundscapeSpec:
    clip_id: str
    seed: int
    duration: float
    sample_rate: int
    background_id: str
    background_start: float
    background_level_db: float
    events: tuple[PlacedEvent, ...] = ()
    condition: ConditionTag = field(default_factory=ConditionTag)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.duration > 0:
            raise SpecError(f"{self.clip_id}: duration must be positive")
        for ev in self.events:
            if not 0 <= ev.onset < self.duration:
                raise SpecError(f"{self.clip_id}: onset {ev.onset} outside [0, {self.duration})")

    @property
    def target_events(self) -> tuple[PlacedEvent, ...]:
        return tuple(ev for ev in self.events if ev.is_target)

    def annotations(self) -> list[EventAnnotation]:
        out = []
        for ev in self.target_events:
            offset = round(min(ev.onset + ev.trim_length, self.duration), 3)
            out.append(EventAnnotation(self.clip_id, ev.label, round(ev.onset, 3), offset))
        return sorted(out, key=EventAnnotation.sort_key)

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "seed": self.seed,
            "duration": self.duration,
            "sample_rate": self.sample_rate,
            "background_id": self.background_id,
            "background_start": self.background_start,
            "background_level_db": self.background_level_db,
            "events": [ev.to_dict() for ev in self.events],
            "condition": self.condition.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SoundscapeSpec":
        d = dict(d)
        d["events"] = tuple(PlacedEvent.from_dict(e) for e in d["events"])
        d["condition"] = ConditionTag.from_dict(d["condition"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SoundscapeSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class RenderedClip:
    waveform: np.ndarray
    annotations: list[EventAnnotation]
    master_gain_db: float = 0.0
    # Per-source contributions after placement and master gain, keyed
    # "background" / event index. Only filled when requested.
    stems: dict | None = None


# ---------------------------------------------------------------------------
# Generation profile


def _check_distribution(name: str, weights: Mapping, tol: float = _WEIGHT_TOL):
    values = list(weights.values())
    if not values:
        raise ProfileError(f"{name}: empty distribution")
    if any((not math.isfinite(w)) or w < 0 for w in values):
        raise ProfileError(f"{name}: weights must be finite and >= 0")
    if abs(sum(values) - 1.0) > tol:
        raise ProfileError(f"{name}: weights sum to {sum(values)!r}, expected 1")


@dataclass(frozen=True)
class GenerationProfile:
    """Distributions that drive :func:`sample_spec`.

    Per clip: an anchor class is drawn from ``class_weights`` and its event
    count from ``events_per_clip[anchor]``. Then one partner class is drawn
    from ``cooccurrence[anchor]`` (the key ``""`` means no partner) and its
    count from its own ``events_per_clip`` entry.
    """

    vocabulary: tuple[str, ...]
    class_weights: Mapping[str, float]
    events_per_clip: Mapping[str, Mapping[int, float]]
    cooccurrence: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    clip_duration: float = 10.0
    fbsnr_range: tuple[float, float] = (6.0, 30.0)
    max_event_length: float | None = None
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        object.__setattr__(self, "fbsnr_range", tuple(float(x) for x in self.fbsnr_range))
        epc = {lab: {int(k): float(v) for k, v in dist.items()} for lab, dist in self.events_per_clip.items()}
        object.__setattr__(self, "events_per_clip", epc)
        object.__setattr__(self, "class_weights", {k: float(v) for k, v in self.class_weights.items()})
        co = {lab: {k: float(v) for k, v in dist.items()} for lab, dist in self.cooccurrence.items()}
        object.__setattr__(self, "cooccurrence", co)
        self._validate()

    def _validate(self):
        if not self.clip_duration > 0:
            raise ProfileError("clip_duration must be positive")
        low, high = self.fbsnr_range
        if not low <= high:
            raise ProfileError(f"fbsnr_range low {low} > high {high}")
        vocab = set(self.vocabulary)
        if not vocab:
            raise ProfileError("vocabulary is empty")
        for label in self.class_weights:
            if label not in vocab:
                raise ProfileError(f"class_weights: {label!r} not in vocabulary")
        _check_distribution("class_weights", self.class_weights)
        for label, w in self.class_weights.items():
            if w > 0 and label not in self.events_per_clip:
                raise ProfileError(f"events_per_clip: missing entry for {label!r}")
        for label, dist in self.events_per_clip.items():
            if label not in vocab:
                raise ProfileError(f"events_per_clip: {label!r} not in vocabulary")
            if any(k < 1 for k in dist):
                raise ProfileError(f"events_per_clip[{label}]: counts must be >= 1")
            _check_distribution(f"events_per_clip[{label}]", dist)
        for label, dist in self.cooccurrence.items():
            if label not in vocab:
                raise ProfileError(f"cooccurrence: {label!r} not in vocabulary")
            for partner in dist:
                if partner and partner not in self.events_per_clip:
                    raise ProfileError(f"cooccurrence[{label}]: partner {partner!r} has no events_per_clip entry")
            _check_distribution(f"cooccurrence[{label}]", dist)

    def with_duration(self, duration: float) -> "GenerationProfile":
        return dataclasses.replace(self, clip_duration=float(duration))

    def expected_events_per_clip(self) -> float:
        def mean(dist):
            return sum(k * p for k, p in dist.items())

        total = 0.0
        for anchor, w in self.class_weights.items():
            if w == 0:
                continue
            m = mean(self.events_per_clip[anchor])
            for partner, q in self.cooccurrence.get(anchor, {}).items():
                if partner:
                    m += q * mean(self.events_per_clip[partner])
            total += w * m
        return total

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "vocabulary": list(self.vocabulary),
            "clip_duration": self.clip_duration,
            "fbsnr_range": list(self.fbsnr_range),
            "max_event_length": self.max_event_length,
            "class_weights": dict(self.class_weights),
            "events_per_clip": {lab: {str(k): v for k, v in d.items()} for lab, d in self.events_per_clip.items()},
            "cooccurrence": {lab: dict(d) for lab, d in self.cooccurrence.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GenerationProfile":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known - {"comment"}
        if unknown:
            raise ProfileError(f"unknown profile fields: {sorted(unknown)}")
        for required in ("vocabulary", "class_weights", "events_per_clip"):
            if required not in d:
                raise ProfileError(f"missing profile field: {required}")
        kwargs = {k: v for k, v in d.items() if k in known}
        try:
            return cls(**kwargs)
        except (TypeError, AttributeError) as exc:
            raise ProfileError(f"malformed profile: {exc}") from exc

    def digest_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def load_profile(path: str | os.PathLike | None = None) -> GenerationProfile:
    """Read a profile JSON file; ``None`` loads the bundled default profile."""
    if path is None:
        text = resources.files("sedbench.data").joinpath("default_profile.json").read_text()
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ProfileError(f"{path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: invalid JSON ({exc})") from exc
    return GenerationProfile.from_dict(raw)


# ---------------------------------------------------------------------------
# Sampling


def background_segment(clip: SourceClip, start: float, duration: float) -> np.ndarray:
    """``duration`` seconds of ``clip`` from ``start``, looping if it is short."""
    n = _samples(duration, clip.sample_rate)
    first = _samples(start, clip.sample_rate)
    idx = (first + np.arange(n)) % clip.samples.size
    return clip.samples[idx]


def scaled_background(bank: SourceBank, spec: SoundscapeSpec) -> np.ndarray:
    seg = background_segment(bank.clip(spec.background_id), spec.background_start, spec.duration)
    level = rms_level(seg)
    if level == SILENT_DB:
        raise SilentSourceError(f"{spec.background_id}: silent source")
    return seg * 10.0 ** ((spec.background_level_db - level) / 20.0)


def excerpt(clip: SourceClip, start: float, length: float) -> np.ndarray:
    first = _samples(start, clip.sample_rate)
    n = min(_samples(length, clip.sample_rate), clip.samples.size - first)
    return clip.samples[first:first + n]


def draw_background(rng: np.random.Generator, bank: SourceBank, duration: float) -> tuple[str, float]:
    clip = bank.backgrounds[int(rng.integers(len(bank.backgrounds)))]
    slack = clip.duration - duration
    start = _ms_floor(rng.uniform(0.0, slack)) if slack > 0 else 0.0
    return clip.id, start


def draw_excerpt(rng: np.random.Generator, clip: SourceClip, max_length: float) -> tuple[float, float]:
    """(start, length) of an excerpt no longer than ``max_length`` seconds."""
    length = _ms_floor(min(clip.duration, max_length))
    slack = clip.duration - length
    start = _ms_floor(rng.uniform(0.0, slack)) if slack > 0.001 else 0.0
    return start, max(length, 0.001)


def draw_onset(rng: np.random.Generator, low: float, high: float) -> float:
    """Uniform onset on the ms grid within [low, high) (high exclusive)."""
    lo_ms = math.ceil(low * 1000.0 - 1e-7)
    hi_ms = math.floor(high * 1000.0 + 1e-7)
    if hi_ms <= lo_ms:
        return lo_ms / 1000.0
    return int(rng.integers(lo_ms, hi_ms)) / 1000.0


def draw_onset_closed(rng: np.random.Generator, low: float, high: float) -> float:
    """Uniform onset on the ms grid within [low, high] (both ends included)."""
    return draw_onset(rng, low, high + 0.001)


_SILENT_RETRIES = 16


def place_event(
    rng: np.random.Generator,
    clip: SourceClip,
    onset: float,
    duration: float,
    background: np.ndarray,
    snr_db: float,
    max_length: float | None = None,
    fit_in_clip: bool = True,
    label: str | None = None,
) -> PlacedEvent:
    """Pick a non-silent excerpt of ``clip`` and level it ``snr_db`` above ``background``.

    With ``fit_in_clip`` the excerpt is shortened to end by the clip edge, so
    the level is computed on exactly what ends up in the mix.
    """
    limit = duration if max_length is None else min(max_length, duration)
    for _ in range(_SILENT_RETRIES):
        start, length = draw_excerpt(rng, clip, limit)
        if fit_in_clip:
            length = max(min(length, round(duration - onset, 3)), 0.001)
        try:
            gain = gain_for_snr(excerpt(clip, start, length), background, snr_db)
        except SilentSourceError:
            continue
        return PlacedEvent(clip.id, label, onset, start, length, gain, snr_db)
    raise SilentSourceError(f"{clip.id}: silent source (no audible excerpt found)")


def sample_spec(
    profile: GenerationProfile,
    bank: SourceBank,
    seed: int,
    clip_id: str = "clip",
) -> SoundscapeSpec:
    """Draw one clip recipe from ``profile``. Deterministic in (profile, bank, seed)."""
    missing = [lab for lab in profile.vocabulary if lab not in bank.targets]
    if missing:
        raise ProfileError(f"profile classes absent from bank: {missing}")
    rng = make_rng(seed)
    duration = profile.clip_duration

    labels = sorted(profile.class_weights)
    probs = np.array([profile.class_weights[lab] for lab in labels])
    anchor = labels[int(rng.choice(len(labels), p=probs / probs.sum()))]
    counts = {anchor: _draw_count(rng, profile.events_per_clip[anchor])}
    partners = profile.cooccurrence.get(anchor)
    if partners:
        names = sorted(partners)
        q = np.array([partners[n] for n in names])
        partner = names[int(rng.choice(len(names), p=q / q.sum()))]
        if partner:
            counts[partner] = counts.get(partner, 0) + _draw_count(rng, profile.events_per_clip[partner])

    bg_id, bg_start = draw_background(rng, bank, duration)
    spec = SoundscapeSpec(clip_id, int(seed), duration, bank.sample_rate, bg_id, bg_start, BACKGROUND_LEVEL_DB)
    background = scaled_background(bank, spec)

    low, high = profile.fbsnr_range
    events = []
    for label in profile.vocabulary:
        for _ in range(counts.get(label, 0)):
            pool = bank.targets[label]
            clip = pool[int(rng.integers(len(pool)))]
            onset = draw_onset(rng, 0.0, duration)
            snr = float(rng.uniform(low, high))
            events.append(
                place_event(rng, clip, onset, duration, background, snr, profile.max_event_length, label=label)
            )
    events.sort(key=lambda ev: (ev.onset, ev.label, ev.source_id))
    return dataclasses.replace(spec, events=tuple(events))


def _draw_count(rng: np.random.Generator, dist: Mapping[int, float]) -> int:
    keys = sorted(dist)
    p = np.array([dist[k] for k in keys])
    return int(keys[int(rng.choice(len(keys), p=p / p.sum()))])


def mean_target_level(spec: SoundscapeSpec) -> float:
    """Mean (in dB) of the target events' RMS levels."""
    targets = spec.target_events
    if not targets:
        raise SpecError(f"{spec.clip_id}: no target events")
    return float(np.mean([spec.background_level_db + ev.snr_db for ev in targets]))


def apply_tntsnr(
    spec: SoundscapeSpec,
    non_target_pool: Sequence[SourceClip],
    tntsnr: float,
    seed: int,
    bank: SourceBank | None = None,
    max_non_targets: int = DEFAULT_MAX_NON_TARGETS,
) -> SoundscapeSpec:
    """Add 1..``max_non_targets`` non-target events ``tntsnr`` dB below the
    clip's mean target level. Infinite ``tntsnr`` returns ``spec`` unchanged.

    The draws depend only on ``seed``, not on ``tntsnr``: two calls with the
    same seed and different finite levels place the same excerpts at the
    same onsets and differ only in gain. ``bank`` is needed to measure the
    background when the pool clips are not part of a bank-backed spec.
    """
    tntsnr = float(tntsnr)
    if math.isinf(tntsnr) and tntsnr > 0:
        return spec
    if not math.isfinite(tntsnr):
        raise ValueError(f"tntsnr must be finite or +inf, got {tntsnr}")
    if not spec.target_events:
        raise SpecError(f"{spec.clip_id}: finite TNTSNR needs at least one target event")
    if not non_target_pool:
        raise SpecError("non-target pool is empty")

    level = mean_target_level(spec) - tntsnr
    rng = make_rng(seed)
    n = int(rng.integers(1, max_non_targets + 1))
    added = []
    for _ in range(n):
        clip = non_target_pool[int(rng.integers(len(non_target_pool)))]
        onset = draw_onset(rng, 0.0, spec.duration)
        for _ in range(_SILENT_RETRIES):
            start, length = draw_excerpt(rng, clip, spec.duration)
            length = max(min(length, round(spec.duration - onset, 3)), 0.001)
            ex = excerpt(clip, start, length)
            ex_level = rms_level(ex)
            if ex_level != SILENT_DB:
                break
        else:
            raise SilentSourceError(f"{clip.id}: silent source")
        gain = 10.0 ** ((level - ex_level) / 20.0)
        added.append(PlacedEvent(clip.id, None, onset, start, length, gain, level - spec.background_level_db))
    condition = dataclasses.replace(spec.condition, tntsnr=tntsnr)
    return dataclasses.replace(spec, events=spec.events + tuple(added), condition=condition)


# ---------------------------------------------------------------------------
# Rendering


def _event_signal(ev: PlacedEvent, bank: SourceBank, condition: ConditionTag) -> np.ndarray:
    clip = bank.clip(ev.source_id)
    dry = excerpt(clip, ev.trim_start, ev.trim_length)
    if ev.rir is not None and condition.reverb is not ReverbMode.NONE:
        rir = truncate_rir(bank.room(ev.rir.room_id).rirs[ev.rir.rir_index], condition.reverb)
        dry = convolve(dry, rir, bank.sample_rate, condition.renormalize)
    return dry * ev.gain


def render(spec: SoundscapeSpec, bank: SourceBank, keep_stems: bool = False) -> RenderedClip:
    """Mix background and events; returns audio, target annotations and the
    master gain applied to keep the peak at or below 1.0."""
    if spec.sample_rate != bank.sample_rate:
        raise SpecError(f"{spec.clip_id}: spec rate {spec.sample_rate} != bank rate {bank.sample_rate}")
    n = _samples(spec.duration, spec.sample_rate)
    background = scaled_background(bank, spec)
    mix = background.copy()
    stems = {"background": background} if keep_stems else None

    for k, ev in enumerate(spec.events):
        sig = _event_signal(ev, bank, spec.condition)
        start = _samples(ev.onset, spec.sample_rate)
        stop = min(n, start + sig.size)
        mix[start:stop] += sig[:stop - start]
        if keep_stems:
            stem = np.zeros(n)
            stem[start:stop] = sig[:stop - start]
            stems[k] = stem

    master_gain_db = 0.0
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    if peak > 1.0:
        mix = mix / peak
        master_gain_db = -20.0 * math.log10(peak)
        if keep_stems:
            stems = {k: s / peak for k, s in stems.items()}
    return RenderedClip(mix, spec.annotations(), master_gain_db, stems)
