"""Source bank: the isolated events, backgrounds and room impulse responses
that every soundscape is assembled from.

A bank is described by a JSON manifest (see ``data/bank_manifest.schema.json``
and ``data/bank_manifest.example.json``). Paths are relative to the manifest's
directory. Clip ids are those relative paths, so a bank is addressed the same
way wherever it is mounted.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .wavio import WavError, read_wav

TARGET = "target"
NON_TARGET = "non_target"
BACKGROUND = "background"

DEFAULT_SAMPLE_RATE = 16000

# DESED-style labels. Configuration only; the benchmark itself does not pin them.
DEFAULT_VOCABULARY = (
    "Alarm_bell_ringing",
    "Blender",
    "Cat",
    "Dishes",
    "Dog",
    "Electric_shaver_toothbrush",
    "Frying",
    "Running_water",
    "Speech",
    "Vacuum_cleaner",
)


class BankError(ValueError):
    """Invalid bank manifest or asset. The message names the offending path."""


def _frozen(samples: np.ndarray) -> np.ndarray:
    arr = np.array(samples, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SourceClip:
    id: str
    samples: np.ndarray
    sample_rate: int
    role: str
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise BankError(f"{self.id}: empty or non-mono clip")
        if not np.all(np.isfinite(self.samples)):
            raise BankError(f"{self.id}: NaN or Inf samples")
        if np.max(np.abs(self.samples)) > 1.0:
            raise BankError(f"{self.id}: peak exceeds 1.0")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, SourceClip):
            return NotImplemented
        return (
            (self.id, self.sample_rate, self.role, self.label)
            == (other.id, other.sample_rate, other.role, other.label)
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Rir:
    id: str
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise BankError(f"{self.id}: empty RIR")
        if not np.all(np.isfinite(self.samples)):
            raise BankError(f"{self.id}: NaN or Inf samples")
        if not np.any(self.samples):
            raise BankError(f"{self.id}: RIR is all zeros")

    def __eq__(self, other):
        if not isinstance(other, Rir):
            return NotImplemented
        return (self.id, self.sample_rate) == (other.id, other.sample_rate) and np.array_equal(
            self.samples, other.samples
        )

    __hash__ = None


@dataclass(frozen=True)
class RoomSet:
    room_id: str
    rirs: tuple[Rir, ...]

    def __post_init__(self):
        object.__setattr__(self, "rirs", tuple(self.rirs))
        if len(self.rirs) < 2:
            raise BankError(f"room {self.room_id}: needs at least 2 RIRs, got {len(self.rirs)}")


@dataclass(frozen=True)
class SourceBank:
    targets: Mapping[str, tuple[SourceClip, ...]]
    non_targets: tuple[SourceClip, ...]
    backgrounds: tuple[SourceClip, ...]
    rooms: tuple[RoomSet, ...]
    sample_rate: int = DEFAULT_SAMPLE_RATE
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    manifest_hash: str = ""
    _index: Mapping[str, SourceClip] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        targets = {label: tuple(clips) for label, clips in self.targets.items()}
        object.__setattr__(self, "targets", MappingProxyType(targets))
        object.__setattr__(self, "non_targets", tuple(self.non_targets))
        object.__setattr__(self, "backgrounds", tuple(self.backgrounds))
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        self._validate()
        index = {}
        for clip in self.all_clips():
            if clip.id in index:
                raise BankError(f"{clip.id}: listed more than once")
            index[clip.id] = clip
        object.__setattr__(self, "_index", MappingProxyType(index))

    def _validate(self):
        if set(self.targets) != set(self.vocabulary):
            missing = sorted(set(self.vocabulary) - set(self.targets))
            extra = sorted(set(self.targets) - set(self.vocabulary))
            raise BankError(f"target classes do not match vocabulary (missing {missing}, unexpected {extra})")
        for label, clips in self.targets.items():
            if not clips:
                raise BankError(f"empty class: {label}")
        if not self.backgrounds:
            raise BankError("backgrounds empty")
        for clip in self.all_clips():
            if clip.sample_rate != self.sample_rate:
                raise BankError(f"{clip.id}: sample-rate mismatch ({clip.sample_rate} != {self.sample_rate})")
        for room in self.rooms:
            for rir in room.rirs:
                if rir.sample_rate != self.sample_rate:
                    raise BankError(f"{rir.id}: sample-rate mismatch ({rir.sample_rate} != {self.sample_rate})")

    def all_clips(self):
        for label in self.vocabulary:
            yield from self.targets[label]
        yield from self.non_targets
        yield from self.backgrounds

    def clip(self, clip_id: str) -> SourceClip:
        try:
            return self._index[clip_id]
        except KeyError:
            raise KeyError(f"unknown source id: {clip_id}") from None

    def room(self, room_id: str) -> RoomSet:
        for room in self.rooms:
            if room.room_id == room_id:
                return room
        raise KeyError(f"unknown room: {room_id}")

    @property
    def n_targets(self) -> int:
        return sum(len(clips) for clips in self.targets.values())


def _read_asset(base: Path, rel: str, expected_rate: int) -> tuple[np.ndarray, int]:
    path = base / rel
    if not path.is_file():
        raise BankError(f"{path}: missing file")
    try:
        samples, rate = read_wav(path)
    except WavError as exc:
        raise BankError(str(exc)) from exc
    if rate != expected_rate:
        raise BankError(f"{path}: sample-rate mismatch ({rate} != {expected_rate})")
    if samples.size == 0:
        raise BankError(f"{path}: empty audio")
    if not np.all(np.isfinite(samples)):
        raise BankError(f"{path}: NaN samples")
    return samples, rate


def _clip_list(manifest: dict, key: str, manifest_path: Path) -> list[str]:
    value = manifest.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise BankError(f"{manifest_path}: field {key!r} must be a list of paths")
    return value


def load_bank(manifest_path: str | os.PathLike) -> SourceBank:
    """Load and validate the bank described by a JSON manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise BankError(f"{manifest_path}: missing file")
    raw = manifest_path.read_bytes()
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise BankError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if not isinstance(manifest, dict):
        raise BankError(f"{manifest_path}: top level must be an object")

    base = manifest_path.parent
    rate = manifest.get("sample_rate", DEFAULT_SAMPLE_RATE)
    if not isinstance(rate, int) or rate <= 0:
        raise BankError(f"{manifest_path}: field 'sample_rate' must be a positive integer")
    targets_raw = manifest.get("targets")
    if not isinstance(targets_raw, dict):
        raise BankError(f"{manifest_path}: field 'targets' must map class labels to path lists")
    vocabulary = manifest.get("vocabulary", sorted(targets_raw))
    if not isinstance(vocabulary, list) or not vocabulary:
        raise BankError(f"{manifest_path}: field 'vocabulary' must be a non-empty list")

    digest = hashlib.sha256(raw)

    def load(rel: str, role: str, label: str | None = None) -> SourceClip:
        samples, sr = _read_asset(base, rel, rate)
        digest.update(rel.encode())
        digest.update(samples.tobytes())
        try:
            return SourceClip(rel, samples, sr, role, label)
        except BankError as exc:
            raise BankError(f"{base / rel}: {exc}") from exc

    targets = {}
    for label in vocabulary:
        paths = targets_raw.get(label)
        if not paths:
            raise BankError(f"{manifest_path}: empty class: {label}")
        targets[label] = [load(p, TARGET, label) for p in paths]
    extra = sorted(set(targets_raw) - set(vocabulary))
    if extra:
        raise BankError(f"{manifest_path}: classes outside vocabulary: {extra}")

    non_targets = [load(p, NON_TARGET) for p in _clip_list(manifest, "non_targets", manifest_path)]
    backgrounds = [load(p, BACKGROUND) for p in _clip_list(manifest, "backgrounds", manifest_path)]
    if not backgrounds:
        raise BankError(f"{manifest_path}: backgrounds empty")

    rooms = []
    rooms_raw = manifest.get("rooms", {})
    if not isinstance(rooms_raw, dict):
        raise BankError(f"{manifest_path}: field 'rooms' must map room ids to RIR path lists")
    for room_id in sorted(rooms_raw):
        rirs = []
        for rel in rooms_raw[room_id]:
            samples, sr = _read_asset(base, rel, rate)
            digest.update(rel.encode())
            digest.update(samples.tobytes())
            try:
                rirs.append(Rir(rel, samples, sr))
            except BankError as exc:
                raise BankError(f"{base / rel}: {exc}") from exc
        try:
            rooms.append(RoomSet(room_id, rirs))
        except BankError as exc:
            raise BankError(f"{manifest_path}: {exc}") from exc

    return SourceBank(
        targets=targets,
        non_targets=non_targets,
        backgrounds=backgrounds,
        rooms=rooms,
        sample_rate=rate,
        vocabulary=tuple(vocabulary),
        manifest_hash=digest.hexdigest(),
    )
