"""The evaluation-suite protocols and their on-disk layout.

Suite directory::

    <name>/
      audio/<clip_id>.wav
      specs/<clip_id>.json
      metadata.tsv        strong labels, clip<TAB>onset<TAB>offset<TAB>label
      manifest.json       written last; its presence marks a complete suite
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bank import RoomSet, SourceBank, SourceClip
from .metrics import AnnotationSet
from .reverb import ReverbMode, assign_rirs
from .rng import derive_seed, make_rng
from .synth import (
    BACKGROUND_LEVEL_DB,
    ConditionTag,
    GenerationProfile,
    SoundscapeSpec,
    apply_tntsnr,
    draw_background,
    draw_onset,
    draw_onset_closed,
    place_event,
    render,
    sample_spec,
    scaled_background,
)
from .wavio import FLOAT32, write_wav

REF_CLIPS = 828
LONG_CLIPS = 152
ONSET_CLIPS = 1000
SINGLE_CLIPS = 1000
LONG_DURATION = 60.0
CLIP_DURATION = 10.0
FBSNR_RANGE = (6.0, 30.0)

ONSET_WINDOWS = {
    "500ms": (0.25, 0.75),
    "5500ms": (5.25, 5.75),
    "9500ms": (9.25, 9.75),
}
TNTSNR_LEVELS = (math.inf, 15.0, 0.0)
REVERB_MODES = (ReverbMode.NONE, ReverbMode.SHORT, ReverbMode.LONG)
GRID_CELLS = tuple(ConditionTag(t, r) for t in TNTSNR_LEVELS for r in REVERB_MODES)
GRID_NAMES = tuple(c.name for c in GRID_CELLS)
SUITE_NAMES = ("ref", "60s", *ONSET_WINDOWS, "single", *GRID_NAMES)

MANIFEST = "manifest.json"
METADATA = "metadata.tsv"


class SuiteError(ValueError):
    pass


def clip_id(index: int) -> str:
    return f"clip_{index:05d}"


def _sha256(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


@dataclass
class Suite:
    name: str
    specs: list[SoundscapeSpec]
    master_seed: int
    profile_hash: str
    bank_hash: str
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.specs)

    @property
    def total_seconds(self) -> float:
        return sum(s.duration for s in self.specs)

    def annotations(self) -> AnnotationSet:
        events = [ev for spec in self.specs for ev in spec.annotations()]
        return AnnotationSet(events, [s.clip_id for s in self.specs])


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Protocols


def build_from_profile(
    name: str, profile: GenerationProfile, bank: SourceBank, seed: int, n: int, workers: int = 1
) -> Suite:
    if n < 1:
        raise SuiteError(f"{name}: clip count must be >= 1, got {n}")
    ids = range(n)
    specs = _map(lambda i: sample_spec(profile, bank, derive_seed(seed, name, i), clip_id(i)), ids, workers)
    return Suite(name, specs, seed, _sha256(profile.digest_json()), bank.manifest_hash,
                 {"profile": profile.name, "clip_duration": profile.clip_duration})


def build_ref(profile: GenerationProfile, bank: SourceBank, seed: int, n: int = REF_CLIPS, workers: int = 1) -> Suite:
    """Reference suite: ``n`` clips drawn from ``profile``, no reverb, no non-target events."""
    return build_from_profile("ref", profile, bank, seed, n, workers)


def build_60s(profile: GenerationProfile, bank: SourceBank, seed: int, n: int = LONG_CLIPS, workers: int = 1) -> Suite:
    """Same per-clip event-count and class distributions as ``ref`` but 60 s
    clips, so event density over time drops six-fold."""
    return build_from_profile("60s", profile.with_duration(LONG_DURATION), bank, seed, n, workers)


def _protocol_hash(params: dict) -> str:
    return _sha256(json.dumps(params, sort_keys=True))


def build_onset_variants(
    bank: SourceBank,
    seed: int,
    n: int = ONSET_CLIPS,
    fbsnr_range: tuple[float, float] = FBSNR_RANGE,
    windows: dict = ONSET_WINDOWS,
    duration: float = CLIP_DURATION,
    workers: int = 1,
) -> dict[str, Suite]:
    """Three aligned single-event suites that differ only in the onset window.

    Clip ``i`` carries the same class, source excerpt, gain and background in
    every variant. Excerpts are not shortened to fit, so late onsets get
    truncated at the clip edge and their annotation offsets clamped.
    """
    if n < 1:
        raise SuiteError(f"clip count must be >= 1, got {n}")
    vocab = bank.vocabulary
    low, high = fbsnr_range

    def one(i: int) -> list[SoundscapeSpec]:
        clip_seed = derive_seed(seed, "onset", i)
        rng = make_rng(clip_seed)
        label = vocab[int(rng.integers(len(vocab)))]
        pool = bank.targets[label]
        src = pool[int(rng.integers(len(pool)))]
        bg_id, bg_start = draw_background(rng, bank, duration)
        base = SoundscapeSpec(clip_id(i), clip_seed, duration, bank.sample_rate, bg_id, bg_start, BACKGROUND_LEVEL_DB)
        snr = float(rng.uniform(low, high))
        ev = place_event(rng, src, 0.0, duration, scaled_background(bank, base), snr, fit_in_clip=False, label=label)
        out = []
        for variant, (w_low, w_high) in windows.items():
            onset = draw_onset_closed(make_rng(clip_seed, "window", variant), w_low, w_high)
            out.append(dataclasses.replace(base, events=(dataclasses.replace(ev, onset=onset),)))
        return out

    per_clip = _map(one, range(n), workers)
    params = {"protocol": "onset", "fbsnr_range": list(fbsnr_range), "duration": duration,
              "windows": {k: list(v) for k, v in windows.items()}}
    return {
        variant: Suite(variant, [clip[k] for clip in per_clip], seed, _protocol_hash(params), bank.manifest_hash,
                       {**params, "window": list(windows[variant])})
        for k, variant in enumerate(windows)
    }


def build_single(
    bank: SourceBank,
    seed: int,
    n: int = SINGLE_CLIPS,
    fbsnr_range: tuple[float, float] = FBSNR_RANGE,
    duration: float = CLIP_DURATION,
    workers: int = 1,
) -> Suite:
    """One target event per clip, exactly ``n / len(vocabulary)`` clips per class."""
    vocab = bank.vocabulary
    if n < 1 or n % len(vocab):
        raise SuiteError(f"single: n={n} is not a positive multiple of the {len(vocab)} classes")
    labels = np.repeat(np.arange(len(vocab)), n // len(vocab))
    labels = labels[make_rng(seed, "single", "classes").permutation(n)]
    low, high = fbsnr_range

    def one(i: int) -> SoundscapeSpec:
        clip_seed = derive_seed(seed, "single", i)
        rng = make_rng(clip_seed)
        label = vocab[int(labels[i])]
        pool = bank.targets[label]
        src = pool[int(rng.integers(len(pool)))]
        bg_id, bg_start = draw_background(rng, bank, duration)
        spec = SoundscapeSpec(clip_id(i), clip_seed, duration, bank.sample_rate, bg_id, bg_start, BACKGROUND_LEVEL_DB)
        onset = draw_onset(rng, 0.0, duration)
        snr = float(rng.uniform(low, high))
        ev = place_event(rng, src, onset, duration, scaled_background(bank, spec), snr, label=label)
        return dataclasses.replace(spec, events=(ev,))

    specs = _map(one, range(n), workers)
    params = {"protocol": "single", "fbsnr_range": list(fbsnr_range), "duration": duration}
    return Suite("single", specs, seed, _protocol_hash(params), bank.manifest_hash, params)


def build_condition_grid(
    ref_suite: Suite,
    bank: SourceBank,
    non_target_pool: Sequence[SourceClip],
    rooms: Sequence[RoomSet],
    seed: int,
    max_non_targets: int = 3,
    renormalize_reverb: bool = True,
) -> dict[str, Suite]:
    """The nine (TNTSNR, reverb) versions of ``ref_suite``.

    Every cell keeps ref's target events untouched. Both finite TNTSNR
    levels add the same non-target excerpts at the same onsets (only their
    gain differs), and short/long reverb use the same room and RIR per event.
    The (inf, none) cell is ``ref_suite`` itself.
    """
    if not non_target_pool:
        raise SuiteError("grid: non-target pool is empty")
    if not rooms:
        raise SuiteError("grid: no rooms in bank")
    reverb_seed = derive_seed(seed, "reverb")
    cells = {}
    for tntsnr in TNTSNR_LEVELS:
        if math.isinf(tntsnr):
            dry = list(ref_suite.specs)
        else:
            dry = [
                apply_tntsnr(spec, non_target_pool, tntsnr, derive_seed(seed, "tntsnr", i), bank, max_non_targets)
                for i, spec in enumerate(ref_suite.specs)
            ]
        for mode in REVERB_MODES:
            if mode is ReverbMode.NONE:
                specs = dry
            else:
                specs = assign_rirs(dry, list(rooms), reverb_seed, mode, renormalize_reverb)
            tag = ConditionTag(tntsnr, mode, renormalize_reverb or mode is ReverbMode.NONE)
            params = {**ref_suite.params, "condition": tag.to_dict(), "base_suite": ref_suite.name,
                      "max_non_targets": max_non_targets}
            cells[tag.name] = Suite(tag.name, list(specs), ref_suite.master_seed, ref_suite.profile_hash,
                                    ref_suite.bank_hash, params)
    return cells


# ---------------------------------------------------------------------------
# Writing and reading suite directories


def _render_clip(args):
    spec, bank, encoding, tmp = args
    clip = render(spec, bank)
    write_wav(tmp / "audio" / f"{spec.clip_id}.wav", clip.waveform, spec.sample_rate, encoding)
    spec_text = spec.to_json()
    (tmp / "specs" / f"{spec.clip_id}.json").write_text(spec_text)
    return {
        "clip_id": spec.clip_id,
        "audio": f"audio/{spec.clip_id}.wav",
        "spec": f"specs/{spec.clip_id}.json",
        "spec_sha256": _sha256(spec_text),
        "master_gain_db": clip.master_gain_db,
    }


def write_suite(
    suite: Suite,
    bank: SourceBank,
    out_root: str | os.PathLike,
    encoding: str = FLOAT32,
    workers: int = 1,
    force: bool = False,
) -> Path:
    """Render ``suite`` into ``out_root/<name>``.

    Everything is written to a temporary sibling directory, the manifest
    last, and the directory is moved into place in one rename. An existing
    complete suite is only replaced with ``force``.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    final = out_root / suite.name
    if (final / MANIFEST).exists() and not force:
        raise FileExistsError(f"{final / MANIFEST} exists; pass --force to regenerate")
    tmp = Path(tempfile.mkdtemp(prefix=f".{suite.name}.", dir=out_root))
    try:
        (tmp / "audio").mkdir()
        (tmp / "specs").mkdir()
        clips = _map(_render_clip, [(s, bank, encoding, tmp) for s in suite.specs], workers)
        (tmp / METADATA).write_text(suite.annotations().to_tsv())
        manifest = {
            "suite": suite.name,
            "clip_count": len(suite),
            "total_seconds": suite.total_seconds,
            "master_seed": suite.master_seed,
            "profile_hash": suite.profile_hash,
            "bank_manifest_hash": suite.bank_hash,
            "sample_rate": bank.sample_rate,
            "vocabulary": list(bank.vocabulary),
            "encoding": encoding,
            "params": suite.params,
            "clips": clips,
        }
        tmp_manifest = tmp / (MANIFEST + ".part")
        tmp_manifest.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        os.replace(tmp_manifest, tmp / MANIFEST)
        os.chmod(tmp, 0o755)
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def read_manifest(suite_dir: str | os.PathLike) -> dict:
    path = Path(suite_dir) / MANIFEST
    if not path.is_file():
        raise SuiteError(f"{path}: missing manifest (incomplete or not a suite directory)")
    return json.loads(path.read_text())


def load_suite(suite_dir: str | os.PathLike) -> Suite:
    """Rebuild the in-memory suite from its manifest and serialized specs."""
    suite_dir = Path(suite_dir)
    manifest = read_manifest(suite_dir)
    specs = []
    for entry in manifest["clips"]:
        text = (suite_dir / entry["spec"]).read_text()
        if _sha256(text) != entry["spec_sha256"]:
            raise SuiteError(f"{suite_dir / entry['spec']}: spec hash mismatch")
        specs.append(SoundscapeSpec.from_json(text))
    return Suite(manifest["suite"], specs, manifest["master_seed"], manifest["profile_hash"],
                 manifest["bank_manifest_hash"], manifest.get("params", {}))


def verify_suite(suite_dir: str | os.PathLike, bank: SourceBank) -> list[str]:
    """Re-render every clip from its spec; returns ids whose audio differs."""
    suite_dir = Path(suite_dir)
    manifest = read_manifest(suite_dir)
    if manifest["bank_manifest_hash"] != bank.manifest_hash:
        raise SuiteError("bank does not match the one the suite was built from")
    suite = load_suite(suite_dir)
    mismatched = []
    with tempfile.TemporaryDirectory() as tmp:
        for spec in suite.specs:
            path = Path(tmp) / "x.wav"
            write_wav(path, render(spec, bank).waveform, spec.sample_rate, manifest["encoding"])
            if path.read_bytes() != (suite_dir / "audio" / f"{spec.clip_id}.wav").read_bytes():
                mismatched.append(spec.clip_id)
    return mismatched
