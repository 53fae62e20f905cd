import collections
import dataclasses
import math

import numpy as np
import pytest

from sedbench.metrics import AnnotationSet
from sedbench.reverb import ReverbMode
from sedbench.suites import (
    GRID_NAMES,
    ONSET_WINDOWS,
    SuiteError,
    build_60s,
    build_condition_grid,
    build_onset_variants,
    build_ref,
    build_single,
    load_suite,
    read_manifest,
    verify_suite,
    write_suite,
)
from sedbench.synth import load_profile
from sedbench.wavio import read_wav


@pytest.fixture(scope="module")
def profile():
    return load_profile()


@pytest.fixture(scope="module")
def ref(profile, demo_bank):
    return build_ref(profile, demo_bank, seed=7, n=12)


def test_ref_counts_and_ids(ref):
    assert len(ref) == 12
    assert [s.clip_id for s in ref.specs][:2] == ["clip_00000", "clip_00001"]
    assert ref.total_seconds == 120.0
    for spec in ref.specs:
        assert spec.condition.is_reference
        assert all(ev.is_target for ev in spec.events)


def test_single_clip_suite(profile, demo_bank):
    assert len(build_ref(profile, demo_bank, 1, n=1)) == 1
    with pytest.raises(SuiteError):
        build_ref(profile, demo_bank, 1, n=0)


def test_build_is_deterministic(profile, demo_bank, tmp_path):
    a = build_ref(profile, demo_bank, 3, n=4)
    b = build_ref(profile, demo_bank, 3, n=4, workers=4)
    assert a.specs == b.specs
    pa = write_suite(a, demo_bank, tmp_path / "a")
    pb = write_suite(b, demo_bank, tmp_path / "b", workers=3)
    for name in ["metadata.tsv", "manifest.json"] + [f"audio/clip_{i:05d}.wav" for i in range(4)]:
        assert (pa / name).read_bytes() == (pb / name).read_bytes()


def test_60s_suite(profile, demo_bank):
    suite = build_60s(profile, demo_bank, 5, n=3)
    assert all(s.duration == 60.0 for s in suite.specs)
    for spec in suite.specs:
        assert all(a.offset <= 60.0 for a in spec.annotations())


def test_60s_event_rate(profile, demo_bank):
    suite = build_60s(profile, demo_bank, 11, n=1000)
    mean = np.mean([len(s.events) for s in suite.specs])
    expected = profile.expected_events_per_clip()
    assert abs(mean - expected) <= 0.05 * expected


def test_60s_render_length(profile, demo_bank, tmp_path):
    suite = build_60s(profile, demo_bank, 5, n=1)
    path = write_suite(suite, demo_bank, tmp_path)
    samples, sr = read_wav(path / "audio" / "clip_00000.wav")
    assert samples.size == 960000 and sr == 16000


def test_onset_variants(demo_bank):
    variants = build_onset_variants(demo_bank, 9, n=40)
    assert list(variants) == list(ONSET_WINDOWS)
    for name, (lo, hi) in ONSET_WINDOWS.items():
        for spec in variants[name].specs:
            assert len(spec.events) == 1
            assert lo <= spec.events[0].onset <= hi
    for i in range(40):
        specs = [variants[v].specs[i] for v in ONSET_WINDOWS]
        stripped = {dataclasses.replace(s, events=(dataclasses.replace(s.events[0], onset=0.0),)) for s in specs}
        assert len(stripped) == 1


def test_late_onset_is_clamped(demo_bank):
    variants = build_onset_variants(demo_bank, 9, n=60)
    late = [s for s in variants["9500ms"].specs if s.events[0].trim_length > 1.0]
    assert late
    for spec in late:
        ann = spec.annotations()[0]
        assert ann.offset == 10.0


def test_long_event_clamped_example(demo_bank):
    variants = build_onset_variants(demo_bank, 9, n=1)
    spec = variants["9500ms"].specs[0]
    ev = dataclasses.replace(spec.events[0], trim_length=8.0)
    assert dataclasses.replace(spec, events=(ev,)).annotations()[0].offset == 10.0


def test_single_is_flat(demo_bank):
    suite = build_single(demo_bank, 4, n=50)
    hist = collections.Counter(s.events[0].label for s in suite.specs)
    assert set(hist.values()) == {5}
    assert set(hist) == set(demo_bank.vocabulary)
    assert all(len(s.events) == 1 for s in suite.specs)
    with pytest.raises(SuiteError, match="multiple"):
        build_single(demo_bank, 4, n=55)


@pytest.fixture(scope="module")
def grid(ref, demo_bank):
    return build_condition_grid(ref, demo_bank, demo_bank.non_targets, demo_bank.rooms, seed=7)


def test_grid_cells(grid, ref):
    assert list(grid) == list(GRID_NAMES)
    assert len(grid) == 9
    assert grid["TNTSNR_inf_no_reverb"].specs == ref.specs
    ref_tsv = ref.annotations().to_tsv()
    for suite in grid.values():
        assert suite.annotations().to_tsv() == ref_tsv


def test_grid_structure(grid):
    for name, suite in grid.items():
        for spec in suite.specs:
            non_targets = [e for e in spec.events if not e.is_target]
            if name.startswith("TNTSNR_inf"):
                assert not non_targets
            else:
                assert 1 <= len(non_targets) <= 3
            reverberant = spec.condition.reverb is not ReverbMode.NONE
            assert all((e.rir is not None) == reverberant for e in spec.events)
    for a, b in zip(grid["TNTSNR_15_short_reverb"].specs, grid["TNTSNR_15_long_reverb"].specs):
        assert [e.rir for e in a.events] == [e.rir for e in b.events]
    for a, b in zip(grid["TNTSNR_15_no_reverb"].specs, grid["TNTSNR_0_no_reverb"].specs):
        assert [(e.source_id, e.onset, e.trim_start) for e in a.events] == [
            (e.source_id, e.onset, e.trim_start) for e in b.events
        ]


def test_grid_identity_cell_bytes(grid, ref, demo_bank, tmp_path):
    a = write_suite(ref, demo_bank, tmp_path / "x")
    b = write_suite(grid["TNTSNR_inf_no_reverb"], demo_bank, tmp_path / "y")
    for i in range(len(ref)):
        name = f"audio/clip_{i:05d}.wav"
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_grid_needs_pool_and_rooms(ref, demo_bank):
    with pytest.raises(SuiteError, match="non-target"):
        build_condition_grid(ref, demo_bank, [], demo_bank.rooms, 1)
    with pytest.raises(SuiteError, match="rooms"):
        build_condition_grid(ref, demo_bank, demo_bank.non_targets, [], 1)


def test_write_layout_and_rebuild(ref, demo_bank, tmp_path):
    path = write_suite(ref, demo_bank, tmp_path)
    manifest = read_manifest(path)
    assert manifest["clip_count"] == 12
    assert manifest["total_seconds"] == 120.0
    assert sorted(p.name for p in path.iterdir()) == ["audio", "manifest.json", "metadata.tsv", "specs"]
    assert AnnotationSet.read(path / "metadata.tsv") == ref.annotations()
    assert load_suite(path).specs == ref.specs
    assert verify_suite(path, demo_bank) == []
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_write_refuses_without_force(ref, demo_bank, tmp_path):
    write_suite(ref, demo_bank, tmp_path)
    with pytest.raises(FileExistsError):
        write_suite(ref, demo_bank, tmp_path)
    write_suite(ref, demo_bank, tmp_path, force=True)


def test_verify_detects_tampering(ref, demo_bank, tmp_path):
    path = write_suite(ref, demo_bank, tmp_path)
    other = write_suite(build_ref(load_profile(), demo_bank, 99, n=12), demo_bank, tmp_path / "o")
    (path / "audio" / "clip_00003.wav").write_bytes((other / "audio" / "clip_00003.wav").read_bytes())
    assert verify_suite(path, demo_bank) == ["clip_00003"]


def test_no_nan_in_specs(ref):
    for spec in ref.specs:
        for ev in spec.events:
            assert math.isfinite(ev.gain) and math.isfinite(ev.snr_db)
