import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sedbench.bank import Rir, RoomSet
from sedbench.reverb import (
    ReverbError,
    ReverbMode,
    assign_rirs,
    convolve,
    find_direct_path,
    rms,
    truncate_rir,
)
from sedbench.synth import ConditionTag, render

from conftest import tiny_bank


def brute_convolve(x, h):
    """Direct O(n*m) sum, independent of any FFT path."""
    y = np.zeros(len(x) + len(h) - 1)
    for k, hk in enumerate(h):
        y[k:k + len(x)] += hk * x
    return y


@pytest.mark.parametrize(
    "samples, index",
    [([0, 0, 1.0, 0.5], 2), ([0.5, -0.9, 0.3], 1), ([0.7, 0.7], 0)],
)
def test_find_direct_path(samples, index):
    assert find_direct_path(Rir("r", samples, 16000)) == index


def test_find_direct_path_all_zero():
    with pytest.raises(ReverbError):
        find_direct_path(np.zeros(5))


def test_truncate_length():
    h = np.zeros(16000)
    h[480] = 1.0
    h[481:] = 0.01
    out = truncate_rir(Rir("r", h, 16000), ReverbMode.SHORT)
    assert out.samples.size == 480 + 3200 + 1 == 3681
    assert truncate_rir(Rir("r", h, 16000), ReverbMode.LONG).samples.size == 16000


def test_unit_impulse_already_short():
    h = np.zeros(100)
    h[0] = 1.0
    rir = Rir("r", h, 16000)
    assert truncate_rir(rir, "short") is rir


rirs = st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=5000).filter(
    lambda v: any(abs(x) > 1e-6 for x in v)
)


@settings(max_examples=50, deadline=None)
@given(rirs, st.sampled_from([8000, 16000]))
def test_truncation_idempotent_and_energy(values, sr):
    rir = Rir("r", values, sr)
    once = truncate_rir(rir, "short")
    assert np.array_equal(truncate_rir(once, "short").samples, once.samples)
    assert np.sum(once.samples ** 2) <= np.sum(rir.samples ** 2)
    assert find_direct_path(once) == find_direct_path(rir)


def test_convolve_identity_and_shift():
    x = np.random.default_rng(0).standard_normal(300)
    assert np.allclose(convolve(x, Rir("r", [1.0], 16000)), x, atol=1e-12)
    h = np.zeros(8)
    h[5] = 1.0
    y = convolve(x, Rir("r", h, 16000))
    assert y.size == 307
    assert np.allclose(y[5:305], x, atol=1e-12)
    assert np.allclose(y[305:], 0, atol=1e-12)
    assert np.allclose(y[:5], 0, atol=1e-12)


def test_convolve_matches_brute_force():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(1000)
    h = rng.standard_normal(200)
    got = convolve(x, Rir("r", h, 16000), renormalize=False)
    assert np.max(np.abs(got - brute_convolve(x, h))) < 1e-6


def test_convolve_long_signal_uses_fft_and_still_matches():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(20000)
    h = rng.standard_normal(3000) * np.exp(-np.arange(3000) / 500)
    got = convolve(x, Rir("r", h, 16000), renormalize=False)
    assert np.max(np.abs(got - brute_convolve(x, h))) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_wet_rms_equals_dry_rms(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(int(rng.integers(10, 3000)))
    h = rng.standard_normal(int(rng.integers(1, 800)))
    wet = convolve(x, Rir("r", h, 16000))
    wet_rms_over_dry_support = np.sqrt(np.sum(wet ** 2) / x.size)
    assert wet_rms_over_dry_support == pytest.approx(rms(x), rel=1e-6)


def test_rate_mismatch():
    with pytest.raises(ReverbError, match="sample-rate mismatch"):
        convolve(np.ones(10), Rir("r", [1.0], 16000), sample_rate=8000)


def _specs(bank, n, events_per_clip=2):
    from sedbench.synth import PlacedEvent, SoundscapeSpec

    out = []
    for i in range(n):
        evs = tuple(PlacedEvent("A/0", "A", 1.0 + k, 0.0, 0.5, 1.0, 10.0) for k in range(events_per_clip))
        out.append(SoundscapeSpec(f"c{i}", i, 10.0, 16000, "bg/0", 0.0, -30.0, evs))
    return out


def _rooms(n_rooms, n_rirs):
    return [RoomSet(f"room{r}", [Rir(f"{r}/{k}", [1.0, 0.5], 16000) for k in range(n_rirs)]) for r in range(n_rooms)]


def test_assign_each_room_once():
    bank = tiny_bank()
    out = assign_rirs(_specs(bank, 3), _rooms(3, 2), seed=1)
    assert sorted(s.events[0].rir.room_id for s in out) == ["room0", "room1", "room2"]
    for s in out:
        assert len({ev.rir.room_id for ev in s.events}) == 1
        assert s.condition.reverb is ReverbMode.LONG


def test_assign_distinct_rirs_within_clip():
    spec = _specs(tiny_bank(), 1)[0]
    out = assign_rirs(spec, _rooms(1, 5), seed=4)
    ids = [ev.rir.rir_index for ev in out.events]
    assert len(ids) == 2 and len(set(ids)) == 2


def test_assign_with_replacement_when_room_is_small():
    spec = _specs(tiny_bank(), 1, events_per_clip=5)[0]
    out = assign_rirs(spec, _rooms(1, 2), seed=4)
    ids = [ev.rir.rir_index for ev in out.events]
    assert set(ids) == {0, 1}


def test_assign_deterministic_and_empty_rooms():
    specs = _specs(tiny_bank(), 6)
    assert assign_rirs(specs, _rooms(4, 3), 9) == assign_rirs(specs, _rooms(4, 3), 9)
    with pytest.raises(ReverbError, match="empty room"):
        assign_rirs(specs, [], 9)


def test_short_equals_long_when_rirs_are_short():
    bank = tiny_bank(rir_len=1000)  # direct path + 3200 samples is beyond the end
    spec = assign_rirs(_specs(bank, 1)[0], list(bank.rooms), seed=2, mode="short")
    short = render(spec, bank).waveform
    long_ = render(dataclasses.replace(spec, condition=ConditionTag(reverb="long")), bank).waveform
    assert short.tobytes() == long_.tobytes()


def test_reverb_keeps_annotations():
    bank = tiny_bank()
    spec = _specs(bank, 1)[0]
    wet = assign_rirs(spec, list(bank.rooms), seed=2, mode="long")
    assert render(wet, bank).annotations == render(spec, bank).annotations
    assert not np.array_equal(render(wet, bank).waveform, render(spec, bank).waveform)


def test_renormalization_can_be_disabled():
    bank = tiny_bank()
    spec = _specs(bank, 1)[0]
    kept = assign_rirs(spec, list(bank.rooms), seed=2, mode="long")
    raw = assign_rirs(spec, list(bank.rooms), seed=2, mode="long", renormalize=False)
    assert not raw.condition.renormalize
    from sedbench.synth import SoundscapeSpec

    assert SoundscapeSpec.from_json(raw.to_json()) == raw
    a = render(kept, bank, keep_stems=True).stems[0]
    b = render(raw, bank, keep_stems=True).stems[0]
    # the tail of the RIRs adds energy when the wet signal is not rescaled
    assert np.sum(b ** 2) > np.sum(a ** 2)
