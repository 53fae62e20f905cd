"""Room impulse response handling: direct-path detection, truncation,
convolution and per-clip RIR assignment."""

from __future__ import annotations

import dataclasses
import math
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import signal

from .bank import Rir, RoomSet
from .rng import make_rng

SHORT_TAIL_SECONDS = 0.2


class ReverbMode(str, Enum):
    NONE = "none"
    SHORT = "short"
    LONG = "long"

    @property
    def suite_tag(self) -> str:
        return {"none": "no_reverb", "short": "short_reverb", "long": "long_reverb"}[self.value]


class ReverbError(ValueError):
    pass


def find_direct_path(rir: Rir | np.ndarray) -> int:
    """Index of the largest absolute sample; ties resolve to the earliest."""
    samples = rir.samples if isinstance(rir, Rir) else np.asarray(rir, dtype=np.float64)
    if samples.size == 0 or not np.any(samples):
        raise ReverbError("cannot locate the direct path of an all-zero RIR")
    return int(np.argmax(np.abs(samples)))


def truncate_rir(rir: Rir, mode: ReverbMode | str) -> Rir:
    """Keep ``rir`` up to 200 ms after its direct path (short) or whole (long).

    The kept span is ``[0, direct + round(0.2 * sr)]`` inclusive.
    """
    mode = ReverbMode(mode)
    if mode is ReverbMode.NONE:
        raise ReverbError("truncate_rir needs mode 'short' or 'long'")
    if mode is ReverbMode.LONG:
        return rir
    end = find_direct_path(rir) + int(round(SHORT_TAIL_SECONDS * rir.sample_rate)) + 1
    if rir.samples.size <= end:
        return rir
    return Rir(rir.id, rir.samples[:end], rir.sample_rate)


def rms(samples: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(samples, dtype=np.float64))))


def convolve(event: np.ndarray, rir: Rir, sample_rate: int | None = None, renormalize: bool = True) -> np.ndarray:
    """Full linear convolution of ``event`` with ``rir``.

    With ``renormalize`` the wet signal is rescaled to the dry signal's
    energy, i.e. both have the same RMS over the dry event's duration, so
    reverberation does not move an event's level relative to anything else in
    the mix. A pure delay is left untouched.
    """
    if sample_rate is not None and sample_rate != rir.sample_rate:
        raise ReverbError(f"sample-rate mismatch: event {sample_rate} Hz, RIR {rir.sample_rate} Hz")
    event = np.asarray(event, dtype=np.float64)
    wet = signal.convolve(event, rir.samples, mode="full", method="auto")
    if renormalize:
        dry_energy = float(np.sum(np.square(event)))
        wet_energy = float(np.sum(np.square(wet)))
        if dry_energy > 0 and wet_energy > 0:
            wet *= math.sqrt(dry_energy / wet_energy)
    return wet


@dataclasses.dataclass(frozen=True)
class RirAssignment:
    room_id: str
    rir_index: int


def room_order(rooms: Sequence[RoomSet], n_clips: int, seed: int, stream: str = "rooms") -> list[int]:
    """Room index per clip: repeated seeded shuffles, consumed round-robin, so
    no room repeats before all rooms have been used."""
    if not rooms:
        raise ReverbError("empty room list")
    order: list[int] = []
    cycle = 0
    while len(order) < n_clips:
        order.extend(int(i) for i in make_rng(seed, stream, cycle).permutation(len(rooms)))
        cycle += 1
    return order[:n_clips]


def event_rirs(room: RoomSet, n_events: int, seed: int, clip_index: int) -> list[RirAssignment]:
    """RIR per event inside one room.

    Events get distinct RIRs while the room has enough of them; beyond that
    the room's (shuffled) RIR list is reused cyclically. Event ``k`` always
    gets the same RIR for a given (seed, clip), whatever the event count.
    """
    perm = make_rng(seed, "rir", clip_index).permutation(len(room.rirs))
    return [RirAssignment(room.room_id, int(perm[k % len(perm)])) for k in range(n_events)]


def assign_rirs(
    specs, rooms: Sequence[RoomSet], seed: int, mode: ReverbMode | str = ReverbMode.LONG, renormalize: bool = True
):
    """Attach room/RIR choices to a batch of specs.

    Accepts one ``SoundscapeSpec`` or a sequence of them and returns the same
    shape. Clip ``i`` of the batch is reverberated in room ``room_order[i]``;
    each of its events gets its own source location in that room.
    """
    single = not isinstance(specs, (list, tuple))
    batch = [specs] if single else list(specs)
    mode = ReverbMode(mode)
    order = room_order(rooms, len(batch), seed)
    out = []
    for i, spec in enumerate(batch):
        room = rooms[order[i]]
        picks = event_rirs(room, len(spec.events), seed, i)
        events = tuple(dataclasses.replace(ev, rir=pick) for ev, pick in zip(spec.events, picks))
        condition = dataclasses.replace(spec.condition, reverb=mode, renormalize=renormalize)
        out.append(dataclasses.replace(spec, events=events, condition=condition))
    return out[0] if single else out
