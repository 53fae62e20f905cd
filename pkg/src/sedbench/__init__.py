"""Controlled synthetic soundscape suites and collar-based event F-score
for benchmarking sound event detection systems."""

from .bank import SourceBank, SourceClip, RoomSet, Rir, load_bank
from .metrics import AnnotationSet, EventAnnotation, MetricConfig, ScoreReport, evaluate, match_events
from .reverb import ReverbMode, assign_rirs, convolve, find_direct_path, truncate_rir
from .synth import (
    ConditionTag,
    GenerationProfile,
    PlacedEvent,
    SoundscapeSpec,
    apply_tntsnr,
    gain_for_snr,
    load_profile,
    render,
    rms_level,
    sample_spec,
)

__version__ = "0.1.0"
