"""Procedurally synthesized source bank for trying the toolkit and for tests.

The sounds are tones, chirps and shaped noise, nothing like real recordings,
but they exercise every code path: varied event lengths (sub-second up to
longer than a clip), backgrounds shorter than a 60 s clip (so they loop),
and rooms whose RIRs are both longer and shorter than the 200 ms
truncation point.

    python -m sedbench.demo OUT_DIR [--seed N]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from .bank import DEFAULT_SAMPLE_RATE, DEFAULT_VOCABULARY
from .rng import make_rng
from .wavio import FLOAT32, write_wav


def _envelope(n: int, attack: int, release: int) -> np.ndarray:
    env = np.ones(n)
    attack, release = min(attack, n // 2), min(release, n // 2)
    if attack:
        env[:attack] = np.linspace(0.0, 1.0, attack)
    if release:
        env[n - release:] = np.linspace(1.0, 0.0, release)
    return env


def _event(rng: np.random.Generator, kind: int, seconds: float, sr: int) -> np.ndarray:
    n = max(int(seconds * sr), 16)
    t = np.arange(n) / sr
    if kind == 0:  # harmonic tone
        f0 = rng.uniform(200, 1200)
        x = sum(np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h for h in range(1, 4))
    elif kind == 1:  # chirp
        f0, f1 = rng.uniform(300, 3000, size=2)
        x = np.sin(2 * np.pi * (f0 * t + (f1 - f0) * t ** 2 / (2 * t[-1] + 1e-9)))
    elif kind == 2:  # amplitude-modulated noise
        x = rng.standard_normal(n) * (0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(2, 12) * t))
    else:  # pulse train
        x = np.zeros(n)
        period = int(sr / rng.uniform(3, 9))
        for start in range(0, n, period):
            burst = min(period // 3, n - start)
            x[start:start + burst] = rng.standard_normal(burst)
    x = x * _envelope(n, int(0.01 * sr), int(0.02 * sr))
    return 0.8 * x / np.max(np.abs(x))


def _background(rng: np.random.Generator, seconds: float, sr: int) -> np.ndarray:
    n = int(seconds * sr)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white) / np.sqrt(np.arange(1, n // 2 + 2))
    x = np.fft.irfft(spectrum, n)
    return 0.5 * x / np.max(np.abs(x))


def _rir(rng: np.random.Generator, seconds: float, pre_delay: int, sr: int) -> np.ndarray:
    n = int(seconds * sr)
    t = np.arange(n) / sr
    decay = rng.uniform(0.05, 0.25)
    h = 0.3 * rng.standard_normal(n) * np.exp(-t / decay)
    h[:pre_delay] = 0.0
    h[pre_delay] = 1.0
    return h / np.max(np.abs(h)) * 0.9


def make_demo_bank(
    out_dir: str | Path,
    seed: int = 0,
    clips_per_class: int = 3,
    n_non_targets: int = 6,
    n_backgrounds: int = 3,
    n_rooms: int = 3,
    rirs_per_room: int = 4,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    vocabulary=DEFAULT_VOCABULARY,
) -> Path:
    """Write WAV files and ``manifest.json`` under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    rng = make_rng(seed, "demo-bank")
    manifest = {"sample_rate": sample_rate, "vocabulary": list(vocabulary), "targets": {},
                "non_targets": [], "backgrounds": [], "rooms": {}}

    def save(rel: str, x: np.ndarray) -> str:
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(path, x, sample_rate, FLOAT32)
        return rel

    for c, label in enumerate(vocabulary):
        paths = []
        for k in range(clips_per_class):
            seconds = float(rng.choice([rng.uniform(0.3, 1.0), rng.uniform(1.0, 4.0), rng.uniform(4.0, 12.0)]))
            paths.append(save(f"fg/{label}/{k:03d}.wav", _event(rng, c % 4, seconds, sample_rate)))
        manifest["targets"][label] = paths
    for k in range(n_non_targets):
        seconds = float(rng.uniform(0.5, 6.0))
        manifest["non_targets"].append(save(f"nt/{k:03d}.wav", _event(rng, (k + 1) % 4, seconds, sample_rate)))
    for k in range(n_backgrounds):
        manifest["backgrounds"].append(save(f"bg/{k:03d}.wav", _background(rng, rng.uniform(12.0, 20.0), sample_rate)))
    for r in range(n_rooms):
        rirs = []
        for k in range(rirs_per_room):
            # Every other RIR ends before direct path + 200 ms.
            seconds = 0.12 if k % 2 else float(rng.uniform(0.4, 0.8))
            pre_delay = int(rng.integers(0, int(0.02 * sample_rate)))
            rirs.append(save(f"rir/room{r}/{k:02d}.wav", _rir(rng, seconds, pre_delay, sample_rate)))
        manifest["rooms"][f"room{r}"] = rirs

    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def main(argv=None):
    parser = argparse.ArgumentParser(description="Write a procedurally synthesized demo source bank.")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--clips-per-class", type=int, default=3)
    args = parser.parse_args(argv)
    print(make_demo_bank(args.out_dir, args.seed, args.clips_per_class))


if __name__ == "__main__":
    main()
