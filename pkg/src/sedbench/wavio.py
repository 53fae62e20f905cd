"""Mono WAV reading and writing (16-bit integer and 32-bit float PCM)."""

from __future__ import annotations

import os
import warnings

import numpy as np
from scipy.io import wavfile

PCM16 = "pcm16"
FLOAT32 = "float32"
_INT16_SCALE = 32768.0


class WavError(ValueError):
    """Raised for unreadable, unsupported or multichannel WAV files."""


def read_wav(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Read a mono WAV file.

    Returns float64 samples in [-1, 1] and the sample rate. 16-bit files are
    scaled by 1/32768; float files are returned as stored.
    """
    path = os.fspath(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            sample_rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises bare ValueError for most decode issues
        raise WavError(f"{path}: undecodable audio ({exc})") from exc

    if data.ndim != 1:
        raise WavError(f"{path}: multichannel input ({data.shape[1]} channels) is not supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _INT16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported encoding {data.dtype} (need 16-bit int or 32-bit float)")
    return samples, int(sample_rate)


def write_wav(
    path: str | os.PathLike,
    samples: np.ndarray,
    sample_rate: int,
    encoding: str = FLOAT32,
) -> None:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise WavError("only mono signals can be written")
    if not np.all(np.isfinite(samples)):
        raise WavError("refusing to write non-finite samples")
    if samples.size and np.max(np.abs(samples)) > 1.0:
        raise WavError("samples exceed [-1, 1]")

    if encoding == FLOAT32:
        data = samples.astype(np.float32)
    elif encoding == PCM16:
        data = np.clip(np.round(samples * _INT16_SCALE), -32768, 32767).astype(np.int16)
    else:
        raise WavError(f"unknown encoding {encoding!r}")
    wavfile.write(os.fspath(path), int(sample_rate), data)
