"""Multi-channel WAV reading and writing.

Reads RIFF WAV files holding 16-bit PCM or 32-bit float samples with 1-8
channels; samples come back as float ``(M, N)`` arrays in [-1, 1).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

MAX_CHANNELS = 8


class AudioFormatError(ValueError):
    pass


def read_wav(path: str | Path, expected_rate: int | None = 16000) -> tuple[np.ndarray, int]:
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(float)
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    x = x[:, None] if x.ndim == 1 else x
    if not 1 <= x.shape[1] <= MAX_CHANNELS:
        raise AudioFormatError(f"{path}: {x.shape[1]} channels, expected 1-{MAX_CHANNELS}")
    if expected_rate is not None and rate != expected_rate:
        raise AudioFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return np.ascontiguousarray(x.T), int(rate)


def write_wav(path: str | Path, samples, rate: int = 16000, fmt: str = "pcm16") -> None:
    """Write ``(M, N)`` or ``(N,)`` float samples; PCM output is clipped to [-1, 1)."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if not 1 <= x.shape[0] <= MAX_CHANNELS:
        raise AudioFormatError(f"{x.shape[0]} channels, expected 1-{MAX_CHANNELS}")
    if fmt == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = x.astype(np.float32)
    else:
        raise ValueError(f"unknown sample format {fmt!r}")
    wavfile.write(str(path), int(rate), np.ascontiguousarray(data.T))
