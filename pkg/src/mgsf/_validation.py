"""Input validation shared by the estimators and CLI."""

from __future__ import annotations

import numpy as np


def check_waveform(x, n_channels: int | None = None) -> np.ndarray:
    """Return a finite float ``(M, N)`` array; 1-D input is treated as mono."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"waveform must be 1-D or (channels, samples), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("waveform contains non-finite samples")
    if n_channels is not None and arr.shape[0] != n_channels:
        raise ValueError(f"expected {n_channels} channels, got {arr.shape[0]}")
    return arr


def check_spectra(s, n_channels: int | None = None, n_bins: int | None = None) -> np.ndarray:
    """Complex spectra with shape ``(T, M, K)``; ``(T, K)`` is promoted to mono."""
    arr = np.asarray(s)
    if not np.iscomplexobj(arr):
        arr = arr.astype(complex)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise ValueError(f"spectra must have shape (frames, channels, bins), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("spectra contain non-finite values")
    if n_channels is not None and arr.shape[1] != n_channels:
        raise ValueError(f"expected {n_channels} channels, got {arr.shape[1]}")
    if n_bins is not None and arr.shape[2] != n_bins:
        raise ValueError(f"expected {n_bins} bins, got {arr.shape[2]}")
    return arr


def check_utterances(X) -> list[np.ndarray]:
    """A sequence of utterances, each a waveform; a bare array counts as one utterance."""
    if isinstance(X, np.ndarray) and X.dtype != object:
        X = [X]
    out = [check_waveform(x) for x in X]
    if not out:
        raise ValueError("no utterances given")
    return out


def check_random_state_seed(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
