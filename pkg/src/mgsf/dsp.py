"""Frame-based time-frequency analysis.

Two front-ends share this module:

* the multi-channel DFT feature (12.5 ms window, 10 ms hop, 256-point FFT,
  bins 1..127 kept) normalized with global per-bin statistics, and
* the single-channel LFBE baseline (25 ms window, 512-point FFT, 64 mel
  bands) with online causal mean subtraction.

Normalized multi-channel frames are laid out channel-major, bin-minor with
real and imaginary parts interleaved: index ``m * 2K + 2k + part``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import get_window
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_spectra, check_waveform

LOG_FLOOR = 1e-10
VAR_FLOOR = 1e-8
ISTFT_NORM_FLOOR = 1e-2


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    window_len: int = 200
    hop: int = 160
    fft_size: int = 256
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_size:
            raise ValueError(
                f"need 0 < hop <= window_len <= fft_size, got {self.hop}, {self.window_len}, {self.fft_size}"
            )
        if self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown window {self.window!r}")

    @property
    def n_bins(self) -> int:
        """Bins kept after dropping DC and Nyquist."""
        return self.fft_size // 2 - 1

    @property
    def bin_frequencies(self) -> np.ndarray:
        """Center frequencies in Hz of the kept bins."""
        return np.arange(1, self.fft_size // 2) * self.sample_rate / self.fft_size

    @property
    def bin_omegas(self) -> np.ndarray:
        return 2.0 * np.pi * self.bin_frequencies

    def window_array(self) -> np.ndarray:
        if self.window == "rect":
            return np.ones(self.window_len)
        # scipy's default fftbins=True gives the periodic Hann
        return get_window("hann", self.window_len)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return 1 + (n_samples - self.window_len) // self.hop


DFT_CONFIG = StftConfig()
LFBE_CONFIG = StftConfig(window_len=400, hop=160, fft_size=512)


def frame_stream(samples, cfg: StftConfig = DFT_CONFIG) -> np.ndarray:
    """Windowed frames of shape ``(..., T, window_len)``; time is the last input axis."""
    x = np.asarray(samples, dtype=float)
    n = cfg.n_frames(x.shape[-1])
    if n == 0:
        return np.zeros(x.shape[:-1] + (0, cfg.window_len))
    idx = np.arange(n)[:, None] * cfg.hop + np.arange(cfg.window_len)
    return x[..., idx] * cfg.window_array()


def _full_rfft(frames: np.ndarray, cfg: StftConfig) -> np.ndarray:
    if frames.shape[-1] != cfg.window_len:
        raise ValueError(f"frame length {frames.shape[-1]} != window_len {cfg.window_len}")
    return np.fft.rfft(frames, n=cfg.fft_size, axis=-1)


def dft_frame(frame, cfg: StftConfig = DFT_CONFIG) -> np.ndarray:
    """Bins ``1 .. fft_size/2 - 1`` of the zero-padded DFT of one or more frames."""
    return _full_rfft(np.asarray(frame, dtype=float), cfg)[..., 1:-1]


def stft(samples, cfg: StftConfig = DFT_CONFIG) -> np.ndarray:
    """Multi-channel spectra: ``(M, N)`` samples to ``(T, M, K)`` complex bins."""
    x = check_waveform(samples)
    return np.moveaxis(dft_frame(frame_stream(x, cfg), cfg), 0, 1)


def istft(spectra, n_samples: int, cfg: StftConfig = DFT_CONFIG) -> np.ndarray:
    """Weighted overlap-add resynthesis of ``(T, K)`` or ``(T, M, K)`` bins.

    The dropped DC and Nyquist bins are taken as zero. Each frame is
    inverse-transformed, cut to ``window_len``, multiplied by the analysis
    window again and accumulated; the sum is divided by the accumulated
    squared window, which makes analysis followed by synthesis an identity
    wherever the squared-window sum is at least ``ISTFT_NORM_FLOOR`` (up to
    the two dropped bins). Uncovered samples come out as zero.
    """
    X = np.asarray(spectra)
    mono = X.ndim == 2
    if mono:
        X = X[:, None, :]
    T, M, K = X.shape
    if K != cfg.n_bins:
        raise ValueError(f"expected {cfg.n_bins} bins, got {K}")
    if T and (T - 1) * cfg.hop + cfg.window_len > n_samples:
        raise ValueError("more frames than fit into n_samples")
    full = np.zeros((T, M, cfg.fft_size // 2 + 1), dtype=complex)
    full[..., 1:-1] = X
    frames = np.fft.irfft(full, n=cfg.fft_size, axis=-1)[..., : cfg.window_len]
    win = cfg.window_array()
    out = np.zeros((M, n_samples))
    norm = np.zeros(n_samples)
    for t in range(T):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.window_len)
        out[:, sl] += frames[t] * win
        norm[sl] += win * win
    # the first and last few samples only see the window's near-zero tail;
    # flooring the normalizer keeps them from amplifying the dropped bins
    out /= np.maximum(norm, ISTFT_NORM_FLOOR)
    return out[0] if mono else out


class StreamingFramer:
    """Push arbitrary-sized sample blocks, get complete frames as they become available."""

    def __init__(self, cfg: StftConfig = DFT_CONFIG, n_channels: int = 1):
        self.cfg = cfg
        self._buf = np.zeros((n_channels, 0))
        self._win = cfg.window_array()

    def push(self, block) -> np.ndarray:
        block = np.atleast_2d(np.asarray(block, dtype=float))
        self._buf = np.concatenate([self._buf, block], axis=1)
        frames = []
        while self._buf.shape[1] >= self.cfg.window_len:
            frames.append(self._buf[:, : self.cfg.window_len] * self._win)
            self._buf = self._buf[:, self.cfg.hop :]
        if not frames:
            return np.zeros((0, self._buf.shape[0], self.cfg.window_len))
        return np.stack(frames)


# --------------------------------------------------------------------------
# global statistics


@dataclass(frozen=True)
class GlobalStats:
    """Per-bin, per-part statistics pooled over channels; arrays of length ``2K``."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        var = np.maximum(np.asarray(self.variance, dtype=float).ravel(), VAR_FLOOR)
        if mean.shape != var.shape:
            raise ValueError("mean and variance must have the same length")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def dims(self) -> int:
        return self.mean.size

    @property
    def n_bins(self) -> int:
        return self.dims // 2

    @classmethod
    def identity(cls, n_bins: int) -> "GlobalStats":
        return cls(np.zeros(2 * n_bins), np.ones(2 * n_bins))


class StatsAccumulator:
    """Pooled mean/variance over streamed spectra (parallel-merge update)."""

    def __init__(self):
        self.count = 0
        self._mean = None
        self._m2 = None

    def update(self, spectra) -> "StatsAccumulator":
        s = np.asarray(spectra)
        parts = _interleave(s).reshape(-1, 2 * s.shape[-1])
        n = parts.shape[0]
        if n == 0:
            return self
        mean_b = parts.mean(axis=0)
        m2_b = np.sum((parts - mean_b) ** 2, axis=0)
        if self.count == 0:
            self.count, self._mean, self._m2 = n, mean_b, m2_b
            return self
        total = self.count + n
        delta = mean_b - self._mean
        self._mean = self._mean + delta * n / total
        self._m2 = self._m2 + m2_b + delta**2 * self.count * n / total
        self.count = total
        return self

    def finalize(self) -> GlobalStats:
        if self.count < 2:
            raise ValueError("need at least 2 frames to estimate global statistics")
        return GlobalStats(self._mean, self._m2 / self.count)


def compute_global_stats(spectra) -> GlobalStats:
    """Population statistics of ``(..., K)`` complex spectra, pooled over all leading axes."""
    s = np.asarray(spectra)
    if s.size == 0:
        raise ValueError("no frames to estimate global statistics from")
    return StatsAccumulator().update(s).finalize()


def _interleave(spec: np.ndarray) -> np.ndarray:
    out = np.empty(spec.shape + (2,))
    out[..., 0] = spec.real
    out[..., 1] = spec.imag
    return out.reshape(spec.shape[:-1] + (2 * spec.shape[-1],))


def normalize_dft(spectra, stats: GlobalStats) -> np.ndarray:
    """``(..., M, K)`` complex spectra to ``(..., 2*K*M)`` normalized real frames."""
    s = np.asarray(spectra)
    if s.ndim < 2:
        raise ValueError("expected spectra with a channel axis (..., M, K)")
    if 2 * s.shape[-1] != stats.dims:
        raise ValueError(f"spectra have {s.shape[-1]} bins, stats expect {stats.n_bins}")
    z = (_interleave(s) - stats.mean) / np.sqrt(stats.variance)
    return z.reshape(s.shape[:-2] + (-1,))


def denormalize_dft(frames, stats: GlobalStats, n_channels: int) -> np.ndarray:
    z = np.asarray(frames, dtype=float)
    if z.shape[-1] != n_channels * stats.dims:
        raise ValueError(f"frame length {z.shape[-1]} != {n_channels} x {stats.dims}")
    z = z.reshape(z.shape[:-1] + (n_channels, stats.dims))
    x = z * np.sqrt(stats.variance) + stats.mean
    return x[..., 0::2] + 1j * x[..., 1::2]


_STATS_MAGIC = b"MGST"
_STATS_VERSION = 1


def save_stats(stats: GlobalStats, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_STATS_MAGIC + struct.pack("<II", _STATS_VERSION, stats.dims))
        fh.write(stats.mean.astype("<f8").tobytes())
        fh.write(stats.variance.astype("<f8").tobytes())


def load_stats(path: str | Path) -> GlobalStats:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _STATS_MAGIC:
        raise ValueError(f"{path}: not a global stats file (bad magic)")
    version, dims = struct.unpack("<II", raw[4:12])
    if version != _STATS_VERSION:
        raise ValueError(f"{path}: unsupported stats version {version}")
    if len(raw) != 12 + 16 * dims:
        raise ValueError(f"{path}: truncated or oversized stats file")
    vals = np.frombuffer(raw[12:], dtype="<f8").astype(float)
    return GlobalStats(vals[:dims], vals[dims:])


# --------------------------------------------------------------------------
# mel filterbank and LFBE


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    matrix: np.ndarray = field(repr=False)
    edges_hz: np.ndarray = field(repr=False)

    @property
    def centers_hz(self) -> np.ndarray:
        return self.edges_hz[1:-1]


def _triangle_bin_average(lo, mid, hi, a, b):
    """Mean of the unit-peak triangle (lo, mid, hi) over the interval [a, b]."""

    def prim(x):
        # antiderivative of the triangle, clipped to its support
        x = np.clip(x, lo, hi)
        left = np.where(x <= mid, (x - lo) ** 2 / (2 * (mid - lo)), (mid - lo) / 2)
        right = np.where(
            x > mid, (hi - mid) / 2 - (hi - x) ** 2 / (2 * (hi - mid)), 0.0
        )
        return left + right

    return (prim(b) - prim(a)) / (b - a)


def mel_filterbank(
    num_filters: int = 64, cfg: StftConfig = DFT_CONFIG, f_min: float = 0.0, f_max: float | None = None
) -> MelFilterbank:
    """Triangular filters with centers uniform on the mel scale.

    Each weight is the triangle's mean over the bin's frequency span rather
    than its value at the bin center, so filters narrower than one bin still
    get a nonzero row.
    """
    nyq = cfg.sample_rate / 2.0
    f_max = nyq if f_max is None else f_max
    if not 0.0 <= f_min < f_max <= nyq:
        raise ValueError(f"invalid mel band edges [{f_min}, {f_max}] for fs={cfg.sample_rate}")
    if num_filters < 1:
        raise ValueError("num_filters must be positive")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), num_filters + 2))
    df = cfg.sample_rate / cfg.fft_size
    fk = cfg.bin_frequencies
    a, b = fk - df / 2, fk + df / 2
    mat = np.stack(
        [_triangle_bin_average(edges[i], edges[i + 1], edges[i + 2], a, b) for i in range(num_filters)]
    )
    return MelFilterbank(mat, edges)


def power_spectrum(frames, cfg: StftConfig) -> np.ndarray:
    return np.abs(dft_frame(frames, cfg)) ** 2


def lfbe_frame(frame, fbank: MelFilterbank, cfg: StftConfig = LFBE_CONFIG) -> np.ndarray:
    """Log mel energies of one or more windowed frames."""
    p = power_spectrum(frame, cfg)
    # row-wise reduction instead of a matmul keeps single frames bit-identical to batches
    mel = np.sum(p[..., None, :] * fbank.matrix, axis=-1)
    return np.log(np.maximum(mel, LOG_FLOOR))


def causal_mean_normalize(features, alpha: float = 0.997) -> np.ndarray:
    """Subtract an exponentially decaying running mean that includes the current frame."""
    return CausalMeanNormalizer(alpha).process(features)


class CausalMeanNormalizer:
    """Stateful form of :func:`causal_mean_normalize` for streaming use."""

    def __init__(self, alpha: float = 0.997):
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        self.alpha = alpha
        self.mean = None

    def process(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        out = np.empty_like(x)
        mu = self.mean
        for t in range(x.shape[0]):
            mu = x[t].copy() if mu is None else self.alpha * mu + (1.0 - self.alpha) * x[t]
            out[t] = x[t] - mu
        self.mean = mu
        return out


# --------------------------------------------------------------------------
# estimator wrappers


class DftFeatureExtractor(TransformerMixin, BaseEstimator):
    """Waveforms ``(M, N)`` to complex spectra ``(T, M, K)``.

    Stateless; ``fit`` only records the channel count.
    """

    def __init__(self, sample_rate=16000, window_len=200, hop=160, fft_size=256, window="hann"):
        self.sample_rate = sample_rate
        self.window_len = window_len
        self.hop = hop
        self.fft_size = fft_size
        self.window = window

    @property
    def config(self) -> StftConfig:
        return StftConfig(self.sample_rate, self.window_len, self.hop, self.fft_size, self.window)

    def fit(self, X=None, y=None):
        self.config_ = self.config
        if X is not None:
            self.n_channels_ = check_waveform(X[0] if isinstance(X, list) else X).shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        if isinstance(X, list):
            return [stft(x, self.config_) for x in X]
        return stft(X, self.config_)


class GlobalNormalizer(TransformerMixin, BaseEstimator):
    """Fit pooled per-bin mean/variance on complex spectra; emit normalized real frames."""

    def fit(self, X, y=None):
        acc = StatsAccumulator()
        for spec in X if isinstance(X, list) else [X]:
            acc.update(check_spectra(spec))
        self.stats_ = acc.finalize()
        self.n_bins_ = self.stats_.n_bins
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        if isinstance(X, list):
            return [normalize_dft(check_spectra(s), self.stats_) for s in X]
        return normalize_dft(check_spectra(X), self.stats_)

    def inverse_transform(self, X, n_channels=1):
        check_is_fitted(self, "stats_")
        return denormalize_dft(X, self.stats_, n_channels)


class LfbeExtractor(TransformerMixin, BaseEstimator):
    """Mono waveform to ``(T, n_mels)`` log-mel energies, optionally mean-normalized online."""

    def __init__(self, n_mels=64, f_min=0.0, f_max=None, causal_alpha=0.997, causal_norm=True):
        self.n_mels = n_mels
        self.f_min = f_min
        self.f_max = f_max
        self.causal_alpha = causal_alpha
        self.causal_norm = causal_norm

    def fit(self, X=None, y=None):
        self.fbank_ = mel_filterbank(self.n_mels, LFBE_CONFIG, self.f_min, self.f_max)
        return self

    def _one(self, x):
        x = check_waveform(x)
        feats = lfbe_frame(frame_stream(x[0], LFBE_CONFIG), self.fbank_, LFBE_CONFIG)
        if self.causal_norm:
            feats = causal_mean_normalize(feats, self.causal_alpha)
        return feats

    def transform(self, X):
        check_is_fitted(self, "fbank_")
        if isinstance(X, list):
            return [self._one(x) for x in X]
        return self._one(X)
