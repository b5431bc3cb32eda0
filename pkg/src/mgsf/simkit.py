"""Free-field multi-channel signal simulation.

Sources are far-field plane waves; each sensor receives the source delayed
by its steering delay through a 64-tap windowed-sinc fractional-delay
filter. Diffuse noise is a superposition of independent white plane waves
arriving from a Fibonacci lattice on the sphere, which reproduces the
``sinc(omega d / c)`` coherence of a spherically isotropic field.

There is no reverberation and no attenuation difference between sensors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.fft import irfft, rfft
from scipy.signal import fftconvolve

from .audio import write_wav
from .geometry import ArrayGeometry, Direction, PhysicalConstants, steering_delays

FD_TAPS = 64
NOISE_BLOCK = 1 << 16


def fractional_delay_filter(delay: float, taps: int = FD_TAPS) -> np.ndarray:
    """Blackman-windowed sinc delaying by ``taps // 2 + delay`` samples."""
    n = np.arange(taps)
    t = n - taps // 2 - delay
    win = np.where(
        np.abs(t) <= taps / 2,
        0.42 + 0.5 * np.cos(2 * np.pi * t / taps) + 0.08 * np.cos(4 * np.pi * t / taps),
        0.0,
    )
    return np.sinc(t) * win


def _delay_filters(geom, directions_xyz, consts, taps):
    """Filters ``(n_dir, M, taps)`` for plane waves from the given unit vectors."""
    tau = -(directions_xyz @ geom.positions.T) / consts.speed_of_sound
    delays = tau * consts.sample_rate
    if np.max(np.abs(delays), initial=0.0) > taps // 2 - 4:
        raise ValueError("array aperture too large for the fractional-delay filter length")
    n = np.arange(taps)
    t = n - taps // 2 - delays[..., None]
    win = np.where(
        np.abs(t) <= taps / 2,
        0.42 + 0.5 * np.cos(2 * np.pi * t / taps) + 0.08 * np.cos(4 * np.pi * t / taps),
        0.0,
    )
    return np.sinc(t) * win


def plane_wave_render(
    source,
    geom: ArrayGeometry,
    direction: Direction,
    consts: PhysicalConstants = PhysicalConstants(),
    taps: int = FD_TAPS,
) -> np.ndarray:
    """``(M, N)`` sensor signals for a mono far-field source; output length equals input length."""
    s = np.asarray(source, dtype=float)
    if s.ndim != 1:
        raise ValueError("source must be mono")
    h = _delay_filters(geom, direction.unit_vector[None], consts, taps)[0]
    full = fftconvolve(s[None, :], h, axes=-1)
    return full[:, taps // 2 : taps // 2 + s.size]


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` near-uniform unit vectors (equal-area Fibonacci lattice)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@lru_cache(maxsize=16)
def _lattice_factor(pos_key, m, n_fft, num_directions, c, fs, taps):
    """Per-bin square root ``(F, M, M)`` of the lattice cross-spectral matrix.

    ``C(f) = sum_d H_d(f) H_d(f)^H / e`` where ``H_d`` are the responses of
    direction ``d``'s delay filters and ``e`` their per-channel energy, so
    that every channel has unit variance.
    """
    geom = ArrayGeometry("_", np.frombuffer(pos_key).reshape(m, 3))
    h = _delay_filters(geom, fibonacci_sphere(num_directions), PhysicalConstants(c, fs), taps)
    scale = 1.0 / np.sqrt(np.sum(h * h, axis=(0, 2)))
    C = np.zeros((n_fft // 2 + 1, m, m), dtype=complex)
    for start in range(0, num_directions, 16):
        Hn = rfft(h[start : start + 16], n_fft, axis=-1) * scale[None, :, None]
        C += np.einsum("dmf,dnf->fmn", Hn, Hn.conj())
    lam, V = np.linalg.eigh(C)
    return V * np.sqrt(np.maximum(lam, 0.0))[:, None, :]


def diffuse_noise(
    geom: ArrayGeometry,
    n_samples: int,
    consts: PhysicalConstants = PhysicalConstants(),
    seed=0,
    num_directions: int = 256,
    taps: int = FD_TAPS,
) -> np.ndarray:
    """Spherically isotropic noise ``(M, n_samples)`` with unit expected variance per channel.

    The field is the superposition of independent white Gaussian plane waves
    from a ``num_directions``-point Fibonacci lattice, each passed through
    the same fractional-delay filters as :func:`plane_wave_render` (circular
    convolution over ``n_samples``). A sum of independent Gaussian waves is
    Gaussian, so it is drawn exactly from its per-bin cross-spectral matrix
    instead of summing every direction explicitly.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    if n_samples > NOISE_BLOCK:
        # long signals: independent blocks sharing one factorization
        blocks = [
            _noise_block(geom, NOISE_BLOCK, consts, rng, num_directions, taps)
            for _ in range(-(-n_samples // NOISE_BLOCK))
        ]
        return np.concatenate(blocks, axis=1)[:, :n_samples]
    return _noise_block(geom, n_samples, consts, rng, num_directions, taps)


def _noise_block(geom, n_samples, consts, rng, num_directions, taps):
    pos = np.ascontiguousarray(geom.positions, dtype=float)
    L = _lattice_factor(
        pos.tobytes(), geom.n_channels, n_samples, num_directions,
        float(consts.speed_of_sound), float(consts.sample_rate), taps,
    )
    nb, M = L.shape[0], geom.n_channels
    z = rng.standard_normal((nb, M)) + 1j * rng.standard_normal((nb, M))
    z *= np.sqrt(n_samples / 2.0)
    # DC and Nyquist bins of a real signal are real
    z[0] = z[0].real * np.sqrt(2.0)
    if n_samples % 2 == 0:
        z[-1] = z[-1].real * np.sqrt(2.0)
    Y = np.einsum("fmj,fj->mf", L, z)
    if n_samples % 2 == 0:
        Y[:, -1] = Y[:, -1].real
    Y[:, 0] = Y[:, 0].real
    return irfft(Y, n_samples, axis=-1)


def mix_at_snr(target, noise, snr_db: float) -> np.ndarray:
    """``target + g * noise`` with ``g`` set so channel-0 SNR equals ``snr_db``.

    ``snr_db = inf`` returns the target alone.
    """
    t = np.atleast_2d(np.asarray(target, dtype=float))
    n = np.atleast_2d(np.asarray(noise, dtype=float))
    if t.shape != n.shape:
        raise ValueError(f"target {t.shape} and noise {n.shape} shapes differ")
    if math.isinf(snr_db) and snr_db > 0:
        return t.copy()
    pt = np.mean(t[0] ** 2)
    pn = np.mean(n[0] ** 2)
    if pt <= 0:
        raise ValueError("target has zero power on channel 0")
    if pn <= 0:
        raise ValueError("noise has zero power on channel 0")
    return t + n * np.sqrt(pt / (pn * 10.0 ** (snr_db / 10.0)))


# --------------------------------------------------------------------------
# toy classification corpus


@dataclass(frozen=True)
class ToySignalSpec:
    """Parameters of the synthetic class signals.

    Every utterance carries a class cue (an amplitude-modulated tone-burst
    chirp whose center frequency, sweep direction and modulation rate depend
    on the class) riding on a class-independent harmonic carrier. The cue
    sits ``cue_level_db`` below the carrier, which sets how hard the task is
    at a given SNR.
    """

    base_hz: float = 500.0
    step_hz: float = 180.0
    jitter_hz: float = 30.0
    sweep_hz: float = 80.0
    am_rates_hz: tuple = (3.0, 5.0, 7.0, 9.0)
    burst_s: float = 0.12
    cue_level_db: float = -12.0
    carrier_f0_hz: tuple = (110.0, 190.0)
    carrier_band_hz: tuple = (150.0, 3500.0)


def class_signal(label: int, n_samples: int, fs: float, rng: np.random.Generator, spec=ToySignalSpec()):
    t = np.arange(n_samples) / fs
    fc = spec.base_hz + spec.step_hz * label + rng.uniform(-spec.jitter_hz, spec.jitter_hz)
    direction = 1.0 if label % 2 == 0 else -1.0
    # repeating sweeps: each burst glides across sweep_hz
    period = spec.burst_s
    frac = (t % period) / period
    inst_f = fc + direction * spec.sweep_hz * (frac - 0.5)
    phase = 2 * np.pi * np.cumsum(inst_f) / fs + rng.uniform(0, 2 * np.pi)
    rate = spec.am_rates_hz[label % len(spec.am_rates_hz)]
    am = 0.55 + 0.45 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    cue = am * np.sin(phase)

    f0 = rng.uniform(*spec.carrier_f0_hz)
    lo, hi = spec.carrier_band_hz
    harmonics = np.arange(max(1, int(np.ceil(lo / f0))), int(hi // f0) + 1)
    amps = 1.0 / np.sqrt(harmonics)
    phases = rng.uniform(0, 2 * np.pi, harmonics.size)
    vib = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(3, 6) * t)
    carrier_phase = 2 * np.pi * f0 * np.cumsum(vib) / fs
    carrier = np.sum(amps[:, None] * np.sin(harmonics[:, None] * carrier_phase + phases[:, None]), axis=0)

    cue *= 1.0 / np.sqrt(np.mean(cue**2))
    carrier *= 10.0 ** (-spec.cue_level_db / 20.0) / np.sqrt(np.mean(carrier**2))
    ramp = np.minimum(1.0, np.minimum(t, t[-1] - t) / 0.01)
    return (cue + carrier) * ramp


@dataclass(frozen=True)
class SimScenario:
    geometry: ArrayGeometry
    direction: Direction
    label: int
    snr_db: float
    duration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError("snr must be finite or +inf")


def render_scenario(
    scen: SimScenario,
    consts: PhysicalConstants = PhysicalConstants(),
    spec: ToySignalSpec = ToySignalSpec(),
    level: float = 0.05,
) -> np.ndarray:
    """Mixture ``(M, N)`` whose channel-0 target RMS equals ``level``."""
    rng = np.random.default_rng(scen.seed)
    n = int(round(scen.duration * consts.sample_rate))
    src = class_signal(scen.label, n, consts.sample_rate, rng, spec)
    target = plane_wave_render(src, scen.geometry, scen.direction, consts)
    target *= level / np.sqrt(np.mean(target[0] ** 2))
    if math.isinf(scen.snr_db):
        return target
    noise = diffuse_noise(scen.geometry, n, consts, rng.integers(2**63))
    return mix_at_snr(target, noise, scen.snr_db)


@dataclass
class Utterance:
    audio: np.ndarray
    label: int
    geometry_id: str
    snr_db: float
    split: str = "train"
    path: str = ""
    azimuth: float = float("nan")


def make_toy_dataset(
    geometries: list[ArrayGeometry],
    per_class: int,
    snr_grid=(5.0, 15.0, 25.0),
    classes: int = 4,
    seed: int = 0,
    split: str = "train",
    duration: float = 1.0,
    directions: list[Direction] | None = None,
    consts: PhysicalConstants = PhysicalConstants(),
    spec: ToySignalSpec = ToySignalSpec(),
    out_dir: str | Path | None = None,
) -> list[Utterance]:
    """``per_class`` utterances for every (geometry, SNR, class) cell.

    Source azimuths are drawn uniformly (elevation 0) unless ``directions``
    is given, in which case they cycle through it. Each utterance has its own
    seed derived from ``seed`` and its index, so the corpus is reproducible.
    With ``out_dir`` the audio is also written as 32-bit float WAV files and
    a ``manifest.csv`` is emitted.
    """
    if classes < 2 or per_class < 1:
        raise ValueError("need classes >= 2 and per_class >= 1")
    utts = []
    idx = 0
    for geom in geometries:
        for snr in snr_grid:
            for label in range(classes):
                for _ in range(per_class):
                    child = np.random.default_rng(np.random.SeedSequence([seed, idx]).generate_state(4))
                    if directions is None:
                        direction = Direction(child.uniform(0, 2 * np.pi))
                    else:
                        direction = directions[idx % len(directions)]
                    scen = SimScenario(
                        geom, direction, label, float(snr), duration, int(child.integers(2**63))
                    )
                    audio = render_scenario(scen, consts, spec)
                    utts.append(
                        Utterance(audio, label, geom.id, float(snr), split, azimuth=direction.azimuth)
                    )
                    idx += 1
    if out_dir is not None:
        write_corpus(utts, out_dir, int(consts.sample_rate))
    return utts


MANIFEST_FIELDS = ("path", "label", "geometry_id", "snr_db", "split")


def write_corpus(utts: list[Utterance], out_dir: str | Path, rate: int = 16000, manifest="manifest.csv"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, u in enumerate(utts):
        name = f"{u.split}_{u.geometry_id}_{i:05d}.wav"
        write_wav(out / name, u.audio, rate, fmt="float32")
        u.path = name
    write_manifest(utts, out / manifest)
    return out / manifest


def write_manifest(utts: list[Utterance], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for u in utts:
            w.writerow([u.path, u.label, u.geometry_id, repr(float(u.snr_db)), u.split])
