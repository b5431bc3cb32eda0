"""Superdirective beamformer design and fixed-beam selection.

The noise model is the spherically isotropic (diffuse) field, whose
inter-sensor coherence at angular frequency ``omega`` is
``sinc(omega * d_mn / c)`` with the unnormalized sinc. Weights solve the
loaded MVDR problem

    w = (S + s2 I)^-1 v / (v^H (S + s2 I)^-1 v)

so that ``w^H v == 1`` toward the look direction.
"""

from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_spectra
from .dsp import DFT_CONFIG, StftConfig
from .geometry import (
    ArrayGeometry,
    Direction,
    PhysicalConstants,
    array_manifold,
    look_directions,
    pairwise_distances,
)

LOADING_MIN = 1e-6
LOADING_MAX = 1e2
_COND_LIMIT = 1e13


class SingularCoherenceError(np.linalg.LinAlgError):
    pass


def diffuse_coherence(
    geom: ArrayGeometry, omega, consts: PhysicalConstants = PhysicalConstants()
) -> np.ndarray:
    """Diffuse-field coherence, ``(M, M)`` for scalar ``omega`` or ``(K, M, M)``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("angular frequency must be nonnegative")
    x = omega[..., None, None] * pairwise_distances(geom) / consts.speed_of_sound
    # np.sinc is sin(pi x)/(pi x)
    return np.sinc(x / np.pi)


def sd_weights(
    geom: ArrayGeometry,
    direction: Direction,
    omega,
    loading: float = 0.01,
    consts: PhysicalConstants = PhysicalConstants(),
) -> np.ndarray:
    """Superdirective weights; shape ``(M,)`` or ``(K, M)`` following ``omega``."""
    if np.any(np.asarray(loading) < 0):
        raise ValueError(f"diagonal loading must be nonnegative, got {loading}")
    omega = np.asarray(omega, dtype=float)
    scalar = omega.ndim == 0
    om = np.atleast_1d(omega)
    loads = np.broadcast_to(np.asarray(loading, dtype=float), om.shape)
    m = geom.n_channels
    gamma = diffuse_coherence(geom, om, consts) + loads[:, None, None] * np.eye(m)
    v = array_manifold(geom, direction, om, consts)
    cond = np.linalg.cond(gamma)
    bad = np.flatnonzero(~(cond < _COND_LIMIT))
    if bad.size:
        k = int(bad[0])
        raise SingularCoherenceError(
            f"loaded coherence matrix singular at bin index {k} (omega={om[k]:.6g} rad/s, "
            f"loading={loads[k]:g}, cond={cond[k]:.3g})"
        )
    z = np.linalg.solve(gamma, v[..., None])[..., 0]
    denom = np.einsum("km,km->k", v.conj(), z)
    w = z / denom.conj()[:, None]
    return w[0] if scalar else w


def white_noise_power(w) -> np.ndarray:
    """``||w||^2`` along the last axis (inverse white noise gain for distortionless w)."""
    w = np.asarray(w)
    return np.sum(np.abs(w) ** 2, axis=-1)


def adjust_loading(
    geom: ArrayGeometry,
    direction: Direction,
    omega: float,
    wng_cap: float,
    consts: PhysicalConstants = PhysicalConstants(),
    iterations: int = 40,
) -> tuple[float, bool]:
    """Smallest loading in [1e-6, 1e2] with ``||w||^2 <= wng_cap``.

    Bisection runs on log(loading). Returns ``(loading, reached)``; when even
    the largest loading violates the cap, ``(1e2, False)``.
    """
    if not wng_cap > 0:
        raise ValueError("wng_cap must be positive")

    def norm2(s2):
        return float(white_noise_power(sd_weights(geom, direction, omega, s2, consts)))

    if norm2(LOADING_MIN) <= wng_cap:
        return LOADING_MIN, True
    if norm2(LOADING_MAX) > wng_cap:
        return LOADING_MAX, False
    lo, hi = np.log(LOADING_MIN), np.log(LOADING_MAX)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if norm2(np.exp(mid)) <= wng_cap:
            hi = mid
        else:
            lo = mid
    return float(np.exp(hi)), True


def apply_beamformer(w, X) -> np.ndarray:
    """``Y = w^H X`` summed over the trailing (channel) axis, broadcasting the rest."""
    w = np.asarray(w)
    X = np.asarray(X)
    if w.shape[-1] != X.shape[-1]:
        raise ValueError(f"weight length {w.shape[-1]} != snapshot length {X.shape[-1]}")
    return np.sum(w.conj() * X, axis=-1)


def real_form(w) -> np.ndarray:
    """Real ``(2M, 2)`` matrix ``R`` with ``R.T @ [Re X1, Im X1, ...] == [Re Y, Im Y]``.

    Per channel the block is ``[[a, -b], [b, a]]`` for ``w_m = a + jb``, the
    conjugated-weight arrangement that realizes ``w^H X``. Leading axes of
    ``w`` are kept.
    """
    w = np.asarray(w, dtype=complex)
    a, b = w.real, w.imag
    out = np.empty(w.shape[:-1] + (w.shape[-1], 2, 2))
    out[..., 0, 0] = a
    out[..., 0, 1] = -b
    out[..., 1, 0] = b
    out[..., 1, 1] = a
    return out.reshape(w.shape[:-1] + (2 * w.shape[-1], 2))


def interleave(X) -> np.ndarray:
    """Complex ``(..., M)`` to real ``(..., 2M)`` as ``[Re X1, Im X1, Re X2, ...]``."""
    X = np.asarray(X, dtype=complex)
    out = np.empty(X.shape + (2,))
    out[..., 0] = X.real
    out[..., 1] = X.imag
    return out.reshape(X.shape[:-1] + (2 * X.shape[-1],))


def apply_real_form(R, x) -> np.ndarray:
    """``R^T x`` for ``R`` of shape ``(..., 2M, 2)`` and interleaved ``x`` ``(..., 2M)``."""
    return np.einsum("...ij,...i->...j", R, x)


# --------------------------------------------------------------------------
# banks


@dataclass(frozen=True)
class LoadingPolicy:
    """``mode='fixed'`` uses ``value`` as the loading; ``mode='wng'`` caps ``||w||^2`` at ``value``."""

    mode: str = "fixed"
    value: float = 0.01

    def __post_init__(self):
        if self.mode not in ("fixed", "wng"):
            raise ValueError(f"unknown loading mode {self.mode!r}")
        if not self.value > 0 and not (self.mode == "fixed" and self.value == 0):
            raise ValueError("loading value must be positive")

    @classmethod
    def wng_cap_db(cls, db: float = 10.0) -> "LoadingPolicy":
        return cls("wng", 10.0 ** (db / 10.0))


@dataclass
class BeamformerBank:
    """Weights per geometry, each ``(D, K, M_g)``, on a shared look-direction and bin grid."""

    geometries: list[ArrayGeometry]
    directions: list[Direction]
    weights: list[np.ndarray] = field(repr=False)
    loadings: np.ndarray = field(repr=False)
    cfg: StftConfig = DFT_CONFIG
    consts: PhysicalConstants = PhysicalConstants()
    policy: LoadingPolicy = LoadingPolicy()
    cap_reached: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.geometries or not self.directions:
            raise ValueError("a bank needs at least one geometry and one direction")
        shapes = {(w.shape[0], w.shape[1]) for w in self.weights}
        if len(shapes) != 1:
            raise ValueError("all geometries must share the direction and frequency grid")
        for g, w in zip(self.geometries, self.weights):
            if w.shape[2] != g.n_channels:
                raise ValueError(f"weights for {g.id!r} have {w.shape[2]} channels, geometry {g.n_channels}")

    @property
    def n_geometries(self) -> int:
        return len(self.geometries)

    @property
    def n_directions(self) -> int:
        return len(self.directions)

    @property
    def n_bins(self) -> int:
        return self.weights[0].shape[1]

    @property
    def geometry_ids(self) -> list[str]:
        return [g.id for g in self.geometries]

    def index_of(self, geometry_id: str) -> int:
        try:
            return self.geometry_ids.index(geometry_id)
        except ValueError:
            raise KeyError(f"geometry {geometry_id!r} not in bank {self.geometry_ids}") from None

    def n_weight_vectors(self) -> int:
        return sum(w.shape[0] * w.shape[1] for w in self.weights)


def design_bank(
    geometries: list[ArrayGeometry],
    directions: list[Direction] | None = None,
    cfg: StftConfig = DFT_CONFIG,
    policy: LoadingPolicy = LoadingPolicy(),
    consts: PhysicalConstants | None = None,
) -> BeamformerBank:
    if not geometries:
        raise ValueError("need at least one geometry")
    directions = look_directions(12) if directions is None else list(directions)
    if not directions:
        raise ValueError("need at least one look direction")
    consts = consts or PhysicalConstants(sample_rate=cfg.sample_rate)
    omegas = cfg.bin_omegas
    weights, loads, reached = [], [], []
    for geom in geometries:
        wg = np.empty((len(directions), len(omegas), geom.n_channels), dtype=complex)
        lg = np.empty((len(directions), len(omegas)))
        rg = np.ones((len(directions), len(omegas)), dtype=bool)
        for d, direction in enumerate(directions):
            if policy.mode == "fixed":
                lg[d] = policy.value
            else:
                for k, om in enumerate(omegas):
                    lg[d, k], rg[d, k] = adjust_loading(geom, direction, om, policy.value, consts)
            wg[d] = sd_weights(geom, direction, omegas, lg[d], consts)
        weights.append(wg)
        loads.append(lg)
        reached.append(rg)
    return BeamformerBank(
        list(geometries), directions, weights, np.stack(loads), cfg, consts, policy, np.stack(reached)
    )


def identity_bank(cfg: StftConfig = DFT_CONFIG) -> BeamformerBank:
    """Single-sensor, single-direction bank with unit weights (pass-through)."""
    geom = ArrayGeometry("mono", [[0.0, 0.0, 0.0]])
    w = np.ones((1, cfg.n_bins, 1), dtype=complex)
    return BeamformerBank([geom], [Direction(0.0)], [w], np.zeros((1, 1, cfg.n_bins)), cfg)


# --------------------------------------------------------------------------
# bank file: "MGBF", version, G, D, K, M_g..., complex128 weights in (g, d, k, m)
# order, followed by a length-prefixed JSON trailer describing the grid.

_BANK_MAGIC = b"MGBF"
_BANK_VERSION = 1


def bank_to_bytes(bank: BeamformerBank) -> bytes:
    head = _BANK_MAGIC + struct.pack(
        "<IIII", _BANK_VERSION, bank.n_geometries, bank.n_directions, bank.n_bins
    )
    head += struct.pack(f"<{bank.n_geometries}I", *[g.n_channels for g in bank.geometries])
    body = b"".join(np.ascontiguousarray(w).astype("<c16").tobytes() for w in bank.weights)
    meta = {
        "geometries": [g.to_dict() for g in bank.geometries],
        "directions_rad": [[d.azimuth, d.elevation] for d in bank.directions],
        "stft": {
            "sample_rate": bank.cfg.sample_rate,
            "window_len": bank.cfg.window_len,
            "hop": bank.cfg.hop,
            "fft_size": bank.cfg.fft_size,
            "window": bank.cfg.window,
        },
        "speed_of_sound": bank.consts.speed_of_sound,
        "policy": [bank.policy.mode, bank.policy.value],
    }
    trailer = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    loads = np.ascontiguousarray(bank.loadings).astype("<f8").tobytes()
    return head + body + struct.pack("<I", len(trailer)) + trailer + loads


class BankFormatError(ValueError):
    pass


def bank_from_bytes(raw: bytes, source: str = "<bytes>") -> BeamformerBank:
    def fail(msg):
        raise BankFormatError(f"{source}: {msg}")

    if len(raw) < 20 or raw[:4] != _BANK_MAGIC:
        fail("not a beamformer bank file (bad magic)")
    version, G, D, K = struct.unpack("<IIII", raw[4:20])
    if version != _BANK_VERSION:
        fail(f"unsupported bank version {version} (expected {_BANK_VERSION})")
    off = 20
    if len(raw) < off + 4 * G:
        fail("truncated header")
    ms = struct.unpack(f"<{G}I", raw[off : off + 4 * G])
    off += 4 * G
    weights = []
    for m in ms:
        n = D * K * m * 16
        if len(raw) < off + n:
            fail("truncated weight block")
        weights.append(np.frombuffer(raw[off : off + n], dtype="<c16").astype(complex).reshape(D, K, m))
        off += n
    if len(raw) < off + 4:
        fail("missing metadata trailer")
    (tlen,) = struct.unpack("<I", raw[off : off + 4])
    off += 4
    if len(raw) < off + tlen + 8 * G * D * K:
        fail("truncated metadata trailer")
    try:
        meta = json.loads(raw[off : off + tlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        fail(f"corrupt metadata trailer ({exc})")
    off += tlen
    loads = np.frombuffer(raw[off : off + 8 * G * D * K], dtype="<f8").astype(float).reshape(G, D, K)
    if len(raw) != off + 8 * G * D * K:
        fail("trailing bytes after loading table")
    try:
        geoms = [ArrayGeometry.from_dict(g) for g in meta["geometries"]]
        dirs = [Direction(az, el) for az, el in meta["directions_rad"]]
        cfg = StftConfig(**meta["stft"])
        consts = PhysicalConstants(meta["speed_of_sound"], cfg.sample_rate)
        policy = LoadingPolicy(*meta["policy"])
    except (KeyError, TypeError, ValueError) as exc:
        fail(f"invalid metadata trailer ({exc})")
    if len(geoms) != G or len(dirs) != D or any(g.n_channels != m for g, m in zip(geoms, ms)):
        fail("metadata does not match header dimensions")
    if cfg.n_bins != K:
        fail("bin count does not match the STFT configuration")
    if not np.all(np.isfinite(loads)) or any(not np.all(np.isfinite(w)) for w in weights):
        fail("non-finite weights or loadings")
    return BeamformerBank(geoms, dirs, weights, loads, cfg, consts, policy)


def save_bank(bank: BeamformerBank, path: str | Path) -> None:
    Path(path).write_bytes(bank_to_bytes(bank))


def load_bank(path: str | Path) -> BeamformerBank:
    return bank_from_bytes(Path(path).read_bytes(), str(path))


# --------------------------------------------------------------------------
# beam selection


class BeamSelector:
    """Pick the beam with the largest energy summed over the last ``window`` frames.

    Ties resolve to the lowest index.
    """

    def __init__(self, n_beams: int, window: int = 10):
        if window < 1:
            raise ValueError("smoothing window must be >= 1")
        if n_beams < 1:
            raise ValueError("need at least one beam")
        self.n_beams = n_beams
        self.window = window
        self.history: deque[np.ndarray] = deque(maxlen=window)
        self.index = 0

    def select(self, energies) -> int:
        e = np.asarray(energies, dtype=float)
        if e.shape != (self.n_beams,):
            raise ValueError(f"expected {self.n_beams} beam energies, got shape {e.shape}")
        if np.any(e < 0):
            raise ValueError("beam energies must be nonnegative")
        self.history.append(e)
        total = np.zeros(self.n_beams)
        for h in self.history:
            total += h
        self.index = int(np.argmax(total))
        return self.index


def select_beam(state: BeamSelector, energies) -> int:
    return state.select(energies)


def beam_energies(weights: np.ndarray, spectra: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outputs ``(T, D, K)`` and energies ``(T, D)`` of ``(D, K, M)`` weights on ``(T, M, K)`` spectra."""
    Y = np.einsum("dkm,tmk->tdk", weights.conj(), spectra)
    return Y, np.sum(np.abs(Y) ** 2, axis=-1)


def enhance_utterance(
    bank: BeamformerBank,
    spectra,
    geometry: int | str = 0,
    window: int = 10,
    normalize_energy: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-beam enhancement: returns selected-beam spectra ``(T, K)`` and beam indices ``(T,)``."""
    g = bank.index_of(geometry) if isinstance(geometry, str) else int(geometry)
    w = bank.weights[g]
    X = check_spectra(spectra, n_channels=w.shape[2], n_bins=bank.n_bins)
    Y, energy = beam_energies(w, X)
    if normalize_energy:
        energy = energy / np.mean(white_noise_power(w), axis=1)
    selector = BeamSelector(bank.n_directions, window)
    idx = np.array([selector.select(e) for e in energy], dtype=int)
    return Y[np.arange(len(idx)), idx], idx


class SuperdirectiveBeamformer(TransformerMixin, BaseEstimator):
    """Fixed superdirective beams with max-energy selection, as a transformer.

    ``transform`` maps ``(T, M, K)`` spectra to the selected beam's ``(T, K)``
    spectra; the per-frame beam choice of the last call is kept in
    ``beam_trace_``.

    Parameters
    ----------
    geometry : ArrayGeometry
    n_directions : int, default=12
    loading : float, default=0.01
        Fixed diagonal loading; ignored when ``wng_cap_db`` is set.
    wng_cap_db : float or None
        Cap on ``||w||^2`` in dB; selects per-bin loading by bisection.
    smoothing : int, default=10
        Moving-sum window (frames) for beam selection.
    normalize_energy : bool, default=False
    """

    def __init__(
        self,
        geometry=None,
        n_directions=12,
        loading=0.01,
        wng_cap_db=None,
        smoothing=10,
        normalize_energy=False,
        fft_size=256,
        sample_rate=16000,
    ):
        self.geometry = geometry
        self.n_directions = n_directions
        self.loading = loading
        self.wng_cap_db = wng_cap_db
        self.smoothing = smoothing
        self.normalize_energy = normalize_energy
        self.fft_size = fft_size
        self.sample_rate = sample_rate

    def fit(self, X=None, y=None):
        if self.geometry is None:
            raise ValueError("geometry is required")
        policy = (
            LoadingPolicy("fixed", self.loading)
            if self.wng_cap_db is None
            else LoadingPolicy.wng_cap_db(self.wng_cap_db)
        )
        cfg = StftConfig(sample_rate=self.sample_rate, fft_size=self.fft_size)
        self.bank_ = design_bank([self.geometry], look_directions(self.n_directions), cfg, policy)
        self.n_channels_ = self.geometry.n_channels
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        out, self.beam_trace_ = enhance_utterance(
            self.bank_, X, 0, self.smoothing, self.normalize_energy
        )
        return out

    def select_beams(self, X) -> np.ndarray:
        self.transform(X)
        return self.beam_trace_
