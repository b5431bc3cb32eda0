import csv
import math

import numpy as np
import pytest

from mgsf.audio import read_wav
from mgsf.beamform import diffuse_coherence
from mgsf.dsp import DFT_CONFIG, stft
from mgsf.geometry import ArrayGeometry, Direction, PhysicalConstants, linear_pair, steering_delays
from mgsf.simkit import (
    SimScenario,
    ToySignalSpec,
    class_signal,
    diffuse_noise,
    fibonacci_sphere,
    fractional_delay_filter,
    make_toy_dataset,
    mix_at_snr,
    plane_wave_render,
    render_scenario,
)


def test_fractional_delay_integer_is_impulse():
    h = fractional_delay_filter(0.0, 32)
    assert np.argmax(h) == 16
    assert h[16] == pytest.approx(1.0)
    assert np.allclose(np.delete(h, 16), 0, atol=1e-15)


def test_fractional_delay_group_delay():
    # a low-frequency tone is shifted by taps/2 + delay samples
    h = fractional_delay_filter(0.3, 64)
    w = 2 * np.pi * 0.004
    H = np.sum(h * np.exp(-1j * w * np.arange(64)))
    assert -np.angle(H) / w == pytest.approx(32.3, abs=1e-3)
    assert abs(H) == pytest.approx(1.0, abs=1e-3)


def test_plane_wave_inter_channel_delay():
    g = linear_pair(0.1)
    d = Direction(0.0)
    src = np.random.default_rng(0).standard_normal(16000)
    x = plane_wave_render(src, g, d)
    X = np.fft.rfft(x, axis=-1)
    f = np.fft.rfftfreq(16000, 1 / 16000)
    band = (f > 200) & (f < 2000)
    phase = np.unwrap(np.angle(X[1, band] * X[0, band].conj()))
    slope = np.polyfit(2 * np.pi * f[band], phase, 1)[0]
    tau = steering_delays(g, d)
    assert -slope == pytest.approx(tau[1] - tau[0], rel=1e-3)


def test_plane_wave_rejects_large_aperture():
    g = ArrayGeometry("wide", [[0, 0, 0], [1.0, 0, 0]])
    with pytest.raises(ValueError, match="aperture"):
        plane_wave_render(np.zeros(100), g, Direction(0.0))


def test_fibonacci_sphere_unit_and_balanced():
    v = fibonacci_sphere(500)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0)
    assert np.linalg.norm(v.mean(axis=0)) < 0.01


def test_diffuse_noise_unit_variance_and_seeded(circ7):
    a = diffuse_noise(circ7, 32000, seed=3)
    assert a.shape == (7, 32000)
    assert np.allclose(a.var(axis=1), 1.0, atol=0.05)
    assert np.array_equal(a, diffuse_noise(circ7, 32000, seed=3))
    assert not np.array_equal(a, diffuse_noise(circ7, 32000, seed=4))


def test_diffuse_noise_long_signal_blocks(pair36):
    x = diffuse_noise(pair36, 70000, seed=1)
    assert x.shape == (2, 70000) and np.all(np.isfinite(x))


def test_diffuse_noise_coherence_follows_sinc(pair73):
    x = diffuse_noise(pair73, 16000 * 30, seed=0)
    X = stft(x)
    S01 = np.mean(X[:, 0] * X[:, 1].conj(), axis=0)
    coh = np.real(S01) / np.sqrt(np.mean(np.abs(X[:, 0]) ** 2, 0) * np.mean(np.abs(X[:, 1]) ** 2, 0))
    ref = diffuse_coherence(pair73, DFT_CONFIG.bin_omegas)[:, 0, 1]
    low = DFT_CONFIG.bin_frequencies <= 4000
    assert np.max(np.abs(coh[low] - ref[low])) < 0.05


def test_mix_at_snr_sets_channel0_ratio(rng):
    t = rng.standard_normal((2, 4000))
    n = rng.standard_normal((2, 4000)) * 3
    y = mix_at_snr(t, n, 10.0)
    noise = y - t
    assert 10 * np.log10(np.mean(t[0] ** 2) / np.mean(noise[0] ** 2)) == pytest.approx(10.0)
    assert np.array_equal(mix_at_snr(t, n, math.inf), t)


def test_mix_at_snr_errors(rng):
    t = rng.standard_normal((2, 100))
    with pytest.raises(ValueError):
        mix_at_snr(np.zeros((2, 100)), t, 5)
    with pytest.raises(ValueError):
        mix_at_snr(t, np.zeros((2, 100)), 5)
    with pytest.raises(ValueError):
        mix_at_snr(t, t[:, :50], 5)


def test_class_signal_depends_on_label():
    spec = ToySignalSpec(cue_level_db=0.0)
    f = np.fft.rfftfreq(16000, 1 / 16000)
    peaks = []
    for label in range(4):
        s = class_signal(label, 16000, 16000, np.random.default_rng(label), spec)
        assert np.all(np.isfinite(s)) and s[0] == 0.0
        S = np.abs(np.fft.rfft(s))
        band = (f > 350) & (f < 1300)
        peaks.append(f[band][np.argmax(S[band])])
    # class cue centers step by step_hz
    assert np.all(np.diff(peaks) > 60)


def test_scenario_validation(pair36):
    with pytest.raises(ValueError):
        SimScenario(pair36, Direction(0), 0, 5.0, duration=0)
    with pytest.raises(ValueError):
        SimScenario(pair36, Direction(0), 0, float("nan"))
    with pytest.raises(ValueError):
        SimScenario(pair36, Direction(0), 0, -math.inf)


def test_render_scenario_level_and_determinism(pair36):
    scen = SimScenario(pair36, Direction(1.0), 2, math.inf, 0.5, seed=9)
    x = render_scenario(scen)
    assert x.shape == (2, 8000)
    assert np.sqrt(np.mean(x[0] ** 2)) == pytest.approx(0.05)
    noisy = SimScenario(pair36, Direction(1.0), 2, 5.0, 0.5, seed=9)
    assert np.array_equal(render_scenario(noisy), render_scenario(noisy))


def test_toy_dataset_layout(tmp_path, pair73, pair36):
    utts = make_toy_dataset([pair73, pair36], 1, snr_grid=(5.0, 25.0), duration=0.3, seed=4, out_dir=tmp_path)
    assert len(utts) == 2 * 2 * 4
    assert {u.geometry_id for u in utts} == {"pair73mm", "pair36mm"}
    assert sorted({u.label for u in utts}) == [0, 1, 2, 3]
    again = make_toy_dataset([pair73, pair36], 1, snr_grid=(5.0, 25.0), duration=0.3, seed=4)
    assert all(np.array_equal(a.audio, b.audio) for a, b in zip(utts, again))
    with open(tmp_path / "manifest.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 16 and rows[0]["split"] == "train"
    audio, rate = read_wav(tmp_path / rows[3]["path"])
    assert rate == 16000
    assert np.allclose(audio, utts[3].audio, atol=1e-7 * np.max(np.abs(utts[3].audio)) + 1e-12)


def test_toy_dataset_fixed_directions(pair36):
    dirs = [Direction(0.5), Direction(2.0)]
    utts = make_toy_dataset([pair36], 1, snr_grid=(15.0,), duration=0.2, directions=dirs)
    assert [round(u.azimuth, 6) for u in utts] == [0.5, 2.0, 0.5, 2.0]


def test_toy_dataset_arg_checks(pair36):
    with pytest.raises(ValueError):
        make_toy_dataset([pair36], 0)
    with pytest.raises(ValueError):
        make_toy_dataset([pair36], 1, classes=1)


def test_consts_flow_through(pair36):
    x = render_scenario(SimScenario(pair36, Direction(0.0), 0, math.inf, 0.25), PhysicalConstants(343.0, 8000))
    assert x.shape == (2, 2000)


def test_lattice_coherence_improves_with_more_directions(pair73):
    from mgsf.simkit import _lattice_factor

    pos = np.ascontiguousarray(pair73.positions, dtype=float).tobytes()
    f = np.fft.rfftfreq(512, 1 / 16000)
    ref = np.sinc(2 * f * 0.073 / 343.0)
    errs = []
    for n_dirs in (64, 256):
        L = _lattice_factor(pos, 2, 512, n_dirs, 343.0, 16000.0, 64)
        C = np.einsum("fij,fkj->fik", L, L.conj())
        coh = np.real(C[:, 0, 1]) / np.sqrt(np.real(C[:, 0, 0] * C[:, 1, 1]))
        band = f <= 4000
        errs.append(np.max(np.abs(coh[band] - ref[band])))
    assert errs[1] < errs[0]
