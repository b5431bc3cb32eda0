import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgsf.beamform import (
    BankFormatError,
    BeamSelector,
    LoadingPolicy,
    SingularCoherenceError,
    SuperdirectiveBeamformer,
    adjust_loading,
    apply_beamformer,
    apply_real_form,
    bank_from_bytes,
    bank_to_bytes,
    beam_energies,
    design_bank,
    diffuse_coherence,
    enhance_utterance,
    identity_bank,
    interleave,
    load_bank,
    real_form,
    save_bank,
    sd_weights,
    white_noise_power,
)
from mgsf.dsp import DFT_CONFIG, stft
from mgsf.geometry import ArrayGeometry, Direction, array_manifold, linear_pair, look_directions
from mgsf.simkit import plane_wave_render

# mpmath at 30 digits: sin(x)/x for x = 2*pi*1000*0.072/343
SINC_72MM_1KHZ = 0.734272597159521
FIRST_ZERO_72MM_HZ = 2381.94444444444


def test_coherence_reference_value():
    g = linear_pair(0.072)
    gam = diffuse_coherence(g, 2 * math.pi * 1000.0)
    assert gam[0, 1] == pytest.approx(SINC_72MM_1KHZ, abs=1e-14)
    assert gam[0, 0] == 1.0


def test_coherence_first_zero():
    g = linear_pair(0.072)
    assert diffuse_coherence(g, 2 * math.pi * FIRST_ZERO_72MM_HZ)[0, 1] == pytest.approx(0, abs=1e-13)


def test_coherence_shapes_and_symmetry(circ7):
    gam = diffuse_coherence(circ7, DFT_CONFIG.bin_omegas)
    assert gam.shape == (127, 7, 7)
    assert np.array_equal(gam, np.swapaxes(gam, 1, 2))
    assert np.all(np.abs(gam) <= 1.0)
    # PSD up to roundoff
    assert np.min(np.linalg.eigvalsh(gam)) > -1e-10
    with pytest.raises(ValueError):
        diffuse_coherence(circ7, -1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(100, 7900), st.floats(1e-4, 1.0))
def test_distortionless_property(az, f, loading):
    g = ArrayGeometry("c", [[0, 0, 0], [0.036, 0, 0], [0, 0.036, 0], [-0.036, 0.01, 0]])
    d = Direction(az)
    w = sd_weights(g, d, 2 * math.pi * f, loading)
    v = array_manifold(g, d, 2 * math.pi * f)
    assert abs(np.vdot(w, v) - 1) < 1e-9


def test_broadside_pair_weights_are_uniform():
    # a broadside source reaches both sensors at once; symmetry forces w = [1/2, 1/2]
    w = sd_weights(linear_pair(0.05), Direction.from_degrees(90), DFT_CONFIG.bin_omegas, 0.01)
    assert np.allclose(w, 0.5, atol=1e-12)


def test_single_sensor_weight_is_one():
    g = ArrayGeometry("mono", [[0, 0, 0]])
    w = sd_weights(g, Direction(1.0), DFT_CONFIG.bin_omegas)
    assert np.allclose(w, 1.0)


def test_large_loading_tends_to_delay_and_sum(circ7):
    om = 2 * math.pi * 2000
    d = Direction(0.7)
    w = sd_weights(circ7, d, om, 1e6)
    assert np.allclose(w, array_manifold(circ7, d, om) / 7, atol=1e-6)


def test_singular_coherence_reported():
    g = linear_pair(0.05)
    with pytest.raises(SingularCoherenceError, match="bin index"):
        sd_weights(g, Direction(0.0), np.array([0.0, 100.0]), 0.0)
    with pytest.raises(ValueError):
        sd_weights(g, Direction(0.0), 100.0, -1.0)


def test_mvdr_is_optimal_among_constrained(circ7, rng):
    om = 2 * math.pi * 1500
    d = Direction(1.1)
    load = 0.01
    w = sd_weights(circ7, d, om, load)
    v = array_manifold(circ7, d, om)
    Q = diffuse_coherence(circ7, om) + load * np.eye(7)
    base = np.real(np.vdot(w, Q @ w))
    for _ in range(200):
        u = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        u -= v * np.vdot(v, u) / np.vdot(v, v)
        wp = w + 0.1 * u
        assert np.real(np.vdot(wp, Q @ wp)) >= base - 1e-10


def test_white_noise_power():
    assert white_noise_power(np.array([0.5, 0.5j])) == pytest.approx(0.5)


def test_adjust_loading_meets_cap(circ7):
    om = 2 * math.pi * 300
    d = Direction(0.3)
    cap = 10.0
    s2, ok = adjust_loading(circ7, d, om, cap)
    assert ok
    assert white_noise_power(sd_weights(circ7, d, om, s2)) <= cap * (1 + 1e-9)
    # a slightly smaller loading violates the cap
    assert white_noise_power(sd_weights(circ7, d, om, s2 * 0.99)) > cap


def test_adjust_loading_edges(circ7):
    d = Direction(0.0)
    assert adjust_loading(circ7, d, 2 * math.pi * 7000, 1e3) == (1e-6, True)
    s2, ok = adjust_loading(circ7, d, 2 * math.pi * 200, 1e-3)
    assert (s2, ok) == (1e2, False)
    with pytest.raises(ValueError):
        adjust_loading(circ7, d, 1000.0, 0.0)


def test_real_form_block_structure():
    w = np.array([1 + 2j, -0.5 + 0.25j])
    R = real_form(w)
    assert R.shape == (4, 2)
    assert np.array_equal(R[:2], [[1, -2], [2, 1]])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_real_form_duality(m, seed):
    r = np.random.default_rng(seed)
    w = r.standard_normal(m) + 1j * r.standard_normal(m)
    X = r.standard_normal(m) + 1j * r.standard_normal(m)
    y = apply_beamformer(w, X)
    yr = apply_real_form(real_form(w), interleave(X))
    assert np.allclose(yr, [y.real, y.imag], rtol=1e-12, atol=1e-12)


def test_apply_beamformer_shape_check():
    with pytest.raises(ValueError):
        apply_beamformer(np.ones(3), np.ones(4))


def test_design_bank_shapes(pair73, pair36):
    bank = design_bank([pair73, pair36])
    assert bank.n_geometries == 2 and bank.n_directions == 12 and bank.n_bins == 127
    assert bank.weights[1].shape == (12, 127, 2)
    assert bank.loadings.shape == (2, 12, 127)
    assert bank.n_weight_vectors() == 2 * 12 * 127
    assert bank.index_of("pair36mm") == 1
    with pytest.raises(KeyError):
        bank.index_of("nope")


def test_design_bank_is_deterministic(pair36):
    a = bank_to_bytes(design_bank([pair36]))
    b = bank_to_bytes(design_bank([pair36]))
    assert a == b


def test_wng_policy_bank(pair73):
    bank = design_bank([pair73], look_directions(4), policy=LoadingPolicy.wng_cap_db(10))
    wn = white_noise_power(bank.weights[0])
    assert np.all(wn[bank.cap_reached[0]] <= 10.0 * (1 + 1e-9))
    assert np.all(bank.loadings >= 1e-6)


def test_loading_policy_validation():
    with pytest.raises(ValueError):
        LoadingPolicy("auto")
    with pytest.raises(ValueError):
        LoadingPolicy("wng", 0.0)
    assert LoadingPolicy("fixed", 0.0).value == 0.0


def test_bank_round_trip_bit_exact(tmp_path, pair73, circ7):
    bank = design_bank([pair73], look_directions(6))
    save_bank(bank, tmp_path / "b.mgbf")
    back = load_bank(tmp_path / "b.mgbf")
    assert bank_to_bytes(back) == bank_to_bytes(bank)
    assert np.array_equal(back.weights[0], bank.weights[0])
    assert back.geometries == bank.geometries


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + (9).to_bytes(4, "little") + b[8:], "version"),
        (lambda b: b[:200], "truncated"),
        (lambda b: b + b"\0", "trailing"),
    ],
)
def test_bank_corruption_rejected(pair36, mutate, message):
    raw = bank_to_bytes(design_bank([pair36], look_directions(2)))
    with pytest.raises(BankFormatError, match=message):
        bank_from_bytes(mutate(raw))


def test_bank_nonfinite_rejected(pair36):
    bank = design_bank([pair36], look_directions(2))
    bank.weights[0][0, 0, 0] = np.nan
    with pytest.raises(BankFormatError, match="non-finite"):
        bank_from_bytes(bank_to_bytes(bank))


def test_identity_bank_passes_through(rng):
    X = rng.standard_normal((5, 1, 127)) + 1j * rng.standard_normal((5, 1, 127))
    Y, idx = enhance_utterance(identity_bank(), X)
    assert np.allclose(Y, X[:, 0]) and np.all(idx == 0)


def test_beam_selector_moving_sum():
    sel = BeamSelector(3, window=2)
    assert sel.select([1, 0, 0]) == 0
    assert sel.select([0, 0.9, 0]) == 0
    assert sel.select([0, 0.9, 0]) == 1
    # ties go to the lowest index
    assert BeamSelector(2, 1).select([1, 1]) == 0
    with pytest.raises(ValueError):
        sel.select([1, 2])
    with pytest.raises(ValueError):
        sel.select([1, -1, 0])
    with pytest.raises(ValueError):
        BeamSelector(3, 0)


def test_beam_energies_consistent(pair73, rng):
    bank = design_bank([pair73], look_directions(4))
    X = rng.standard_normal((3, 2, 127)) + 1j * rng.standard_normal((3, 2, 127))
    Y, e = beam_energies(bank.weights[0], X)
    assert Y[1, 2, 5] == pytest.approx(apply_beamformer(bank.weights[0][2, 5], X[1, :, 5]))
    assert np.allclose(e, np.sum(np.abs(Y) ** 2, axis=-1))


def test_plane_wave_picks_its_direction(circ7):
    src = np.random.default_rng(5).standard_normal(8000)
    d = look_directions(12)[4]
    X = stft(plane_wave_render(src, circ7, d))
    _, idx = enhance_utterance(design_bank([circ7]), X, window=10)
    assert np.mean(idx == 4) > 0.98


def test_estimator_wrapper(circ7):
    src = np.random.default_rng(6).standard_normal(4000)
    X = stft(plane_wave_render(src, circ7, look_directions(12)[7]))
    bf = SuperdirectiveBeamformer(circ7).fit()
    Y = bf.transform(X)
    assert Y.shape == (X.shape[0], 127)
    assert np.mean(bf.beam_trace_ == 7) > 0.9
    with pytest.raises(ValueError):
        SuperdirectiveBeamformer().fit()
