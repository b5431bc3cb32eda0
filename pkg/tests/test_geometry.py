import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgsf.geometry import (
    ArrayGeometry,
    Direction,
    GeometryError,
    PhysicalConstants,
    array_manifold,
    circular_array,
    geometry_dissimilarity,
    linear_pair,
    load_geometry,
    look_directions,
    pairwise_distances,
    save_geometry,
    steering_delays,
)

coord = st.floats(-0.2, 0.2, allow_nan=False)


def _random_geometry(rng, m):
    while True:
        try:
            return ArrayGeometry("rand", rng.uniform(-0.1, 0.1, (m, 3)))
        except GeometryError:
            pass


def test_two_mic_distance():
    g = ArrayGeometry("p", [[0, 0, 0], [0.073, 0, 0]])
    assert pairwise_distances(g)[0, 1] == pytest.approx(0.073, abs=1e-15)


def test_self_distance_zero_and_symmetric(circ7):
    d = pairwise_distances(circ7)
    assert np.all(np.diag(d) == 0)
    assert np.array_equal(d, d.T)


def test_circular_center_to_rim(circ7):
    d = pairwise_distances(circ7)
    assert np.allclose(d[0, 1:], 0.036, atol=1e-15)


def test_geometry_validation():
    with pytest.raises(GeometryError):
        ArrayGeometry("bad", [[0, 0, 0], [0.0005, 0, 0]])
    with pytest.raises(GeometryError):
        ArrayGeometry("bad", [[0, 0, float("nan")]])
    with pytest.raises(GeometryError):
        ArrayGeometry("bad", np.zeros((0, 3)))
    with pytest.raises(GeometryError):
        ArrayGeometry("bad", [[0, 0]])


def test_constants_validation():
    with pytest.raises(ValueError):
        PhysicalConstants(speed_of_sound=0)
    with pytest.raises(ValueError):
        PhysicalConstants(sample_rate=-1)


def test_direction_unit_vector_and_wrap():
    d = Direction(-math.pi / 2, 0.3)
    assert 0 <= d.azimuth < 2 * math.pi
    assert np.linalg.norm(d.unit_vector) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        Direction(0.0, 2.0)


def test_single_sensor_at_origin_has_zero_delay():
    g = ArrayGeometry("o", [[0, 0, 0]])
    assert steering_delays(g, Direction(1.0, 0.2))[0] == 0
    assert array_manifold(g, Direction(0.7), 3000.0)[0] == 1


def test_endfire_delay_difference():
    g = ArrayGeometry("p", [[0, 0, 0], [0.073, 0, 0]])
    tau = steering_delays(g, Direction(0.0))
    # hand calculation: d / c = 0.073 / 343
    assert abs(tau[1] - tau[0]) == pytest.approx(2.12827988338192e-4, rel=1e-12)
    # the sensor nearer the source hears the wave first
    assert tau[1] < tau[0]


def test_broadside_equal_delays(pair73):
    tau = steering_delays(pair73, Direction.from_degrees(90))
    assert tau[0] == pytest.approx(tau[1], abs=1e-18)


def test_manifold_zero_frequency(circ7):
    assert np.array_equal(array_manifold(circ7, Direction(1.1), 0.0), np.ones(7))


def test_manifold_endfire_phase():
    g = ArrayGeometry("p", [[0, 0, 0], [0.073, 0, 0]])
    v = array_manifold(g, Direction(0.0), 2 * math.pi * 1000)
    # hand calculation: 2 pi f d / c
    assert abs(np.angle(v[1] / v[0])) == pytest.approx(1.33723768928312, rel=1e-12)


def test_manifold_frequency_vector_shape(circ7):
    v = array_manifold(circ7, Direction(0.3), np.linspace(0, 1e4, 5))
    assert v.shape == (5, 7)
    with pytest.raises(ValueError):
        array_manifold(circ7, Direction(0.3), -1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.floats(0, 2 * math.pi), st.floats(-1.5, 1.5), st.floats(0, 5e4), st.integers(0, 2**32 - 1))
def test_manifold_norm_is_m(m, az, el, omega, seed):
    g = _random_geometry(np.random.default_rng(seed), m)
    v = array_manifold(g, Direction(az, el), omega)
    assert np.sum(np.abs(v) ** 2) == pytest.approx(m, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(coord, coord, coord, st.floats(0, 2 * math.pi), st.floats(100, 8000), st.integers(0, 2**32 - 1))
def test_translation_equivariance(tx, ty, tz, az, f, seed):
    g = _random_geometry(np.random.default_rng(seed), 4)
    shifted = ArrayGeometry("s", g.positions + np.array([tx, ty, tz]))
    d = Direction(az, 0.2)
    dt = steering_delays(shifted, d) - steering_delays(g, d)
    assert np.allclose(dt, dt[0], atol=1e-15)
    om = 2 * math.pi * f
    v1, v2 = array_manifold(g, d, om), array_manifold(shifted, d, om)
    ratio = v2 / v1
    assert np.allclose(ratio, ratio[0], atol=1e-9)


def test_dissimilarity_examples(pair73, pair36):
    p63 = linear_pair(0.063)
    assert geometry_dissimilarity(pair73, pair73) == 0
    assert geometry_dissimilarity(pair73, p63) == pytest.approx(0.010, abs=1e-12)
    assert geometry_dissimilarity(pair73, pair36) == pytest.approx(0.037, abs=1e-12)
    with pytest.raises(GeometryError):
        geometry_dissimilarity(pair73, circular_array())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dissimilarity_pseudometric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_geometry(rng, 4) for _ in range(3))
    assert geometry_dissimilarity(a, b) == pytest.approx(geometry_dissimilarity(b, a), abs=1e-15)
    assert geometry_dissimilarity(a, a) == 0
    assert geometry_dissimilarity(a, c) <= geometry_dissimilarity(a, b) + geometry_dissimilarity(b, c) + 1e-12


def test_look_directions_grid():
    dirs = look_directions()
    assert len(dirs) == 12
    assert [round(math.degrees(d.azimuth)) for d in dirs] == list(range(0, 360, 30))


def test_geometry_json_roundtrip(tmp_path, circ7):
    path = tmp_path / "g.json"
    save_geometry(circ7, path)
    data = json.loads(path.read_text())
    assert set(data) == {"id", "positions_m"}
    assert load_geometry(path) == circ7


def test_geometry_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(GeometryError):
        load_geometry(bad)
    bad.write_text(json.dumps({"id": "x"}))
    with pytest.raises(GeometryError):
        load_geometry(bad)
    with pytest.raises(FileNotFoundError):
        load_geometry(tmp_path / "missing.json")
