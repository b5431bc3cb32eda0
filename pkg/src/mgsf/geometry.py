"""Array geometries, look directions and plane-wave steering.

Positions are in meters, delays in seconds. For a far-field source in the
direction of the unit vector ``u`` (array toward source), the wavefront reaches
sensor ``m`` at ``tau_m = -(p_m . u) / c`` relative to the coordinate origin,
so sensors closer to the source get more negative delays. The array manifold
is ``exp(-1j * omega * tau)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_SENSOR_SPACING = 1e-3


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalConstants:
    speed_of_sound: float = 343.0
    sample_rate: float = 16000.0

    def __post_init__(self):
        if not self.speed_of_sound > 0:
            raise ValueError(f"speed_of_sound must be positive, got {self.speed_of_sound}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")


@dataclass(frozen=True)
class Direction:
    """Far-field direction of arrival (radians)."""

    azimuth: float
    elevation: float = 0.0

    def __post_init__(self):
        az = float(self.azimuth) % (2.0 * math.pi)
        # floating modulo can land exactly on 2*pi
        if az >= 2.0 * math.pi:
            az = 0.0
        object.__setattr__(self, "azimuth", az)
        if not -math.pi / 2 <= self.elevation <= math.pi / 2:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")

    @classmethod
    def from_degrees(cls, azimuth: float, elevation: float = 0.0) -> "Direction":
        return cls(math.radians(azimuth), math.radians(elevation))

    @property
    def unit_vector(self) -> np.ndarray:
        """Unit vector pointing from the array toward the source."""
        ce = math.cos(self.elevation)
        return np.array(
            [ce * math.cos(self.azimuth), ce * math.sin(self.azimuth), math.sin(self.elevation)]
        )

    @property
    def propagation_vector(self) -> np.ndarray:
        """Unit vector of wave travel (source toward array)."""
        return -self.unit_vector


@dataclass(frozen=True)
class ArrayGeometry:
    id: str
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1 and pos.size == 3:
            pos = pos[None, :]
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise GeometryError(f"positions must have shape (M, 3) with M >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("sensor positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        d = _distance_matrix(pos)
        iu = np.triu_indices(len(pos), 1)
        if iu[0].size and np.min(d[iu]) < MIN_SENSOR_SPACING:
            raise GeometryError(
                f"geometry {self.id!r}: sensors closer than {MIN_SENSOR_SPACING * 1e3:g} mm"
            )

    @property
    def n_channels(self) -> int:
        return self.positions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ArrayGeometry):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.positions, other.positions)

    def __hash__(self):
        return hash((self.id, self.positions.tobytes()))

    def to_dict(self) -> dict:
        return {"id": self.id, "positions_m": self.positions.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ArrayGeometry":
        try:
            return cls(str(data["id"]), np.asarray(data["positions_m"], dtype=float))
        except (KeyError, TypeError) as exc:
            raise GeometryError(f"malformed geometry record: {exc}") from exc


def _distance_matrix(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def pairwise_distances(geom: ArrayGeometry) -> np.ndarray:
    return _distance_matrix(geom.positions)


def steering_delays(
    geom: ArrayGeometry, direction: Direction, consts: PhysicalConstants = PhysicalConstants()
) -> np.ndarray:
    return -(geom.positions @ direction.unit_vector) / consts.speed_of_sound


def array_manifold(
    geom: ArrayGeometry,
    direction: Direction,
    omega: float | np.ndarray,
    consts: PhysicalConstants = PhysicalConstants(),
) -> np.ndarray:
    """Steering vector(s) ``exp(-j omega tau)``.

    A scalar ``omega`` gives an ``(M,)`` vector; an array of ``K`` frequencies
    gives shape ``(K, M)``.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("angular frequency must be nonnegative")
    tau = steering_delays(geom, direction, consts)
    return np.exp(-1j * omega[..., None] * tau)


def geometry_dissimilarity(ref: ArrayGeometry, test: ArrayGeometry) -> float:
    """Sum over sensor pairs of the absolute change in inter-sensor distance."""
    if ref.n_channels != test.n_channels:
        raise GeometryError(
            f"channel count mismatch: {ref.id!r} has {ref.n_channels}, {test.id!r} has {test.n_channels}"
        )
    iu = np.triu_indices(ref.n_channels, 1)
    return float(np.sum(np.abs(pairwise_distances(ref)[iu] - pairwise_distances(test)[iu])))


def look_directions(n: int = 12, elevation: float = 0.0) -> list[Direction]:
    """``n`` equally spaced azimuths starting at 0."""
    if n < 1:
        raise ValueError("need at least one look direction")
    return [Direction(2.0 * math.pi * i / n, elevation) for i in range(n)]


def linear_pair(spacing: float, id: str | None = None) -> ArrayGeometry:
    """Two sensors on the x axis, centered on the origin."""
    half = spacing / 2.0
    return ArrayGeometry(id or f"pair{spacing * 1e3:.0f}mm", [[-half, 0, 0], [half, 0, 0]])


def circular_array(
    n_rim: int = 6, diameter: float = 0.072, center: bool = True, id: str | None = None
) -> ArrayGeometry:
    """Uniform circular array in the horizontal plane, center sensor first."""
    r = diameter / 2.0
    ang = 2.0 * np.pi * np.arange(n_rim) / n_rim
    rim = np.stack([r * np.cos(ang), r * np.sin(ang), np.zeros(n_rim)], axis=1)
    pos = np.vstack([np.zeros((1, 3)), rim]) if center else rim
    return ArrayGeometry(id or f"circ{n_rim + int(center)}", pos)


def load_geometry(path: str | Path) -> ArrayGeometry:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GeometryError(f"{path}: invalid JSON ({exc})") from exc
    return ArrayGeometry.from_dict(data)


def save_geometry(geom: ArrayGeometry, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(geom.to_dict(), fh, indent=2)
        fh.write("\n")
