"""Uniform rectangular array geometry and far-field steering vectors.

Both the STAR-RIS and the receive array lie in the (y, z)-plane, centred on
their centre of gravity, with +x pointing into the reflective half-space.
Azimuth is measured from +x towards +y in the (x, y)-plane, elevation from
the (x, y)-plane towards +z.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigurationError

SPEED_OF_LIGHT = 299_792_458.0


class HalfSpace(str, enum.Enum):
    TRANSMISSIVE = "transmissive"
    REFLECTIVE = "reflective"


def wavelength_of(carrier_hz: float) -> float:
    return SPEED_OF_LIGHT / carrier_hz


@dataclass(frozen=True)
class Direction:
    """Far-field direction in radians.

    The half-space is derived from the azimuth: cos(az) > 0 is reflective,
    cos(az) < 0 transmissive. Directions lying in the surface plane
    (cos(az) == 0) and the poles are rejected.
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not (-math.pi / 2 < self.elevation < math.pi / 2):
            raise InvalidConfigurationError(
                f"elevation must lie in (-pi/2, pi/2), got {self.elevation!r}"
            )
        if abs(math.cos(self.azimuth)) < 1e-15:
            raise InvalidConfigurationError(
                f"azimuth {self.azimuth!r} lies in the surface plane; "
                "neither half-space contains it"
            )

    @classmethod
    def from_degrees(cls, azimuth_deg: float, elevation_deg: float) -> Direction:
        return cls(math.radians(azimuth_deg), math.radians(elevation_deg))

    @property
    def half_space(self) -> HalfSpace:
        if math.cos(self.azimuth) > 0:
            return HalfSpace.REFLECTIVE
        return HalfSpace.TRANSMISSIVE

    @property
    def unit_vector(self) -> np.ndarray:
        ce = math.cos(self.elevation)
        return np.array(
            [ce * math.cos(self.azimuth), ce * math.sin(self.azimuth), math.sin(self.elevation)]
        )

    def mirrored(self) -> Direction:
        """Direction at azimuth pi - az; indistinguishable to a planar array."""
        return Direction(math.pi - self.azimuth, self.elevation)

    def in_degrees(self) -> tuple[float, float]:
        return math.degrees(self.azimuth), math.degrees(self.elevation)


@dataclass(frozen=True)
class ArrayGeometry:
    """Element positions of a URA in the (y, z)-plane.

    Elements are ordered z-major within y: element ``iy * n_z + iz`` sits at
    column ``iy`` and row ``iz``.
    """

    n_y: int
    n_z: int
    spacing_y: float
    spacing_z: float
    positions: np.ndarray = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.n_y * self.n_z

    def __len__(self) -> int:
        return self.size


def ura_positions(n_y: int, n_z: int, spacing_y: float, spacing_z: float) -> ArrayGeometry:
    """Build a centroid-centred ``n_y`` x ``n_z`` rectangular grid."""
    if int(n_y) != n_y or int(n_z) != n_z or n_y < 1 or n_z < 1:
        raise InvalidConfigurationError(
            f"element counts must be positive integers, got n_y={n_y!r}, n_z={n_z!r}"
        )
    if not (spacing_y > 0 and spacing_z > 0):
        raise InvalidConfigurationError(
            f"spacings must be positive, got {spacing_y!r}, {spacing_z!r}"
        )
    n_y, n_z = int(n_y), int(n_z)
    y = (np.arange(n_y) - (n_y - 1) / 2.0) * spacing_y
    z = (np.arange(n_z) - (n_z - 1) / 2.0) * spacing_z
    yy, zz = np.meshgrid(y, z, indexing="ij")
    positions = np.zeros((n_y * n_z, 3))
    positions[:, 1] = yy.ravel()
    positions[:, 2] = zz.ravel()
    positions.setflags(write=False)
    return ArrayGeometry(n_y, n_z, float(spacing_y), float(spacing_z), positions)


def steering_vector(geometry: ArrayGeometry, direction: Direction, wavelength: float) -> np.ndarray:
    """Unit-modulus far-field response, ``exp(+i 2pi/lambda <p_n, k>)``."""
    if not wavelength > 0:
        raise InvalidConfigurationError(f"wavelength must be positive, got {wavelength!r}")
    phase = (2.0 * np.pi / wavelength) * (geometry.positions @ direction.unit_vector)
    return np.exp(1j * phase)


def steering_matrix(geometry: ArrayGeometry, directions, wavelength: float) -> np.ndarray:
    """Steering vectors for several directions, one column each (N, M)."""
    if not wavelength > 0:
        raise InvalidConfigurationError(f"wavelength must be positive, got {wavelength!r}")
    if len(directions) == 0:
        return np.zeros((geometry.size, 0), dtype=complex)
    k = np.stack([d.unit_vector for d in directions], axis=1)
    return np.exp(1j * (2.0 * np.pi / wavelength) * (geometry.positions @ k))
