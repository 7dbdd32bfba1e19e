"""STAR-RIS response synthesis, slow-time codes and beampatterns."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .array import ArrayGeometry, Direction, HalfSpace, steering_vector
from .errors import EnergyConservationError, InvalidConfigurationError

ENERGY_TOL = 1e-12


class Policy(str, enum.Enum):
    """Scanning policy: code-division (simultaneous) or time-division (sequential)."""

    SIMULTANEOUS = "simultaneous"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class SlowTimeCodes:
    c_t: np.ndarray
    c_r: np.ndarray

    def __post_init__(self):
        if self.c_t.shape != self.c_r.shape or self.c_t.ndim != 1:
            raise InvalidConfigurationError("c_t and c_r must be 1-D vectors of equal length")
        power = np.abs(self.c_t) ** 2 + np.abs(self.c_r) ** 2
        if np.max(np.abs(power - 1.0)) > ENERGY_TOL:
            raise EnergyConservationError(
                "slow-time codes violate |c_t[p]|^2 + |c_r[p]|^2 = 1 "
                f"(max deviation {np.max(np.abs(power - 1.0)):.3e})"
            )

    @property
    def n_pulses(self) -> int:
        return self.c_t.size

    def for_half(self, half: HalfSpace) -> np.ndarray:
        return self.c_t if HalfSpace(half) is HalfSpace.TRANSMISSIVE else self.c_r


def make_codes(policy: Policy | str, n_pulses: int) -> SlowTimeCodes:
    """Slow-time codes for the two scanning policies.

    Simultaneous: ``c_t[p] = (-1)^p / sqrt(2)``, ``c_r[p] = 1 / sqrt(2)``
    (p counted from 1). Sequential: the first P/2 pulses go to the
    transmissive half-space only, the last P/2 to the reflective one.
    """
    policy = Policy(policy)
    if int(n_pulses) != n_pulses or n_pulses < 2 or n_pulses % 2:
        raise InvalidConfigurationError(
            f"P must be an even integer >= 2 for both scanning codes, got {n_pulses!r}"
        )
    n_pulses = int(n_pulses)
    p = np.arange(1, n_pulses + 1)
    if policy is Policy.SIMULTANEOUS:
        c_t = np.where(p % 2 == 0, 1.0, -1.0).astype(complex) / math.sqrt(2.0)
        c_r = np.full(n_pulses, 1.0 / math.sqrt(2.0), dtype=complex)
    else:
        first = p <= n_pulses // 2
        c_t = first.astype(complex)
        c_r = (~first).astype(complex)
    return SlowTimeCodes(c_t, c_r)


@dataclass(frozen=True)
class StarRisProfile:
    """Spatial responses plus slow-time codes, with the stacked per-PRI vectors.

    ``x_t`` and ``x_r`` have length ``P * N_ris``; block ``p`` holds the
    coefficients applied during PRI ``p``.
    """

    xbar_t: np.ndarray
    xbar_r: np.ndarray
    codes: SlowTimeCodes
    x_t: np.ndarray
    x_r: np.ndarray

    @property
    def n_pulses(self) -> int:
        return self.codes.n_pulses

    @property
    def n_atoms(self) -> int:
        return self.xbar_t.size

    def stacked(self, half: HalfSpace) -> np.ndarray:
        return self.x_t if HalfSpace(half) is HalfSpace.TRANSMISSIVE else self.x_r

    def spatial(self, half: HalfSpace) -> np.ndarray:
        return self.xbar_t if HalfSpace(half) is HalfSpace.TRANSMISSIVE else self.xbar_r


def stack_profile(xbar_t: np.ndarray, xbar_r: np.ndarray, codes: SlowTimeCodes) -> StarRisProfile:
    """Kronecker-stack spatial responses with slow-time codes and check energy per atom."""
    xbar_t = np.asarray(xbar_t, dtype=complex)
    xbar_r = np.asarray(xbar_r, dtype=complex)
    if xbar_t.shape != xbar_r.shape or xbar_t.ndim != 1:
        raise InvalidConfigurationError("xbar_t and xbar_r must be 1-D vectors of equal length")
    x_t = np.kron(codes.c_t, xbar_t)
    x_r = np.kron(codes.c_r, xbar_r)
    dev = np.max(np.abs(np.abs(x_t) ** 2 + np.abs(x_r) ** 2 - 1.0))
    if dev > ENERGY_TOL:
        raise EnergyConservationError(
            f"stacked profile violates per-atom energy conservation (max deviation {dev:.3e})"
        )
    for arr in (xbar_t, xbar_r, x_t, x_r):
        arr.setflags(write=False)
    return StarRisProfile(xbar_t, xbar_r, codes, x_t, x_r)


def random_feeder_channel(n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance circular complex Gaussian transmitter-to-RIS channel."""
    return (rng.standard_normal(n_atoms) + 1j * rng.standard_normal(n_atoms)) / math.sqrt(2.0)


def synthesize_profiles(
    g: np.ndarray,
    dir_t: Direction,
    dir_r: Direction,
    ris_geometry: ArrayGeometry,
    wavelength: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Max-gain phase alignment towards one direction per half-space.

    ``xbar[n] = exp(-i(angle g[n] + angle u_ris(phi)[n]))`` so that
    ``u_ris^T diag(xbar) g = sum |g|``.
    """
    g = np.asarray(g, dtype=complex)
    if g.shape != (ris_geometry.size,):
        raise InvalidConfigurationError(
            f"feeder channel has {g.size} entries, RIS has {ris_geometry.size} atoms"
        )
    if not np.any(g):
        raise InvalidConfigurationError("feeder channel is identically zero")
    if dir_t.half_space is not HalfSpace.TRANSMISSIVE:
        raise InvalidConfigurationError(
            f"transmissive beam direction {dir_t.in_degrees()} deg must have azimuth in (90, 270) deg"
        )
    if dir_r.half_space is not HalfSpace.REFLECTIVE:
        raise InvalidConfigurationError(
            f"reflective beam direction {dir_r.in_degrees()} deg must have azimuth in (-90, 90) deg"
        )
    g_phase = np.angle(g)
    out = []
    for d in (dir_t, dir_r):
        u = steering_vector(ris_geometry, d, wavelength)
        out.append(np.exp(-1j * (g_phase + np.angle(u))))
    return out[0], out[1]


def array_gain_factor(
    x_p: np.ndarray,
    direction: Direction,
    g: np.ndarray,
    ris_geometry: ArrayGeometry,
    wavelength: float,
) -> float:
    """``|u_ris^T(phi) diag(x_p) g|^2`` for a single PRI's response ``x_p``."""
    u = steering_vector(ris_geometry, direction, wavelength)
    return float(abs(u @ (np.asarray(x_p) * np.asarray(g))) ** 2)


def beampattern_grid(
    profile: StarRisProfile,
    half_space: HalfSpace,
    az_grid: np.ndarray,
    el_grid: np.ndarray,
    g: np.ndarray,
    geometry: ArrayGeometry,
    wavelength: float,
    element_gain: Optional[Callable[[Direction], float]] = None,
) -> np.ndarray:
    """Normalized power beampattern on an (azimuth, elevation) grid in radians.

    Returns an array of shape ``(len(az_grid), len(el_grid))`` with maximum 1.
    Without ``element_gain`` this is the normalized array gain factor.
    """
    half_space = HalfSpace(half_space)
    az_grid = np.atleast_1d(np.asarray(az_grid, dtype=float))
    el_grid = np.atleast_1d(np.asarray(el_grid, dtype=float))
    if az_grid.size == 0 or el_grid.size == 0:
        raise InvalidConfigurationError("beampattern grid is empty")
    for az in az_grid:
        if Direction(az, 0.0).half_space is not half_space:
            raise InvalidConfigurationError(
                f"azimuth {math.degrees(az):.3f} deg is outside the {half_space.value} half-space"
            )
    xg = profile.spatial(half_space) * np.asarray(g)
    az, el = np.meshgrid(az_grid, el_grid, indexing="ij")
    k = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)
    phase = (2.0 * np.pi / wavelength) * (k @ geometry.positions.T)
    gf = np.abs(np.exp(1j * phase) @ xg) ** 2
    if element_gain is not None:
        gains = np.array(
            [[element_gain(Direction(a, e)) for e in el_grid] for a in az_grid], dtype=float
        )
        gf = gf * gains
    peak = gf.max()
    if peak <= 0:
        return np.zeros_like(gf)
    return gf / peak


def write_beampattern_csv(path, az_grid, el_grid, values, comment: str | None = None) -> None:
    """Write ``az_deg, el_deg, normalized_gf`` rows (angles given in radians)."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["az_deg", "el_deg", "normalized_gf"])
        for i, az in enumerate(az_grid):
            for j, el in enumerate(el_grid):
                writer.writerow(
                    [f"{math.degrees(az):.6f}", f"{math.degrees(el):.6f}", f"{values[i, j]:.12e}"]
                )
