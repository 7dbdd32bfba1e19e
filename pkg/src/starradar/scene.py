"""Slow-time observation synthesis and the disturbance covariance.

Space-time steering vectors are Kronecker products of a P-long temporal part
and an N_rx-long spatial part. :class:`SpaceTimeSet` keeps that factored form
so inner products cost O(P + N_rx) instead of O(P * N_rx), and
:class:`DisturbanceModel` inverts the clutter-plus-noise covariance through
the matrix-inversion lemma on its rank-K clutter part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .array import ArrayGeometry, Direction, HalfSpace, steering_matrix, steering_vector
from .errors import DegenerateCellError, InvalidConfigurationError
from .ris import StarRisProfile


@dataclass(frozen=True)
class RadarSystem:
    """Fixed hardware context shared by every steering computation."""

    ris: ArrayGeometry
    rx: ArrayGeometry
    wavelength: float
    pri: float
    feeder: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.feeder.shape != (self.ris.size,):
            raise InvalidConfigurationError(
                f"feeder channel length {self.feeder.size} != N_ris {self.ris.size}"
            )
        if not np.any(self.feeder):
            raise InvalidConfigurationError("feeder channel is identically zero")
        if not (self.wavelength > 0 and self.pri > 0):
            raise InvalidConfigurationError("wavelength and PRI must be positive")

    @property
    def max_doppler(self) -> float:
        return 1.0 / (2.0 * self.pri)


def doppler_vector(nu, pri: float, n_pulses: int) -> np.ndarray:
    """``d(nu)[p] = exp(i 2pi nu T (p-1))``; vectorized over ``nu`` (columns)."""
    if n_pulses < 1:
        raise InvalidConfigurationError(f"P must be >= 1, got {n_pulses!r}")
    p = np.arange(n_pulses)
    nu = np.asarray(nu, dtype=float)
    if nu.ndim == 0:
        return np.exp(2j * np.pi * float(nu) * pri * p)
    return np.exp(2j * np.pi * pri * np.outer(p, nu))


class SpaceTimeSet:
    """Columns ``h_m = temporal[:, m] kron spatial[:, m]``.

    ``temporal`` is (P, M) and ``spatial`` is (N, M), or (N, 1) when every
    column shares one spatial vector (a single direction at many Dopplers).
    Any scalar gain is folded into the temporal part.
    """

    __slots__ = ("temporal", "spatial")

    def __init__(self, temporal: np.ndarray, spatial: np.ndarray):
        temporal = np.asarray(temporal, dtype=complex)
        spatial = np.asarray(spatial, dtype=complex)
        if temporal.ndim == 1:
            temporal = temporal[:, None]
        if spatial.ndim == 1:
            spatial = spatial[:, None]
        if spatial.shape[1] not in (1, temporal.shape[1]):
            raise InvalidConfigurationError(
                f"temporal has {temporal.shape[1]} columns, spatial {spatial.shape[1]}"
            )
        self.temporal = temporal
        self.spatial = spatial

    @classmethod
    def empty(cls, n_pulses: int, n_rx: int) -> SpaceTimeSet:
        return cls(np.zeros((n_pulses, 0), complex), np.zeros((n_rx, 0), complex))

    @property
    def n_pulses(self) -> int:
        return self.temporal.shape[0]

    @property
    def n_rx(self) -> int:
        return self.spatial.shape[0]

    @property
    def dim(self) -> int:
        return self.n_pulses * self.n_rx

    @property
    def shared_spatial(self) -> bool:
        return self.spatial.shape[1] == 1 and self.temporal.shape[1] != 1

    def __len__(self) -> int:
        return self.temporal.shape[1]

    def full_spatial(self) -> np.ndarray:
        if self.spatial.shape[1] == len(self):
            return self.spatial
        return np.repeat(self.spatial, len(self), axis=1)

    def dense(self) -> np.ndarray:
        """Materialize as a (P * N, M) matrix."""
        cols = self.temporal[:, None, :] * self.spatial[None, :, :]
        return cols.reshape(self.dim, len(self))

    def norms_sq(self) -> np.ndarray:
        t = np.sum(np.abs(self.temporal) ** 2, axis=0)
        s = np.sum(np.abs(self.spatial) ** 2, axis=0)
        return t * s

    def gram(self, other: SpaceTimeSet) -> np.ndarray:
        """``self^H other`` of shape (M, M')."""
        return (self.temporal.conj().T @ other.temporal) * (self.spatial.conj().T @ other.spatial)

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        """``self^H v`` for a dense vector (P*N,) or matrix (P*N, m)."""
        if v.ndim == 1:
            vm = v.reshape(self.n_pulses, self.n_rx)
            return np.sum(self.temporal.conj() * (vm @ self.spatial.conj()), axis=0)
        vm = v.reshape(self.n_pulses, self.n_rx, v.shape[1])
        return np.einsum("pm,pnk,nm->mk", self.temporal.conj(), vm, self.full_spatial().conj())

    def combine(self, coef: np.ndarray) -> np.ndarray:
        """``sum_m coef[m] h_m`` as a dense vector; ``coef`` may be (M,) or (M, k)."""
        if coef.ndim == 1:
            if self.shared_spatial:
                return np.kron(self.temporal @ coef, self.spatial[:, 0])
            return ((self.temporal * coef) @ self.spatial.T).reshape(-1)
        out = np.einsum("pm,mk,nm->pnk", self.temporal, coef, self.full_spatial())
        return out.reshape(self.dim, coef.shape[1])

    def scaled(self, scale: np.ndarray) -> SpaceTimeSet:
        return SpaceTimeSet(self.temporal * scale, self.spatial)

    def pulses(self, start: int, stop: int) -> SpaceTimeSet:
        """Rows for pulses ``start:stop`` (a contiguous block of the dense vectors)."""
        return SpaceTimeSet(self.temporal[start:stop], self.spatial)

    def concat(self, other: SpaceTimeSet) -> SpaceTimeSet:
        return SpaceTimeSet(
            np.concatenate([self.temporal, other.temporal], axis=1),
            np.concatenate([self.full_spatial(), other.full_spatial()], axis=1),
        )


def _pulse_gains(x_stacked: np.ndarray, direction: Direction, system: RadarSystem) -> np.ndarray:
    """``G(phi) x``: one complex RIS gain per PRI."""
    n_ris = system.ris.size
    x = np.asarray(x_stacked, dtype=complex)
    if x.size % n_ris:
        raise InvalidConfigurationError(
            f"stacked response length {x.size} is not a multiple of N_ris={n_ris}"
        )
    u = steering_vector(system.ris, direction, system.wavelength)
    return x.reshape(-1, n_ris) @ (u * system.feeder)


def temporal_response(x_stacked, direction: Direction, nu, system: RadarSystem) -> np.ndarray:
    """``d(nu) * G(phi) x``; column per Doppler when ``nu`` is an array."""
    gains = _pulse_gains(x_stacked, direction, system)
    d = doppler_vector(nu, system.pri, gains.size)
    return d * gains if d.ndim == 1 else d * gains[:, None]


def space_time_steering(x_stacked, direction: Direction, nu: float, system: RadarSystem) -> np.ndarray:
    """Dense ``h = (d(nu) * G(phi) x) kron u_rx(phi)`` for a stacked response."""
    u_rx = steering_vector(system.rx, direction, system.wavelength)
    return np.kron(temporal_response(x_stacked, direction, nu, system), u_rx)


def factored_steering(
    xbar: np.ndarray, code: np.ndarray, direction: Direction, nu: float, system: RadarSystem
) -> np.ndarray:
    """Same vector via the separable form ``a(phi) [(d(nu) * c) kron u_rx(phi)]``."""
    u_ris = steering_vector(system.ris, direction, system.wavelength)
    gain = u_ris @ (np.asarray(xbar) * system.feeder)
    u_rx = steering_vector(system.rx, direction, system.wavelength)
    d = doppler_vector(nu, system.pri, len(code))
    return gain * np.kron(d * np.asarray(code), u_rx)


def steering_set(
    profile: StarRisProfile,
    direction: Direction,
    nus: Sequence[float] | np.ndarray,
    system: RadarSystem,
) -> SpaceTimeSet:
    """Steering vectors of one direction at several Dopplers, for the response
    active in that direction's half-space."""
    x = profile.stacked(direction.half_space)
    temporal = temporal_response(x, direction, np.atleast_1d(np.asarray(nus, float)), system)
    u_rx = steering_vector(system.rx, direction, system.wavelength)
    return SpaceTimeSet(temporal, u_rx)


@dataclass(frozen=True)
class PointScatterer:
    """Target or clutter patch.

    ``variance`` is the Swerling I amplitude power. If ``amplitude`` is set
    the scatterer is deterministic and ``variance`` is ignored when drawing.
    """

    direction: Direction
    doppler: float
    variance: float = 0.0
    amplitude: Optional[complex] = None

    def __post_init__(self):
        if self.variance < 0:
            raise InvalidConfigurationError(f"amplitude variance must be >= 0, got {self.variance}")


@dataclass(frozen=True)
class Scene:
    target_t: Optional[PointScatterer] = None
    target_r: Optional[PointScatterer] = None
    clutter_t: tuple[PointScatterer, ...] = ()
    clutter_r: tuple[PointScatterer, ...] = ()
    noise_variance: float = 1.0

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise InvalidConfigurationError(f"noise variance must be > 0, got {self.noise_variance}")
        checks = [(self.target_t, HalfSpace.TRANSMISSIVE), (self.target_r, HalfSpace.REFLECTIVE)]
        checks += [(c, HalfSpace.TRANSMISSIVE) for c in self.clutter_t]
        checks += [(c, HalfSpace.REFLECTIVE) for c in self.clutter_r]
        for sc, half in checks:
            if sc is not None and sc.direction.half_space is not half:
                raise InvalidConfigurationError(
                    f"scatterer at {sc.direction.in_degrees()} deg declared {half.value} "
                    "but its azimuth lies in the other half-space"
                )

    @property
    def clutter(self) -> tuple[PointScatterer, ...]:
        return tuple(self.clutter_t) + tuple(self.clutter_r)

    @property
    def targets(self) -> tuple[PointScatterer, ...]:
        return tuple(t for t in (self.target_t, self.target_r) if t is not None)


def calibrate_amplitude_variance(snr_per_pulse: float, h: np.ndarray, noise_variance: float, n_pulses: int) -> float:
    """Amplitude variance giving ``sigma^2 ||h||^2 / (P sigma_n^2) = snr_per_pulse``."""
    return variance_for_energy(snr_per_pulse, float(np.vdot(h, h).real), noise_variance, n_pulses)


def variance_for_energy(snr_per_pulse: float, energy: float, noise_variance: float, n_pulses: int) -> float:
    if not energy > 0:
        raise DegenerateCellError("steering vector has zero norm; SNR cannot be set")
    return snr_per_pulse * n_pulses * noise_variance / energy


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def scatterer_set(scatterers, profile, system) -> SpaceTimeSet:
    """Steering vectors of several scatterers, in the given order."""
    n = len(scatterers)
    if n == 0:
        return SpaceTimeSet.empty(profile.n_pulses, system.rx.size)
    dirs = [s.direction for s in scatterers]
    u_ris = steering_matrix(system.ris, dirs, system.wavelength)
    u_rx = steering_matrix(system.rx, dirs, system.wavelength)
    weighted = u_ris * system.feeder[:, None]
    temporal = np.empty((profile.n_pulses, n), dtype=complex)
    for half in HalfSpace:
        idx = [i for i, d in enumerate(dirs) if d.half_space is half]
        if not idx:
            continue
        x = profile.stacked(half).reshape(profile.n_pulses, -1)
        temporal[:, idx] = x @ weighted[:, idx]
    nus = np.array([s.doppler for s in scatterers], dtype=float)
    temporal *= doppler_vector(nus, system.pri, profile.n_pulses)
    return SpaceTimeSet(temporal, u_rx)


class DisturbanceModel:
    """``C = sigma_n^2 I + sum_k sigma_k^2 h_k h_k^H`` with low-rank solves.

    With ``U = [sigma_k h_k]`` the inverse is
    ``(I - U (sigma_n^2 I_K + U^H U)^{-1} U^H) / sigma_n^2``; only the K x K
    core is factored.
    """

    def __init__(self, noise_variance: float, clutter: SpaceTimeSet, variances):
        variances = np.asarray(variances, dtype=float).reshape(-1)
        if variances.size != len(clutter):
            raise InvalidConfigurationError("one variance per clutter column is required")
        if np.any(variances < 0):
            raise InvalidConfigurationError("clutter variances must be >= 0")
        if not noise_variance > 0:
            raise InvalidConfigurationError("noise variance must be > 0")
        self.noise_variance = float(noise_variance)
        self.clutter = clutter
        self.clutter_variances = variances
        self._u = clutter.scaled(np.sqrt(variances))
        k = len(clutter)
        core = self.noise_variance * np.eye(k) + self._u.gram(self._u)
        self._core = cho_factor(core, lower=True) if k else None

    @property
    def dim(self) -> int:
        return self.clutter.dim

    @property
    def rank(self) -> int:
        return len(self.clutter)

    @property
    def columns(self) -> np.ndarray:
        return self.clutter.dense()

    def dense_covariance(self) -> np.ndarray:
        u = self._u.dense()
        return self.noise_variance * np.eye(self.dim) + u @ u.conj().T

    def _core_solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve(self._core, b)

    def solve(self, v: np.ndarray) -> np.ndarray:
        """``C^{-1} v`` for a vector or a (dim, m) matrix."""
        v = np.asarray(v, dtype=complex)
        if self._core is None:
            return v / self.noise_variance
        coef = self._core_solve(self._u.adjoint(v))
        return (v - self._u.combine(coef)) / self.noise_variance

    def quad(self, v: np.ndarray) -> float:
        """``v^H C^{-1} v``."""
        v = np.asarray(v, dtype=complex)
        return float(np.vdot(v, self.solve(v)).real)

    def whitened_norm(self, v: np.ndarray) -> float:
        """``||C^{-1/2} v||`` computed as ``sqrt(v^H C^{-1} v)``."""
        return math.sqrt(max(self.quad(v), 0.0))

    def cross(self, a: SpaceTimeSet, b: SpaceTimeSet) -> np.ndarray:
        """``A^H C^{-1} B`` for factored column sets."""
        ab = a.gram(b)
        if self._core is None:
            return ab / self.noise_variance
        au = a.gram(self._u)
        ub = self._u.gram(b)
        return (ab - au @ self._core_solve(ub)) / self.noise_variance

    def cross_diag(self, a: SpaceTimeSet) -> np.ndarray:
        """Diagonal of ``A^H C^{-1} A`` (real, positive)."""
        base = a.norms_sq()
        if self._core is None:
            return base / self.noise_variance
        ua = self._u.gram(a)
        corr = np.sum(ua.conj() * self._core_solve(ua), axis=0).real
        return (base - corr) / self.noise_variance

    def project(self, a: SpaceTimeSet, v: np.ndarray) -> np.ndarray:
        """``A^H C^{-1} v`` for a dense observation ``v``."""
        av = a.adjoint(v)
        if self._core is None:
            return av / self.noise_variance
        coef = self._core_solve(self._u.adjoint(v))
        return (av - a.gram(self._u) @ coef) / self.noise_variance

    def pulses(self, start: int, stop: int) -> DisturbanceModel:
        """Covariance of the sub-vector holding pulses ``start:stop``."""
        return DisturbanceModel(self.noise_variance, self.clutter.pulses(start, stop), self.clutter_variances)


def build_covariance(
    scene: Scene,
    profile: StarRisProfile,
    system: RadarSystem,
    clutter_set: Optional[SpaceTimeSet] = None,
) -> DisturbanceModel:
    clutter = scene.clutter
    cols = scatterer_set(clutter, profile, system) if clutter_set is None else clutter_set
    return DisturbanceModel(scene.noise_variance, cols, [c.variance for c in clutter])


def _draw_amplitudes(scatterers, rng: np.random.Generator) -> np.ndarray:
    n = len(scatterers)
    z = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    amps = np.empty(n, dtype=complex)
    for i, s in enumerate(scatterers):
        amps[i] = s.amplitude if s.amplitude is not None else math.sqrt(s.variance) * z[i]
    return amps


def synthesize_components(
    scene: Scene,
    profile: StarRisProfile,
    system: RadarSystem,
    rng: np.random.Generator,
    noise: bool = True,
    target_set: Optional[SpaceTimeSet] = None,
    clutter_set: Optional[SpaceTimeSet] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Target echoes and disturbance (clutter plus noise) of one CPI, separately.

    Amplitudes are drawn once per call for targets then clutter, followed by
    the noise, so the draw order is the same for every scene layout.
    Precomputed steering sets (in scene order) may be passed to skip
    recomputing them.
    """
    targets = scene.targets
    clutter = scene.clutter
    dim = profile.n_pulses * system.rx.size
    amps = _draw_amplitudes(targets + clutter, rng)
    target_part = np.zeros(dim, dtype=complex)
    dist_part = np.zeros(dim, dtype=complex)
    if targets:
        if target_set is None:
            target_set = scatterer_set(targets, profile, system)
        target_part += target_set.combine(amps[: len(targets)])
    if clutter:
        if clutter_set is None:
            clutter_set = scatterer_set(clutter, profile, system)
        dist_part += clutter_set.combine(amps[len(targets):])
    if noise:
        w = rng.standard_normal((2, dim))
        dist_part += math.sqrt(scene.noise_variance / 2.0) * (w[0] + 1j * w[1])
    return target_part, dist_part


def synthesize_observation(
    scene: Scene,
    profile: StarRisProfile,
    system: RadarSystem,
    rng: np.random.Generator,
    noise: bool = True,
) -> np.ndarray:
    """One CPI of post-compression samples ``y = [y(1); ...; y(P)]``.

    Each random amplitude is drawn once per call (Swerling I). Set
    ``noise=False`` for exact deterministic checks.
    """
    targets, disturbance = synthesize_components(scene, profile, system, rng, noise)
    return targets + disturbance
