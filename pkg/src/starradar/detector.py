"""GIC multi-hypothesis detector over a Doppler grid.

The four hypotheses (no target, transmissive only, reflective only, both)
are scored by whitened matched-filter statistics penalized by ``eta`` per
declared target. Everything that depends only on the scene geometry and the
covariance is cached in a :class:`DetectorBank`; a trial then costs one
low-rank projection of ``y`` plus an O(G^2) scan of the joint Doppler grid.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .array import SPEED_OF_LIGHT, Direction, HalfSpace
from .errors import DegenerateCellError, InvalidConfigurationError
from .ris import Policy, StarRisProfile
from .scene import DisturbanceModel, RadarSystem, SpaceTimeSet, steering_set

# Relative floor on the 2x2 Gram determinant below which a pair is collinear.
DEGENERATE_TOL = 1e-10


class Hypothesis(enum.IntEnum):
    """Ordered so that ties resolve towards fewer targets."""

    H0 = 0
    H1T = 1
    H1R = 2
    H2 = 3

    @property
    def n_targets(self) -> int:
        return {0: 0, 1: 1, 2: 1, 3: 2}[int(self)]

    @property
    def label(self) -> str:
        return {0: "H0", 1: "H1t", 2: "H1r", 3: "H2"}[int(self)]

    @classmethod
    def parse(cls, text: str) -> Hypothesis:
        table = {h.label.lower(): h for h in cls}
        try:
            return table[str(text).lower()]
        except KeyError:
            raise InvalidConfigurationError(
                f"unknown hypothesis {text!r}; expected one of H0, H1t, H1r, H2"
            ) from None

    @property
    def has_t(self) -> bool:
        return self in (Hypothesis.H1T, Hypothesis.H2)

    @property
    def has_r(self) -> bool:
        return self in (Hypothesis.H1R, Hypothesis.H2)


def doppler_to_velocity(nu, carrier_hz: float):
    """Radial velocity ``c nu / (2 f_o)`` in m/s."""
    return SPEED_OF_LIGHT * nu / (2.0 * carrier_hz)


def doppler_resolution(n_pulses: int, pri: float, policy: Policy | str) -> float:
    """Doppler resolution of one cell: 1/(PT) when every pulse reaches the
    cell, 2/(PT) when only half of them do."""
    pulses_per_cell = n_pulses if Policy(policy) is Policy.SIMULTANEOUS else n_pulses // 2
    return 1.0 / (pulses_per_cell * pri)


@dataclass(frozen=True)
class DopplerGrid:
    """Uniform Doppler hypotheses on the lattice ``k * step`` inside (-1/2T, 1/2T)."""

    values: np.ndarray
    step: float

    def __post_init__(self):
        if self.values.size == 0:
            raise InvalidConfigurationError("Doppler grid is empty")
        if not self.step > 0:
            raise InvalidConfigurationError("Doppler grid step must be positive")

    @classmethod
    def default(cls, n_pulses: int, pri: float, oversample: int = 8) -> DopplerGrid:
        return cls.spanning(n_pulses, pri, oversample=oversample)

    @classmethod
    def spanning(
        cls,
        n_pulses: int,
        pri: float,
        lo: Optional[float] = None,
        hi: Optional[float] = None,
        oversample: int = 8,
    ) -> DopplerGrid:
        """Lattice points with step ``1/(oversample P T)`` in ``[lo, hi]``,
        clipped to the open unambiguous interval."""
        step = 1.0 / (oversample * n_pulses * pri)
        nu_max = 1.0 / (2.0 * pri)
        lo = -nu_max if lo is None else lo
        hi = nu_max if hi is None else hi
        if lo > hi:
            raise InvalidConfigurationError(f"Doppler search interval [{lo}, {hi}] is empty")
        k = np.arange(math.ceil(lo / step - 1e-9), math.floor(hi / step + 1e-9) + 1)
        values = k * step
        values = values[np.abs(values) < nu_max * (1 - 1e-12)]
        return cls(values, step)

    def __len__(self) -> int:
        return self.values.size

    def index_of(self, nu: float) -> int:
        i = int(np.argmin(np.abs(self.values - nu)))
        if abs(self.values[i] - nu) > 1e-6 * self.step:
            raise InvalidConfigurationError(f"Doppler {nu} Hz is not a grid point")
        return i


@dataclass(frozen=True)
class Decision:
    hypothesis: Hypothesis
    doppler_t: Optional[float]
    doppler_r: Optional[float]
    velocity_t: Optional[float]
    velocity_r: Optional[float]
    statistics: dict
    max_t: float
    max_r: float
    max_joint: float
    degenerate: bool = False

    def summary(self) -> dict:
        return {
            "hypothesis": self.hypothesis.label,
            "doppler_t_hz": self.doppler_t,
            "doppler_r_hz": self.doppler_r,
            "velocity_t_mps": self.velocity_t,
            "velocity_r_mps": self.velocity_r,
            "mu": {h.label: float(v) for h, v in self.statistics.items()},
            "max_t": self.max_t,
            "max_r": self.max_r,
            "max_joint": self.max_joint,
        }


def select_hypothesis(max_t: float, max_r: float, max_joint: float, eta: float) -> Hypothesis:
    """Penalized argmax with ties resolved towards fewer targets."""
    scores = (0.0, max_t - eta, max_r - eta, max_joint - 2.0 * eta)
    best = 0
    for i in (1, 2, 3):
        if scores[i] > scores[best]:
            best = i
    return Hypothesis(best)


def _velocity(nu, carrier_hz):
    if nu is None or carrier_hz is None:
        return None
    return float(doppler_to_velocity(nu, carrier_hz))


def _make_decision(grid, hyp, i_t, i_r, max_t, max_r, max_joint, eta, carrier_hz, degenerate=False):
    nu_t = float(grid.values[i_t]) if hyp.has_t else None
    nu_r = float(grid.values[i_r]) if hyp.has_r else None
    stats = {
        Hypothesis.H0: 0.0,
        Hypothesis.H1T: max_t - eta,
        Hypothesis.H1R: max_r - eta,
        Hypothesis.H2: max_joint - 2.0 * eta,
    }
    return Decision(
        hyp, nu_t, nu_r, _velocity(nu_t, carrier_hz), _velocity(nu_r, carrier_hz),
        stats, float(max_t), float(max_r), float(max_joint), degenerate,
    )


@dataclass(frozen=True)
class DetectorBank:
    """Whitened quantities for one pair of inspected cells.

    ``n_t[i] = h_t(nu_i)^H C^{-1} h_t(nu_i)`` (and ``n_r``) and
    ``rho[i, j] = h_t(nu_i)^H C^{-1} h_r(nu_j)``. The joint statistic uses the
    Schur complement of the 2x2 Gram matrix, so ``schur`` and ``shift`` are
    cached as well.
    """

    grid: DopplerGrid
    eta: float
    disturbance: DisturbanceModel
    set_t: SpaceTimeSet = field(repr=False)
    set_r: SpaceTimeSet = field(repr=False)
    n_t: np.ndarray = field(repr=False)
    n_r: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    shift: np.ndarray = field(repr=False)
    schur: np.ndarray = field(repr=False)
    degenerate: np.ndarray = field(repr=False)
    time_division: bool = False
    carrier_hz: Optional[float] = None

    @property
    def gram(self) -> np.ndarray:
        """Stacked 2x2 Gram matrices, shape (G, G, 2, 2)."""
        g = len(self.grid)
        m = np.empty((g, g, 2, 2), dtype=complex)
        m[..., 0, 0] = self.n_t[:, None]
        m[..., 1, 1] = self.n_r[None, :]
        m[..., 0, 1] = self.rho
        m[..., 1, 0] = self.rho.conj()
        return m

    def with_eta(self, eta: float) -> DetectorBank:
        if eta < 0:
            raise InvalidConfigurationError(f"penalty eta must be >= 0, got {eta}")
        return dataclasses.replace(self, eta=float(eta))

    def projections(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``q_t[i] = h_t(nu_i)^H C^{-1} y`` and ``q_r``."""
        y = np.asarray(y, dtype=complex)
        return self.disturbance.project(self.set_t, y), self.disturbance.project(self.set_r, y)

    def single_statistics(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q_t, q_r = self.projections(y)
        return np.abs(q_t) ** 2 / self.n_t, np.abs(q_r) ** 2 / self.n_r

    def _pair_matrix(self, q_t, q_r, stat_t, stat_r):
        resid = q_r[None, :] - self.shift * q_t[:, None]
        joint = stat_t[:, None] + np.abs(resid) ** 2 / self.schur
        if self.degenerate.any():
            fallback = np.maximum(stat_t[:, None], stat_r[None, :])
            joint = np.where(self.degenerate, fallback, joint)
        return joint

    def pair_statistics(self, y: np.ndarray) -> np.ndarray:
        """``||Pi^H(nu_t, nu_r) y||^2`` over the whole grid square (G, G)."""
        q_t, q_r = self.projections(y)
        stat_t = np.abs(q_t) ** 2 / self.n_t
        stat_r = np.abs(q_r) ** 2 / self.n_r
        return self._pair_matrix(q_t, q_r, stat_t, stat_r)


def _is_time_division(profile: StarRisProfile) -> bool:
    c_t, c_r = profile.codes.c_t, profile.codes.c_r
    half = profile.n_pulses // 2
    return bool(not np.any(c_t[half:]) and not np.any(c_r[:half]))


def build_bank(
    disturbance: DisturbanceModel,
    profile: StarRisProfile,
    directions: tuple[Direction, Direction],
    grid: DopplerGrid,
    eta: float,
    system: RadarSystem,
    carrier_hz: Optional[float] = None,
) -> DetectorBank:
    """Precompute every whitened inner product the detector needs."""
    if eta < 0:
        raise InvalidConfigurationError(f"penalty eta must be >= 0, got {eta}")
    dir_t, dir_r = directions
    if dir_t.half_space is not HalfSpace.TRANSMISSIVE or dir_r.half_space is not HalfSpace.REFLECTIVE:
        raise InvalidConfigurationError(
            "inspected cells must be (transmissive, reflective) in that order"
        )
    set_t = steering_set(profile, dir_t, grid.values, system)
    set_r = steering_set(profile, dir_r, grid.values, system)
    for name, s in (("transmissive", set_t), ("reflective", set_r)):
        energy = s.norms_sq()
        if not np.all(energy > 0):
            raise DegenerateCellError(f"{name} cell steering vector has zero norm on the Doppler grid")
    n_t = disturbance.cross_diag(set_t)
    n_r = disturbance.cross_diag(set_r)
    if not (np.all(n_t > 0) and np.all(n_r > 0)):
        raise DegenerateCellError("whitened steering energy is not positive")
    rho = disturbance.cross(set_t, set_r)
    shift = rho.conj() / n_t[:, None]
    schur = n_r[None, :] - np.abs(rho) ** 2 / n_t[:, None]
    degenerate = schur <= DEGENERATE_TOL * n_r[None, :]
    schur = np.where(degenerate, 1.0, schur)
    return DetectorBank(
        grid, float(eta), disturbance, set_t, set_r, n_t, n_r, rho, shift, schur,
        degenerate, _is_time_division(profile), carrier_hz,
    )


def single_statistic(bank: DetectorBank, half: HalfSpace | str, nu: float, y: np.ndarray) -> float:
    """``|pi(nu)^H y|^2 = |h^H C^{-1} y|^2 / (h^H C^{-1} h)`` at one grid Doppler."""
    i = bank.grid.index_of(nu)
    q_t, q_r = bank.projections(y)
    if HalfSpace(half) is HalfSpace.TRANSMISSIVE:
        return float(abs(q_t[i]) ** 2 / bank.n_t[i])
    return float(abs(q_r[i]) ** 2 / bank.n_r[i])


def pair_statistic(bank: DetectorBank, nu_t: float, nu_r: float, y: np.ndarray) -> tuple[float, bool]:
    """``q^H M^{-1} q`` for one Doppler pair; returns ``(value, degenerate)``.

    A collinear pair falls back to the larger single statistic.
    """
    i, j = bank.grid.index_of(nu_t), bank.grid.index_of(nu_r)
    q_t, q_r = bank.projections(y)
    stat_t = abs(q_t[i]) ** 2 / bank.n_t[i]
    stat_r = abs(q_r[j]) ** 2 / bank.n_r[j]
    if bank.degenerate[i, j]:
        return float(max(stat_t, stat_r)), True
    resid = q_r[j] - bank.shift[i, j] * q_t[i]
    return float(stat_t + abs(resid) ** 2 / bank.schur[i, j]), False


def gic_decide(bank: DetectorBank, y: np.ndarray) -> Decision:
    """Full four-hypothesis rule with an exhaustive joint Doppler search."""
    y = np.asarray(y, dtype=complex)
    if y.shape != (bank.disturbance.dim,):
        raise InvalidConfigurationError(
            f"observation has shape {y.shape}, expected ({bank.disturbance.dim},)"
        )
    q_t, q_r = bank.projections(y)
    stat_t = np.abs(q_t) ** 2 / bank.n_t
    stat_r = np.abs(q_r) ** 2 / bank.n_r
    joint = bank._pair_matrix(q_t, q_r, stat_t, stat_r)
    i_t = int(np.argmax(stat_t))
    i_r = int(np.argmax(stat_r))
    flat = int(np.argmax(joint))
    j_t, j_r = divmod(flat, joint.shape[1])
    max_t, max_r, max_joint = stat_t[i_t], stat_r[i_r], joint[j_t, j_r]
    hyp = select_hypothesis(max_t, max_r, max_joint, bank.eta)
    if hyp is Hypothesis.H2:
        i_t, i_r = j_t, j_r
    return _make_decision(
        bank.grid, hyp, i_t, i_r, max_t, max_r, max_joint, bank.eta, bank.carrier_hz,
        degenerate=bool(hyp is Hypothesis.H2 and bank.degenerate[j_t, j_r]),
    )


@dataclass(frozen=True)
class SequentialBank:
    """Two independent half-CPI banks for time-division scanning.

    ``half_t`` sees only the first P/2 pulses (the transmissive sub-interval),
    ``half_r`` only the last P/2.
    """

    grid: DopplerGrid
    eta: float
    split: int
    dist_t: DisturbanceModel
    dist_r: DisturbanceModel
    set_t: SpaceTimeSet = field(repr=False)
    set_r: SpaceTimeSet = field(repr=False)
    n_t: np.ndarray = field(repr=False)
    n_r: np.ndarray = field(repr=False)
    carrier_hz: Optional[float] = None

    def half_statistics(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y_t, y_r = y[: self.split], y[self.split:]
        stat_t = np.abs(self.dist_t.project(self.set_t, y_t)) ** 2 / self.n_t
        stat_r = np.abs(self.dist_r.project(self.set_r, y_r)) ** 2 / self.n_r
        return stat_t, stat_r


def build_sequential_bank(bank: DetectorBank) -> SequentialBank:
    """Restrict a full bank to the two half-CPI sub-problems.

    The covariance of each half is the matching diagonal block of C, which is
    the same low-rank model with its clutter columns truncated to those pulses.
    """
    if not bank.time_division:
        raise InvalidConfigurationError(
            "the split detector requires sequential (time-division) scanning"
        )
    p = bank.set_t.n_pulses
    half = p // 2
    dist_t = bank.disturbance.pulses(0, half)
    dist_r = bank.disturbance.pulses(half, p)
    set_t = bank.set_t.pulses(0, half)
    set_r = bank.set_r.pulses(half, p)
    n_t = dist_t.cross_diag(set_t)
    n_r = dist_r.cross_diag(set_r)
    if not (np.all(n_t > 0) and np.all(n_r > 0)):
        raise DegenerateCellError("whitened half-CPI steering energy is not positive")
    split = half * bank.set_t.n_rx
    return SequentialBank(
        bank.grid, bank.eta, split, dist_t, dist_r, set_t, set_r, n_t, n_r, bank.carrier_hz
    )


def sequential_decide(bank: SequentialBank | DetectorBank, y: np.ndarray) -> Decision:
    """Two independent threshold tests, one per half-space sub-interval."""
    if isinstance(bank, DetectorBank):
        bank = build_sequential_bank(bank)
    y = np.asarray(y, dtype=complex)
    if y.shape != (2 * bank.split,):
        raise InvalidConfigurationError(f"observation has shape {y.shape}, expected ({2 * bank.split},)")
    stat_t, stat_r = bank.half_statistics(y)
    i_t, i_r = int(np.argmax(stat_t)), int(np.argmax(stat_r))
    max_t, max_r = stat_t[i_t], stat_r[i_r]
    detect_t, detect_r = max_t > bank.eta, max_r > bank.eta
    hyp = {
        (False, False): Hypothesis.H0,
        (True, False): Hypothesis.H1T,
        (False, True): Hypothesis.H1R,
        (True, True): Hypothesis.H2,
    }[(bool(detect_t), bool(detect_r))]
    return _make_decision(
        bank.grid, hyp, i_t, i_r, max_t, max_r, max_t + max_r, bank.eta, bank.carrier_hz
    )
