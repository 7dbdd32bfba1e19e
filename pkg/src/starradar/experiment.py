"""Threshold calibration, Monte Carlo trials and PD/RMSE sweeps.

Every trial draws its own generator from ``(seed, purpose, P, snr index,
trial index)`` so results do not depend on how trials are scheduled across
workers. The policy is deliberately left out of the stream key: both scanning
policies see the same channels, directions, Dopplers and amplitudes, which
makes their comparison paired.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .array import Direction, HalfSpace, ura_positions, wavelength_of
from .detector import (
    Decision,
    DetectorBank,
    DopplerGrid,
    Hypothesis,
    build_bank,
    build_sequential_bank,
    doppler_resolution,
    doppler_to_velocity,
    gic_decide,
    sequential_decide,
)
from .errors import InsufficientTrialsError, InvalidConfigurationError
from .ris import (
    Policy,
    StarRisProfile,
    make_codes,
    random_feeder_channel,
    stack_profile,
    synthesize_profiles,
)
from .scene import (
    PointScatterer,
    RadarSystem,
    Scene,
    SpaceTimeSet,
    build_covariance,
    db_to_linear,
    scatterer_set,
    synthesize_components,
    variance_for_energy,
)

log = logging.getLogger(__name__)

# Stream purposes for per-trial seeding.
_CALIBRATE, _SWEEP, _DETECT, _FROZEN = 0, 1, 2, 3

Box = tuple[float, float]


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of a run. Angles are in degrees, frequencies in Hz.

    Defaults follow the reference radar setup except for the false-alarm
    rate, which is relaxed to 1e-2 so that calibration stays desk-sized.
    ``None`` spacings mean half a carrier wavelength.
    """

    carrier_hz: float = 28e9
    bandwidth_hz: float = 50e6
    pri_s: float = 0.5e-3
    pulses: tuple[int, ...] = (16,)
    policy: tuple[Policy, ...] = (Policy.SIMULTANEOUS,)
    noise_variance: float = 1.0
    ris_n_y: int = 16
    ris_n_z: int = 8
    ris_spacing_y_m: Optional[float] = None
    ris_spacing_z_m: Optional[float] = None
    rx_n_y: int = 16
    rx_n_z: int = 8
    rx_spacing_y_m: Optional[float] = None
    rx_spacing_z_m: Optional[float] = None
    target_t_az_deg: Box = (155.0, 160.0)
    target_t_el_deg: Box = (20.0, 25.0)
    target_r_az_deg: Box = (20.0, 25.0)
    target_r_el_deg: Box = (20.0, 25.0)
    target_doppler_hz: Box = (500.0, 1000.0)
    clutter_t_count: int = 10
    clutter_r_count: int = 10
    clutter_t_az_deg: Box = (200.0, 220.0)
    clutter_t_el_deg: Box = (-40.0, -20.0)
    clutter_r_az_deg: Box = (-40.0, -20.0)
    clutter_r_el_deg: Box = (-40.0, -20.0)
    clutter_doppler_hz: Box = (-125.0, 125.0)
    cnr_db: float = 20.0
    snr_db: tuple[float, ...] = (-10.0, -8.0, -6.0, -4.0, -2.0, 0.0, 2.0, 4.0)
    target_far: float = 1e-2
    h0_trials: int = 10_000
    trials: int = 2000
    seed: int = 0
    threads: int = 1
    doppler_oversample: int = 8
    search_doppler_hz: Optional[Box] = None
    split_detector: bool = True
    frozen_scene: bool = False
    long_run: bool = False
    eta: Optional[float] = None
    beam_az_deg: float = 22.0
    beam_el_deg: float = 22.0
    beampattern_step_deg: float = 1.0
    detect_scenario: str = "H2"
    detect_snr_db: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(int(p) for p in _as_tuple(self.pulses)))
        object.__setattr__(self, "policy", tuple(Policy(p) for p in _as_tuple(self.policy)))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in _as_tuple(self.snr_db)))
        for f in dataclasses.fields(self):
            if f.name.endswith(("_deg", "_hz")) and isinstance(getattr(self, f.name), (list, tuple)):
                object.__setattr__(self, f.name, tuple(float(v) for v in getattr(self, f.name)))
        self.validate()

    def validate(self) -> None:
        def bad(key, constraint):
            raise InvalidConfigurationError(f"{key}: {constraint}")

        for key in ("carrier_hz", "bandwidth_hz", "pri_s", "noise_variance"):
            if not getattr(self, key) > 0:
                bad(key, "must be > 0")
        if not self.pulses:
            bad("pulses", "at least one value is required")
        for p in self.pulses:
            if p < 2 or p % 2:
                bad("pulses", f"P={p} must be even and >= 2 (both scanning codes split the CPI in halves)")
        if not self.policy:
            bad("policy", "at least one scanning policy is required")
        for key in ("ris_n_y", "ris_n_z", "rx_n_y", "rx_n_z"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                bad(key, "must be a positive integer")
        for key in ("ris_spacing_y_m", "ris_spacing_z_m", "rx_spacing_y_m", "rx_spacing_z_m"):
            v = getattr(self, key)
            if v is not None and not v > 0:
                bad(key, "must be > 0 or null (half wavelength)")
        nu_max = 1.0 / (2.0 * self.pri_s)
        boxes = {
            "target_t_az_deg": HalfSpace.TRANSMISSIVE,
            "target_r_az_deg": HalfSpace.REFLECTIVE,
            "clutter_t_az_deg": HalfSpace.TRANSMISSIVE,
            "clutter_r_az_deg": HalfSpace.REFLECTIVE,
        }
        for key, half in boxes.items():
            lo, hi = self._box(key)
            rng = "(90, 270)" if half is HalfSpace.TRANSMISSIVE else "(-90, 90)"
            for az in (lo, hi, 0.5 * (lo + hi)):
                c = math.cos(math.radians(az))
                ok = c < -1e-12 if half is HalfSpace.TRANSMISSIVE else c > 1e-12
                if not ok:
                    bad(key, f"azimuth box [{lo}, {hi}] must lie in the {half.value} half-space, azimuth in {rng} deg")
            if hi - lo >= 180:
                bad(key, "azimuth box wider than a half-space")
        for key in ("target_t_el_deg", "target_r_el_deg", "clutter_t_el_deg", "clutter_r_el_deg"):
            lo, hi = self._box(key)
            if not (-90 < lo and hi < 90):
                bad(key, "elevation box must lie in (-90, 90) deg")
        for key in ("target_doppler_hz", "clutter_doppler_hz"):
            lo, hi = self._box(key)
            if not (-nu_max <= lo and hi <= nu_max):
                bad(key, f"Doppler box must lie in the unambiguous interval [-{nu_max:g}, {nu_max:g}] Hz")
        if self.search_doppler_hz is not None:
            lo, hi = self._box("search_doppler_hz")
            if not (-nu_max <= lo and hi <= nu_max):
                bad("search_doppler_hz", f"must lie in [-{nu_max:g}, {nu_max:g}] Hz")
        for key in ("clutter_t_count", "clutter_r_count"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 0:
                bad(key, "must be a non-negative integer")
        if not 0 < self.target_far < 2:
            bad("target_far", "expected false alarms per CPI must lie in (0, 2)")
        if self.target_far < 1e-2 and not self.long_run:
            bad("target_far", "rates below 1e-2 need long_run: true (>= 1e6 H0 trials for 1e-3)")
        if self.trials < 1:
            bad("trials", "must be >= 1")
        if self.h0_trials < 1:
            bad("h0_trials", "must be >= 1")
        if self.threads < 1:
            bad("threads", "must be >= 1")
        if self.doppler_oversample < 1:
            bad("doppler_oversample", "must be >= 1")
        if self.eta is not None and self.eta < 0:
            bad("eta", "must be >= 0")
        if self.beampattern_step_deg <= 0:
            bad("beampattern_step_deg", "must be > 0")
        if math.cos(math.radians(self.beam_az_deg)) <= 0:
            bad("beam_az_deg", "beampattern direction must be in the reflective half-space, azimuth in (-90, 90) deg")
        Hypothesis.parse(self.detect_scenario)

    def _box(self, key: str) -> Box:
        box = getattr(self, key)
        if len(box) != 2 or not box[0] <= box[1]:
            raise InvalidConfigurationError(f"{key}: expected [low, high] with low <= high, got {box!r}")
        return box

    @property
    def wavelength(self) -> float:
        return wavelength_of(self.carrier_hz)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "policy":
                v = [p.value for p in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def digest(self) -> str:
        """Hash of every result-affecting field; the worker count is excluded."""
        fields = {k: v for k, v in self.to_dict().items() if k != "threads"}
        blob = json.dumps(fields, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _as_tuple(v):
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return (v,)


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _uniform_dir(rng, az_box, el_box) -> Direction:
    az = rng.uniform(*az_box)
    el = rng.uniform(*el_box)
    return Direction.from_degrees(az, el)


@dataclass(frozen=True)
class TrialScene:
    """Everything drawn for one CPI except amplitudes and noise."""

    system: RadarSystem
    profile: StarRisProfile
    dir_t: Direction
    dir_r: Direction
    nu_t: float
    nu_r: float
    clutter_t: tuple
    clutter_r: tuple
    clutter_set: SpaceTimeSet = field(repr=False)


def _geometries(config: ExperimentConfig):
    lam = config.wavelength
    ris = ura_positions(
        config.ris_n_y, config.ris_n_z,
        config.ris_spacing_y_m or lam / 2, config.ris_spacing_z_m or lam / 2,
    )
    rx = ura_positions(
        config.rx_n_y, config.rx_n_z,
        config.rx_spacing_y_m or lam / 2, config.rx_spacing_z_m or lam / 2,
    )
    return ris, rx


def draw_trial_scene(config: ExperimentConfig, policy: Policy, n_pulses: int, rng) -> TrialScene:
    """Draw channel, inspected directions, clutter geometry and target Dopplers.

    The draw order is fixed and does not depend on the policy or scenario.
    """
    lam = config.wavelength
    ris, rx = _geometries(config)
    g = random_feeder_channel(ris.size, rng)
    system = RadarSystem(ris, rx, lam, config.pri_s, g)
    dir_t = _uniform_dir(rng, config.target_t_az_deg, config.target_t_el_deg)
    dir_r = _uniform_dir(rng, config.target_r_az_deg, config.target_r_el_deg)
    xbar_t, xbar_r = synthesize_profiles(g, dir_t, dir_r, ris, lam)
    profile = stack_profile(xbar_t, xbar_r, make_codes(policy, n_pulses))

    def clutter(count, az_box, el_box):
        out = []
        for _ in range(count):
            d = _uniform_dir(rng, az_box, el_box)
            out.append(PointScatterer(d, rng.uniform(*config.clutter_doppler_hz)))
        return out

    raw = clutter(config.clutter_t_count, config.clutter_t_az_deg, config.clutter_t_el_deg)
    raw += clutter(config.clutter_r_count, config.clutter_r_az_deg, config.clutter_r_el_deg)
    nu_t = rng.uniform(*config.target_doppler_hz)
    nu_r = rng.uniform(*config.target_doppler_hz)

    cset = scatterer_set(raw, profile, system)
    cnr = db_to_linear(config.cnr_db)
    calibrated = tuple(
        dataclasses.replace(s, variance=variance_for_energy(cnr, e, config.noise_variance, n_pulses))
        for s, e in zip(raw, cset.norms_sq())
    )
    k_t = config.clutter_t_count
    return TrialScene(
        system, profile, dir_t, dir_r, nu_t, nu_r, calibrated[:k_t], calibrated[k_t:], cset
    )


def make_scene(
    config: ExperimentConfig, ts: TrialScene, scenario: Hypothesis | str, snr_db: Optional[float]
) -> tuple[Scene, SpaceTimeSet]:
    """Scene for a scenario plus the steering set of its targets (scene order)."""
    scenario = scenario if isinstance(scenario, Hypothesis) else Hypothesis.parse(scenario)
    n_pulses = ts.profile.n_pulses
    present = []
    if scenario.has_t:
        present.append(("t", PointScatterer(ts.dir_t, ts.nu_t)))
    if scenario.has_r:
        present.append(("r", PointScatterer(ts.dir_r, ts.nu_r)))
    tset = scatterer_set([p for _, p in present], ts.profile, ts.system)
    targets = {"t": None, "r": None}
    if present:
        if snr_db is None:
            raise InvalidConfigurationError("an SNR is required for scenarios with targets")
        snr = db_to_linear(snr_db)
        for (half, p), energy in zip(present, tset.norms_sq()):
            var = variance_for_energy(snr, energy, config.noise_variance, n_pulses)
            targets[half] = dataclasses.replace(p, variance=var)
    scene = Scene(targets["t"], targets["r"], ts.clutter_t, ts.clutter_r, config.noise_variance)
    return scene, tset


def doppler_grid(config: ExperimentConfig, n_pulses: int) -> DopplerGrid:
    lo, hi = config.search_doppler_hz if config.search_doppler_hz is not None else (None, None)
    return DopplerGrid.spanning(n_pulses, config.pri_s, lo, hi, oversample=config.doppler_oversample)


@dataclass(frozen=True)
class TrialRecord:
    scenario: Hypothesis
    decided: Hypothesis
    true_doppler_t: Optional[float]
    true_doppler_r: Optional[float]
    est_doppler_t: Optional[float]
    est_doppler_r: Optional[float]
    max_t: float
    max_r: float
    max_joint: float
    target_energy: float

    def velocity_errors(self, carrier_hz: float) -> Optional[tuple[float, float]]:
        """Per-cell radial-velocity errors when both targets are declared."""
        if self.decided is not Hypothesis.H2 or self.scenario is not Hypothesis.H2:
            return None
        e_t = doppler_to_velocity(self.est_doppler_t - self.true_doppler_t, carrier_hz)
        e_r = doppler_to_velocity(self.est_doppler_r - self.true_doppler_r, carrier_hz)
        return float(e_t), float(e_r)


def decide(bank: DetectorBank, y: np.ndarray, split: bool) -> Decision:
    if split and bank.time_division:
        return sequential_decide(build_sequential_bank(bank), y)
    return gic_decide(bank, y)


def run_trial(
    config: ExperimentConfig,
    policy: Policy,
    n_pulses: int,
    scenario: Hypothesis | str,
    snr_db: Optional[float],
    eta: float,
    rng: np.random.Generator,
    frozen: Optional[tuple] = None,
) -> TrialRecord:
    """Draw one CPI, synthesize ``y``, run the detector and record the outcome."""
    scenario = Hypothesis.parse(scenario.label if isinstance(scenario, Hypothesis) else scenario)
    if frozen is None:
        ts = draw_trial_scene(config, policy, n_pulses, rng)
        bank = None
    else:
        ts, bank = frozen
        # Target Dopplers still vary per trial in frozen mode.
        ts = dataclasses.replace(
            ts,
            nu_t=rng.uniform(*config.target_doppler_hz),
            nu_r=rng.uniform(*config.target_doppler_hz),
        )
    scene, tset = make_scene(config, ts, scenario, snr_db)
    if bank is None:
        dist = build_covariance(scene, ts.profile, ts.system, ts.clutter_set)
        bank = build_bank(
            dist, ts.profile, (ts.dir_t, ts.dir_r), doppler_grid(config, n_pulses), eta,
            ts.system, config.carrier_hz,
        )
    elif bank.eta != eta:
        bank = bank.with_eta(eta)
    targets, disturbance = synthesize_components(
        scene, ts.profile, ts.system, rng, target_set=tset, clutter_set=ts.clutter_set
    )
    y = targets + disturbance
    dec = decide(bank, y, config.split_detector)
    return TrialRecord(
        scenario,
        dec.hypothesis,
        ts.nu_t if scenario.has_t else None,
        ts.nu_r if scenario.has_r else None,
        dec.doppler_t,
        dec.doppler_r,
        dec.max_t,
        dec.max_r,
        dec.max_joint,
        float(np.vdot(targets, targets).real),
    )


def _frozen_setup(config, policy, n_pulses, eta):
    rng = trial_rng(config.seed, _FROZEN, n_pulses)
    ts = draw_trial_scene(config, policy, n_pulses, rng)
    scene, _ = make_scene(config, ts, Hypothesis.H0, None)
    dist = build_covariance(scene, ts.profile, ts.system, ts.clutter_set)
    bank = build_bank(
        dist, ts.profile, (ts.dir_t, ts.dir_r), doppler_grid(config, n_pulses), eta,
        ts.system, config.carrier_hz,
    )
    return ts, bank


def run_trials(
    config: ExperimentConfig,
    policy: Policy,
    n_pulses: int,
    scenario: Hypothesis | str,
    snr_db: Optional[float],
    eta: float,
    n_trials: int,
    stream: tuple[int, ...],
    threads: Optional[int] = None,
) -> list[TrialRecord]:
    """Run ``n_trials`` independent trials; output order is the trial index."""
    threads = config.threads if threads is None else threads
    frozen = _frozen_setup(config, policy, n_pulses, eta) if config.frozen_scene else None

    def one(i):
        return run_trial(
            config, policy, n_pulses, scenario, snr_db, eta,
            trial_rng(config.seed, *stream, i), frozen,
        )

    if threads <= 1:
        return [one(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(n_trials), chunksize=1))


# ---------------------------------------------------------------- calibration


def false_alarm_counts(maxima: np.ndarray, eta: float) -> np.ndarray:
    """Declared targets per trial (0, 1 or 2) for cached ``(max_t, max_r, max_joint)`` rows."""
    scores = np.column_stack(
        [np.zeros(len(maxima)), maxima[:, 0] - eta, maxima[:, 1] - eta, maxima[:, 2] - 2.0 * eta]
    )
    best = np.argmax(scores, axis=1)
    return np.array([0, 1, 1, 2])[best]


def false_alarm_rate(maxima: np.ndarray, eta: float) -> float:
    if np.isinf(eta):
        return 0.0
    return float(np.mean(false_alarm_counts(maxima, eta)))


def threshold_for_rate(maxima: np.ndarray, target_far: float, rel_tol: float = 0.1, iters: int = 200) -> tuple[float, float]:
    """Bisect ``eta`` until the mean declared-target count matches ``target_far``.

    Returns ``(eta, achieved_rate)``. The count is a non-increasing step
    function of ``eta``, so the bracket always shrinks onto the crossing.
    """
    maxima = np.asarray(maxima, dtype=float)
    lo = 0.0
    hi = float(np.max(maxima)) + 1.0
    rate_lo, rate_hi = false_alarm_rate(maxima, lo), false_alarm_rate(maxima, hi)
    if rate_lo < target_far * (1 - rel_tol):
        raise InsufficientTrialsError(
            f"even eta=0 yields only {rate_lo:.4g} false alarms per CPI", (rate_hi, rate_lo)
        )
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        rate = false_alarm_rate(maxima, mid)
        if rate > target_far:
            lo, rate_lo = mid, rate
        else:
            hi, rate_hi = mid, rate
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    candidates = [(abs(rate_hi - target_far), hi, rate_hi), (abs(rate_lo - target_far), lo, rate_lo)]
    err, eta, rate = min(candidates)
    if err > rel_tol * target_far:
        raise InsufficientTrialsError(
            f"false-alarm rate {target_far:g} not reachable within {rel_tol:.0%} on "
            f"{len(maxima)} cached trials; neighbouring rates are {rate_hi:.4g} and {rate_lo:.4g}",
            (rate_hi, rate_lo),
        )
    return eta, rate


@dataclass(frozen=True)
class Calibration:
    policy: Policy
    n_pulses: int
    eta: float
    target_far: float
    achieved_far: float
    trials: int
    maxima: np.ndarray = field(repr=False)


def min_h0_trials(config: ExperimentConfig) -> int:
    factor = 1000 if config.long_run else 10
    return int(math.ceil(factor / config.target_far))


def calibrate_threshold(
    config: ExperimentConfig,
    policy: Policy | str,
    n_pulses: int,
    h0_trials: Optional[int] = None,
    threads: Optional[int] = None,
) -> Calibration:
    """Simulate clutter-plus-noise CPIs and pick ``eta`` for the target rate."""
    policy = Policy(policy)
    h0_trials = config.h0_trials if h0_trials is None else h0_trials
    needed = min_h0_trials(config)
    if h0_trials < needed:
        raise InsufficientTrialsError(
            f"h0_trials={h0_trials} cannot resolve target_far={config.target_far:g}; "
            f"need at least {needed}"
        )
    # eta does not affect the cached maxima.
    records = run_trials(
        config, policy, n_pulses, Hypothesis.H0, None, 0.0, h0_trials,
        (_CALIBRATE, n_pulses), threads,
    )
    maxima = np.array([[r.max_t, r.max_r, r.max_joint] for r in records])
    eta, rate = threshold_for_rate(maxima, config.target_far)
    log.info("calibrated %s P=%d: eta=%.6g far=%.4g", policy.value, n_pulses, eta, rate)
    return Calibration(policy, n_pulses, eta, config.target_far, rate, h0_trials, maxima)


# ---------------------------------------------------------------------- sweep


def wilson_half_width(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval centre and half-width."""
    if n == 0:
        return float("nan"), float("nan")
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre, half


def rmse_with_jackknife(sq_errors: np.ndarray, z: float = 1.959963984540054) -> tuple[Optional[float], Optional[float]]:
    """RMSE of per-trial mean-square errors and a jackknife 95% half-width."""
    n = len(sq_errors)
    if n == 0:
        return None, None
    total = float(np.sum(sq_errors))
    rmse = math.sqrt(total / n)
    if n == 1:
        return rmse, None
    loo = np.sqrt((total - sq_errors) / (n - 1))
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return rmse, z * se


@dataclass(frozen=True)
class SweepPoint:
    policy: Policy
    n_pulses: int
    snr_db: float
    pd: float
    pd_ci: float
    rmse_mps: Optional[float]
    rmse_ci: Optional[float]
    far_achieved: float
    trials: int
    eta: float
    detections: int
    mean_target_energy: float


@dataclass(frozen=True)
class SweepResult:
    points: tuple[SweepPoint, ...]
    calibrations: dict
    config: ExperimentConfig

    def curve(self, policy: Policy | str, n_pulses: int) -> list[SweepPoint]:
        policy = Policy(policy)
        pts = [p for p in self.points if p.policy is policy and p.n_pulses == n_pulses]
        return sorted(pts, key=lambda p: p.snr_db)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config.digest()} seed={self.config.seed}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["policy", "P", "snr_db", "pd", "pd_ci", "rmse_mps", "rmse_ci", "far_achieved", "trials"]
        )
        for p in self.points:
            writer.writerow([
                p.policy.value, p.n_pulses, repr(p.snr_db), repr(p.pd), repr(p.pd_ci),
                "" if p.rmse_mps is None else repr(p.rmse_mps),
                "" if p.rmse_ci is None else repr(p.rmse_ci),
                repr(p.far_achieved), p.trials,
            ])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "config_hash": self.config.digest(),
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "thresholds": [
                {
                    "policy": c.policy.value,
                    "P": c.n_pulses,
                    "eta": c.eta,
                    "target_far": c.target_far,
                    "achieved_far": c.achieved_far,
                    "h0_trials": c.trials,
                }
                for c in self.calibrations.values()
            ],
        }


def summarize(
    records: Sequence[TrialRecord], config: ExperimentConfig, policy: Policy, n_pulses: int,
    snr_db: float, eta: float, far: float,
) -> SweepPoint:
    n = len(records)
    hits = [r for r in records if r.decided is Hypothesis.H2]
    _, pd_ci = wilson_half_width(len(hits), n)
    sq = np.array([
        0.5 * (e[0] ** 2 + e[1] ** 2) for e in (r.velocity_errors(config.carrier_hz) for r in hits)
    ])
    rmse, rmse_ci = rmse_with_jackknife(sq)
    energy = float(np.mean([r.target_energy for r in records])) if n else float("nan")
    return SweepPoint(
        policy, n_pulses, snr_db, len(hits) / n, pd_ci, rmse, rmse_ci, far, n, eta, len(hits), energy,
    )


def run_sweep(
    config: ExperimentConfig,
    calibrations: Optional[dict] = None,
    threads: Optional[int] = None,
) -> SweepResult:
    """PD and velocity RMSE versus SNR for every (policy, P) in ``config``.

    ``eta`` is calibrated separately per (policy, P) unless ``config.eta`` is
    set or ``calibrations`` supplies one.
    """
    calibrations = dict(calibrations or {})
    points = []
    for policy in config.policy:
        for n_pulses in config.pulses:
            key = (policy, n_pulses)
            if config.eta is not None:
                eta, far = config.eta, float("nan")
            else:
                if key not in calibrations:
                    calibrations[key] = calibrate_threshold(config, policy, n_pulses, threads=threads)
                eta, far = calibrations[key].eta, calibrations[key].achieved_far
            for k, snr in enumerate(config.snr_db):
                records = run_trials(
                    config, policy, n_pulses, Hypothesis.H2, snr, eta, config.trials,
                    (_SWEEP, n_pulses, k), threads,
                )
                pt = summarize(records, config, policy, n_pulses, snr, eta, far)
                log.info("%s P=%d SNR=%g dB: PD=%.3f", policy.value, n_pulses, snr, pt.pd)
                points.append(pt)
    return SweepResult(tuple(points), calibrations, config)


def pd_crossing(points: Sequence[SweepPoint], level: float = 0.5) -> Optional[float]:
    """SNR (dB) where the PD curve first crosses ``level``, by linear interpolation."""
    pts = sorted(points, key=lambda p: p.snr_db)
    for a, b in zip(pts, pts[1:]):
        if a.pd <= level <= b.pd and b.pd > a.pd:
            return a.snr_db + (level - a.pd) * (b.snr_db - a.snr_db) / (b.pd - a.pd)
    return None


def resolution_report(config: ExperimentConfig) -> list[dict]:
    """Unambiguous Doppler/velocity and per-policy resolution for each P."""
    nu_max = 1.0 / (2.0 * config.pri_s)
    rows = []
    for policy in config.policy:
        for p in config.pulses:
            res = doppler_resolution(p, config.pri_s, policy)
            rows.append({
                "policy": policy.value,
                "P": p,
                "nu_max_hz": nu_max,
                "v_max_mps": float(doppler_to_velocity(nu_max, config.carrier_hz)),
                "doppler_resolution_hz": res,
                "velocity_resolution_mps": float(doppler_to_velocity(res, config.carrier_hz)),
            })
    return rows


def run_detect(config: ExperimentConfig, policy: Policy, n_pulses: int, eta: float) -> tuple[TrialRecord, Decision, TrialScene]:
    """One fully reported trial for debugging."""
    scenario = Hypothesis.parse(config.detect_scenario)
    rng = trial_rng(config.seed, _DETECT, n_pulses)
    ts = draw_trial_scene(config, policy, n_pulses, rng)
    scene, tset = make_scene(config, ts, scenario, config.detect_snr_db)
    dist = build_covariance(scene, ts.profile, ts.system, ts.clutter_set)
    bank = build_bank(
        dist, ts.profile, (ts.dir_t, ts.dir_r), doppler_grid(config, n_pulses), eta,
        ts.system, config.carrier_hz,
    )
    targets, disturbance = synthesize_components(
        scene, ts.profile, ts.system, rng, target_set=tset, clutter_set=ts.clutter_set
    )
    dec = decide(bank, targets + disturbance, config.split_detector)
    rec = TrialRecord(
        scenario, dec.hypothesis,
        ts.nu_t if scenario.has_t else None, ts.nu_r if scenario.has_r else None,
        dec.doppler_t, dec.doppler_r, dec.max_t, dec.max_r, dec.max_joint,
        float(np.vdot(targets, targets).real),
    )
    return rec, dec, ts
