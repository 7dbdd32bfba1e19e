import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from starradar.detector import Hypothesis, select_hypothesis
from starradar.errors import InsufficientTrialsError, InvalidConfigurationError
from starradar.experiment import (
    ExperimentConfig,
    SweepPoint,
    calibrate_threshold,
    false_alarm_counts,
    false_alarm_rate,
    pd_crossing,
    resolution_report,
    rmse_with_jackknife,
    run_sweep,
    run_trial,
    run_trials,
    threshold_for_rate,
    trial_rng,
    wilson_half_width,
)
from starradar.ris import Policy

TINY = dict(ris_n_y=4, ris_n_z=2, rx_n_y=4, rx_n_z=2, clutter_t_count=3, clutter_r_count=3, pulses=(4,))


def tiny(**kw):
    return ExperimentConfig(**{**TINY, **kw})


def test_defaults_follow_the_reference_setup():
    c = ExperimentConfig()
    assert (c.carrier_hz, c.pri_s, c.ris_n_y, c.ris_n_z, c.rx_n_y, c.rx_n_z) == (28e9, 0.5e-3, 16, 8, 16, 8)
    assert c.cnr_db == 20.0 and c.clutter_t_count == c.clutter_r_count == 10
    assert c.target_far == 1e-2


@pytest.mark.parametrize(
    "changes, key",
    [
        (dict(pulses=(7,)), "pulses"),
        (dict(target_r_az_deg=(80.0, 100.0)), "target_r_az_deg"),
        (dict(target_t_az_deg=(20.0, 25.0)), "target_t_az_deg"),
        (dict(target_t_el_deg=(20.0, 95.0)), "target_t_el_deg"),
        (dict(target_doppler_hz=(0.0, 1500.0)), "target_doppler_hz"),
        (dict(target_far=1e-3), "target_far"),
        (dict(trials=0), "trials"),
        (dict(eta=-1.0), "eta"),
    ],
)
def test_config_validation_names_key(changes, key):
    with pytest.raises(InvalidConfigurationError, match=f"^{key}:"):
        ExperimentConfig(**changes)


def test_long_run_unlocks_low_rates():
    c = ExperimentConfig(target_far=1e-3, long_run=True, h0_trials=10**6)
    with pytest.raises(InsufficientTrialsError):
        calibrate_threshold(c, Policy.SIMULTANEOUS, 16, h0_trials=10**4)


def test_digest_is_stable_and_sensitive():
    assert ExperimentConfig().digest() == ExperimentConfig().digest()
    assert ExperimentConfig().digest() != ExperimentConfig(seed=1).digest()
    assert ExperimentConfig().digest() == ExperimentConfig(threads=8).digest()


def test_trial_streams_are_distinct_and_reproducible():
    a = trial_rng(0, 1, 16, 0, 5).standard_normal(4)
    b = trial_rng(0, 1, 16, 0, 5).standard_normal(4)
    c = trial_rng(0, 1, 16, 0, 6).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_h0_with_huge_eta_decides_h0():
    cfg = tiny()
    for i in range(10):
        rec = run_trial(cfg, Policy.SIMULTANEOUS, 4, "H0", None, 1e12, trial_rng(3, i))
        assert rec.decided is Hypothesis.H0
        assert rec.true_doppler_t is None and rec.target_energy == 0.0


@pytest.mark.parametrize("policy", list(Policy))
def test_high_snr_h2_is_resolved(policy):
    cfg = ExperimentConfig(clutter_t_count=10, clutter_r_count=10, pulses=(16,))
    step = 1.0 / (8 * 16 * cfg.pri_s)
    recs = run_trials(cfg, policy, 16, "H2", 40.0, 15.0, 100, (9,))
    ok = [
        r.decided is Hypothesis.H2
        and abs(r.est_doppler_t - r.true_doppler_t) <= step
        and abs(r.est_doppler_r - r.true_doppler_r) <= step
        for r in recs
    ]
    assert np.mean(ok) >= 0.95


def test_records_identical_across_thread_counts():
    cfg = tiny()
    runs = [run_trials(cfg, Policy.SIMULTANEOUS, 4, "H2", 0.0, 5.0, 40, (1, 4, 0), threads=t) for t in (1, 4, 8)]
    assert runs[0] == runs[1] == runs[2]


def test_frozen_scene_mode():
    cfg = tiny(frozen_scene=True)
    recs = run_trials(cfg, Policy.SEQUENTIAL, 4, "H1r", 10.0, 5.0, 20, (1,))
    assert len(recs) == 20
    assert len({r.true_doppler_r for r in recs}) == 20


def test_energy_parity_between_policies():
    cfg = tiny()
    means = []
    for policy in Policy:
        recs = run_trials(cfg, policy, 4, "H2", 3.0, 1e9, 10_000, (7,))
        means.append(np.mean([r.target_energy for r in recs]))
    assert means[0] == pytest.approx(means[1], rel=0.01)


# ---------------------------------------------------------------- calibration


def _random_maxima(rng, n):
    t = rng.exponential(size=n) * 3
    r = rng.exponential(size=n) * 3
    return np.column_stack([t, r, t + r + rng.exponential(size=n)])


def test_count_matches_rule_oracle(rng):
    m = _random_maxima(rng, 500)
    for eta in (0.5, 3.0, 7.0):
        ref = [select_hypothesis(*row, eta).n_targets for row in m]
        np.testing.assert_array_equal(false_alarm_counts(m, eta), ref)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), etas=st.lists(st.floats(0, 50), min_size=2, max_size=6))
def test_rate_is_non_increasing_in_eta(seed, etas):
    m = _random_maxima(np.random.default_rng(seed), 300)
    rates = [false_alarm_rate(m, e) for e in sorted(etas)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_rate_limits(rng):
    m = _random_maxima(rng, 200)
    assert false_alarm_rate(m, math.inf) == 0.0
    assert np.all(false_alarm_counts(m, 0.0) >= 1)


def test_threshold_bisection_hits_target(rng):
    m = _random_maxima(rng, 10_000)
    eta, rate = threshold_for_rate(m, 0.05)
    assert 0.045 <= rate <= 0.055
    assert false_alarm_rate(m, eta) == rate


def test_unreachable_rate_reports_range():
    m = np.zeros((100, 3))
    with pytest.raises(InsufficientTrialsError) as err:
        threshold_for_rate(m, 0.5)
    assert err.value.achievable is not None


def test_calibrate_threshold_tiny():
    cfg = tiny(target_far=0.05, h0_trials=10_000)
    cal = calibrate_threshold(cfg, Policy.SIMULTANEOUS, 4)
    assert 0.045 <= cal.achieved_far <= 0.055
    # empirical oracle: recount on the cached maxima
    counts = [select_hypothesis(*row, cal.eta).n_targets for row in cal.maxima]
    assert np.mean(counts) == pytest.approx(cal.achieved_far)
    with pytest.raises(InsufficientTrialsError, match="need at least"):
        calibrate_threshold(cfg, Policy.SIMULTANEOUS, 4, h0_trials=100)


# ---------------------------------------------------------------- statistics


@pytest.mark.parametrize("k, n", [(0, 10), (7, 20), (1900, 2000), (2000, 2000)])
def test_wilson_matches_scipy(k, n):
    centre, half = wilson_half_width(k, n)
    ci = stats.binomtest(k, n).proportion_ci(0.95, method="wilson")
    assert centre - half == pytest.approx(ci.low, abs=1e-12)
    assert centre + half == pytest.approx(ci.high, abs=1e-12)


def test_jackknife_matches_explicit_leave_one_out(rng):
    sq = rng.exponential(size=50)
    rmse, half = rmse_with_jackknife(sq)
    assert rmse == pytest.approx(math.sqrt(sq.mean()))
    loo = np.array([math.sqrt(np.delete(sq, i).mean()) for i in range(50)])
    se = math.sqrt(49 / 50 * np.sum((loo - loo.mean()) ** 2))
    assert half == pytest.approx(1.959963984540054 * se)
    assert rmse_with_jackknife(np.array([])) == (None, None)


def _pt(snr, pd):
    return SweepPoint(Policy.SIMULTANEOUS, 8, snr, pd, 0.0, None, None, 0.0, 1, 1.0, 0, 0.0)


def test_pd_crossing_interpolates():
    pts = [_pt(0, 0.1), _pt(2, 0.3), _pt(4, 0.7), _pt(6, 0.9)]
    assert pd_crossing(pts) == pytest.approx(3.0)
    assert pd_crossing(pts[:2]) is None


def test_resolution_report():
    rows = resolution_report(ExperimentConfig(pulses=(16,), policy=("simultaneous", "sequential")))
    assert rows[0]["nu_max_hz"] == pytest.approx(1000.0)
    assert rows[0]["v_max_mps"] == pytest.approx(5.35, abs=0.05)
    assert rows[0]["doppler_resolution_hz"] == pytest.approx(125.0)
    assert rows[1]["doppler_resolution_hz"] == pytest.approx(250.0)


# ---------------------------------------------------------------------- sweep


def test_tiny_sweep_shape_and_trends():
    cfg = tiny(snr_db=(-20.0, 0.0, 10.0, 20.0), trials=200, h0_trials=1000, target_far=0.05)
    res = run_sweep(cfg)
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert rows[0][0].startswith("# config_hash=")
    assert rows[1] == ["policy", "P", "snr_db", "pd", "pd_ci", "rmse_mps", "rmse_ci", "far_achieved", "trials"]
    assert len(rows) == 2 + 4
    pds = [p.pd for p in res.curve("simultaneous", 4)]
    cis = [p.pd_ci for p in res.curve("simultaneous", 4)]
    assert all(b >= a - (ca + cb) for a, b, ca, cb in zip(pds, pds[1:], cis, cis[1:]))
    for p in res.points:
        assert 0 <= p.pd <= 1
        assert (p.rmse_mps is None) == (p.detections == 0)
        assert p.rmse_mps is None or p.rmse_mps >= 0
    man = res.manifest()
    assert man["config_hash"] == cfg.digest() and man["thresholds"][0]["P"] == 4


def test_zero_detections_leave_rmse_absent():
    cfg = tiny(snr_db=(-30.0,), trials=20, eta=1e9)
    res = run_sweep(cfg)
    assert res.points[0].rmse_mps is None
    assert ",," in res.to_csv().splitlines()[-1]


def test_sweep_is_reproducible():
    cfg = tiny(snr_db=(5.0,), trials=30, eta=6.0)
    assert run_sweep(cfg).to_csv() == run_sweep(cfg).to_csv()


def test_rmse_pairs_by_cell():
    from starradar.experiment import TrialRecord

    rec = TrialRecord(Hypothesis.H2, Hypothesis.H2, 500.0, 900.0, 900.0, 500.0, 0, 0, 0, 1.0)
    e_t, e_r = rec.velocity_errors(28e9)
    # swapped estimates must count as large errors, not zero
    assert abs(e_t) > 2 and abs(e_r) > 2
