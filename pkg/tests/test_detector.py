import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import CARRIER, PRI, cluttered_scene, random_direction, small_system, steered_profile
from starradar.array import Direction, HalfSpace
from starradar.detector import (
    DopplerGrid,
    Hypothesis,
    build_bank,
    build_sequential_bank,
    doppler_resolution,
    doppler_to_velocity,
    gic_decide,
    pair_statistic,
    select_hypothesis,
    sequential_decide,
    single_statistic,
)
from starradar.errors import InvalidConfigurationError
from starradar.ris import Policy
from starradar.scene import Scene, build_covariance, space_time_steering, synthesize_observation

D_T = Direction.from_degrees(151, 9)
D_R = Direction.from_degrees(22, 22)


def make_bank(rng, policy, n_pulses=8, clutter=3, eta=10.0, grid=None, scene=None):
    system = small_system(rng)
    prof = steered_profile(system, policy, n_pulses, D_T, D_R)
    scene = scene if scene is not None else cluttered_scene(rng, clutter)
    dist = build_covariance(scene, prof, system)
    grid = grid or DopplerGrid.default(n_pulses, PRI)
    return build_bank(dist, prof, (D_T, D_R), grid, eta, system, CARRIER), prof, system, scene


def h(prof, system, half, nu):
    d = D_T if half is HalfSpace.TRANSMISSIVE else D_R
    return space_time_steering(prof.stacked(half), d, nu, system)


def test_velocity_mapping():
    assert doppler_to_velocity(0.0, CARRIER) == 0.0
    assert doppler_to_velocity(1000.0, CARRIER) == pytest.approx(5.35, abs=0.05)
    assert doppler_to_velocity(2000.0, CARRIER) == pytest.approx(2 * doppler_to_velocity(1000.0, CARRIER))


def test_resolution():
    assert doppler_resolution(16, PRI, Policy.SIMULTANEOUS) == pytest.approx(125.0)
    assert doppler_resolution(16, PRI, Policy.SEQUENTIAL) == pytest.approx(250.0)


def test_grid_layout():
    g = DopplerGrid.default(16, PRI)
    assert g.step == pytest.approx(1000.0 / 64)
    assert np.all(np.abs(g.values) < 1000.0)
    np.testing.assert_allclose(np.diff(g.values), g.step)
    assert 0.0 in g.values and len(g) == 127
    sub = DopplerGrid.spanning(16, PRI, 500.0, 1000.0)
    assert sub.values[0] == pytest.approx(500.0) and sub.values[-1] < 1000.0
    with pytest.raises(InvalidConfigurationError):
        DopplerGrid.spanning(16, PRI, 600.0, 500.0)
    with pytest.raises(InvalidConfigurationError):
        g.index_of(3.0)


def test_hypothesis_labels():
    assert [h.label for h in Hypothesis] == ["H0", "H1t", "H1r", "H2"]
    assert Hypothesis.parse("h1r") is Hypothesis.H1R
    assert Hypothesis.H2.n_targets == 2
    with pytest.raises(InvalidConfigurationError):
        Hypothesis.parse("H3")


def test_tie_break_prefers_fewer_targets():
    assert select_hypothesis(5.0, 5.0, 10.0, 5.0) is Hypothesis.H0
    assert select_hypothesis(6.0, 6.0, 7.0, 5.0) is Hypothesis.H1T
    assert select_hypothesis(6.0, 7.0, 12.0, 5.0) is Hypothesis.H1R
    assert select_hypothesis(6.0, 7.0, 12.5, 5.0) is Hypothesis.H2


def test_no_clutter_norms(rng):
    bank, prof, system, _ = make_bank(rng, Policy.SIMULTANEOUS, scene=Scene(noise_variance=2.0))
    i = 17
    ht = h(prof, system, HalfSpace.TRANSMISSIVE, bank.grid.values[i])
    assert bank.n_t[i] == pytest.approx(np.vdot(ht, ht).real / 2.0, rel=1e-12)


def test_sequential_cross_terms_vanish(rng):
    bank, *_ = make_bank(rng, Policy.SEQUENTIAL)
    assert np.max(np.abs(bank.rho)) <= 1e-12 * np.max(bank.n_t)
    assert bank.time_division


def test_simultaneous_gram_positive_definite(rng):
    bank, *_ = make_bank(rng, Policy.SIMULTANEOUS)
    m = bank.gram
    i = np.arange(len(bank.grid))
    diag_pairs = m[i, i]
    assert np.all(np.linalg.eigvalsh(diag_pairs) > 0)
    assert not bank.degenerate.any()


def test_mirrored_cells_are_degenerate_pairs(rng):
    system = small_system(rng)
    d_t = D_R.mirrored()
    prof = steered_profile(system, Policy.SIMULTANEOUS, 8, d_t, D_R)
    dist = build_covariance(Scene(), prof, system)
    bank = build_bank(dist, prof, (d_t, D_R), DopplerGrid.default(8, PRI), 5.0, system)
    # the alternating transmissive code shifts Doppler by 1/(2T) and the cells
    # share one steering vector, so h_t(nu) is collinear with h_r(nu + 1/2T)
    i = bank.grid.index_of(-250.0)
    j = bank.grid.index_of(750.0)
    assert bank.degenerate[i, j]
    y = space_time_steering(prof.x_t, d_t, -250.0, system)
    val, degen = pair_statistic(bank, -250.0, 750.0, y)
    st_t = single_statistic(bank, "transmissive", -250.0, y)
    st_r = single_statistic(bank, "reflective", 750.0, y)
    assert degen and val == pytest.approx(max(st_t, st_r))


def test_single_statistic_examples(rng):
    bank, prof, system, _ = make_bank(rng, Policy.SIMULTANEOUS)
    nu = bank.grid.values[40]
    assert single_statistic(bank, "transmissive", nu, np.zeros(bank.disturbance.dim)) == 0.0
    y = h(prof, system, HalfSpace.TRANSMISSIVE, nu)
    assert single_statistic(bank, HalfSpace.TRANSMISSIVE, nu, y) == pytest.approx(
        bank.disturbance.quad(y), rel=1e-9
    )


def test_pair_statistic_matches_projection_oracle(rng):
    bank, prof, system, _ = make_bank(rng, Policy.SIMULTANEOUS)
    c = bank.disturbance.dense_covariance()
    w = np.linalg.cholesky(np.linalg.inv(c)).conj().T  # w^H w = C^{-1}
    y = rng.standard_normal(bank.disturbance.dim) + 1j * rng.standard_normal(bank.disturbance.dim)
    for i, j in [(3, 60), (30, 30), (10, 50)]:
        nu_t, nu_r = bank.grid.values[i], bank.grid.values[j]
        a = w @ np.stack([h(prof, system, HalfSpace.TRANSMISSIVE, nu_t), h(prof, system, HalfSpace.REFLECTIVE, nu_r)], 1)
        z = w @ y
        ref = np.vdot(z, a @ np.linalg.lstsq(a, z, rcond=None)[0]).real
        val, degen = pair_statistic(bank, nu_t, nu_r, y)
        assert not degen
        assert val == pytest.approx(ref, rel=1e-8)
    full = bank.pair_statistics(y)
    assert full[3, 60] == pytest.approx(pair_statistic(bank, bank.grid.values[3], bank.grid.values[60], y)[0])


def test_pair_statistic_sequential_is_sum(rng):
    bank, *_ = make_bank(rng, Policy.SEQUENTIAL)
    y = rng.standard_normal(bank.disturbance.dim) + 1j * rng.standard_normal(bank.disturbance.dim)
    st_t, st_r = bank.single_statistics(y)
    joint = bank.pair_statistics(y)
    np.testing.assert_allclose(joint, st_t[:, None] + st_r[None, :], rtol=1e-12)
    assert pair_statistic(bank, bank.grid.values[0], bank.grid.values[1], np.zeros_like(y))[0] == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_projection_nesting(seed):
    rng = np.random.default_rng(seed)
    bank, *_ = make_bank(rng, Policy.SIMULTANEOUS, n_pulses=4)
    y = rng.standard_normal(bank.disturbance.dim) + 1j * rng.standard_normal(bank.disturbance.dim)
    st_t, st_r = bank.single_statistics(y)
    joint = bank.pair_statistics(y)
    assert np.all(joint >= st_t[:, None] - 1e-9)
    assert np.all(joint >= st_r[None, :] - 1e-9)


def test_zero_observation_is_h0(rng):
    for policy in Policy:
        bank, *_ = make_bank(rng, policy)
        y = np.zeros(bank.disturbance.dim)
        assert gic_decide(bank, y).hypothesis is Hypothesis.H0
        if policy is Policy.SEQUENTIAL:
            assert sequential_decide(bank, y).hypothesis is Hypothesis.H0


def test_strong_single_target_is_h1t(rng):
    bank, prof, system, _ = make_bank(rng, Policy.SIMULTANEOUS, clutter=0, scene=Scene())
    nu = bank.grid.values[50]
    y = 30.0 * h(prof, system, HalfSpace.TRANSMISSIVE, nu)
    d = gic_decide(bank, y)
    assert d.hypothesis is Hypothesis.H1T
    assert d.doppler_t == nu and d.doppler_r is None
    assert d.velocity_t == pytest.approx(doppler_to_velocity(nu, CARRIER))


def test_strong_pair_is_h2_on_coarse_grid(rng):
    grid = DopplerGrid.spanning(8, PRI, oversample=1)
    bank, prof, system, _ = make_bank(rng, Policy.SIMULTANEOUS, grid=grid, scene=Scene())
    n1, n2 = grid.values[1], grid.values[5]
    y = 20 * h(prof, system, HalfSpace.TRANSMISSIVE, n1) + (15 - 10j) * h(prof, system, HalfSpace.REFLECTIVE, n2)
    d = gic_decide(bank, y)
    assert (d.hypothesis, d.doppler_t, d.doppler_r) == (Hypothesis.H2, n1, n2)
    # brute-force joint maximization oracle
    best = max(
        (pair_statistic(bank, a, b, y)[0], a, b) for a in grid.values for b in grid.values
    )
    assert (best[1], best[2]) == (n1, n2)


def test_strong_reflective_only_sequential(rng):
    bank, prof, system, _ = make_bank(rng, Policy.SEQUENTIAL, scene=Scene())
    y = 30.0 * h(prof, system, HalfSpace.REFLECTIVE, bank.grid.values[40])
    assert sequential_decide(bank, y).hypothesis is Hypothesis.H1R


def test_sequential_decide_rejects_simultaneous(rng):
    bank, *_ = make_bank(rng, Policy.SIMULTANEOUS)
    with pytest.raises(InvalidConfigurationError):
        sequential_decide(bank, np.zeros(bank.disturbance.dim))
    with pytest.raises(InvalidConfigurationError):
        gic_decide(bank, np.zeros(3))


def test_build_bank_validation(rng):
    system = small_system(rng)
    prof = steered_profile(system, Policy.SIMULTANEOUS, 4, D_T, D_R)
    dist = build_covariance(Scene(), prof, system)
    grid = DopplerGrid.default(4, PRI)
    with pytest.raises(InvalidConfigurationError):
        build_bank(dist, prof, (D_T, D_R), grid, -1.0, system)
    with pytest.raises(InvalidConfigurationError):
        build_bank(dist, prof, (D_R, D_T), grid, 1.0, system)


@pytest.mark.parametrize("policy", list(Policy))
def test_decision_invariant_to_unit_phase(rng, policy):
    bank, prof, system, scene = make_bank(rng, policy, eta=5.0)
    for _ in range(20):
        y = synthesize_observation(scene, prof, system, rng) + 2 * h(prof, system, HalfSpace.REFLECTIVE, 300.0)
        a = gic_decide(bank, y)
        b = gic_decide(bank, np.exp(1j * rng.uniform(0, 2 * np.pi)) * y)
        assert (a.hypothesis, a.doppler_t, a.doppler_r) == (b.hypothesis, b.doppler_t, b.doppler_r)


def test_raising_eta_never_adds_targets(rng):
    bank, prof, system, scene = make_bank(rng, Policy.SIMULTANEOUS)
    for _ in range(30):
        y = synthesize_observation(scene, prof, system, rng) + 1.5 * h(prof, system, HalfSpace.TRANSMISSIVE, 500.0)
        counts = [gic_decide(bank.with_eta(e), y).hypothesis.n_targets for e in (0.0, 2.0, 5.0, 10.0, 20.0, 1e9)]
        assert counts == sorted(counts, reverse=True)
        assert counts[-1] == 0


def test_sequential_equivalence_small(rng):
    for _ in range(50):
        d_t, d_r = random_direction(rng, "t"), random_direction(rng, "r")
        system = small_system(rng)
        prof = steered_profile(system, Policy.SEQUENTIAL, 8, d_t, d_r)
        scene = cluttered_scene(rng, 3)
        dist = build_covariance(scene, prof, system)
        bank = build_bank(dist, prof, (d_t, d_r), DopplerGrid.default(8, PRI), 6.0, system)
        seq = build_sequential_bank(bank)
        y = synthesize_observation(scene, prof, system, rng)
        y = y + rng.uniform(0, 3) * space_time_steering(prof.x_t, d_t, rng.uniform(-900, 900), system)
        a, b = gic_decide(bank, y), sequential_decide(seq, y)
        assert (a.hypothesis, a.doppler_t, a.doppler_r) == (b.hypothesis, b.doppler_t, b.doppler_r)
