"""Small builders shared by the test modules."""

import math

import numpy as np

from starradar.array import Direction, ura_positions, wavelength_of
from starradar.ris import make_codes, random_feeder_channel, stack_profile, synthesize_profiles
from starradar.scene import PointScatterer, RadarSystem, Scene

CARRIER = 28e9
LAM = wavelength_of(CARRIER)
PRI = 0.5e-3


def small_system(rng, ris=(4, 2), rx=(4, 2)):
    ris_g = ura_positions(*ris, LAM / 2, LAM / 2)
    rx_g = ura_positions(*rx, LAM / 2, LAM / 2)
    return RadarSystem(ris_g, rx_g, LAM, PRI, random_feeder_channel(ris_g.size, rng))


def random_direction(rng, half):
    el = rng.uniform(-1.2, 1.2)
    az = rng.uniform(-1.4, 1.4)
    return Direction(az if half == "r" else math.pi - az, el)


def steered_profile(system, policy, n_pulses, dir_t, dir_r):
    xt, xr = synthesize_profiles(system.feeder, dir_t, dir_r, system.ris, system.wavelength)
    return stack_profile(xt, xr, make_codes(policy, n_pulses))


def cluttered_scene(rng, n_clutter=5, cnr=100.0, noise_variance=1.0):
    ct = tuple(
        PointScatterer(random_direction(rng, "t"), rng.uniform(-125, 125), cnr * rng.uniform(0.5, 2))
        for _ in range(n_clutter)
    )
    cr = tuple(
        PointScatterer(random_direction(rng, "r"), rng.uniform(-125, 125), cnr * rng.uniform(0.5, 2))
        for _ in range(n_clutter)
    )
    return Scene(clutter_t=ct, clutter_r=cr, noise_variance=noise_variance)


def dense_steering(x_stacked, direction, nu, system):
    """Reference steering vector built pulse by pulse from its definition."""
    n_ris = system.ris.size
    k = direction.unit_vector
    u_ris = np.exp(1j * 2 * np.pi / system.wavelength * (system.ris.positions @ k))
    u_rx = np.exp(1j * 2 * np.pi / system.wavelength * (system.rx.positions @ k))
    blocks = []
    for p in range(len(x_stacked) // n_ris):
        x_p = x_stacked[p * n_ris:(p + 1) * n_ris]
        gain = np.sum(u_ris * x_p * system.feeder)
        blocks.append(np.exp(2j * np.pi * nu * system.pri * p) * gain * u_rx)
    return np.concatenate(blocks)
