"""Macrospin device model of the magnetoelectric MTJ.

Everything here is a pure function of its inputs. Vectors are numpy arrays
whose last axis has length 3, so most functions broadcast over stacks of
magnetization vectors.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import constants

MU0 = constants.mu_0
HBAR = constants.hbar
KB = constants.k
Q_E = constants.e
MU_B = constants.physical_constants["Bohr magneton"][0]

#: electron gyromagnetic ratio 2*mu_B*mu_0/hbar, m/(A s)
GAMMA = 2.0 * MU_B * MU0 / HBAR

Z_AXIS = (0.0, 0.0, 1.0)


class BiasPoint(NamedTuple):
    """Voltages across the ME oxide (`v_me`) and across the MTJ stack (`v_i`).

    Positive `v_me` favors P; positive `v_i` favors AP.
    """

    v_me: float
    v_i: float


@dataclass(frozen=True)
class DeviceParams:
    saturation_magnetization: float
    damping_alpha: float
    volume: float
    demag_factors: tuple
    temperature: float
    me_coefficient: float
    me_thickness: float
    resistance_p: float
    tmr_ratio: float
    spin_polarization: float
    polarizer_axis: tuple = field(default=Z_AXIS)

    def __post_init__(self):
        object.__setattr__(self, "demag_factors", tuple(float(x) for x in self.demag_factors))
        object.__setattr__(self, "polarizer_axis", tuple(float(x) for x in self.polarizer_axis))
        if not self.saturation_magnetization > 0:
            raise ValueError("saturation_magnetization must be > 0")
        if not self.volume > 0:
            raise ValueError("volume must be > 0")
        if not self.temperature >= 0:
            raise ValueError("temperature must be >= 0")
        if not self.me_thickness > 0:
            raise ValueError("me_thickness must be > 0")
        if not self.resistance_p > 0:
            raise ValueError("resistance_p must be > 0")
        if not self.tmr_ratio >= 0:
            raise ValueError("tmr_ratio must be >= 0")
        if not 0 < self.spin_polarization <= 1:
            raise ValueError("spin_polarization must lie in (0, 1]")
        if not 0 <= self.damping_alpha < 1:
            raise ValueError("damping_alpha must lie in [0, 1)")
        nx, ny, nz = self.demag_factors
        if abs(nx + ny + nz - 1.0) > 1e-9:
            raise ValueError(f"demag factors must sum to 1, got {nx + ny + nz!r}")
        if min(nx, ny, nz) < 0 or max(nx, ny, nz) > 1:
            raise ValueError("demag factors must lie in [0, 1]")
        if not nz < ny < nx:
            raise ValueError("need Nz < Ny < Nx (z easy, x hard)")
        if self.polarizer_axis != Z_AXIS:
            raise ValueError("polarizer_axis is fixed to (0, 0, 1)")

    def replace(self, **changes):
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return DeviceParams(**values)

    @property
    def n_spins(self):
        """Number of spins in the free layer, Ms*V/mu_B."""
        return self.saturation_magnetization * self.volume / MU_B

    @property
    def resistance_ap(self):
        return self.resistance_p * (1.0 + self.tmr_ratio)


def shape_anisotropy_field(m, params):
    """Demagnetizing field -Ms*(Nx mx, Ny my, Nz mz) in A/m."""
    m = np.asarray(m, dtype=float)
    return -params.saturation_magnetization * np.asarray(params.demag_factors) * m


def me_field(v_me, params):
    """Voltage-induced magnetoelectric field along +z, A/m. Linear in `v_me`."""
    hz = params.me_coefficient * v_me / (MU0 * params.me_thickness)
    return np.array([0.0, 0.0, hz])


def thermal_sigma(params, dt):
    """Per-component standard deviation of the thermal field held over one step."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    num = 2.0 * params.damping_alpha * KB * params.temperature
    den = GAMMA * MU0 * params.saturation_magnetization * params.volume * dt
    return np.sqrt(num / den)


def thermal_field_sample(rng, params, dt):
    """One draw of the Brown thermal field for a step of length `dt`."""
    sigma = thermal_sigma(params, dt)
    if sigma == 0.0:
        return np.zeros(3)
    return sigma * rng.standard_normal(3)


def mtj_conductance(m, params):
    """Angle-dependent conductance G_P cos^2(theta/2) + G_AP sin^2(theta/2)."""
    m = np.asarray(m, dtype=float)
    # normalized so that unnormalized predictor states stay within [G_AP, G_P]
    cos_t = np.clip((m @ np.asarray(params.polarizer_axis)) / np.linalg.norm(m, axis=-1), -1.0, 1.0)
    c2 = 0.5 * (1.0 + cos_t)
    g_p = 1.0 / params.resistance_p
    g_ap = 1.0 / params.resistance_ap
    return g_p * c2 + g_ap * (1.0 - c2)


def mtj_resistance(m, params):
    return 1.0 / mtj_conductance(m, params)


def spin_current(m, v_i, params):
    """Spin current vector in A; positive `v_i` pushes m toward -z (AP)."""
    g = mtj_conductance(m, params)
    amp = -params.spin_polarization * v_i * np.asarray(g)
    return amp[..., None] * np.asarray(params.polarizer_axis)


def effective_field(m, bias, h_thermal, params):
    return shape_anisotropy_field(m, params) + me_field(bias.v_me, params) + np.asarray(h_thermal)


def llg_rhs(m, bias, h_thermal, params):
    """Explicit dm/dt of the Gilbert equation with spin-transfer torque.

    The implicit Gilbert form dm/dt = A + alpha m x dm/dt, with
    A = -gamma m x H + (1/(q Ns)) m x (Is x m), is solved as
    dm/dt = (A + alpha m x A) / (1 + alpha^2), valid because A is
    perpendicular to m.
    """
    m = np.asarray(m, dtype=float)
    h = effective_field(m, bias, h_thermal, params)
    i_s = spin_current(m, bias.v_i, params)
    a = -GAMMA * np.cross(m, h)
    a = a + np.cross(m, np.cross(i_s, m)) / (Q_E * params.n_spins)
    alpha = params.damping_alpha
    return (a + alpha * np.cross(m, a)) / (1.0 + alpha * alpha)


def barrier_height(params):
    """In-plane escape barrier of the double well, in units of kB*T."""
    _, ny, nz = params.demag_factors
    ms = params.saturation_magnetization
    return 0.5 * MU0 * ms**2 * params.volume * (ny - nz) / (KB * params.temperature)


def volume_for_barrier(delta, saturation_magnetization, demag_factors, temperature):
    """Free-layer volume giving a barrier of `delta` kT."""
    _, ny, nz = demag_factors
    return delta * KB * temperature / (0.5 * MU0 * saturation_magnetization**2 * (ny - nz))


def magnetic_energy(m, params, v_me=0.0):
    """Shape-anisotropy plus Zeeman (ME field) energy in joules."""
    m = np.asarray(m, dtype=float)
    ms = params.saturation_magnetization
    vol = params.volume
    n = np.asarray(params.demag_factors)
    anis = 0.5 * MU0 * ms**2 * vol * np.sum(n * m * m, axis=-1)
    zeeman = -MU0 * ms * vol * (m @ me_field(v_me, params))
    return anis + zeeman
