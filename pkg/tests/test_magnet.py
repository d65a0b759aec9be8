from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from me_neuron.magnet import (
    GAMMA,
    MU0,
    BiasPoint,
    DeviceParams,
    barrier_height,
    llg_rhs,
    magnetic_energy,
    me_field,
    mtj_conductance,
    mtj_resistance,
    shape_anisotropy_field,
    spin_current,
    thermal_field_sample,
    thermal_sigma,
    volume_for_barrier,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_gamma_from_constants():
    # 2 mu_B mu0 / hbar evaluated with CODATA values
    assert GAMMA == pytest.approx(2.2102e5, rel=1e-4)


def test_defaults_barrier_is_two_kt(params):
    assert barrier_height(params) == pytest.approx(2.0, abs=0.1)
    assert barrier_height(params) == pytest.approx(2.0, rel=1e-9)


def test_barrier_examples(params):
    p = params.replace(volume=2.196e-25)
    assert barrier_height(p) == pytest.approx(2.0, abs=0.005)
    assert barrier_height(params.replace(volume=2 * params.volume)) == pytest.approx(2 * barrier_height(params))
    v = volume_for_barrier(2.0, 1e6, (0.9, 0.08, 0.02), 300.0)
    assert v == pytest.approx(params.volume, rel=1e-12)


def test_barrier_degenerate_well_is_zero(params):
    # Ny = Nz is rejected by DeviceParams, so bypass validation
    fake = SimpleNamespace(**{**params.__dict__, "demag_factors": (0.9, 0.05, 0.05)})
    assert barrier_height(fake) == 0.0


@pytest.mark.parametrize("change", [
    dict(saturation_magnetization=0.0), dict(volume=-1.0), dict(temperature=-1.0),
    dict(me_thickness=0.0), dict(resistance_p=0.0), dict(spin_polarization=0.0),
    dict(spin_polarization=1.5), dict(damping_alpha=1.0), dict(demag_factors=(0.5, 0.3, 0.3)),
    dict(demag_factors=(0.08, 0.9, 0.02)), dict(polarizer_axis=(1.0, 0.0, 0.0)),
])
def test_invalid_params_rejected(params, change):
    with pytest.raises(ValueError):
        params.replace(**change)


def test_shape_field_examples(params):
    assert np.allclose(shape_anisotropy_field([0, 0, 1], params), [0, 0, -2e4], rtol=0, atol=1e-9)
    assert np.allclose(shape_anisotropy_field([1, 0, 0], params), [-9e5, 0, 0], rtol=0, atol=1e-9)


@given(vec3, vec3, finite)
def test_shape_field_linear(a, b, c):
    params = DeviceParams(1e6, 0.9, 2.2e-25, (0.9, 0.08, 0.02), 300.0, 1e-9, 1e-8, 1e3, 3.0, 0.5)
    a, b = np.array(a), np.array(b)
    lhs = shape_anisotropy_field(a + c * b, params)
    rhs = shape_anisotropy_field(a, params) + c * shape_anisotropy_field(b, params)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-6)
    assert np.array_equal(shape_anisotropy_field(-a, params), -shape_anisotropy_field(a, params))


def test_me_field_examples(params):
    assert np.array_equal(me_field(0.0, params), [0.0, 0.0, 0.0])
    p = params.replace(me_coefficient=1.2566e-8, me_thickness=1e-8)
    # 1.2566e-8 * 0.1 / (mu0 * 1e-8) with mu0 = 1.2566e-6
    assert me_field(0.1, p)[2] == pytest.approx(1e5, rel=1e-4)
    assert me_field(0.1, p)[2] == pytest.approx(1.2566e-8 * 0.1 / (MU0 * 1e-8), rel=1e-15)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_me_field_linear(v, w):
    p = DeviceParams(1e6, 0.9, 2.2e-25, (0.9, 0.08, 0.02), 300.0, 4e-10, 1e-8, 1e3, 3.0, 0.5)
    assert me_field(2 * v, p)[2] == pytest.approx(2 * me_field(v, p)[2], rel=1e-12, abs=1e-300)
    assert me_field(v + w, p)[2] == pytest.approx(me_field(v, p)[2] + me_field(w, p)[2], rel=1e-9, abs=1e-6)
    assert me_field(v, p)[:2].tolist() == [0.0, 0.0]


def test_thermal_zero_temperature(params):
    rng = np.random.default_rng(0)
    assert np.array_equal(thermal_field_sample(rng, params.replace(temperature=0.0), 1e-13), np.zeros(3))


def test_thermal_rejects_bad_dt(params):
    with pytest.raises(ValueError):
        thermal_field_sample(np.random.default_rng(0), params, 0.0)
    with pytest.raises(ValueError):
        thermal_sigma(params, -1e-13)


def test_thermal_variance_and_normality(params):
    rng = np.random.default_rng(12)
    dt = 1e-13
    draws = np.array([thermal_field_sample(rng, params, dt) for _ in range(20_000)])
    # the per-call path is slow; the 1e6-draw variance check uses the vectorised sigma below
    sigma = thermal_sigma(params, dt)
    big = sigma * rng.standard_normal((1_000_000, 3))
    assert np.allclose(big.var(axis=0), sigma**2, rtol=0.01)
    assert np.allclose(draws.var(axis=0), sigma**2, rtol=0.05)
    for k in range(3):
        assert stats.kstest(draws[:, k] / sigma, "norm").pvalue > 0.01
    expected = np.sqrt(2 * params.damping_alpha * 1.380649e-23 * 300 /
                       (GAMMA * MU0 * params.saturation_magnetization * params.volume * dt))
    assert sigma == pytest.approx(expected, rel=1e-12)


def test_thermal_variance_scales_with_volume(params):
    s1 = thermal_sigma(params, 1e-13)
    s2 = thermal_sigma(params.replace(volume=2 * params.volume), 1e-13)
    assert s2**2 == pytest.approx(s1**2 / 2, rel=1e-12)


def test_resistance_examples(params):
    assert mtj_resistance([0, 0, 1], params) == params.resistance_p
    assert mtj_resistance([0, 0, -1], params) == pytest.approx(params.resistance_p * (1 + params.tmr_ratio), rel=1e-15)
    p = params.replace(resistance_p=1e4, tmr_ratio=1.0)
    assert mtj_resistance([1, 0, 0], p) == pytest.approx(1 / (0.5e-4 + 0.5 * 0.5e-4), rel=1e-12)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_resistance_monotone_and_bounded(c1, c2, ):
    p = DeviceParams(1e6, 0.9, 2.2e-25, (0.9, 0.08, 0.02), 300.0, 4e-10, 1e-8, 1e3, 3.0, 0.5)

    def r(c):
        return mtj_resistance([np.sqrt(max(0.0, 1 - c * c)), 0.0, c], p)

    lo, hi = sorted((c1, c2))
    assert r(hi) <= r(lo) * (1 + 1e-12)
    for c in (c1, c2):
        assert p.resistance_p * (1 - 1e-12) <= r(c) <= p.resistance_ap * (1 + 1e-12)


def test_spin_current_examples(params):
    assert np.array_equal(spin_current([0, 0, 1], 0.0, params), [0.0, 0.0, -0.0]) or \
        np.all(spin_current([0, 0, 1], 0.0, params) == 0)
    p = params.replace(resistance_p=1e4, spin_polarization=0.5)
    assert np.allclose(spin_current([0, 0, 1], 0.1, p), [0, 0, -5e-6], rtol=1e-12, atol=0)
    # larger in P than in AP at the same bias
    assert abs(spin_current([0, 0, 1], 0.1, params)[2]) > abs(spin_current([0, 0, -1], 0.1, params)[2])


def test_llg_rhs_examples(params):
    # m parallel to H and no current: no torque
    m = np.array([0.0, 0.0, 1.0])
    assert np.allclose(llg_rhs(m, BiasPoint(0.3, 0.0), np.zeros(3), params), 0.0, atol=1e-9)
    # m = x, total H = (0, 0, 1e4) A/m: the demag field of m = x is parallel to m and drops out
    p = params.replace(damping_alpha=0.0)
    v_me = 1e4 * MU0 * p.me_thickness / p.me_coefficient
    out = llg_rhs(np.array([1.0, 0.0, 0.0]), BiasPoint(v_me, 0.0), np.zeros(3), p)
    assert np.allclose(out, [0.0, GAMMA * 1e4, 0.0], rtol=1e-12, atol=1e-3)
    assert out[1] == pytest.approx(2.2102e9, rel=1e-4)


def test_llg_rhs_undamped_is_pure_precession(params):
    p = params.replace(damping_alpha=0.0)
    rng = np.random.default_rng(5)
    m = _unit(rng.normal(size=3))
    h_th = rng.normal(size=3) * 1e3
    bias = BiasPoint(0.2, 0.0)
    h = shape_anisotropy_field(m, p) + me_field(bias.v_me, p) + h_th
    assert np.array_equal(llg_rhs(m, bias, h_th, p), -GAMMA * np.cross(m, h))


def test_llg_rhs_orthogonal_bulk(params):
    rng = np.random.default_rng(7)
    m = rng.normal(size=(10_000, 3))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    h_th = rng.normal(size=(10_000, 3)) * thermal_sigma(params, 1e-13)
    for v_me, v_i in rng.uniform(-1, 1, size=(5, 2)):
        out = llg_rhs(m, BiasPoint(v_me, v_i), h_th, params)
        dot = np.abs(np.sum(out * m, axis=1))
        assert np.all(dot <= 1e-12 * np.linalg.norm(out, axis=1) + 1e-300)


@given(vec3, st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 0.99))
def test_llg_rhs_orthogonal_property(m, v_me, v_i, alpha):
    p = DeviceParams(1e6, alpha, 2.197e-25, (0.9, 0.08, 0.02), 300.0, 4e-10, 1e-8, 1e3, 3.0, 0.5)
    m = _unit(m)
    out = llg_rhs(m, BiasPoint(v_me, v_i), np.zeros(3), p)
    assert abs(out @ m) <= 1e-12 * max(np.linalg.norm(out), 1.0)


def test_energy_wells(params):
    e_p = magnetic_energy([0, 0, 1], params, v_me=0.2)
    e_ap = magnetic_energy([0, 0, -1], params, v_me=0.2)
    assert e_p < e_ap  # positive v_me favours P
    e_saddle = magnetic_energy([0, 1, 0], params)
    e_well = magnetic_energy([0, 0, 1], params)
    assert (e_saddle - e_well) / (1.380649e-23 * 300) == pytest.approx(barrier_height(params), rel=1e-12)


def test_conductance_uses_direction_only(params):
    m = np.array([0.3, -0.2, 0.5])
    assert mtj_conductance(m, params) == pytest.approx(mtj_conductance(_unit(m), params), rel=1e-15)
