import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from me_neuron.integrator import SimConfig, run_telegraph
from me_neuron.magnet import BiasPoint
from me_neuron.telegraph import (
    DwellRecord,
    InsufficientDwellsError,
    StateLabel,
    detect_states,
    dwell_arrays,
    dwell_times,
    dwells_from_transitions,
    estimate_lifetimes,
    firing_rate,
    lifetime_from_durations,
    read_dwell_csv,
    read_lifetime_summary_csv,
    spike_times_from_transitions,
    write_dwell_csv,
    write_lifetime_summary_csv,
)

P, AP, T = StateLabel.P, StateLabel.AP, StateLabel.Transit


def test_constant_signal_all_p():
    labels = detect_states(np.full(100, 0.9), theta_on=0.7)
    assert np.all(labels == P)


def test_square_wave_edges():
    dt = 1e-9
    t = np.arange(10_000) * dt
    mz = np.where((t // 1e-6) % 2 == 0, 0.9, -0.9)
    labels = detect_states(mz, theta_on=0.7)
    assert np.array_equal(labels, np.where(mz > 0, P, AP))
    edges = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    assert np.allclose(t[edges], np.arange(1, 10) * 1e-6, atol=dt / 2)


def test_subthreshold_dip_keeps_state():
    mz = np.concatenate([np.full(10, 0.9), np.linspace(0.9, -0.5, 20), np.full(10, 0.9)])
    assert np.all(detect_states(mz, theta_on=0.7) == P)


def test_transit_until_first_crossing():
    mz = np.array([0.1, 0.2, 0.8, 0.1, -0.8])
    assert detect_states(mz, 0.7).tolist() == [T, T, P, P, AP]


def test_no_crossing_warns():
    with pytest.warns(RuntimeWarning):
        detect_states(np.zeros(10), 0.7)


def test_bad_threshold():
    with pytest.raises(ValueError):
        detect_states(np.zeros(3), 1.0)


@pytest.mark.filterwarnings("ignore:no threshold crossing")
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=300), st.floats(0.05, 0.95))
def test_detect_states_hysteresis_property(mz, theta):
    mz = np.array(mz)
    labels = detect_states(mz, theta)
    assert labels.size == mz.size
    for i in range(1, mz.size):
        if labels[i] != labels[i - 1]:
            # a label only changes when the new threshold is actually crossed
            assert (labels[i] == P and mz[i] >= theta) or (labels[i] == AP and mz[i] <= -theta)
    seen = labels != T
    assert np.all(seen[np.argmax(seen):]) if seen.any() else True


def test_dwell_times_examples():
    labels = np.array([P] * 100 + [AP] * 50 + [P] * 30)
    recs = dwell_times(labels, 1e-9)
    assert len(recs) == 1
    assert recs[0].state == AP
    assert recs[0].duration == pytest.approx(50e-9)
    assert recs[0].start_time == pytest.approx(100e-9)
    five = np.array([P] * 3 + [AP] * 4 + [P] * 5 + [AP] * 6 + [P] * 7)
    assert [r.duration for r in dwell_times(five, 1.0)] == [4.0, 5.0, 6.0]
    assert dwell_times(np.full(20, P), 1.0) == []


@given(st.lists(st.integers(1, 50), min_size=0, max_size=40))
def test_dwell_times_property(runs):
    labels = np.concatenate([np.full(n, P if k % 2 == 0 else AP) for k, n in enumerate(runs)]) \
        if runs else np.zeros(0, dtype=np.int8)
    recs = dwell_times(labels, 1.0)
    assert len(recs) == max(len(runs) - 2, 0)
    assert all(r.duration > 0 for r in recs)
    assert sum(r.duration for r in recs) <= labels.size
    for a, b in zip(recs, recs[1:]):
        assert a.state != b.state


def test_dwell_times_drop_transit():
    labels = np.array([T, T, P, P, AP, AP, AP, P, P])
    recs = dwell_times(labels, 2.0)
    assert [(r.state, r.duration) for r in recs] == [(AP, 6.0)]


def test_transitions_and_labels_agree():
    times = np.array([0.0, 1.0, 3.0, 6.0, 10.0])
    states = np.array([P, AP, P, AP, P])
    recs = dwells_from_transitions(times, states)
    assert [(r.state, r.duration) for r in recs] == [(AP, 2.0), (P, 3.0), (AP, 4.0)]
    p, ap = dwell_arrays(times, states)
    assert p.tolist() == [3.0] and ap.tolist() == [2.0, 4.0]
    assert spike_times_from_transitions(times, states).tolist() == [1.0, 6.0]


def test_estimate_arithmetic():
    dwells = [DwellRecord(P, d, 0.0) for d in (2e-6, 4e-6, 6e-6)] + [DwellRecord(AP, 1e-6, 0.0)]
    est_p, est_ap = estimate_lifetimes(dwells)
    assert est_p.mean == pytest.approx(4e-6)
    assert est_p.count == 3
    assert est_p.stderr == pytest.approx(4e-6 / np.sqrt(3))
    assert est_ap.count == 1


def test_estimate_missing_state():
    with pytest.raises(InsufficientDwellsError) as err:
        estimate_lifetimes([DwellRecord(P, 1.0, 0.0)])
    assert err.value.states == (AP,)


def test_exponential_samples():
    x = np.random.default_rng(3).exponential(10e-9, 10_000)
    est = lifetime_from_durations(P, x)
    assert abs(est.mean - 10e-9) < 3 * est.stderr
    assert est.ks_pvalue > 0.01


@given(st.lists(st.floats(1e-12, 1e-6), min_size=2, max_size=50))
def test_estimate_positive(xs):
    est = lifetime_from_durations(AP, xs)
    assert est.mean > 0 and est.stderr >= 0 and est.count == len(xs)


def test_firing_rate_examples():
    assert firing_rate(1.0, 1.0) == 0.5
    assert firing_rate(1.0, 0.0) == 0.0
    assert firing_rate(1e-6, 3e-6) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        firing_rate(0.0, 0.0)
    with pytest.raises(ValueError):
        firing_rate(-1.0, 1.0)


@given(st.floats(1e-12, 1e-3), st.floats(1e-12, 1e-3), st.floats(1.01, 10))
def test_firing_rate_monotone(tp, tap, f):
    r = firing_rate(tp, tap)
    assert 0 <= r <= 1
    assert firing_rate(tp, tap * f) >= r
    assert firing_rate(tp * f, tap) <= r


def test_zero_bias_lifetimes_equal(params):
    config = SimConfig(dt=1e-13, t_max=2e-6, seed=2024)
    run = run_telegraph(config, BiasPoint(0.0, 0.0), params, 0.6, min_dwells=200)
    est_p, est_ap = estimate_lifetimes(dwells_from_transitions(run.transition_times, run.transition_states))
    combined = np.hypot(est_p.stderr, est_ap.stderr)
    assert abs(est_p.mean - est_ap.mean) < 3 * combined
    # dwells of a thermally activated switch are exponential
    assert stats.kstest(dwell_arrays(run.transition_times, run.transition_states)[0], "expon",
                        args=(0, est_p.mean)).pvalue > 0.001


def test_csv_roundtrips(tmp_path):
    dwells = [DwellRecord(P, 1.5e-9, 0.1e-9), DwellRecord(AP, 2.25e-9, 1.6e-9)]
    path = write_dwell_csv(dwells, tmp_path / "d.csv")
    assert read_dwell_csv(path) == dwells
    est = lifetime_from_durations(P, [1e-9, 2e-9, 3e-9])
    path = write_lifetime_summary_csv([((0.1, -0.2), est)], tmp_path / "l.csv")
    rows = read_lifetime_summary_csv(path)
    assert rows[0]["state"] == "P" and float(rows[0]["mean_s"]) == est.mean


def test_firing_rate_array():
    tp = np.array([1e-9, 2e-9, 0.0])
    ta = np.array([1e-9, 1e-9, 3e-9])
    np.testing.assert_allclose(firing_rate(tp, ta), [0.5, 1 / 3, 1.0])
    with pytest.raises(ValueError):
        firing_rate(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
