"""Fast invariant checks behind ``me-neuron selftest`` (a few seconds)."""

import math
import time

import numpy as np

from .characterization import BasisAngles, LifetimeGrid, basis_transform, inverse_basis_transform, k_factors
from .config import default_config
from .integrator import SimConfig, precession_frequency_check, run_trajectory
from .magnet import BiasPoint, magnetic_energy
from .neuron import Drive, NeuronLUT, generate_spike_train
from .telegraph import StateLabel, detect_states, dwell_times, firing_rate


def _basis_round_trip():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(-np.pi, np.pi, 2)
    if abs(math.sin(b - a)) < 0.1:
        b = a + 1.0
    ang = BasisAngles(a, b)
    v = rng.uniform(-1, 1, (2, 10_000))
    back = inverse_basis_transform(*basis_transform(v, ang), ang)
    return float(np.max(np.abs(np.array(back) - v))) < 1e-12


def _firing_rate_monotone():
    taus = np.linspace(0.1, 10, 50)
    up = [firing_rate(1.0, t) for t in taus]
    down = [firing_rate(t, 1.0) for t in taus]
    return bool(np.all(np.diff(up) > 0) and np.all(np.diff(down) < 0))


def _kfactor_order():
    errs = []
    for h in (0.04, 0.02):
        x = np.arange(-5, 6) * h
        vme, vi = np.meshgrid(x, x, indexing="ij")
        tau = np.exp(-5 * vme + 2 * vi)
        g = LifetimeGrid.from_arrays(x, x, tau, tau, count=10**6)
        k = k_factors(g, (0.0, 0.0))
        errs.append(abs(k.k_ap_me - (-5.0)))
    return 3.0 <= errs[0] / errs[1] <= 5.0


def _lut_nodes():
    v = np.linspace(-0.1, 0.1, 4)
    tp = np.exp(np.add.outer(v, 2 * v)) * 1e-9
    lut = NeuronLUT(v, v, tp, tp[::-1])
    return all(lut.lifetimes(a, b) == (tp[i, j], tp[::-1][i, j])
               for i, a in enumerate(v) for j, b in enumerate(v))


def _hysteresis():
    mz = np.concatenate([np.full(10, 0.9), np.full(5, -0.5), np.full(10, 0.9), np.full(10, -0.9),
                         np.full(10, 0.9)])
    labels = detect_states(mz, 0.7)
    d = dwell_times(labels, 1.0)
    return len(d) == 1 and d[0].state == StateLabel.AP and d[0].duration == 10.0


def _norm_and_energy():
    cfg = default_config()
    p = cfg.device.replace(temperature=0.0)
    m0 = np.array([0.6, 0.3, 0.7])
    m0 /= np.linalg.norm(m0)
    traj = run_trajectory(SimConfig(dt=1e-13, t_max=2e-9, initial_m=tuple(m0), record_stride=10),
                          BiasPoint(0.0, 0.0), p)
    drift = np.max(np.abs(np.linalg.norm(traj.m, axis=1) - 1.0))
    e = magnetic_energy(traj.m, p)
    return drift < 1e-9 and bool(np.all(np.diff(e) <= 1e-12 * abs(e).max()))


def _precession():
    return precession_frequency_check(default_config().device) < 0.01


def _markov_duty():
    v = np.array([-1.0, 1.0])
    lut = NeuronLUT(v, v, np.full((2, 2), 2e-9), np.full((2, 2), 2e-9))
    train = generate_spike_train(lut, Drive.constant(0.0, 0.0), 1e-4, seed=3)
    n = train.transition_times.size
    return abs(train.occupancy() - 0.5) < 3 * 0.5 / math.sqrt(n / 2)


CHECKS = [
    ("basis transform round trip", _basis_round_trip),
    ("firing rate monotone in both lifetimes", _firing_rate_monotone),
    ("k-factor second-order convergence", _kfactor_order),
    ("LUT exact at nodes", _lut_nodes),
    ("Schmitt hysteresis and dwell censoring", _hysteresis),
    ("unit norm and T=0 energy decay", _norm_and_energy),
    ("small-angle precession frequency", _precession),
    ("Markov duty fraction at equal lifetimes", _markov_duty),
]


def run_selftest(verbose=False):
    ok = True
    for name, fn in CHECKS:
        t = time.perf_counter()
        try:
            passed = bool(fn())
            note = ""
        except Exception as exc:  # a crashing check is a failing check
            passed, note = False, f" ({type(exc).__name__}: {exc})"
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}  [{time.perf_counter() - t:.2f} s]{note}")
    return ok
