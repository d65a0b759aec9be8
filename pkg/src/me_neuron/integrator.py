"""Fixed-step stochastic Heun integration of the macrospin LLG equation.

The hot loop is a numba kernel. Thermal noise is drawn in chunks from a
numpy ``Generator`` seeded per trajectory, so results depend only on
(seed, key, config, bias, params) and never on scheduling.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .magnet import GAMMA, Q_E, BiasPoint, DeviceParams, llg_rhs, me_field, thermal_field_sample, thermal_sigma

log = logging.getLogger(__name__)

CHUNK_STEPS = 1 << 16

# |m| may drift this far from 1 within a single step before we call it a blow-up
NORM_TOLERANCE = 0.25

_OK, _BLOWUP = 0, 1


class NumericalInstabilityError(RuntimeError):
    def __init__(self, step, detail=""):
        self.step = int(step)
        msg = f"integration blew up at step {self.step}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-13
    t_max: float = 1e-6
    seed: int = 0
    initial_m: tuple = (0.0, 0.0, 1.0)
    record_stride: int = 1
    stop_after_transitions: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "initial_m", tuple(float(x) for x in self.initial_m))
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.t_max >= self.dt:
            raise ValueError("t_max must be >= dt")
        if abs(np.linalg.norm(self.initial_m) - 1.0) > 1e-9:
            raise ValueError("initial_m must be a unit vector")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")
        if self.stop_after_transitions is not None and int(self.stop_after_transitions) < 1:
            raise ValueError("stop_after_transitions must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def replace(self, **changes):
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return SimConfig(**values)

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt))


@dataclass
class Trajectory:
    """Stored magnetization samples of one seeded run.

    ``transition_times``/``transition_states`` come from the online
    Schmitt detector running at full time resolution; they are ``None`` if
    no detector was attached.
    """

    times: np.ndarray
    m: np.ndarray
    dt_effective: float
    bias: BiasPoint
    seed: int
    n_steps: int
    transition_times: np.ndarray | None = None
    transition_states: np.ndarray | None = None
    stopped_early: bool = False

    @property
    def mz(self):
        return self.m[:, 2]

    @property
    def samples(self):
        return list(zip(self.times, self.m))


@dataclass
class TelegraphRun:
    """Detector output of a run whose samples were not stored."""

    transition_times: np.ndarray
    transition_states: np.ndarray
    t_end: float
    n_steps: int
    bias: BiasPoint
    budget_hit: bool
    counts: dict = field(default_factory=dict)


def make_rng(seed, *key):
    """SFC64 generator for trajectory `key` under master `seed`."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.SFC64(ss))


@numba.njit(cache=True, nogil=True, inline="always")
def _rhs(mx, my, mz, hx, hy, hz, s, g, alpha, c):
    # A = -g m x H + s m x (z x m);  dm/dt = c (A + alpha m x A)
    ax = -g * (my * hz - mz * hy) - s * mz * mx
    ay = -g * (mz * hx - mx * hz) - s * mz * my
    az = -g * (mx * hy - my * hx) + s * (mx * mx + my * my)
    bx = my * az - mz * ay
    by = mz * ax - mx * az
    bz = mx * ay - my * ax
    return c * (ax + alpha * bx), c * (ay + alpha * by), c * (az + alpha * bz)


@numba.njit(cache=True, nogil=True)
def _heun_chunk(m, noise, n_steps, dt, sigma, hk, hme, s_p, s_ap, g, alpha,
                stride, step0, rec, theta, det, trans_step, trans_state, stops, ctr):
    """Advance `m` in place by up to `n_steps` Heun steps.

    hk = (Ms*Nx, Ms*Ny, Ms*Nz). det = [state, n_trans_total, dwells_p,
    dwells_ap]. stops = [min_p, min_ap, max_trans] (0 disables). Writes
    ctr = [steps_done, n_rec, n_trans_chunk, status, fail_step].
    """
    mx, my, mz = m[0], m[1], m[2]
    c = 1.0 / (1.0 + alpha * alpha)
    state = det[0]
    n_rec = 0
    n_tr = 0
    status = 0
    done = 0
    hx_k, hy_k, hz_k = hk[0], hk[1], hk[2]
    for k in range(n_steps):
        step = step0 + k
        tx = sigma * noise[k, 0]
        ty = sigma * noise[k, 1]
        tz = sigma * noise[k, 2] + hme
        s = s_ap + (s_p - s_ap) * 0.5 * (1.0 + mz)
        f1x, f1y, f1z = _rhs(mx, my, mz, tx - hx_k * mx, ty - hy_k * my, tz - hz_k * mz, s, g, alpha, c)
        px = mx + dt * f1x
        py = my + dt * f1y
        pz = mz + dt * f1z
        cz = pz / np.sqrt(px * px + py * py + pz * pz)
        if cz > 1.0:
            cz = 1.0
        elif cz < -1.0:
            cz = -1.0
        s = s_ap + (s_p - s_ap) * 0.5 * (1.0 + cz)
        f2x, f2y, f2z = _rhs(px, py, pz, tx - hx_k * px, ty - hy_k * py, tz - hz_k * pz, s, g, alpha, c)
        nx_ = mx + 0.5 * dt * (f1x + f2x)
        ny_ = my + 0.5 * dt * (f1y + f2y)
        nz_ = mz + 0.5 * dt * (f1z + f2z)
        nrm = np.sqrt(nx_ * nx_ + ny_ * ny_ + nz_ * nz_)
        if not (np.isfinite(nrm) and abs(nrm - 1.0) < 0.25):
            status = 1
            ctr[4] = step
            break
        inv = 1.0 / nrm
        mx = nx_ * inv
        my = ny_ * inv
        mz = nz_ * inv
        done = k + 1
        if stride > 0 and (step + 1) % stride == 0:
            rec[n_rec, 0] = mx
            rec[n_rec, 1] = my
            rec[n_rec, 2] = mz
            n_rec += 1
        if theta > 0.0:
            new = 0
            if state != 1 and mz >= theta:
                new = 1
            elif state != -1 and mz <= -theta:
                new = -1
            if new != 0:
                # the run that just ended counts only if it was not the first one
                if det[1] >= 2:
                    if state == 1:
                        det[2] += 1
                    else:
                        det[3] += 1
                state = new
                det[1] += 1
                trans_step[n_tr] = step + 1
                trans_state[n_tr] = new
                n_tr += 1
                if stops[2] > 0 and det[1] >= stops[2]:
                    break
                if stops[0] > 0 and det[2] >= stops[0] and det[3] >= stops[1]:
                    break
    m[0] = mx
    m[1] = my
    m[2] = mz
    det[0] = state
    ctr[0] = done
    ctr[1] = n_rec
    ctr[2] = n_tr
    ctr[3] = status


def _kernel_constants(bias, params, dt, gamma_scale=1.0):
    ms = params.saturation_magnetization
    hk = ms * np.asarray(params.demag_factors, dtype=float)
    hme = float(me_field(bias.v_me, params)[2])
    qns = Q_E * params.n_spins
    s_p = -params.spin_polarization * bias.v_i / params.resistance_p / qns
    s_ap = -params.spin_polarization * bias.v_i / params.resistance_ap / qns
    sigma = float(thermal_sigma(params, dt))
    return hk, hme, s_p, s_ap, sigma


def _initial_state(mz, theta):
    if theta <= 0:
        return 0
    if mz >= theta:
        return 1
    if mz <= -theta:
        return -1
    return 0


def _integrate(config, bias, params, theta_on, record, min_dwells, rng_key,
               damping=None, temperature_zero=False):
    bias = BiasPoint(*bias)
    dt = config.dt
    n_total = config.n_steps
    alpha = params.damping_alpha if damping is None else float(damping)
    hk, hme, s_p, s_ap, sigma = _kernel_constants(bias, params, dt)
    if temperature_zero:
        sigma = 0.0
    rng = make_rng(config.seed, *rng_key)
    m = np.array(config.initial_m, dtype=float)
    theta = float(theta_on) if theta_on is not None else 0.0

    stride = int(config.record_stride) if record else 0
    stops = np.zeros(3, dtype=np.int64)
    if min_dwells:
        stops[0] = stops[1] = int(min_dwells)
    if config.stop_after_transitions:
        stops[2] = int(config.stop_after_transitions)

    det = np.zeros(4, dtype=np.int64)
    trans_steps, trans_states = [], []
    state0 = _initial_state(m[2], theta)
    if state0 != 0:
        det[0] = state0
        det[1] = 1
        trans_steps.append(np.array([0], dtype=np.int64))
        trans_states.append(np.array([state0], dtype=np.int8))

    recs = [m[None, :].copy()] if record else []
    ctr = np.zeros(5, dtype=np.int64)
    step = 0
    zeros = np.zeros((CHUNK_STEPS, 3)) if sigma == 0.0 else None
    stopped = False
    while step < n_total:
        n = min(CHUNK_STEPS, n_total - step)
        noise = zeros[:n] if zeros is not None else rng.standard_normal((n, 3))
        rec = np.empty((n // stride + 1 if stride else 1, 3))
        t_step = np.empty(n + 1, dtype=np.int64)
        t_state = np.empty(n + 1, dtype=np.int8)
        _heun_chunk(m, noise, n, dt, sigma, hk, hme, s_p, s_ap, GAMMA, alpha,
                    stride, step, rec, theta, det, t_step, t_state, stops, ctr)
        if ctr[3] == _BLOWUP:
            raise NumericalInstabilityError(ctr[4], f"dt={dt:g} s, bias={tuple(bias)}")
        if record and ctr[1]:
            recs.append(rec[: ctr[1]].copy())
        if ctr[2]:
            trans_steps.append(t_step[: ctr[2]].copy())
            trans_states.append(t_state[: ctr[2]].copy())
        step += int(ctr[0])
        if ctr[0] < n:
            stopped = True
            break

    steps = np.concatenate(trans_steps) if trans_steps else np.zeros(0, dtype=np.int64)
    states = np.concatenate(trans_states) if trans_states else np.zeros(0, dtype=np.int8)
    samples = np.concatenate(recs) if record else None
    counts = {"P": int(det[2]), "AP": int(det[3]), "transitions": int(det[1])}
    return samples, steps * dt, states, step, stopped, counts


def heun_step(m, bias, dt, rng, params):
    """One stochastic Heun step (numpy reference path).

    A single thermal-field sample is shared by predictor and corrector; the
    result is renormalized to unit length.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    bias = BiasPoint(*bias)
    m = np.asarray(m, dtype=float)
    h_th = thermal_field_sample(rng, params, dt)
    f1 = llg_rhs(m, bias, h_th, params)
    pred = m + dt * f1
    f2 = llg_rhs(pred, bias, h_th, params)
    out = m + 0.5 * dt * (f1 + f2)
    nrm = np.linalg.norm(out)
    if not np.all(np.isfinite(out)) or abs(nrm - 1.0) >= NORM_TOLERANCE:
        raise NumericalInstabilityError(0, f"non-finite or runaway state {out!r}")
    return out / nrm


def run_trajectory(config, bias, params, theta_on=None, rng_key=()):
    """Integrate one trajectory and keep every `record_stride`-th sample.

    If `theta_on` is given the Schmitt detector runs alongside, its
    transitions are attached to the result, and
    ``config.stop_after_transitions`` can end the run early.
    """
    bias = BiasPoint(*bias)
    samples, t_tr, s_tr, n_done, stopped, _ = _integrate(
        config, bias, params, theta_on, True, None, rng_key)
    dt_eff = config.dt * config.record_stride
    times = np.arange(samples.shape[0]) * dt_eff
    return Trajectory(
        times=times,
        m=samples,
        dt_effective=dt_eff,
        bias=bias,
        seed=int(config.seed),
        n_steps=n_done,
        transition_times=t_tr if theta_on is not None else None,
        transition_states=s_tr if theta_on is not None else None,
        stopped_early=stopped,
    )


def run_telegraph(config, bias, params, theta_on, min_dwells=None, rng_key=()):
    """Run with the detector only, until `min_dwells` completed dwells per state
    (or `config.t_max` of simulated time, which sets ``budget_hit``)."""
    bias = BiasPoint(*bias)
    _, t_tr, s_tr, n_done, stopped, counts = _integrate(
        config, bias, params, theta_on, False, min_dwells, rng_key)
    budget_hit = bool(min_dwells) and not stopped
    return TelegraphRun(t_tr, s_tr, n_done * config.dt, n_done, bias, budget_hit, counts)


def analytic_fmr_frequency(params, damping=None):
    """Small-angle precession frequency about the easy axis, Hz."""
    alpha = params.damping_alpha if damping is None else damping
    nx, ny, nz = params.demag_factors
    g_eff = GAMMA / (1.0 + alpha * alpha)
    return g_eff / (2 * np.pi) * params.saturation_magnetization * np.sqrt((nx - nz) * (ny - nz))


def precession_frequency_check(params, dt=1e-13, damping=0.0, tilt=1e-3, n_periods=40):
    """Relative error of the simulated small-angle precession frequency.

    Runs at T = 0 and zero bias from a `tilt` (rad) offset about the easy
    axis. Damping defaults to zero because a strongly damped well does not
    oscillate at all; pass the device value to include it.
    """
    f_ref = analytic_fmr_frequency(params, damping)
    t_max = n_periods / f_ref
    config = SimConfig(dt=dt, t_max=t_max, seed=0,
                       initial_m=(np.sin(tilt), 0.0, np.cos(tilt)), record_stride=1)
    samples, *_ = _integrate(config, BiasPoint(0.0, 0.0), params, None, True, None, (),
                             damping=damping, temperature_zero=True)
    mx = samples[:, 0]
    t = np.arange(mx.size) * dt
    idx = np.nonzero(np.signbit(mx[:-1]) != np.signbit(mx[1:]))[0]
    if idx.size < 4:
        raise RuntimeError("too few zero crossings to measure a frequency")
    frac = mx[idx] / (mx[idx] - mx[idx + 1])
    t_cross = t[idx] + frac * dt
    half_period = np.polyfit(np.arange(t_cross.size), t_cross, 1)[0]
    f_sim = 1.0 / (2.0 * half_period)
    return abs(f_sim - f_ref) / f_ref


def _millivolts(v):
    return f"{v * 1e3:.3f}"


def trajectory_filename(trajectory):
    b = trajectory.bias
    return f"traj_{trajectory.seed}_{_millivolts(b.v_me)}_{_millivolts(b.v_i)}.csv"


def write_trajectory_csv(trajectory, directory):
    path = Path(directory) / trajectory_filename(trajectory)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "mx", "my", "mz"])
        for t, (x, y, z) in zip(trajectory.times, trajectory.m):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y)), repr(float(z))])
    return path


def read_trajectory_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:4]
