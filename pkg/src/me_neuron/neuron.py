"""Two-state Markov neuron driven through a lifetime lookup table.

The full LLG model is replaced by a telegraph process whose per-step escape
probability from state s is 1 - exp(-dt/tau_s(V1, V2)). Dwell lengths in
steps are then geometric, so they are drawn directly instead of stepping.
"""

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.interpolate import RegularGridInterpolator

from .characterization import AxisKind, basis_transform
from .integrator import make_rng, run_telegraph
from .magnet import BiasPoint
from .telegraph import StateLabel, dwell_arrays


class DomainError(ValueError):
    """A drive value left the lookup-table domain."""

    def __init__(self, v1, v2, domain, time=None):
        self.v1, self.v2, self.time = float(v1), float(v2), time
        where = "" if time is None else f" at t = {time!r} s"
        super().__init__(f"drive (V1, V2) = ({v1!r}, {v2!r}){where} is outside the LUT domain {domain}")


@dataclass(frozen=True, eq=False)
class NeuronLUT:
    """Bilinear interpolation of log tau_P and log tau_AP over a (V1, V2) grid."""

    v1: np.ndarray
    v2: np.ndarray
    tau_p: np.ndarray
    tau_ap: np.ndarray
    angles: object = None

    def __post_init__(self):
        for name in ("v1", "v2", "tau_p", "tau_ap"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.tau_p.shape != (self.v1.size, self.v2.size) or self.tau_ap.shape != self.tau_p.shape:
            raise ValueError("lifetime tables do not match the axes")
        if not (np.all(self.tau_p > 0) and np.all(self.tau_ap > 0)):
            raise ValueError("lifetimes must be positive and finite")
        # a single node along an axis is a degenerate but valid domain
        axes = tuple(ax if ax.size > 1 else np.array([ax[0], ax[0] + 1.0]) for ax in (self.v1, self.v2))
        tables = []
        for tau in (self.tau_p, self.tau_ap):
            t = np.log(tau)
            if self.v1.size == 1:
                t = np.repeat(t, 2, axis=0)
            if self.v2.size == 1:
                t = np.repeat(t, 2, axis=1)
            tables.append(RegularGridInterpolator(axes, t, method="linear", bounds_error=False))
        object.__setattr__(self, "_interp", tuple(tables))

    @property
    def domain(self):
        return (float(self.v1[0]), float(self.v1[-1])), (float(self.v2[0]), float(self.v2[-1]))

    def contains(self, v1, v2):
        (a0, a1), (b0, b1) = self.domain
        return a0 <= v1 <= a1 and b0 <= v2 <= b1

    def lifetimes(self, v1, v2):
        """(tau_P, tau_AP) at one drive point; exact stored values at nodes."""
        if not (np.isfinite(v1) and np.isfinite(v2) and self.contains(v1, v2)):
            raise DomainError(v1, v2, self.domain)
        i = np.flatnonzero(self.v1 == v1)
        j = np.flatnonzero(self.v2 == v2)
        if i.size and j.size:
            return float(self.tau_p[i[0], j[0]]), float(self.tau_ap[i[0], j[0]])
        pt = np.array([[v1, v2]])
        return (float(np.exp(self._interp[0](pt)[0])), float(np.exp(self._interp[1](pt)[0])))


def build_lut(grid, domain=None):
    """LUT from a V1_V2 lifetime grid.

    `domain` ((v1_lo, v1_hi), (v2_lo, v2_hi)) restricts the table to the
    nodes inside it; every cell there must be valid.
    """
    if grid.axis_kind != AxisKind.V1_V2:
        raise ValueError("build_lut needs a grid on (V1, V2) axes")
    i_sel = np.arange(grid.shape[0])
    j_sel = np.arange(grid.shape[1])
    if domain is not None:
        (a0, a1), (b0, b1) = domain
        i_sel = np.flatnonzero((grid.axis1_values >= a0) & (grid.axis1_values <= a1))
        j_sel = np.flatnonzero((grid.axis2_values >= b0) & (grid.axis2_values <= b1))
        if i_sel.size == 0 or j_sel.size == 0:
            raise ValueError("requested domain contains no grid nodes")
    bad = [(float(grid.axis1_values[i]), float(grid.axis2_values[j]))
           for i in i_sel for j in j_sel if not grid.cells[i][j].valid]
    if bad:
        raise ValueError(f"grid has failed cells inside the LUT domain: {bad}")
    sub = np.ix_(i_sel, j_sel)
    return NeuronLUT(grid.axis1_values[i_sel], grid.axis2_values[j_sel],
                     grid.means(StateLabel.P)[sub], grid.means(StateLabel.AP)[sub], grid.angles)


@dataclass(frozen=True, eq=False)
class Drive:
    """Piecewise-constant (V1, V2) schedule; row k holds from t_start[k] on."""

    t_start: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        for name in ("t_start", "v1", "v2"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.t_start.size == self.v1.size == self.v2.size) or self.t_start.size == 0:
            raise ValueError("drive columns must be non-empty and of equal length")
        if self.t_start[0] != 0.0:
            raise ValueError("the first drive segment must start at t = 0")
        if np.any(np.diff(self.t_start) <= 0):
            raise ValueError("drive segment start times must be strictly increasing")

    @classmethod
    def constant(cls, v1, v2):
        return cls([0.0], [v1], [v2])

    def segments(self, duration):
        """(t0, t1, v1, v2) for the segments overlapping [0, duration)."""
        ends = np.append(self.t_start[1:], np.inf)
        for t0, t1, a, b in zip(self.t_start, ends, self.v1, self.v2):
            if t0 >= duration:
                break
            yield float(t0), float(min(t1, duration)), float(a), float(b)


def read_drive_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty drive schedule")
    try:
        return Drive([float(r["t_start_s"]) for r in rows], [float(r["v1"]) for r in rows],
                     [float(r["v2"]) for r in rows])
    except KeyError as exc:
        raise ValueError(f"{path}: missing column {exc.args[0]}") from None


def write_drive_csv(drive, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_start_s", "v1", "v2"])
        for row in zip(drive.t_start, drive.v1, drive.v2):
            w.writerow([repr(float(x)) for x in row])
    return path


@dataclass(eq=False)
class SpikeTrain:
    """Output of the Markov neuron.

    ``transition_times[k]`` is when the state became ``transition_states[k]``;
    entry 0 is the initial state at t = 0. Spikes are the AP entries after
    t = 0.
    """

    spike_times: np.ndarray
    transition_times: np.ndarray
    transition_states: np.ndarray
    duration: float

    @property
    def state_waveform(self):
        return [(float(t), StateLabel(int(s))) for t, s in zip(self.transition_times, self.transition_states)]

    def dwells(self):
        """Completed (P, AP) dwell durations; the first and last runs are censored."""
        return dwell_arrays(self.transition_times, self.transition_states)

    def occupancy(self, state=StateLabel.AP):
        """Fraction of [0, duration] spent in `state`."""
        ends = np.append(self.transition_times[1:], self.duration)
        spans = ends - self.transition_times
        return float(spans[self.transition_states == state].sum() / self.duration)

    def state_at(self, times):
        idx = np.searchsorted(self.transition_times, np.asarray(times, dtype=float), side="right") - 1
        return self.transition_states[idx]

    def binary_pattern(self, t0, bin_width, n_bins):
        """1 where the neuron is in AP at the centre of each bin, else 0."""
        centres = t0 + (np.arange(n_bins) + 0.5) * bin_width
        return (self.state_at(centres) == StateLabel.AP).astype(np.int8)


def _escape_probability(dt, tau):
    return -math.expm1(-dt / tau)


def generate_spike_train(lut, drive, duration, seed, dt_markov=1e-12, initial_state=None,
                         rng_key=()):
    """Simulate the inhomogeneous two-state chain on a dt_markov lattice.

    The initial state is drawn from the stationary distribution of the first
    segment unless given. Transition times are multiples of dt_markov.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not dt_markov > 0:
        raise ValueError("dt_markov must be positive")
    segs = []
    for t0, t1, a, b in drive.segments(duration):
        if not (np.isfinite(a) and np.isfinite(b) and lut.contains(a, b)):
            raise DomainError(a, b, lut.domain, time=t0)
        segs.append((t0, t1, lut.lifetimes(a, b)))
    tau_min = min(min(taus) for *_, taus in segs)
    if dt_markov > tau_min / 20:
        raise ValueError(f"dt_markov = {dt_markov!r} s exceeds min lifetime / 20 = {tau_min / 20!r} s")

    rng = make_rng(seed, *rng_key)
    n_total = int(math.floor(duration / dt_markov))
    tau_p0, tau_ap0 = segs[0][2]
    if initial_state is None:
        state = StateLabel.AP if rng.random() < tau_ap0 / (tau_p0 + tau_ap0) else StateLabel.P
    else:
        state = StateLabel(initial_state)
        if state == StateLabel.Transit:
            raise ValueError("initial_state must be P or AP")

    steps = [np.zeros(1, dtype=np.int64)]
    states = [np.array([state], dtype=np.int8)]
    k = 0
    for t0, t1, (tau_p, tau_ap) in segs:
        k_end = min(int(math.ceil(t1 / dt_markov)), n_total)
        if k_end <= k:
            continue
        p_of = {StateLabel.P: _escape_probability(dt_markov, tau_p),
                StateLabel.AP: _escape_probability(dt_markov, tau_ap)}
        pair_mean = 1.0 / p_of[StateLabel.P] + 1.0 / p_of[StateLabel.AP]
        while True:
            m = int(1.2 * (k_end - k) / pair_mean) + 8
            other = StateLabel(-state)
            d = np.empty(2 * m, dtype=np.int64)
            d[0::2] = rng.geometric(p_of[state], m)
            d[1::2] = rng.geometric(p_of[other], m)
            at = k + np.cumsum(d)
            n_in = int(np.searchsorted(at, k_end, side="left"))
            if n_in:
                new_states = np.empty(n_in, dtype=np.int8)
                new_states[0::2] = other
                new_states[1::2] = state
                steps.append(at[:n_in])
                states.append(new_states)
                k = int(at[n_in - 1])
                if n_in % 2:
                    state = other
            if n_in < 2 * m:
                # the pending dwell is cut by the segment end; memorylessness lets us redraw
                k = k_end
                break
    t_steps = np.concatenate(steps)
    t_states = np.concatenate(states)
    times = t_steps * dt_markov
    spikes = times[1:][t_states[1:] == StateLabel.AP]
    return SpikeTrain(spikes, times, t_states, float(duration))


def write_spike_csv(train, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["spike_time_s"])
        for t in train.spike_times:
            w.writerow([repr(float(t))])
    return path


def write_state_csv(train, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "state"])
        for t, s in zip(train.transition_times, train.transition_states):
            w.writerow([repr(float(t)), StateLabel(int(s)).name])
    return path


def read_spike_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1)
    return np.atleast_1d(data)


# -- oracle comparison with the LLG model --------------------------------------

@dataclass(frozen=True)
class StateComparison:
    state: StateLabel
    llg_mean: float
    llg_stderr: float
    llg_count: int
    markov_mean: float
    markov_count: int
    ks_statistic: float
    ks_pvalue: float

    @property
    def ratio(self):
        return self.markov_mean / self.llg_mean


@dataclass(frozen=True)
class ValidationPoint:
    bias: BiasPoint
    v1: float
    v2: float
    p: StateComparison
    ap: StateComparison
    llg_seconds_per_sim_second: float
    markov_seconds_per_sim_second: float


@dataclass(frozen=True)
class ValidationReport:
    points: tuple

    def passed(self, mean_tol=0.10, p_min=0.01):
        return all(abs(c.ratio - 1.0) <= mean_tol and c.ks_pvalue > p_min
                   for pt in self.points for c in (pt.p, pt.ap))

    @property
    def speedup(self):
        """Ratio of LLG to Markov wall time per simulated second (median over points)."""
        r = [pt.llg_seconds_per_sim_second / pt.markov_seconds_per_sim_second for pt in self.points]
        return float(np.median(r))

    def text(self):
        lines = ["v_me,v_i,v1,v2,state,llg_mean_s,llg_count,markov_mean_s,markov_count,ratio,ks_stat,ks_p"]
        for pt in self.points:
            for c in (pt.p, pt.ap):
                lines.append(",".join(str(x) for x in (
                    pt.bias.v_me, pt.bias.v_i, pt.v1, pt.v2, c.state.name, c.llg_mean, c.llg_count,
                    c.markov_mean, c.markov_count, c.ratio, c.ks_statistic, c.ks_pvalue)))
        lines.append(f"# speedup {self.speedup:.4g}")
        return "\n".join(lines) + "\n"


def markov_dwells(lut, v1, v2, n_dwells, seed, dt_markov=1e-12, rng_key=()):
    """At least `n_dwells` completed dwells per state at a constant drive.
    Returns (P dwells, AP dwells, train, wall seconds)."""
    tau_p, tau_ap = lut.lifetimes(v1, v2)
    duration = 1.2 * (n_dwells + 2) * (tau_p + tau_ap)
    drive = Drive.constant(v1, v2)
    while True:
        t = time.perf_counter()
        train = generate_spike_train(lut, drive, duration, seed, dt_markov, rng_key=rng_key)
        wall = time.perf_counter() - t
        p, ap = train.dwells()
        if min(p.size, ap.size) >= n_dwells:
            return p, ap, train, wall
        duration *= 1.5


def validate_against_llg(bias_points, params, sim_config, lut, theta_on=0.6, n_dwells=500,
                         n_mean=None, seed=0, dt_markov=1e-12, max_sim_time=2e-5):
    """Compare LLG and Markov dwell statistics at physical bias points.

    Both models produce at least `n_mean` dwells per state (default
    `n_dwells`); the means use all of them and the two-sample KS test the
    first `n_dwells` of each. The LUT's basis angles map bias to drive.
    """
    if lut.angles is None:
        raise ValueError("the LUT carries no basis angles to map bias points")
    n_mean = max(n_mean or n_dwells, n_dwells)
    points = []
    for k, bias in enumerate(bias_points):
        bias = BiasPoint(*bias)
        v1, v2 = (float(x) for x in basis_transform(bias, lut.angles))
        cfg = sim_config.replace(t_max=max_sim_time, stop_after_transitions=None)
        t = time.perf_counter()
        run = run_telegraph(cfg, bias, params, theta_on, min_dwells=n_mean, rng_key=(k,))
        llg_wall = time.perf_counter() - t
        llg_p, llg_ap = dwell_arrays(run.transition_times, run.transition_states)
        mk_p, mk_ap, train, mk_wall = markov_dwells(lut, v1, v2, n_mean, seed, dt_markov, rng_key=(k,))
        comps = []
        for state, a, b in ((StateLabel.P, llg_p, mk_p), (StateLabel.AP, llg_ap, mk_ap)):
            if a.size == 0:
                comps.append(StateComparison(state, math.nan, math.nan, 0, float(b.mean()), b.size,
                                             math.nan, 0.0))
                continue
            ks = stats.ks_2samp(a[:n_dwells], b[:n_dwells])
            comps.append(StateComparison(state, float(a.mean()), float(a.mean() / math.sqrt(a.size)),
                                         int(a.size), float(b.mean()), int(b.size),
                                         float(ks.statistic), float(ks.pvalue)))
        points.append(ValidationPoint(bias, v1, v2, comps[0], comps[1],
                                      llg_wall / run.t_end, mk_wall / train.duration))
    return ValidationReport(tuple(points))
