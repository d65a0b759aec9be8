"""Telegraph-state detection, dwell extraction and lifetime estimates."""

import csv
import warnings
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy import stats


class StateLabel(IntEnum):
    AP = -1
    Transit = 0
    P = 1


@dataclass(frozen=True)
class DwellRecord:
    state: StateLabel
    duration: float
    start_time: float


@dataclass(frozen=True)
class LifetimeEstimate:
    state: StateLabel
    mean: float
    stderr: float
    count: int
    ks_statistic: float
    ks_pvalue: float

    @property
    def relative_error(self):
        return self.stderr / self.mean


class InsufficientDwellsError(ValueError):
    def __init__(self, states):
        self.states = tuple(states)
        names = ", ".join(StateLabel(s).name for s in self.states)
        super().__init__(f"no completed dwells for state(s): {names}")


def detect_states(trajectory, theta_on=0.7):
    """Schmitt-trigger labels, one per sample.

    `trajectory` is a Trajectory or a 1-D array of mz. The label switches to
    P only when mz >= theta_on and to AP only when mz <= -theta_on; it is
    Transit until the first crossing.
    """
    if not 0 < theta_on < 1:
        raise ValueError("theta_on must lie in (0, 1)")
    mz = np.asarray(getattr(trajectory, "mz", trajectory), dtype=float)
    hit = np.zeros(mz.shape, dtype=np.int8)
    hit[mz >= theta_on] = StateLabel.P
    hit[mz <= -theta_on] = StateLabel.AP
    # forward-fill the last threshold hit
    idx = np.where(hit != 0, np.arange(mz.size), -1)
    np.maximum.accumulate(idx, out=idx)
    labels = np.where(idx >= 0, hit[np.maximum(idx, 0)], StateLabel.Transit).astype(np.int8)
    if mz.size and not np.any(labels[1:] != labels[:-1]) and labels[-1] == StateLabel.Transit:
        warnings.warn("no threshold crossing in trajectory", RuntimeWarning, stacklevel=2)
    return labels


def _runs(labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0, labels.dtype)
    edges = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [labels.size]))
    return starts, ends, labels[starts]


def dwell_times(labels, dt_effective, t0=0.0):
    """Completed dwells from a label sequence.

    Transit runs are dropped, then the first and last remaining runs are
    discarded as truncated.
    """
    starts, ends, states = _runs(labels)
    keep = states != StateLabel.Transit
    starts, ends, states = starts[keep], ends[keep], states[keep]
    if starts.size < 3:
        return []
    return [
        DwellRecord(StateLabel(int(s)), (e - b) * dt_effective, t0 + b * dt_effective)
        for b, e, s in zip(starts[1:-1], ends[1:-1], states[1:-1])
    ]


def dwells_from_transitions(times, states):
    """Completed dwells from detector transitions (entry time and new state)."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states)
    if times.size < 3:
        return []
    durations = np.diff(times)[1:]
    return [DwellRecord(StateLabel(int(s)), float(d), float(t))
            for s, d, t in zip(states[1:-1], durations, times[1:-1])]


def dwell_arrays(times, states):
    """(P durations, AP durations) as arrays, same rule as `dwells_from_transitions`."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states)
    if times.size < 3:
        return np.zeros(0), np.zeros(0)
    durations = np.diff(times)[1:]
    inner = states[1:-1]
    return durations[inner == StateLabel.P], durations[inner == StateLabel.AP]


def exponential_ks(samples):
    """KS statistic and p-value against Exp(sample mean)."""
    x = np.asarray(samples, dtype=float)
    res = stats.kstest(x, "expon", args=(0.0, x.mean()))
    return float(res.statistic), float(res.pvalue)


def lifetime_from_durations(state, durations):
    x = np.asarray(durations, dtype=float)
    if x.size == 0:
        raise InsufficientDwellsError([state])
    mean = float(x.mean())
    ks_stat, ks_p = exponential_ks(x) if x.size > 1 else (float("nan"), float("nan"))
    return LifetimeEstimate(StateLabel(state), mean, mean / np.sqrt(x.size), int(x.size), ks_stat, ks_p)


def estimate_lifetimes(dwells):
    """Mean dwell per state. Returns (P estimate, AP estimate).

    The standard error is mean/sqrt(n), the exponential-model value. The
    KS diagnostic is only meaningful for roughly 50 or more dwells.
    """
    by_state = {StateLabel.P: [], StateLabel.AP: []}
    for d in dwells:
        by_state[StateLabel(d.state)].append(d.duration)
    missing = [s for s, v in by_state.items() if not v]
    if missing:
        raise InsufficientDwellsError(missing)
    return (lifetime_from_durations(StateLabel.P, by_state[StateLabel.P]),
            lifetime_from_durations(StateLabel.AP, by_state[StateLabel.AP]))


def firing_rate(tau_p, tau_ap):
    """Dimensionless duty fraction tau_AP / (tau_P + tau_AP).

    Accepts scalars or broadcastable arrays.
    """
    tp, ta = np.asarray(tau_p, dtype=float), np.asarray(tau_ap, dtype=float)
    if np.any(tp < 0) or np.any(ta < 0):
        raise ValueError("lifetimes must be non-negative")
    if np.any((tp == 0) & (ta == 0)):
        raise ValueError("tau_p and tau_ap cannot both be zero")
    rate = ta / (tp + ta)
    return float(rate) if rate.ndim == 0 else rate


def spike_times_from_transitions(times, states):
    """AP-entry instants."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states)
    return times[states == StateLabel.AP]


def write_dwell_csv(dwells, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "start_time_s", "duration_s"])
        for d in dwells:
            w.writerow([StateLabel(d.state).name, repr(float(d.start_time)), repr(float(d.duration))])
    return path


def read_dwell_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(DwellRecord(StateLabel[row["state"]], float(row["duration_s"]),
                                   float(row["start_time_s"])))
    return out


LIFETIME_HEADER = ["v_me", "v_i", "state", "mean_s", "stderr_s", "count", "ks_stat"]


def write_lifetime_summary_csv(rows, path):
    """`rows` are (bias, LifetimeEstimate) pairs."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LIFETIME_HEADER)
        for bias, est in rows:
            w.writerow([repr(float(bias[0])), repr(float(bias[1])), StateLabel(est.state).name,
                        repr(est.mean), repr(est.stderr), est.count, repr(est.ks_statistic)])
    return path


def read_lifetime_summary_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
