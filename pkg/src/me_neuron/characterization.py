"""Bias-plane lifetime sweeps, sensitivity (k-factor) analysis and the
(V_ME, V_I) -> (V1, V2) basis change that decouples the two lifetimes."""

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .integrator import NumericalInstabilityError, run_telegraph
from .magnet import BiasPoint
from .telegraph import LifetimeEstimate, StateLabel, dwell_arrays, lifetime_from_durations

THREADS_ENV = "ME_NEURON_THREADS"

# |sin(beta - alpha)| below this is treated as a rank-1 basis
SINGULAR_SIN = 1e-3


class AxisKind(str, Enum):
    ME_I = "ME_I"
    V1_V2 = "V1_V2"


class SingularBasisError(ValueError):
    pass


class FitQualityError(ValueError):
    """A planar log-lifetime fit fell below the required R^2."""


@dataclass
class GridCell:
    bias: BiasPoint
    tau_p: LifetimeEstimate | None = None
    tau_ap: LifetimeEstimate | None = None
    flags: tuple = ()
    sim_time: float = 0.0

    @property
    def valid(self):
        return self.tau_p is not None and self.tau_ap is not None

    def estimate(self, state):
        return self.tau_p if StateLabel(state) == StateLabel.P else self.tau_ap


@dataclass
class LifetimeGrid:
    """Lifetimes on a rectilinear voltage grid; ``cells[i][j]`` sits at
    (axis1_values[i], axis2_values[j])."""

    axis1_values: np.ndarray
    axis2_values: np.ndarray
    axis_kind: AxisKind
    cells: list
    master_seed: int | None = None
    min_dwells: int | None = None
    angles: "BasisAngles | None" = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis1_values = np.asarray(self.axis1_values, dtype=float)
        self.axis2_values = np.asarray(self.axis2_values, dtype=float)
        self.axis_kind = AxisKind(self.axis_kind)
        for ax in (self.axis1_values, self.axis2_values):
            if ax.ndim != 1 or ax.size == 0:
                raise ValueError("grid axes must be non-empty 1-D sequences")
            if np.any(np.diff(ax) <= 0):
                raise ValueError("grid axes must be strictly increasing")
        if len(self.cells) != self.axis1_values.size or any(
                len(row) != self.axis2_values.size for row in self.cells):
            raise ValueError("cell matrix does not match the axes")

    @property
    def shape(self):
        return self.axis1_values.size, self.axis2_values.size

    def _field(self, state, attr):
        out = np.full(self.shape, np.nan)
        for i, row in enumerate(self.cells):
            for j, cell in enumerate(row):
                est = cell.estimate(state)
                if est is not None:
                    out[i, j] = getattr(est, attr)
        return out

    def means(self, state):
        return self._field(state, "mean")

    def stderrs(self, state):
        return self._field(state, "stderr")

    def counts(self, state):
        return self._field(state, "count")

    @property
    def valid_mask(self):
        return np.array([[c.valid for c in row] for row in self.cells], dtype=bool)

    def index_of(self, a, b):
        i = np.flatnonzero(np.isclose(self.axis1_values, a, rtol=0, atol=1e-12))
        j = np.flatnonzero(np.isclose(self.axis2_values, b, rtol=0, atol=1e-12))
        if i.size != 1 or j.size != 1:
            raise ValueError(f"({a}, {b}) is not a grid node")
        return int(i[0]), int(j[0])

    @classmethod
    def from_arrays(cls, axis1, axis2, tau_p, tau_ap, stderr_p=None, stderr_ap=None,
                    count=1000, axis_kind=AxisKind.ME_I):
        """Grid from mean-lifetime arrays (synthetic fields, CSV round trips)."""
        tau_p = np.asarray(tau_p, dtype=float)
        tau_ap = np.asarray(tau_ap, dtype=float)
        count = np.broadcast_to(np.asarray(count), tau_p.shape)
        if stderr_p is None:
            stderr_p = tau_p / np.sqrt(count)
        if stderr_ap is None:
            stderr_ap = tau_ap / np.sqrt(count)
        stderr_p = np.broadcast_to(stderr_p, tau_p.shape)
        stderr_ap = np.broadcast_to(stderr_ap, tau_p.shape)
        nan = float("nan")
        cells = []
        for i, a in enumerate(axis1):
            row = []
            for j, b in enumerate(axis2):
                p = ap = None
                if np.isfinite(tau_p[i, j]):
                    p = LifetimeEstimate(StateLabel.P, float(tau_p[i, j]), float(stderr_p[i, j]),
                                         int(count[i, j]), nan, nan)
                if np.isfinite(tau_ap[i, j]):
                    ap = LifetimeEstimate(StateLabel.AP, float(tau_ap[i, j]), float(stderr_ap[i, j]),
                                          int(count[i, j]), nan, nan)
                row.append(GridCell(BiasPoint(float(a), float(b)), p, ap))
            cells.append(row)
        return cls(axis1, axis2, axis_kind, cells)


def resolve_threads(threads=None):
    """Worker count: explicit value, else $ME_NEURON_THREADS, else all cores.
    Zero also means all cores."""
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        threads = int(env) if env else 0
    threads = int(threads)
    if threads < 0:
        raise ValueError("thread count must be >= 0")
    return threads or (os.cpu_count() or 1)


def _in_window(bias, window):
    if window is None:
        return True
    (lo_me, hi_me), (lo_i, hi_i) = window
    eps = 1e-12
    return lo_me - eps <= bias.v_me <= hi_me + eps and lo_i - eps <= bias.v_i <= hi_i + eps


def simulate_cell(bias, params, sim_config, theta_on, min_dwells, max_sim_time, rng_key):
    """Lifetimes at one bias point; failures are recorded as flags."""
    config = sim_config.replace(t_max=max_sim_time, stop_after_transitions=None)
    try:
        run = run_telegraph(config, bias, params, theta_on, min_dwells=min_dwells, rng_key=rng_key)
    except NumericalInstabilityError as exc:
        return GridCell(bias, flags=(f"blowup@{exc.step}",))
    p, ap = dwell_arrays(run.transition_times, run.transition_states)
    flags = []
    if run.budget_hit:
        flags.append("budget")
    est = {}
    for state, x in ((StateLabel.P, p), (StateLabel.AP, ap)):
        if x.size == 0:
            flags.append(f"no_{state.name}")
            est[state] = None
        else:
            est[state] = lifetime_from_durations(state, x)
    return GridCell(bias, est[StateLabel.P], est[StateLabel.AP], tuple(flags), run.t_end)


def _run_cells(jobs, params, sim_config, theta_on, min_dwells, max_sim_time, threads, progress):
    """`jobs` are (i, j, bias) triples; results come back keyed by (i, j)."""
    def work(job):
        i, j, bias = job
        return (i, j), simulate_cell(bias, params, sim_config, theta_on, min_dwells,
                                     max_sim_time, (i, j))

    results = {}
    n = resolve_threads(threads)
    if n == 1:
        it = map(work, jobs)
        for done, (key, cell) in enumerate(it, 1):
            results[key] = cell
            if progress:
                progress(done, len(jobs), cell)
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            for done, (key, cell) in enumerate(pool.map(work, jobs), 1):
                results[key] = cell
                if progress:
                    progress(done, len(jobs), cell)
    return results


def sweep_grid(v_me_values, v_i_values, params, sim_config, min_dwells=200, theta_on=0.6,
               max_sim_time=2e-5, window=None, threads=None, progress=None):
    """Lifetime grid over (v_me, v_i).

    Cell (i, j) uses the random stream keyed (i, j) under ``sim_config.seed``,
    so results do not depend on thread count or completion order. A cell
    stops after `min_dwells` completed dwells per state or `max_sim_time`
    of simulated time, whichever comes first.
    """
    v_me_values = np.asarray(v_me_values, dtype=float)
    v_i_values = np.asarray(v_i_values, dtype=float)
    jobs = []
    for i, a in enumerate(v_me_values):
        for j, b in enumerate(v_i_values):
            bias = BiasPoint(float(a), float(b))
            if not _in_window(bias, window):
                raise ValueError(f"bias {tuple(bias)} lies outside the operating window {window}")
            jobs.append((i, j, bias))
    results = _run_cells(jobs, params, sim_config, theta_on, min_dwells, max_sim_time, threads, progress)
    cells = [[results[(i, j)] for j in range(v_i_values.size)] for i in range(v_me_values.size)]
    return LifetimeGrid(v_me_values, v_i_values, AxisKind.ME_I, cells, int(sim_config.seed),
                        int(min_dwells))


# -- sensitivity --------------------------------------------------------------

@dataclass(frozen=True)
class KFactors:
    """Partial derivatives of the mean lifetimes, s/V.

    On a V1_V2 grid the ``_me``/``_i`` suffixes refer to the first and second
    grid axis.
    """

    k_ap_me: float
    k_ap_i: float
    k_p_me: float
    k_p_i: float
    err_ap_me: float = 0.0
    err_ap_i: float = 0.0
    err_p_me: float = 0.0
    err_p_i: float = 0.0

    def as_tuple(self):
        return self.k_ap_me, self.k_ap_i, self.k_p_me, self.k_p_i


def _three_point_weights(x_minus, x0, x_plus):
    """Weights of the second-order first-derivative stencil on uneven spacing."""
    h1 = x0 - x_minus
    h2 = x_plus - x0
    return (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))


def k_factors(grid, at):
    """Central-difference k-factors at the interior node `at`."""
    at = tuple(at)
    i, j = grid.index_of(*at)
    n1, n2 = grid.shape
    if not (0 < i < n1 - 1 and 0 < j < n2 - 1):
        raise ValueError(f"{at} is a boundary node; k-factors need both neighbours on each axis")
    out = {}
    for state, tag in ((StateLabel.AP, "ap"), (StateLabel.P, "p")):
        mu = grid.means(state)
        se = grid.stderrs(state)
        for axis, suffix in ((0, "me"), (1, "i")):
            if axis == 0:
                x = grid.axis1_values[i - 1:i + 2]
                idx = [(i - 1, j), (i, j), (i + 1, j)]
            else:
                x = grid.axis2_values[j - 1:j + 2]
                idx = [(i, j - 1), (i, j), (i, j + 1)]
            w = np.array(_three_point_weights(*x))
            vals = np.array([mu[k] for k in idx])
            errs = np.array([se[k] for k in idx])
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"stencil around {at} contains invalid cells")
            out[f"k_{tag}_{suffix}"] = float(w @ vals)
            out[f"err_{tag}_{suffix}"] = float(np.sqrt(np.sum((w * errs) ** 2)))
    return KFactors(**out)


@dataclass(frozen=True)
class IndependenceRatios:
    ap_me_over_ap_i: float
    p_i_over_p_me: float
    ap_me_over_p_me: float
    p_i_over_ap_i: float

    @property
    def values(self):
        return (self.ap_me_over_ap_i, self.p_i_over_p_me, self.ap_me_over_p_me, self.p_i_over_ap_i)

    @property
    def infinite(self):
        return tuple(math.isinf(v) for v in self.values)

    def satisfied(self, threshold=5.0):
        return tuple(v > threshold for v in self.values)


def _abs_ratio(num, den):
    if den == 0:
        return math.inf
    return abs(num / den)


def independence_ratios(k):
    """The two self-dominance ratios and the two cross-state ratios.
    A zero denominator gives +inf, flagged through ``.infinite``."""
    return IndependenceRatios(
        _abs_ratio(k.k_ap_me, k.k_ap_i),
        _abs_ratio(k.k_p_i, k.k_p_me),
        _abs_ratio(k.k_ap_me, k.k_p_me),
        _abs_ratio(k.k_p_i, k.k_ap_i),
    )


def predict_delta_tau(k, dv_me, dv_i):
    """First-order lifetime changes (dtau_ap, dtau_p) for a bias displacement."""
    return (k.k_ap_me * dv_me + k.k_ap_i * dv_i,
            k.k_p_me * dv_me + k.k_p_i * dv_i)


def predict_delta_tau_stderr(k, dv_me, dv_i):
    """Standard errors of `predict_delta_tau`, treating the k-factors as independent."""
    return (math.hypot(k.err_ap_me * dv_me, k.err_ap_i * dv_i),
            math.hypot(k.err_p_me * dv_me, k.err_p_i * dv_i))


# -- planar fits and the basis change -----------------------------------------

@dataclass(frozen=True)
class PlaneFit:
    """log tau = intercept + gradient . (a, b)."""

    intercept: float
    gradient: np.ndarray
    covariance: np.ndarray
    r2: float
    n: int

    @property
    def angle(self):
        return math.atan2(self.gradient[1], self.gradient[0])

    @property
    def angle_stderr(self):
        g1, g2 = self.gradient
        r2 = g1 * g1 + g2 * g2
        jac = np.array([-g2 / r2, g1 / r2])
        return float(np.sqrt(jac @ self.covariance @ jac))


def fit_log_plane(grid, state, physical=False):
    """Inverse-variance weighted affine fit of log tau over the valid cells.

    With `physical` the regressors are each cell's (v_me, v_i) bias instead
    of the grid axes; for an ME_I grid the two coincide.
    """
    mu = grid.means(state)
    se = grid.stderrs(state)
    if physical:
        a = np.array([[c.bias.v_me for c in row] for row in grid.cells], dtype=float)
        b = np.array([[c.bias.v_i for c in row] for row in grid.cells], dtype=float)
    else:
        a, b = np.meshgrid(grid.axis1_values, grid.axis2_values, indexing="ij")
    ok = np.isfinite(mu) & np.isfinite(se) & (mu > 0) & (se > 0)
    if ok.sum() < 4:
        raise ValueError("need at least 4 valid cells for a planar fit")
    y = np.log(mu[ok])
    # var(log tau) ~ (stderr/mean)^2
    w = (mu[ok] / se[ok]) ** 2
    X = np.column_stack([np.ones(y.size), a[ok], b[ok]])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = y - X @ coef
    ybar = np.average(y, weights=w)
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    # covariance from the known variances, inflated by the reduced chi^2 when the plane misfits
    dof = max(y.size - 3, 1)
    scale = max(ss_res / dof, 1.0)
    cov = np.linalg.inv(X.T @ (w[:, None] * X)) * scale
    return PlaneFit(float(coef[0]), coef[1:].copy(), cov[1:, 1:].copy(), r2, int(y.size))


def _canonical(angle):
    """Map an undirected line angle into (-pi/2, pi/2]."""
    a = math.remainder(angle, math.pi)
    return math.pi / 2 if a == -math.pi / 2 else a


def _snap(x):
    # make axis-aligned angles give exact 0 and +-1 so identity bases are exact
    if abs(x) < 1e-15:
        return 0.0
    if abs(abs(x) - 1.0) < 1e-15:
        return math.copysign(1.0, x)
    return x


@dataclass(frozen=True)
class BasisAngles:
    """Rows (cos a, sin a) and (cos b, sin b) of the (V_ME, V_I) -> (V1, V2) map.

    `alpha_basis` is the direction of steepest change of log tau_AP in the
    bias plane (the normal of its contour lines) and `beta_basis` that of
    log tau_P, so V1 alone moves tau_AP and V2 alone moves tau_P. The contour
    line directions themselves are `contour_alpha` and `contour_beta`.
    """

    alpha_basis: float
    beta_basis: float
    r2_ap: float = float("nan")
    r2_p: float = float("nan")
    alpha_stderr: float = float("nan")
    beta_stderr: float = float("nan")

    @classmethod
    def identity(cls):
        return cls(0.0, math.pi / 2)

    @property
    def contour_alpha(self):
        return _canonical(self.alpha_basis + math.pi / 2)

    @property
    def contour_beta(self):
        return _canonical(self.beta_basis + math.pi / 2)

    @property
    def matrix(self):
        a, b = self.alpha_basis, self.beta_basis
        return np.array([[_snap(math.cos(a)), _snap(math.sin(a))],
                         [_snap(math.cos(b)), _snap(math.sin(b))]])

    @property
    def determinant(self):
        m = self.matrix
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    @property
    def is_singular(self):
        return abs(math.sin(self.beta_basis - self.alpha_basis)) < SINGULAR_SIN

    @property
    def inverse(self):
        if self.is_singular:
            raise SingularBasisError(
                f"basis angles {self.alpha_basis!r}, {self.beta_basis!r} are (nearly) parallel")
        m = self.matrix
        det = self.determinant
        return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def fit_contour_angles(grid, min_r2=0.8):
    """Basis angles from planar fits of log tau_AP and log tau_P in the
    physical (v_me, v_i) plane.

    Any grid works: a V1_V2 grid is fitted against the physical bias of each
    cell, which re-calibrates the angles over the region that grid covers.
    The grid needs at least 4x4 interior nodes. Raises FitQualityError if
    either plane explains less than `min_r2` of the variance, and
    SingularBasisError if the two gradients are parallel.
    """
    n1, n2 = grid.shape
    if n1 < 6 or n2 < 6:
        raise ValueError("contour fitting needs at least 4x4 interior nodes (a 6x6 grid)")
    fit_ap = fit_log_plane(grid, StateLabel.AP, physical=True)
    fit_p = fit_log_plane(grid, StateLabel.P, physical=True)
    for name, fit in (("tau_AP", fit_ap), ("tau_P", fit_p)):
        if fit.r2 < min_r2:
            raise FitQualityError(f"planar fit of log {name} has R^2 = {fit.r2:.3f} < {min_r2}")
    angles = BasisAngles(_canonical(fit_ap.angle), _canonical(fit_p.angle), fit_ap.r2, fit_p.r2,
                         fit_ap.angle_stderr, fit_p.angle_stderr)
    if angles.is_singular:
        raise SingularBasisError("fitted tau_AP and tau_P gradients are parallel")
    return angles


def basis_transform(bias, angles):
    """(v1, v2) = M (v_me, v_i). Accepts scalars or arrays."""
    v_me, v_i = bias
    m = angles.matrix
    return (m[0, 0] * np.asarray(v_me) + m[0, 1] * np.asarray(v_i),
            m[1, 0] * np.asarray(v_me) + m[1, 1] * np.asarray(v_i))


def inverse_basis_transform(v1, v2, angles):
    inv = angles.inverse
    v1 = np.asarray(v1)
    v2 = np.asarray(v2)
    out = BiasPoint(inv[0, 0] * v1 + inv[0, 1] * v2, inv[1, 0] * v1 + inv[1, 1] * v2)
    if out.v_me.ndim == 0:
        return BiasPoint(float(out.v_me), float(out.v_i))
    return out


def cross_sensitivity(grid):
    """(|dlog tau_AP/d axis2| / |dlog tau_AP/d axis1|, |dlog tau_P/d axis1| / |dlog tau_P/d axis2|)
    from the planar fits, plus the two fits."""
    fit_ap = fit_log_plane(grid, StateLabel.AP)
    fit_p = fit_log_plane(grid, StateLabel.P)
    r_ap = abs(fit_ap.gradient[1]) / abs(fit_ap.gradient[0])
    r_p = abs(fit_p.gradient[0]) / abs(fit_p.gradient[1])
    return (r_ap, r_p), (fit_ap, fit_p)


def transformed_sweep(v1_values, v2_values, angles, params, sim_config, min_dwells=200,
                      theta_on=0.6, max_sim_time=2e-5, window=None, threads=None, progress=None):
    """Lifetime grid over (V1, V2); each node is simulated at its (v_me, v_i) image.

    Nodes whose image falls outside `window` are flagged ``out_of_window``
    and not simulated. Random streams are keyed by node index exactly as in
    `sweep_grid`.
    """
    v1_values = np.asarray(v1_values, dtype=float)
    v2_values = np.asarray(v2_values, dtype=float)
    cells = [[None] * v2_values.size for _ in v1_values]
    jobs = []
    for i, a in enumerate(v1_values):
        for j, b in enumerate(v2_values):
            bias = inverse_basis_transform(float(a), float(b), angles)
            if _in_window(bias, window):
                jobs.append((i, j, bias))
            else:
                cells[i][j] = GridCell(bias, flags=("out_of_window",))
    results = _run_cells(jobs, params, sim_config, theta_on, min_dwells, max_sim_time, threads, progress)
    for (i, j), cell in results.items():
        cells[i][j] = cell
    return LifetimeGrid(v1_values, v2_values, AxisKind.V1_V2, cells, int(sim_config.seed),
                        int(min_dwells), angles)


def transformed_axes(angles, window, n1, n2, shrink=1.0):
    """Largest centred (V1, V2) rectangle whose image lies inside `window`.

    The rectangle is centred on the image of the window centre and has the
    same aspect as the image of the window half-widths; `shrink` < 1 leaves
    a margin.
    """
    (lo_me, hi_me), (lo_i, hi_i) = window
    c_me, c_i = 0.5 * (lo_me + hi_me), 0.5 * (lo_i + hi_i)
    h_me, h_i = 0.5 * (hi_me - lo_me), 0.5 * (hi_i - lo_i)
    c1, c2 = basis_transform((c_me, c_i), angles)
    inv = angles.inverse
    # a corner (s1*d1, s2*d2) maps to |inv @ d| <= (h_me, h_i); with d2 = r*d1 solve for d1
    m = np.abs(inv)
    r = 1.0
    d1 = min(h_me / (m[0, 0] + m[0, 1] * r), h_i / (m[1, 0] + m[1, 1] * r)) * shrink
    d2 = r * d1
    return (np.linspace(c1 - d1, c1 + d1, n1), np.linspace(c2 - d2, c2 + d2, n2))


def calibrate_basis(grid, params, sim_config, window, n=6, refine_rounds=0, min_dwells=200,
                    theta_on=0.6, max_sim_time=2e-5, min_r2=0.8, threads=None, progress=None):
    """Basis angles for `window`, starting from a planar fit of `grid`.

    log tau is only approximately planar, and the image of a (V1, V2) square
    is a thin strip along the contour direction, so each refinement round
    sweeps the current transformed square and refits the angles on that
    strip alone. Round k uses master seed ``sim_config.seed + k + 1``.
    Refinement only pays off on wide windows; on a strip too short for the
    lifetimes to vary well beyond sampling noise the refit fails the R^2
    gate, so the default is no refinement.
    Returns (angles, list of transformed grids).
    """
    angles = fit_contour_angles(grid, min_r2=min_r2)
    history = []
    for k in range(refine_rounds):
        v1, v2 = transformed_axes(angles, window, n, n)
        g = transformed_sweep(v1, v2, angles, params, sim_config.replace(seed=sim_config.seed + k + 1),
                              min_dwells, theta_on, max_sim_time, window, threads, progress)
        history.append(g)
        angles = fit_contour_angles(g, min_r2=min_r2)
    return angles, history


def find_operating_window(params, sim_config, tau_min, tau_max, theta_on=0.6, step=0.05,
                          max_half_width=1.0, min_dwells=50, max_sim_time=2e-5, threads=None):
    """Largest half-width h (multiple of `step`) such that both mean lifetimes
    stay in [tau_min, tau_max] on the boundary of [-h, h]^2.

    Each candidate square is probed at its four corners and four edge
    midpoints with a short run; the search stops at the first failure.
    """
    best = 0.0
    n_steps = int(round(max_half_width / step))
    for k in range(1, n_steps + 1):
        h = k * step
        probes = [(sx * h, sy * h) for sx in (-1, 0, 1) for sy in (-1, 0, 1) if (sx, sy) != (0, 0)]
        jobs = [(k, n, BiasPoint(*p)) for n, p in enumerate(probes)]
        cells = _run_cells(jobs, params, sim_config, theta_on, min_dwells, max_sim_time, threads, None)
        ok = all(c.valid and tau_min <= c.tau_p.mean <= tau_max and tau_min <= c.tau_ap.mean <= tau_max
                 for c in cells.values())
        if not ok:
            break
        best = h
    return best


# -- file formats -------------------------------------------------------------

GRID_HEADER = ["axis_kind", "v_a", "v_b", "tau_p_mean_s", "tau_p_stderr_s", "tau_p_count",
               "tau_ap_mean_s", "tau_ap_stderr_s", "tau_ap_count", "flags"]


def _est_fields(est):
    if est is None:
        return ["nan", "nan", "0"]
    return [repr(est.mean), repr(est.stderr), str(est.count)]


def write_grid_csv(grid, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for i, a in enumerate(grid.axis1_values):
            for j, b in enumerate(grid.axis2_values):
                cell = grid.cells[i][j]
                w.writerow([grid.axis_kind.value, repr(float(a)), repr(float(b))]
                           + _est_fields(cell.tau_p) + _est_fields(cell.tau_ap)
                           + [";".join(cell.flags)])
    return path


def read_grid_csv(path, angles=None):
    """Inverse of `write_grid_csv`. KS diagnostics are not stored and read back as NaN."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != GRID_HEADER:
            raise ValueError(f"{path}: unexpected grid header {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty grid")
    kinds = {r["axis_kind"] for r in rows}
    if len(kinds) != 1:
        raise ValueError(f"{path}: mixed axis kinds {sorted(kinds)}")
    kind = AxisKind(kinds.pop())
    a_vals = sorted({float(r["v_a"]) for r in rows})
    b_vals = sorted({float(r["v_b"]) for r in rows})
    if len(rows) != len(a_vals) * len(b_vals):
        raise ValueError(f"{path}: rows do not form a complete rectilinear grid")
    nan = float("nan")
    cells = [[None] * len(b_vals) for _ in a_vals]
    for r in rows:
        i = a_vals.index(float(r["v_a"]))
        j = b_vals.index(float(r["v_b"]))
        est = {}
        for state, tag in ((StateLabel.P, "tau_p"), (StateLabel.AP, "tau_ap")):
            mean = float(r[f"{tag}_mean_s"])
            est[state] = None if not np.isfinite(mean) else LifetimeEstimate(
                state, mean, float(r[f"{tag}_stderr_s"]), int(r[f"{tag}_count"]), nan, nan)
        flags = tuple(f for f in r["flags"].split(";") if f)
        va, vb = float(r["v_a"]), float(r["v_b"])
        if kind == AxisKind.ME_I:
            bias = BiasPoint(va, vb)
        elif angles is not None and not angles.is_singular:
            bias = inverse_basis_transform(va, vb, angles)
        else:
            bias = BiasPoint(nan, nan)
        cells[i][j] = GridCell(bias, est[StateLabel.P], est[StateLabel.AP], flags)
    return LifetimeGrid(a_vals, b_vals, kind, cells, angles=angles)


def angles_report(angles):
    """Structured text (``key = value`` lines) describing fitted basis angles."""
    m = angles.matrix
    lines = [
        "# basis angles for (V1, V2) = M (V_ME, V_I)",
        f"alpha_basis_rad = {float(angles.alpha_basis)!r}",
        f"alpha_basis_deg = {float(math.degrees(angles.alpha_basis))!r}",
        f"beta_basis_rad = {float(angles.beta_basis)!r}",
        f"beta_basis_deg = {float(math.degrees(angles.beta_basis))!r}",
        f"alpha_stderr_rad = {float(angles.alpha_stderr)!r}",
        f"beta_stderr_rad = {float(angles.beta_stderr)!r}",
        f"contour_alpha_deg = {float(math.degrees(angles.contour_alpha))!r}",
        f"contour_beta_deg = {float(math.degrees(angles.contour_beta))!r}",
        f"r2_ap = {float(angles.r2_ap)!r}",
        f"r2_p = {float(angles.r2_p)!r}",
        f"m11 = {float(m[0, 0])!r}",
        f"m12 = {float(m[0, 1])!r}",
        f"m21 = {float(m[1, 0])!r}",
        f"m22 = {float(m[1, 1])!r}",
    ]
    if not angles.is_singular:
        inv = angles.inverse
        lines += [f"inv11 = {float(inv[0, 0])!r}", f"inv12 = {float(inv[0, 1])!r}",
                  f"inv21 = {float(inv[1, 0])!r}", f"inv22 = {float(inv[1, 1])!r}"]
    return "\n".join(lines) + "\n"


def write_angles_report(angles, path):
    path = Path(path)
    path.write_text(angles_report(angles))
    return path


def read_angles_report(path):
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = float(value)
    try:
        return BasisAngles(values["alpha_basis_rad"], values["beta_basis_rad"],
                           values.get("r2_ap", float("nan")), values.get("r2_p", float("nan")),
                           values.get("alpha_stderr_rad", float("nan")),
                           values.get("beta_stderr_rad", float("nan")))
    except KeyError as exc:
        raise ValueError(f"{path}: missing {exc.args[0]}") from None
