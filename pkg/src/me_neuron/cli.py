"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 calibration degeneracy, 5 drive outside the lookup-table domain.
"""

import argparse
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .characterization import (
    AxisKind,
    FitQualityError,
    SingularBasisError,
    find_operating_window,
    fit_contour_angles,
    independence_ratios,
    k_factors,
    read_angles_report,
    read_grid_csv,
    sweep_grid,
    transformed_axes,
    transformed_sweep,
    write_angles_report,
    write_grid_csv,
)
from .config import ConfigError, load_config
from .integrator import NumericalInstabilityError, run_trajectory, trajectory_filename, write_trajectory_csv
from .magnet import BiasPoint
from .neuron import DomainError, build_lut, generate_spike_train, read_drive_csv, write_spike_csv, write_state_csv
from .telegraph import (
    InsufficientDwellsError,
    dwells_from_transitions,
    estimate_lifetimes,
    write_dwell_csv,
    write_lifetime_summary_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SINGULAR, EXIT_DOMAIN = 0, 2, 3, 4, 5


class InputError(ValueError):
    """Bad command-line input; maps to exit code 2."""


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, command, argv, cfg, seed, outputs, started, extra=None):
    """RunManifest as JSON. The resolved config is also written as INI so a
    rerun can be pointed at it."""
    out_dir = Path(out_dir)
    outputs = list(outputs)
    if cfg is not None:
        ini = out_dir / "config.resolved.ini"
        ini.write_text(cfg.to_ini())
        outputs.append(ini)
    manifest = {
        "tool": "me-neuron",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "master_seed": seed,
        "config": cfg.raw if cfg is not None else None,
        "started": started,
        "finished": _now(),
        "outputs": [{"path": Path(p).name, "sha256": _digest(p), "bytes": Path(p).stat().st_size}
                    for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _pair(text, name):
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"{name} must be two comma-separated numbers, got {text!r}") from None
    return a, b


def parse_axis(text, name):
    """``lo:hi:n`` or an explicit comma-separated list; must be strictly increasing."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            values = np.linspace(float(lo), float(hi), int(n))
        else:
            values = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise InputError(f"cannot parse {name} axis {text!r}") from None
    if values.size == 0:
        raise InputError(f"{name} axis is empty")
    if np.any(np.diff(values) <= 0):
        raise InputError(f"{name} axis must be strictly increasing: {text!r}")
    return values


def _overrides(args):
    out = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        out["sim.seed"] = str(args.seed)
    for flag, key in (("dt", "sim.dt"), ("t_max", "sim.t_max"), ("min_dwells", "analysis.min_dwells"),
                      ("theta_on", "analysis.theta_on"), ("dt_markov", "analysis.dt_markov")):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = repr(value)
    return out


def _load(args):
    return load_config(getattr(args, "config", None), _overrides(args))


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _progress(done, total, cell):
    flags = f" [{';'.join(cell.flags)}]" if cell.flags else ""
    print(f"cell {done}/{total} at ({cell.bias.v_me:+.4f}, {cell.bias.v_i:+.4f}) V{flags}",
          file=sys.stderr, flush=True)


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(args, argv):
    started = _now()
    cfg = _load(args)
    out = _out_dir(args)
    bias = BiasPoint(*_pair(args.bias, "--bias"))
    traj = run_trajectory(cfg.sim, bias, cfg.device, theta_on=cfg.analysis.theta_on)
    traj_path = write_trajectory_csv(traj, out)
    stem = trajectory_filename(traj)[len("traj_"):-len(".csv")]
    dwells = dwells_from_transitions(traj.transition_times, traj.transition_states)
    dwell_path = write_dwell_csv(dwells, out / f"dwells_{stem}.csv")
    outputs = [traj_path, dwell_path]
    try:
        est = estimate_lifetimes(dwells)
    except InsufficientDwellsError as exc:
        print(f"warning: {exc}; lifetime summary not written", file=sys.stderr)
    else:
        outputs.append(write_lifetime_summary_csv([(bias, e) for e in est], out / f"lifetimes_{stem}.csv"))
        for e in est:
            print(f"{e.state.name}: mean {e.mean:.4e} s +- {e.stderr:.2e} (n={e.count}, KS D={e.ks_statistic:.3f})")
    write_manifest(out, "simulate", argv, cfg, cfg.sim.seed, outputs, started)
    return EXIT_OK


def cmd_sweep(args, argv):
    started = _now()
    cfg = _load(args)
    sw = cfg.sweep
    window = sw.window
    sim = cfg.sim
    an = cfg.analysis
    # an explicit flag wins; a zero config value defers to $ME_NEURON_THREADS
    threads = args.threads if args.threads is not None else (sw.threads or None)
    if args.find_window:
        h = find_operating_window(cfg.device, sim, sw.tau_window_min, sw.tau_window_max,
                                  theta_on=an.theta_on, max_sim_time=sw.max_sim_time, threads=threads)
        print(f"operating window half-width: {h:.4g} V")
        return EXIT_OK
    out = _out_dir(args)
    extra = {}
    if args.transformed:
        angles = read_angles_report(args.transformed)
        if args.v1 and args.v2:
            v1, v2 = parse_axis(args.v1, "V1"), parse_axis(args.v2, "V2")
        elif args.v1 or args.v2:
            raise InputError("give both --v1 and --v2 or neither")
        else:
            v1, v2 = transformed_axes(angles, window, sw.n_v_me, sw.n_v_i)
        grid = transformed_sweep(v1, v2, angles, cfg.device, sim, an.min_dwells, an.theta_on,
                                 sw.max_sim_time, window, threads, _progress)
        path = write_grid_csv(grid, out / "grid_V1_V2.csv")
        extra["angles_file"] = str(args.transformed)
    else:
        v_me = parse_axis(args.v_me, "V_ME") if args.v_me else np.linspace(sw.v_me_min, sw.v_me_max, sw.n_v_me)
        v_i = parse_axis(args.v_i, "V_I") if args.v_i else np.linspace(sw.v_i_min, sw.v_i_max, sw.n_v_i)
        try:
            grid = sweep_grid(v_me, v_i, cfg.device, sim, an.min_dwells, an.theta_on, sw.max_sim_time,
                              window, threads, _progress)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        path = write_grid_csv(grid, out / "grid_ME_I.csv")
    n_bad = sum(not c.valid for row in grid.cells for c in row)
    print(f"wrote {path} ({grid.shape[0]}x{grid.shape[1]} cells, {n_bad} invalid)")
    write_manifest(out, "sweep", argv, cfg, sim.seed, [path], started, extra)
    return EXIT_OK


def _read_grid(path, angles_path=None):
    angles = read_angles_report(angles_path) if angles_path else None
    try:
        return read_grid_csv(path, angles)
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read grid {path}: {exc}") from None


def cmd_kfactors(args, argv):
    started = _now()
    cfg = _load(args)
    grid = _read_grid(args.grid)
    thr = cfg.analysis.independence_threshold
    if args.at:
        nodes = [_pair(args.at, "--at")]
    else:
        nodes = [(a, b) for a in grid.axis1_values[1:-1] for b in grid.axis2_values[1:-1]]
    rows = []
    for a, b in nodes:
        try:
            k = k_factors(grid, (a, b))
        except ValueError as exc:
            if args.at:
                raise InputError(str(exc)) from None
            continue
        r = independence_ratios(k)
        rows.append((a, b, k, r))
        print(f"({a:+.4f}, {b:+.4f}) k_ap_me={k.k_ap_me:.4e} k_ap_i={k.k_ap_i:.4e} "
              f"k_p_me={k.k_p_me:.4e} k_p_i={k.k_p_i:.4e} ratios="
              + ",".join(f"{v:.3g}" for v in r.values)
              + (" independent" if all(r.satisfied(thr)) else ""))
    if args.out:
        out = _out_dir(args)
        path = out / "kfactors.csv"
        with open(path, "w") as fh:
            fh.write("v_a,v_b,k_ap_me,k_ap_i,k_p_me,k_p_i,err_ap_me,err_ap_i,err_p_me,err_p_i,"
                     "r_ap_me_ap_i,r_p_i_p_me,r_ap_me_p_me,r_p_i_ap_i,independent\n")
            for a, b, k, r in rows:
                vals = [a, b, *k.as_tuple(), k.err_ap_me, k.err_ap_i, k.err_p_me, k.err_p_i, *r.values]
                fh.write(",".join(repr(float(v)) for v in vals) + f",{int(all(r.satisfied(thr)))}\n")
        write_manifest(out, "kfactors", argv, cfg, None, [path], started)
    return EXIT_OK


def cmd_calibrate(args, argv):
    started = _now()
    cfg = _load(args)
    grid = _read_grid(args.grid, args.angles)
    if grid.axis_kind == AxisKind.V1_V2 and args.angles is None:
        raise InputError("refining from a V1_V2 grid needs the --angles report it was swept with")
    angles = fit_contour_angles(grid, min_r2=cfg.analysis.min_r2)
    out = _out_dir(args)
    path = write_angles_report(angles, out / "angles.txt")
    print(path.read_text(), end="")
    write_manifest(out, "calibrate", argv, cfg, None, [path], started)
    return EXIT_OK


def cmd_neuron(args, argv):
    started = _now()
    cfg = _load(args)
    grid = _read_grid(args.grid)
    try:
        lut = build_lut(grid)
        drive = read_drive_csv(args.drive)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from None
    duration = args.duration if args.duration is not None else float(drive.t_start[-1]) * 2 or 1e-6
    train = generate_spike_train(lut, drive, duration, cfg.sim.seed, cfg.analysis.dt_markov)
    out = _out_dir(args)
    outputs = [write_spike_csv(train, out / "spikes.csv")]
    if args.states:
        outputs.append(write_state_csv(train, out / "states.csv"))
    print(f"{train.spike_times.size} spikes in {duration:.4g} s, AP occupancy {train.occupancy():.4f}")
    write_manifest(out, "neuron", argv, cfg, cfg.sim.seed, outputs, started)
    return EXIT_OK


def cmd_selftest(args, argv):
    from .selftest import run_selftest

    return EXIT_OK if run_selftest(verbose=True) else 1


# -- parser -----------------------------------------------------------------------

def _add_common(p, seed=True):
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one configuration value (repeatable)")
    if seed:
        p.add_argument("--seed", type=int, help="master seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="me-neuron", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one LLG trajectory with dwell and lifetime output")
    p.add_argument("config", nargs="?", help="INI config file (defaults if omitted)")
    p.add_argument("--bias", default="0,0", help="v_me,v_i in volts")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--out", default="out")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="lifetime grid over (V_ME, V_I) or, with --transformed, (V1, V2)")
    p.add_argument("config", nargs="?")
    p.add_argument("--v-me", help="lo:hi:n or comma list (default from [sweep])")
    p.add_argument("--v-i", help="lo:hi:n or comma list (default from [sweep])")
    p.add_argument("--transformed", metavar="ANGLES", help="angles report from `calibrate`")
    p.add_argument("--v1", help="V1 axis for --transformed (default: largest square in the window)")
    p.add_argument("--v2", help="V2 axis for --transformed")
    p.add_argument("--find-window", action="store_true", help="probe the operating window and exit")
    p.add_argument("--min-dwells", type=int)
    p.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    p.add_argument("--out", default="out")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("kfactors", help="k-factors and independence ratios from a grid CSV")
    p.add_argument("grid")
    p.add_argument("--config")
    p.add_argument("--at", help="v_a,v_b interior node (default: every interior node)")
    p.add_argument("--out", help="directory for kfactors.csv")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_kfactors)

    p = sub.add_parser("calibrate", help="basis angles from a grid CSV")
    p.add_argument("grid")
    p.add_argument("--config")
    p.add_argument("--angles", help="angles the (V1, V2) grid was swept with, to refine them")
    p.add_argument("--out", default="out")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("neuron", help="spike train from a (V1, V2) grid and a drive schedule")
    p.add_argument("grid")
    p.add_argument("drive")
    p.add_argument("--config")
    p.add_argument("--duration", type=float, help="seconds (default: twice the last segment start)")
    p.add_argument("--dt-markov", type=float)
    p.add_argument("--states", action="store_true", help="also write the state waveform")
    p.add_argument("--out", default="out")
    _add_common(p)
    p.set_defaults(func=cmd_neuron)

    p = sub.add_parser("selftest", help="run the fast invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalInstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SingularBasisError, FitQualityError) as exc:
        print(f"error: calibration failed: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
