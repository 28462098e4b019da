"""Command-line entry point.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 model or
runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .actuator import ModelError
from .circuit import SignalTrace
from .config import ConfigError, load_config
from .evaluation import PipelineError, noise_bench, reports_to_csv, run_scenario, run_sweep
from .evaluation.joints import default_sessions, run_joint_session, run_mux_demo
from .evaluation.report import metadata_json
from .evaluation.scenario import drive_waveform
from .io import atomic_write, features_to_csv, mux_to_csv, read_map, series_to_csv, trace_to_csv, write_map
from .mux import hold_estimates

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fhasel", description="Self-sensing simulation and evaluation for HASEL actuators.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", type=Path)
        sp.add_argument("--seed", type=int, default=None, help="override [scenario] seed")
        return sp

    sp = add("simulate", "simulate one scenario and write raw traces and features")
    sp.add_argument("--out", type=Path, required=True, help="output directory")

    sp = add("calibrate", "fit a displacement map on the calibration pass")
    sp.add_argument("--out", type=Path, required=True, help="calibration map CSV")
    sp.add_argument("--method", choices=("voltage", "impedance"))
    sp.add_argument("--mapping", choices=("single", "dual"))

    sp = add("run", "calibrate and evaluate one scenario")
    sp.add_argument("--method", choices=("voltage", "impedance"))
    sp.add_argument("--mapping", choices=("single", "dual"))
    sp.add_argument("--map", type=Path, help="use this calibration map instead of fitting one")
    sp.add_argument("--out", type=Path, help="directory for report.csv, metadata.json and estimate.csv")

    sp = add("sweep", "NRMSE and phase lag over the configured frequencies")
    sp.add_argument("--mapping", choices=("single", "dual"))
    sp.add_argument("--out", type=Path, help="directory for report.csv and metadata.json")

    sp = add("noise-bench", "constant-drive noise comparison of the three sensing voltages")
    sp.add_argument("--drive-kv", type=float, default=4.8)
    sp.add_argument("--out", type=Path, help="directory for noise_bench.csv")

    sp = add("mux-demo", "several actuators through one multiplexed front-end")
    sp.add_argument("--out", type=Path, help="directory for report.csv, metadata.json and mux_estimates.csv")

    sp = add("joints", "four-joint angle tracking through the multiplexer")
    sp.add_argument("--out", type=Path, help="directory for report.csv, metadata.json and mux_estimates.csv")
    return p


def _setup(args):
    setup = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    for key in ("method", "mapping"):
        if getattr(args, key, None):
            changes[key] = getattr(args, key)
    if changes:
        setup = setup.with_scenario(**changes)
        try:
            setup.scenario.validate()
        except ModelError as err:
            raise ConfigError(str(err)) from err
    return setup


def _write_reports(out: Path | None, reports) -> None:
    text = reports_to_csv(reports)
    sys.stdout.write(text)
    if out is not None:
        atomic_write(out / "report.csv", text)
        atomic_write(out / "metadata.json", metadata_json(reports))


def _mux_outputs(out: Path | None, run, setup) -> None:
    _write_reports(out, run.reports)
    if out is not None:
        times = np.unique([e.t for e in run.estimates])
        step = setup.rms.window / setup.rms.fs
        grid = np.arange(times[0], times[-1] + step / 2, step)
        atomic_write(out / "mux_estimates.csv", mux_to_csv(hold_estimates(run.estimates, setup.mux, grid)))


def cmd_simulate(args) -> None:
    setup = _setup(args)
    res = run_scenario(setup, keep_frame=True)
    frame, run, fs = res.run.frame_eval, res.run, setup.circuit.fs
    out = args.out
    for name in ("v_h", "v_c", "v_k"):
        atomic_write(out / f"{name}.csv", trace_to_csv(getattr(frame, name)))
    _, v_d, _ = drive_waveform(setup.resolved().scenario, fs)
    atomic_write(out / "drive.csv", trace_to_csv(SignalTrace(v_d * 1e3, fs)))
    atomic_write(out / "displacement.csv", series_to_csv("t_s,q_m", [np.arange(run.q.size) / fs, run.q]))
    atomic_write(out / "features.csv", features_to_csv(run.feature_eval))
    atomic_write(out / "estimate.csv", series_to_csv("t_s,truth_m,estimate_m", [res.t, res.truth, res.estimate]))
    _write_reports(out, [res.report])


def cmd_calibrate(args) -> None:
    setup = _setup(args)
    res = run_scenario(setup)
    write_map(res.map, args.out)
    print(f"wrote {res.report.mapping} {res.map.feature_kind} map to {args.out}")


def cmd_run(args) -> None:
    setup = _setup(args)
    map_ = None
    if args.map is not None:
        cal = setup.calibration
        try:
            map_ = read_map(args.map, slope_window=cal.slope_window, hold_last_on_tie=cal.hold_last_on_tie)
        except OSError as err:
            raise ConfigError(f"cannot read map {args.map}: {err}") from err
    res = run_scenario(setup, map_=map_)
    _write_reports(args.out, [res.report])
    if args.out is not None:
        atomic_write(args.out / "estimate.csv",
                     series_to_csv("t_s,truth_m,estimate_m", [res.t, res.truth, res.estimate]))


def cmd_sweep(args) -> None:
    setup = _setup(args)
    _write_reports(args.out, run_sweep(setup, args.mapping))


def cmd_noise_bench(args) -> None:
    setup = _setup(args)
    res = noise_bench(setup, drive_kv=args.drive_kv)
    text = "quantity,value\n" + "".join(f"{k},{v:.9g}\n" for k, v in res.rows())
    sys.stdout.write(text)
    if args.out is not None:
        atomic_write(args.out / "noise_bench.csv", text)


def cmd_mux_demo(args) -> None:
    setup = _setup(args)
    _mux_outputs(args.out, run_mux_demo(setup), setup)


def cmd_joints(args) -> None:
    setup = _setup(args)
    cal, ev = default_sessions(setup)
    _mux_outputs(args.out, run_joint_session(setup, cal, ev), setup)


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "noise-bench": cmd_noise_bench,
    "mux-demo": cmd_mux_demo,
    "joints": cmd_joints,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        code = COMMANDS[args.command](args)
        return code or EXIT_OK
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except PipelineError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ModelError, OSError, FloatingPointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
