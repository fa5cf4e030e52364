"""Command-line entry point: run scenarios, verification studies, oracles.

Exit codes: 0 success, 2 configuration/usage error, 3 solver failure.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import AnalyticCase, max_width_series
from .driver import StepFailure, run_simulation
from .params import ConfigError, parse_config, serialize_config
from .postprocess import write_csv
from .verify import (convergence_passes, convergence_study, series_passes,
                     series_study)

_VERIFY_CASES = {"a": "case_a", "b": "case_b", "c": "case_c"}
_ANALYTIC_CASES = {"a": "case_a", "b": "case_b", "c": "case_c", "f": "case_c"}


def _load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}")
    return parse_config(text), text


def _write_manifest(out, mat, model, loads, geom, extra=None):
    manifest = {
        "config": serialize_config(mat, model, loads, geom),
        "out_dir": str(out),
        "build": f"thermofrac {__version__}",
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    manifest.update(extra or {})
    (Path(out) / "manifest.json").write_text(
        json.dumps(manifest, indent=2), encoding="utf-8"
    )


def cmd_run(args):
    try:
        (mat, model, loads, geom), _ = _load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, mat, model, loads, geom)
    try:
        result = run_simulation(
            mat, model, loads, geom, n_steps=args.steps, threads=args.threads,
            out_dir=str(out),
        )
    except StepFailure as err:
        print(f"solver failure: {err}", file=sys.stderr)
        _write_manifest(out, mat, model, loads, geom,
                        extra={"failed_step": err.step})
        return 3
    write_csv(result.records, out / "timeseries.csv")
    _write_manifest(out, mat, model, loads, geom,
                    extra={"step_seconds": result.step_seconds})
    return 0


def _parse_levels(spec):
    lo, _, hi = spec.partition(":")
    lo, hi = int(lo), int(hi or lo)
    if not (0 < lo <= hi <= 12):
        raise ValueError(f"levels out of range: {spec}")
    return list(range(lo, hi + 1))


def cmd_verify(args):
    try:
        levels = _parse_levels(args.levels)
        preset = _VERIFY_CASES[args.case]
        (mat, model, loads, geom), _ = _load_config_preset(preset)
    except (ValueError, KeyError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    try:
        if args.case in ("a", "b"):
            rows = convergence_study(mat, model, loads, geom, levels)
            ok = convergence_passes(rows)
        else:
            rows = []
            ok = True
            for lv in levels:
                _, w_num, _, row = series_study(mat, model, loads, geom,
                                                level=lv)
                rows.append(row)
                ok = ok and series_passes(w_num, row.rel_err)
    except StepFailure as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 3

    with open(out / "verify.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "h", "max_cod_num", "max_cod_ana",
                         "rel_err", "l2_profile_err"])
        for r in rows:
            writer.writerow([r.level, f"{r.h:.17g}", f"{r.max_cod_num:.17g}",
                             f"{r.max_cod_ana:.17g}", f"{r.rel_err:.17g}",
                             f"{r.l2_profile_err:.17g}"])
    for r in rows:
        print(f"level {r.level}: max COD {r.max_cod_num:.6e} vs "
              f"{r.max_cod_ana:.6e} (rel err {r.rel_err:.3%})")
    return 0 if ok else 1


def _load_config_preset(preset):
    text = f"scenario = {preset}\n"
    return parse_config(text), text


def cmd_analytic(args):
    try:
        preset = _ANALYTIC_CASES[args.case]
        (mat, model, loads, geom), _ = _load_config_preset(preset)
    except (KeyError, ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case = AnalyticCase.from_params(mat, model, loads, geom,
                                    dim=3 if args.case == "f" else 2)
    times = np.linspace(0.0, args.t_end, 101)
    series = max_width_series(times, case)
    with open(out / "analytic.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "w_max"])
        for t, w in series:
            writer.writerow([f"{t:.17g}", f"{w:.17g}"])
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="thermofrac",
        description="Phase-field simulator for pressurized, non-isothermal "
                    "cracks with analytic verification oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--steps", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="uniform-level verification study")
    p_ver.add_argument("--case", required=True, choices=sorted(_VERIFY_CASES))
    p_ver.add_argument("--levels", required=True, metavar="L1:L2")
    p_ver.add_argument("--out", required=True)
    p_ver.set_defaults(func=cmd_verify)

    p_ana = sub.add_parser("analytic", help="emit the analytic aperture series")
    p_ana.add_argument("--case", required=True, choices=sorted(_ANALYTIC_CASES))
    p_ana.add_argument("--t-end", type=float, default=365.0 * 86400.0)
    p_ana.add_argument("--out", default=".")
    p_ana.set_defaults(func=cmd_analytic)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
