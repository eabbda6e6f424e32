"""Command-line interface.

Subcommands: ``simulate``, ``detect``, ``null-dist``, ``power``, ``bench``
and ``ingest``. Errors are reported on stderr as a one-line JSON object and
exit with status 1.
"""

import argparse
import configparser
import json
import logging
import os
import sys

import numpy as np

from . import harness
from .detector import DetectorConfig
from .ggm import write_matrix_binary, write_matrix_csv
from .ingest import (log_returns, read_numeric_csv, read_price_panel, volatility_index,
                     volatility_proxy, write_series_csv)
from .pipeline import PipelineConfig, check_separation, run, write_detected_json, write_trace_csv
from .scenarios import load_spec, render_stream, s52_config, spec_to_dict

OUTPUT_DIR_ENV = "GGMCPD_OUTPUT_DIR"

# Defaults for daily equity returns.
REAL_DATA_DEFAULTS = {"n0": 200, "w": 22, "pi0": 0.05, "kappa": 2, "B": 10, "iota": 5}

logger = logging.getLogger("ggmcpd")


class CLIError(Exception):
    """User-facing configuration or data error."""


def _default_out(name):
    return os.path.join(os.environ.get(OUTPUT_DIR_ENV, "."), name)


def _read_ini(path):
    """Flatten ``[detector]`` and ``[pipeline]`` sections of an INI file."""
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise CLIError(f"cannot read config file {path}")
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            out[key] = value
    return out


def _resolve_pipeline(args):
    cfg = dict(REAL_DATA_DEFAULTS)
    ini = _read_ini(args.config)
    for key, cast in (("n0", int), ("w", int), ("pi0", float), ("kappa", int), ("b", int),
                      ("iota", int), ("zeta", float), ("center", _parse_bool),
                      ("separation_guard", int)):
        if key in ini:
            cfg["B" if key == "b" else key] = cast(ini[key])
    for key in ("n0", "w", "pi0", "kappa", "B", "iota", "zeta", "separation_guard"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.center:
        cfg["center"] = True
    try:
        det = DetectorConfig(w=cfg["w"], pi0=cfg["pi0"], zeta=cfg.get("zeta"))
        return PipelineConfig(n0=cfg["n0"], B=cfg["B"], kappa=cfg["kappa"], iota=cfg["iota"],
                              detector=det, center=cfg.get("center", False),
                              separation_guard=cfg.get("separation_guard"))
    except ValueError as exc:
        raise CLIError(str(exc)) from None


def _parse_bool(text):
    return str(text).strip().lower() in {"1", "true", "yes", "on"}


def cmd_simulate(args):
    spec = load_spec(args.spec, seed=args.seed)
    data, changes = render_stream(spec)
    out = args.out or _default_out("simulate")
    os.makedirs(out, exist_ok=True)
    write_matrix_csv(os.path.join(out, "data.csv"), data)
    for k, seg in enumerate(spec.segments):
        write_matrix_binary(os.path.join(out, f"omega_{k}.bin"), seg.omega.matrix)
    truth = {"p": spec.p, "T": spec.horizon, "change_times": changes, "spec": spec_to_dict(spec)}
    with open(os.path.join(out, "ground_truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2)
    print(json.dumps({"out": out, "T": spec.horizon, "change_times": changes}))


def cmd_detect(args):
    cfg = _resolve_pipeline(args)
    data = read_numeric_csv(args.data)
    if data.ndim != 2 or data.shape[0] == 0:
        raise CLIError("data file holds no samples")
    if cfg.separation_guard is not None:
        check_separation(cfg, data.shape[1], d_max=data.shape[1])
    detected, trace = run(data, cfg)
    out = args.out or _default_out("detect")
    os.makedirs(out, exist_ok=True)
    write_trace_csv(os.path.join(out, "trace.csv"), trace)
    write_detected_json(os.path.join(out, "detected.json"), detected)
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(harness._jsonable(cfg), fh, indent=2)
    print(json.dumps({"out": out, "detected": detected}))


def cmd_null_dist(args):
    rep = harness.null_distribution_experiment(
        args.p, args.dmax, args.w, args.reps, args.seed, estimated=args.estimated,
        burnin=args.burnin, tau=args.tau, n_jobs=args.jobs,
    )
    out = args.out or _default_out("null-dist")
    summary = {"mean": rep.mean, "sd": rep.sd, "ks": rep.ks, "n": len(rep.samples)}
    harness.write_report_dir(out, rep.config, summary, samples=rep.samples)
    print(json.dumps(summary))


def cmd_power(args):
    with open(args.scenario, encoding="utf-8") as fh:
        scenario = json.load(fh)
    det = DetectorConfig(w=args.w, pi0=args.pi0)
    rep = harness.power_experiment(scenario, det, args.reps, args.seed, n_jobs=args.jobs)
    out = args.out or _default_out("power")
    summary = {"pi0_hat": rep.pi0_hat, "pi1_hat": rep.pi1_hat}
    rows = [{k: v for k, v in r.items() if k != "flags_post"} for r in rep.per_replicate]
    harness.write_report_dir(out, rep.config_echo, summary, samples=rows)
    print(json.dumps(summary))


def cmd_bench(args):
    if args.protocol != "s52":
        raise CLIError(f"unknown protocol {args.protocol!r}")
    configs = harness.s52_pipeline_configs(args.sweep)
    scenario = s52_config(seed=args.seed)
    table, records = harness.pipeline_experiment(
        scenario, configs, args.reps, args.seed,
        change_labels=["uniform", "lowrank", "random"], n_jobs=args.jobs,
    )
    out = args.out or _default_out(f"bench-{args.sweep}")
    config = {"protocol": args.protocol, "sweep": args.sweep, "reps": args.reps,
              "seed": args.seed, "scenario": scenario, "configs": configs}
    harness.write_report_dir(out, config, {"table": table}, samples=records, table=table)
    print(json.dumps(table))


def cmd_ingest(args):
    panel = read_price_panel(args.prices)
    if args.subset is not None:
        panel = panel.subset(args.subset, seed=args.seed)
    returns = log_returns(panel, center=args.center)
    dates = panel.dates[1:] if panel.dates else None
    out = args.out or _default_out("returns.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    write_series_csv(out, returns, panel.tickers, index=dates)
    report = {"out": out, "rows": int(returns.shape[0]), "tickers": len(panel.tickers),
              "dropped_rows": panel.dropped_rows}
    if args.vol_window is not None:
        vol = volatility_proxy(returns, args.vol_window)
        vol_path = args.vol_out or os.path.splitext(out)[0] + "_volatility.csv"
        idx = volatility_index(vol)
        vdates = dates[: vol.shape[0]] if dates else None
        write_series_csv(vol_path, np.column_stack([vol, idx]),
                         list(panel.tickers) + ["volatility_index"], index=vdates)
        report["volatility"] = vol_path
    print(json.dumps(report))


def build_parser():
    parser = argparse.ArgumentParser(prog="ggmcpd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a piecewise-constant stream from a scenario file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run the online pipeline over a data CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--n0", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--pi0", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--kappa", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--iota", type=int)
    p.add_argument("--separation-guard", dest="separation_guard", type=int)
    p.add_argument("--center", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("null-dist", help="null distribution of the statistic")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--dmax", type=int, required=True)
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimated", action="store_true")
    p.add_argument("--burnin", type=int)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_null_dist)

    p = sub.add_parser("power", help="false-alarm and miss rates for a single-change scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--w", type=int, default=15)
    p.add_argument("--pi0", type=float, default=0.01)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("bench", help="pipeline sensitivity study")
    p.add_argument("--protocol", default="s52")
    p.add_argument("--sweep", choices=("n0", "kappa", "B"), required=True)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ingest", help="price panel to log-returns (and volatility)")
    p.add_argument("--prices", required=True)
    p.add_argument("--out")
    p.add_argument("--center", action="store_true")
    p.add_argument("--vol-window", dest="vol_window", type=int)
    p.add_argument("--vol-out", dest="vol_out")
    p.add_argument("--subset", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        msg = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(msg), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
