"""Command line interface: calibrate, test, power, rate-probe, plot, presets.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import procedures as P
from . import streams
from .calibration import calibrate, fresh_rejection_rate, load_table, save_table
from .errors import (
    ConfigError,
    InvalidParameterError,
    PatternFormatError,
    SchemaVersionError,
    TableMismatchError,
)
from .harness import (
    TableStore,
    calibration_configs,
    load_config,
    presets,
    run_power,
    run_rate_probe,
)
from .intensity import from_dict
from .plotting import plot_csv
from .poisson import PatternBatch, read_pattern, simulate_batch

log = logging.getLogger("poisson_homogeneity")


class UsageError(Exception):
    pass


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_calibrate(args):
    config = load_config(args.config)
    checks = int(config.get("level_check_samples", 0)) if isinstance(config, dict) else 0
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    print("table,n,calibrated_level,estimated_level,fresh_level")
    for name, cfg in calibration_configs(config):
        if args.seed is not None:
            cfg = type(cfg).from_dict({**cfg.to_dict(), "master_seed": args.seed})
        if args.mc_samples is not None:
            cfg = type(cfg).from_dict({**cfg.to_dict(), "mc_samples": args.mc_samples})
        table = calibrate(cfg, threads=args.threads)
        save_table(table, os.path.join(out_dir, f"{name}.json"))
        for n, e in sorted(table.per_n.items()):
            fresh = ""
            if checks:
                rng = streams.stream(cfg.master_seed, streams.CALIBRATION, streams.tag("check"), n)
                fresh = repr(fresh_rejection_rate(table, n, checks, rng))
            print(f"{name},{n},{e.calibrated_level!r},{e.estimated_level!r},{fresh}")
    return 0


def _test_patterns(args, L):
    if args.data:
        return [read_pattern(args.data)]
    try:
        spec_data = json.loads(args.simulate)
    except json.JSONDecodeError:
        spec_data = load_config(args.simulate)
    spec = from_dict(spec_data)
    rng = streams.stream(args.seed or 0, streams.SIMULATE)
    batch = simulate_batch(spec, L, args.repeat, rng)
    return [batch.pattern(i) for i in range(batch.size)]


def cmd_test(args):
    tables = [load_table(p) for p in args.table or []]
    by_kind = {}
    for t in tables:
        if t.kind in by_kind:
            raise UsageError(f"two {t.kind} tables given")
        by_kind[t.kind] = t
    if args.procedures:
        procs = [p.strip() for p in args.procedures.split(",")]
    else:
        procs = [k for k in (P.MODEL_SELECTION, P.THRESHOLDING) if k in by_kind] + list(P.TABLE_FREE)
    for p in procs:
        if p not in P.ALL_PROCEDURES:
            raise UsageError(f"unknown procedure {p!r}")
        if p in (P.MODEL_SELECTION, P.THRESHOLDING) and p not in by_kind:
            raise UsageError(f"procedure {p} needs a --table calibrated for it")
        if p == P.COMBINED and len(by_kind) < 2:
            raise UsageError("combined test needs a model_selection and a thresholding table")

    L = args.L or (tables[0].L if tables else None)
    if args.simulate and L is None:
        raise UsageError("--simulate needs --L or a table")
    patterns = _test_patterns(args, L)
    for pat in patterns:
        for t in tables:
            if pat.scale_L != t.L:
                raise TableMismatchError(f"data has L={pat.scale_L} but table {t.kind} has L={t.L}")

    alpha = args.alpha or (tables[0].alpha if tables else 0.05)
    lookup = dict(by_kind)
    if P.COMBINED in procs:
        lookup[P.COMBINED] = (by_kind[P.MODEL_SELECTION], by_kind[P.THRESHOLDING])
    batch = PatternBatch.from_patterns(patterns)
    print(P.TestVerdict.CSV_HEADER)
    results = {}
    for p in procs:
        a = 2 * by_kind[P.MODEL_SELECTION].alpha if p == P.COMBINED else (
            by_kind[p].alpha if p in by_kind else alpha)
        results[p] = P.run_batch(p, batch, a, lookup)
    for i in range(batch.size):
        for p in procs:
            print(results[p].verdict(i).csv_row())
    return 0


def cmd_power(args):
    config = load_config(args.config)
    out_dir = args.out or "."
    store = TableStore(args.table or os.path.join(out_dir, "tables"), threads=args.threads)
    report = run_power(config, store, replications=args.replications, seed=args.seed)
    for fam in report.families():
        _write(os.path.join(out_dir, f"power_{fam}.csv"), report.to_csv(fam))
        wide = report.to_wide_csv(fam)
        _write(os.path.join(out_dir, f"power_{fam}_table.csv"), wide)
        print(f"# {fam}")
        print(wide, end="")
    _write(os.path.join(out_dir, "power_metadata.json"),
           json.dumps(report.metadata, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_rate_probe(args):
    config = load_config(args.config)
    out_dir = args.out or "."
    store = TableStore(args.table or os.path.join(out_dir, "tables"), threads=args.threads)
    report = run_rate_probe(config, store, replications=args.replications, seed=args.seed)
    _write(os.path.join(out_dir, "rate_probe.csv"), report.to_csv())
    _write(os.path.join(out_dir, "rate_probe_summary.csv"), report.summary_csv())
    print(report.summary_csv(), end="")
    return 0


def cmd_plot(args):
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    for path in args.inputs:
        print(plot_csv(path, out_dir))
    return 0


def cmd_presets(args):
    table = presets()
    if args.name:
        if args.name not in table:
            raise UsageError(f"no preset named {args.name!r}")
        print(json.dumps(table[args.name], indent=1))
    else:
        for name in sorted(table):
            print(name)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poisson-homogeneity",
        description="Adaptive tests of homogeneity for Poisson processes on [0, 1].")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON config file or preset name")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes for calibration")
        p.add_argument("--out", help="output directory (default: current directory)")

    p = sub.add_parser("calibrate", help="build quantile tables")
    common(p)
    p.add_argument("--mc-samples", type=int, help="override null samples per n")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("test", help="test observed or simulated patterns")
    p.add_argument("--table", action="append", help="quantile table file (repeatable)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="one-column CSV with '# L=<scale>' header")
    src.add_argument("--simulate", help="intensity JSON (inline or file) to simulate from")
    p.add_argument("--procedures", help="comma-separated subset of " + ",".join(P.ALL_PROCEDURES))
    p.add_argument("--alpha", type=float, help="level for table-free tests (default: table level)")
    p.add_argument("--L", type=float, help="scale for --simulate (default: table L)")
    p.add_argument("--repeat", type=int, default=1, help="number of simulated patterns")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_test)

    for name, func, helptext in (("power", cmd_power, "estimate power tables"),
                                 ("rate-probe", cmd_rate_probe, "power against spike alternatives")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--table", help="directory caching quantile tables (default: OUT/tables)")
        p.add_argument("--replications", type=int, help="override replications per cell")
        p.set_defaults(func=func)

    p = sub.add_parser("plot", help="render SVG curves from power or rate-probe CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("presets", help="list presets, or print one as JSON")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, PatternFormatError, SchemaVersionError,
            InvalidParameterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
