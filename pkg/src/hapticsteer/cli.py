"""Command-line front end.

Commands: ``simulate`` (run one scenario, emit the trace CSV), ``table2``
(driver-alone tracking-error benchmark against the reference statistics),
``compare`` (adaptive vs fixed-gain baseline metrics), ``combined`` (the
four-mode sequence), ``presets`` (list or dump the named scenarios).

Exit codes: 0 success, 1 usage error or failed benchmark, 2 configuration
error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import config as cfgmod
from . import harness
from .cgmres import Breakdown, InitializationFailed, SolverDiverged
from .config import ParseError
from .harness import ValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

# Reference (mean, std) of |theta_h - theta_s| for the driver-alone benchmark,
# one row per arm impedance (b_h, k_h); tolerance is relative.
TABLE2_ROWS = (
    ((0.1, 0.1), 0.2327, 0.1949),
    ((0.3, 0.5), 0.0777, 0.0651),
    ((0.5, 1.0), 0.0426, 0.0358),
)
TABLE2_RTOL = 0.20


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; the contract says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config_text(path_or_preset: str) -> str:
    path = Path(path_or_preset)
    if path.exists():
        return path.read_text()
    if path_or_preset in cfgmod.PRESET_NAMES:
        return cfgmod.preset_text(path_or_preset)
    raise ParseError(f"config {path_or_preset!r} is neither a file nor a known preset")


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _metrics_lines(metrics: harness.RunMetrics, prefix: str = "") -> str:
    return "".join(f"{prefix}{key}={value:.9g}\n" for key, value in metrics.to_dict().items())


def cmd_simulate(args) -> int:
    text = _load_config_text(args.config)
    cfg = cfgmod.parse_config(text, args.set)
    out = cfgmod.output_paths(text, args.set)
    trace = harness.run_scenario(cfg)
    _write_text(args.out or out.get("csv"), trace.to_csv())
    metrics_path = args.metrics_out or out.get("metrics")
    if metrics_path:
        _write_text(metrics_path, _metrics_lines(harness.error_stats(trace)))
    return EXIT_OK


def cmd_table2(args) -> int:
    rows = []
    ok = True
    for (b_h, k_h), ref_mean, ref_std in TABLE2_ROWS:
        cfg = cfgmod.driver_alone_config(b_h, k_h)
        stats = harness.error_stats(harness.run_scenario(cfg))
        dev_mean = abs(stats.mean_abs_err - ref_mean) / ref_mean
        dev_std = abs(stats.std_abs_err - ref_std) / ref_std
        within = dev_mean <= TABLE2_RTOL and dev_std <= TABLE2_RTOL
        ok &= within
        rows.append(((b_h, k_h), stats, ref_mean, ref_std, dev_mean, dev_std, within))

    means = [r[1].mean_abs_err for r in rows]
    ok &= means[0] > means[1] > means[2]

    header = (f"{'z_h':>12} {'mean':>10} {'ref_mean':>10} {'dev':>7} "
              f"{'std':>10} {'ref_std':>10} {'dev':>7}  status")
    print(header)
    csv_lines = ["b_h,k_h,mean_abs_err,ref_mean,std_abs_err,ref_std"]
    for (z, stats, rm, rs, dm, ds, within) in rows:
        print(f"{str(z):>12} {stats.mean_abs_err:>10.4f} {rm:>10.4f} {dm:>6.1%} "
              f"{stats.std_abs_err:>10.4f} {rs:>10.4f} {ds:>6.1%}  "
              f"{'ok' if within else 'OUT OF TOLERANCE'}")
        csv_lines.append(f"{z[0]:.9g},{z[1]:.9g},{stats.mean_abs_err:.9g},{rm:.9g},"
                         f"{stats.std_abs_err:.9g},{rs:.9g}")
    print(f"monotone mean ordering: {'ok' if means[0] > means[1] > means[2] else 'VIOLATED'}")
    if args.out:
        _write_text(args.out, "\n".join(csv_lines) + "\n")
    return EXIT_OK if ok else EXIT_USAGE


def cmd_compare(args) -> int:
    text = _load_config_text(args.config)
    cfg = cfgmod.parse_config(text, args.set)
    adaptive, baseline = harness.compare(cfg)
    report = _metrics_lines(adaptive, "adaptive.") + _metrics_lines(baseline, "baseline.")
    sys.stdout.write(report)
    if args.out:
        _write_text(args.out, report)
    return EXIT_OK


def cmd_combined(args) -> int:
    text = _load_config_text(args.config)
    cfg = cfgmod.parse_config(text, args.set)
    trace = harness.combined_sequence(cfg)
    out = cfgmod.output_paths(text, args.set)
    _write_text(args.out or out.get("csv"), trace.to_csv())
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.dump:
        sys.stdout.write(cfgmod.preset_text(args.dump))
        return EXIT_OK
    for name in cfgmod.PRESET_NAMES:
        print(f"{name:24} {cfgmod.PRESET_SUMMARIES[name]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hapticsteer",
                     description="Haptic shared-steering simulator with an "
                                 "impedance-modulating predictive controller.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one scenario and write its trace CSV")
    p_sim.add_argument("--config", required=True, help="config file path or preset name")
    p_sim.add_argument("--out", help="trace CSV path (default: [output] csv, else stdout)")
    p_sim.add_argument("--metrics-out", help="write run metrics as key=value lines")
    p_sim.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
    p_sim.set_defaults(func=cmd_simulate)

    p_t2 = sub.add_parser("table2", help="driver-alone error-statistics benchmark")
    p_t2.add_argument("--out", help="also write the comparison as CSV")
    p_t2.set_defaults(func=cmd_table2)

    p_cmp = sub.add_parser("compare", help="adaptive vs fixed-gain baseline metrics")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--out", help="also write the metrics to a file")
    p_cmp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p_cmp.set_defaults(func=cmd_compare)

    p_comb = sub.add_parser("combined", help="run the four-mode sequence")
    p_comb.add_argument("--config", required=True)
    p_comb.add_argument("--out", help="trace CSV path (default: [output] csv, else stdout)")
    p_comb.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p_comb.set_defaults(func=cmd_combined)

    p_pre = sub.add_parser("presets", help="list preset scenarios")
    p_pre.add_argument("--dump", metavar="NAME", help="print a preset's config text")
    p_pre.set_defaults(func=cmd_presets)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParseError, ValidationError, FileNotFoundError) as exc:
        print(f"hapticsteer: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InitializationFailed, SolverDiverged, Breakdown) as exc:
        print(f"hapticsteer: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
