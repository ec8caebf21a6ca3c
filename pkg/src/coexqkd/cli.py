"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 model error,
4 no key or calibration non-convergence.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys

import numpy as np

from . import compare, scenario
from .config import ConfigError, load_config, serialize
from .linkmodel import loss_budget

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_NO_KEY = 0, 2, 3, 4

DEFAULT_CONFIG = "bundled:link_95p5km.cfg"

SWEEP_COLUMNS = ("launch_power_dbm", "received_power_dbm", "noise_rate_hz", "qber_z", "phi_x",
                 "skr_bps")

log = logging.getLogger("coexqkd")


class NoKey(Exception):
    pass


def _clean(v):
    """JSON-safe value: non-finite floats become strings, tuples lists."""
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def to_json(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] for c in columns])
    return buf.getvalue()


def result_dict(res):
    d = {k: getattr(res, k) for k in res.__dataclass_fields__}
    d["noise_rate_hz"] = res.noise_rate_z_hz + res.noise_rate_x_hz
    return d


def _scenario_for(args):
    cfg = load_config(args.config)
    sc = cfg.scenario
    if getattr(args, "length_km", None) is not None:
        sc = sc.with_fiber_length(args.length_km)
    if getattr(args, "launch_power_dbm", None) is not None:
        sc = sc.with_launch_power(args.launch_power_dbm)
    return cfg, sc


def _parse_range(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError("range values must be numbers") from None
    try:
        return scenario.grid(start, stop, step)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# -- subcommands -------------------------------------------------------------

def cmd_budget(args):
    cfg = load_config(args.config)
    b = loss_budget(cfg.scenario.link.filters)
    if args.format == "json":
        return to_json({
            "rows": [{"element": n, "insertion_loss_db": il, "isolation_db": iso,
                      "isolation_is_lower_bound": bound} for n, il, iso, bound in b.rows],
            "total_insertion_loss_db": b.total_insertion_db,
            "total_rx_isolation_db": b.total_rx_isolation_db,
        })
    if args.format == "csv":
        rows = [{"element": n, "insertion_loss_db": il, "isolation_db": "" if iso is None else
                 (f"> {iso:g}" if bound else f"{iso:g}")} for n, il, iso, bound in b.rows]
        return rows_to_csv(rows, ("element", "insertion_loss_db", "isolation_db"))
    return b.format() + "\n"


def cmd_evaluate(args):
    _, sc = _scenario_for(args)
    rng = np.random.default_rng(args.seed) if args.mode == "poisson" else None
    res = scenario.evaluate(sc, mode=args.mode, rng=rng)
    d = result_dict(res)
    if args.format == "csv":
        return rows_to_csv([d], SWEEP_COLUMNS)
    return to_json(d)


def cmd_sweep(args):
    _, sc = _scenario_for(args)
    results = scenario.sweep(sc, args.parameter, args.range, workers=args.workers)
    rows = [result_dict(r) for r in results]
    columns = SWEEP_COLUMNS
    if args.parameter == "fiber_length":
        columns = ("fiber_length_km",) + SWEEP_COLUMNS
    if args.format == "json":
        return to_json([{c: r[c] for c in columns} for r in rows])
    return rows_to_csv(rows, columns)


def cmd_boundary(args):
    _, sc = _scenario_for(args)
    bracket = (args.bracket_low_dbm, args.bracket_high_dbm)
    if args.lengths is None:
        b = scenario.max_tolerable_launch_power(sc, bracket, args.tolerance_db)
        out = {"fiber_length_km": sc.link.length_km, "boundary_power_dbm": b.power_dbm,
               "status": b.status}
        text = (rows_to_csv([out], ("fiber_length_km", "boundary_power_dbm", "status"))
                if args.format == "csv" else to_json(out))
        if b.status == "no_key":
            return text, EXIT_NO_KEY
        return text
    region = scenario.boundary_vs_length(sc, args.lengths, bracket, args.tolerance_db)
    rows = [{"fiber_length_km": L, "boundary_power_dbm": "" if b.power_dbm is None
             else b.power_dbm, "status": b.status} for L, b in region]
    if args.format == "json":
        return to_json(rows)
    return rows_to_csv(rows, ("fiber_length_km", "boundary_power_dbm", "status"))


def cmd_calibrate(args):
    cfg = load_config(args.config)
    report, fitted = scenario.calibrate(cfg.scenario, cfg.targets)
    if args.write_config:
        with open(args.write_config, "w", encoding="utf-8") as fh:
            fh.write(serialize(fitted, cfg.targets))
    return to_json(report.as_dict())


def cmd_ideal(args):
    _, sc = _scenario_for(args)
    rep = scenario.ideal_comparison(sc, snspd_jitter_ps=args.snspd_jitter_ps,
                                    ideal_window_ps=args.ideal_window_ps)
    return to_json(rep.as_dict())


def cmd_compare(args):
    cfg, sc = _scenario_for(args)
    if args.literature:
        try:
            with open(args.literature, encoding="utf-8") as fh:
                lit = compare.parse_literature(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.literature}: {exc}") from exc
        except compare.LiteratureError as exc:
            raise ConfigError(f"{args.literature}: {exc}") from exc
    else:
        lit = compare.bundled_literature()
    powers = args.launch_powers_dbm or [sc.plan.total_launch_dbm]
    sims = [("simulated", scenario.evaluate(sc.with_launch_power(p))) for p in powers]
    rows = compare.comparison_table(sims, lit)
    if args.format == "json":
        return to_json(rows)
    return compare.to_csv(rows)


def build_parser():
    p = argparse.ArgumentParser(
        prog="coexqkd",
        description="O-band decoy-state QKD with co-propagating C-band classical channels.")
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="log defaulted configuration fields (-v) and debug output (-vv)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, formats=("json", "csv"), default="json"):
        sp.add_argument("-c", "--config", default=DEFAULT_CONFIG,
                        help="scenario file, or bundled:<name> (default: %(default)s)")
        sp.add_argument("-o", "--output", help="write to this file instead of stdout")
        sp.add_argument("-f", "--format", choices=formats, default=default)
        return sp

    def point(sp):
        sp.add_argument("--launch-power-dbm", type=float, help="override total launch power")
        sp.add_argument("--length-km", type=float, help="rescale the link to this length")

    sp = common(sub.add_parser("budget", help="receiver loss budget"), ("text", "csv", "json"),
                "text")
    sp.set_defaults(func=cmd_budget)

    sp = common(sub.add_parser("evaluate", help="one operating point"))
    point(sp)
    sp.add_argument("--mode", choices=("expected", "poisson"), default="expected")
    sp.add_argument("--seed", type=int, default=0, help="seed for --mode poisson")
    sp.set_defaults(func=cmd_evaluate)

    sp = common(sub.add_parser("sweep", help="key rate versus launch power or length"),
                default="csv")
    point(sp)
    sp.add_argument("--parameter", choices=("launch_power", "fiber_length"),
                    default="launch_power")
    sp.add_argument("--range", type=_parse_range, default=_parse_range("-20:15:1"),
                    help="start:stop:step, inclusive (default: -20:15:1)")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = common(sub.add_parser("boundary", help="maximum tolerable launch power"))
    point(sp)
    sp.add_argument("--lengths", type=_parse_range,
                    help="start:stop:step fiber lengths for the positive-key region")
    sp.add_argument("--bracket-low-dbm", type=float, default=scenario.DEFAULT_BRACKET_DBM[0])
    sp.add_argument("--bracket-high-dbm", type=float, default=scenario.DEFAULT_BRACKET_DBM[1])
    sp.add_argument("--tolerance-db", type=float, default=0.05)
    sp.set_defaults(func=cmd_boundary)

    sp = common(sub.add_parser("calibrate", help="fit unstated parameters to the targets"),
                ("json",))
    sp.add_argument("--write-config", help="also write the calibrated scenario here")
    sp.set_defaults(func=cmd_calibrate)

    sp = common(sub.add_parser("ideal", help="gain of an idealized receiver"), ("json",))
    point(sp)
    sp.add_argument("--snspd-jitter-ps", type=float, default=30.0)
    sp.add_argument("--ideal-window-ps", type=float,
                    help="detection window of the idealized receiver (default: unchanged)")
    sp.set_defaults(func=cmd_ideal)

    sp = common(sub.add_parser("compare", help="simulated points next to published results"),
                default="csv")
    point(sp)
    sp.add_argument("--literature", help="literature CSV (default: bundled table)")
    sp.add_argument("--launch-powers-dbm", type=float, nargs="+",
                    help="simulate these launch powers (default: the configured one)")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    for h in list(log.handlers):
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(level)

    status = EXIT_OK
    try:
        out = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except scenario.CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        for k, v in sorted(exc.state.items()):
            print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_NO_KEY
    except (scenario.ModelError, ValueError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    if isinstance(out, tuple):
        out, status = out
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return status


if __name__ == "__main__":
    sys.exit(main())
