"""Command-line interface.

Subcommands::

    build      simulate a stationary in-control stream and write an artifact
    calibrate  find the control limit for a target in-control ATS or ANOS
    simulate   estimate ATS / ANOS under an out-of-control parameter set
    table      ATS table for a scenario block, both charts
    transform  turn arrival events or pairs into labelled z values
    monitor    run a calibrated chart over an event stream

Exit status is 0 on success without an alarm, 2 when ``monitor`` raised an
alarm and 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .acusum import RESET_SCOPES, PriorConfig
from .aggregate import build_stationary, load_artifact, save_artifact
from .calibrate import CHARTS, DEFAULT_MAX_OBS, estimate_ats, find_h
from .distributions import params_from_dict
from .exceptions import CalibrationError, ConfigError, DomainError, ProtocolError
from .monitor import Monitor, params_digest, read_events
from .scenarios import REFERENCE_ATS, ROWS, Scenario, make_scenarios, scenario_params
from .transform import StreamTransformer

log = logging.getLogger("tbemon")

EXIT_OK, EXIT_ERROR, EXIT_ALARM = 0, 1, 2


# --------------------------------------------------------------------------
# helpers

def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def _load_params(path):
    try:
        return params_from_dict(_load_json(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _resolve_seed(seed):
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
        print(f"seed: {seed}", file=sys.stderr)
    return seed


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _open_in(path):
    if path in (None, "-"):
        return sys.stdin
    try:
        return open(path)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def _ic_scenario(p) -> Scenario:
    means = p.marginal_means()
    return Scenario(p.family, 1, p, p, means, means, 0)


def _oc_scenario(ic, oc) -> Scenario:
    return Scenario(ic.family, 1, ic, oc, ic.marginal_means(), oc.marginal_means(),
                    0 if oc == ic else 1)


def _chart_h(art, chart, h=None):
    if h is not None:
        return h
    if chart == "acusum":
        stored = art.h
    else:
        stored = art.meta.get("shewhart", {}).get("h")
    if stored is None:
        raise ConfigError(f"artifact has no calibrated {chart} limit; run calibrate or pass --h")
    return stored


def _emit(obj, out=None):
    (out or sys.stdout).write(json.dumps(obj) + "\n")


# --------------------------------------------------------------------------
# subcommands

def cmd_build(args) -> int:
    if args.ic:
        ic = _load_params(args.ic)
    elif args.family and args.scenario:
        means = ROWS[args.family][args.scenario][0]
        ic = scenario_params(args.family, args.scenario, means, args.dependence, args.eta)
    else:
        raise ConfigError("build needs --ic FILE or --family with --scenario")
    priors = PriorConfig(**_load_json(args.priors)) if args.priors else PriorConfig()
    seed = _resolve_seed(args.seed)
    art = build_stationary(ic, priors, burn_in=args.burn_in, m=args.m,
                           pool_size=args.pool_size, spacing=args.spacing, seed=seed,
                           reset_scope=args.reset_scope)
    digest = save_artifact(art, args.out)
    _emit({"artifact": str(args.out), "sha256": digest, "seed": seed, "m": art.m,
           "time_per_obs": art.meta["time_per_obs"],
           "nonzero_fraction": art.meta["nonzero_fraction"]})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    art = load_artifact(args.artifact)
    seed = _resolve_seed(args.seed)
    h = find_h(_ic_scenario(art.ic), art, args.chart, target=args.target, metric=args.metric,
               R_coarse=args.r_coarse, R_fine=args.r_fine, tol_rel=args.tol, seed=seed,
               jobs=args.jobs, max_obs=args.max_obs)
    out = args.out or args.artifact
    digest = save_artifact(art, out)
    _emit({"chart": args.chart, "h": h, "metric": args.metric, "target": args.target,
           "seed": seed, "artifact": str(out), "sha256": digest})
    return EXIT_OK


def cmd_simulate(args) -> int:
    art = load_artifact(args.artifact)
    oc = _load_params(args.oc) if args.oc else art.ic
    h = _chart_h(art, args.chart, args.h)
    seed = _resolve_seed(args.seed)
    res = estimate_ats(_oc_scenario(art.ic, oc), art, h, args.chart, args.R, seed,
                       args.jobs, args.max_obs)
    _emit({"chart": args.chart, "h": h, "R": res.replications, "seed": seed,
           "ats": res.ats_mean, "ats_se": res.ats_se,
           "anos": res.anos_mean, "anos_se": res.anos_se,
           "censored": res.censored, "warnings": res.warnings})
    return EXIT_OK


def _table_scenarios(args):
    if args.rows:
        rows = _load_json(args.rows)
        if not isinstance(rows, list) or len(rows) < 1:
            raise ConfigError(f"{args.rows}: expected a list of [mean1, mean2] rows")
        ic_means = tuple(float(v) for v in rows[0])
        ic = scenario_params(args.family, args.scenario, ic_means, args.dependence, args.eta)
        out = []
        for r, means in enumerate(rows):
            means = tuple(float(v) for v in means)
            oc = scenario_params(args.family, args.scenario, means, args.dependence, args.eta)
            out.append(Scenario(args.family, args.scenario, ic, oc, ic_means, means, r))
        return out, None
    return (make_scenarios(args.family, args.scenario, args.dependence, args.eta),
            REFERENCE_ATS[args.family][args.scenario])


def _format_table(header, rows) -> str:
    cells = [header] + [[f"{v:.2f}" if isinstance(v, float) else str(v) for v in r]
                        for r in rows]
    widths = [max(len(c[k]) for c in cells) for k in range(len(header))]
    lines = ["  ".join(c[k].rjust(widths[k]) for k in range(len(header))) for c in cells]
    return "\n".join(lines) + "\n"


def cmd_table(args) -> int:
    scenarios, reference = _table_scenarios(args)
    ic = scenarios[0].ic
    seed = _resolve_seed(args.seed)
    if args.artifact and Path(args.artifact).exists():
        art = load_artifact(args.artifact)
        if params_digest(art.ic) != params_digest(ic):
            raise ConfigError("artifact in-control parameters do not match the scenario")
    else:
        log.info("building artifact with m=%d", args.m)
        art = build_stationary(ic, m=args.m, seed=seed)
    limits = {}
    for chart in CHARTS:
        try:
            limits[chart] = _chart_h(art, chart)
        except ConfigError:
            log.info("calibrating %s to ATS %g", chart, args.target)
            limits[chart] = find_h(scenarios[0], art, chart, target=args.target, seed=seed,
                                   jobs=args.jobs)
    if args.artifact:
        save_artifact(art, args.artifact)

    header = ["scenario", "row", "mean1", "mean2", "chart", "ats", "ats_se", "anos", "anos_se"]
    if reference:
        header.append("ref_ats")
    rows = []
    for sc in scenarios:
        for c, chart in enumerate(CHARTS):
            res = estimate_ats(sc, art, limits[chart], chart, args.R, seed, args.jobs)
            row = [f"{args.family}-{args.scenario}", sc.row, float(sc.oc_means[0]),
                   float(sc.oc_means[1]), chart, res.ats_mean, res.ats_se,
                   res.anos_mean, res.anos_se]
            if reference:
                row.append(float(reference[sc.row][c]))
            rows.append(row)

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    sys.stdout.write(f"# {args.family} scenario {args.scenario}  "
                     f"h_acusum={limits['acusum']:.6f}  h_shewhart={limits['shewhart']:.6f}  "
                     f"R={args.R}\n")
    sys.stdout.write(_format_table(header, rows))
    return EXIT_OK


def cmd_transform(args) -> int:
    if args.ic:
        ic = _load_params(args.ic)
    elif args.artifact:
        ic = load_artifact(args.artifact).ic
    else:
        raise ConfigError("transform needs --ic FILE or --artifact")
    tr = StreamTransformer(ic)
    out = open(args.output, "w") if args.output else sys.stdout
    t = 0
    try:
        with _open_in(args.input) as fh:
            for ev in read_events(fh, args.format):
                for obs in tr.push(ev):
                    t += 1
                    _emit({"t": t, "z": obs.z, "label": obs.label}, out)
    finally:
        if out is not sys.stdout:
            out.close()
    if tr.clamped:
        log.warning("%d values clamped at the largest representable z", tr.clamped)
    return EXIT_OK


def cmd_monitor(args) -> int:
    art = load_artifact(args.artifact)
    if args.ic and params_digest(_load_params(args.ic)) != params_digest(art.ic):
        raise ConfigError("artifact in-control parameters do not match --ic")
    if args.h is not None and args.target is not None:
        raise ConfigError("give at most one of --h and --target")
    if args.target is not None:
        stored = art.target if args.chart == "acusum" else art.meta.get("shewhart", {}).get("target")
        if not stored or stored.get("value") != args.target:
            raise ConfigError(f"artifact is not calibrated to target {args.target}; "
                              "run calibrate first")
    h = _chart_h(art, args.chart, args.h)

    initial = None
    if args.chart == "acusum" and args.init == "pool":
        if args.snapshot is not None:
            if not 0 <= args.snapshot < len(art.pool):
                raise ConfigError(f"--snapshot must lie in [0, {len(art.pool) - 1}]")
            k = args.snapshot
        else:
            k = int(np.random.default_rng(_resolve_seed(args.seed)).integers(len(art.pool)))
        initial = art.pool.get(k)
        log.info("starting from snapshot %d", k)

    mon = Monitor(art, h, args.chart, initial)
    alarmed = False
    with _open_in(args.input) as fh:
        for ev in read_events(fh, args.format):
            for rec in mon.push(ev):
                is_alarm = rec.get("alarm", False)
                if is_alarm or not args.alarms_only:
                    _emit(rec)
                alarmed = alarmed or is_alarm
            if alarmed and not args.continue_:
                break
    return EXIT_ALARM if alarmed else EXIT_OK


# --------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which would read as an alarm
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_family(p, required=False):
    p.add_argument("--family", choices=sorted(ROWS), required=required)
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4), required=required)
    p.add_argument("--dependence", type=float, default=None,
                   help="shared-shock share (MOBE/MOBW) or delta (Gumbel) for scenarios 2 and 4")
    p.add_argument("--eta", type=float, default=1.5, help="MOBW shape")


def _add_run(p):
    p.add_argument("--seed", type=int, default=None,
                   help="master seed; a fresh one is drawn and printed if omitted")
    p.add_argument("--jobs", type=_positive_int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tbemon", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a calibration artifact")
    p.add_argument("--ic", help="in-control parameter set (JSON)")
    _add_family(p)
    p.add_argument("--priors", help="prior configuration (JSON)")
    p.add_argument("--m", type=_positive_int, default=1_000_000)
    p.add_argument("--pool-size", type=_positive_int, default=5000)
    p.add_argument("--burn-in", type=int, default=100_000)
    p.add_argument("--spacing", type=_positive_int, default=100)
    p.add_argument("--reset-scope", choices=RESET_SCOPES, default="all")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("calibrate", help="find the control limit for a target")
    p.add_argument("--artifact", required=True)
    p.add_argument("--chart", choices=CHARTS, default="acusum")
    p.add_argument("--target", type=float, default=200.0)
    p.add_argument("--metric", choices=("ats", "anos", "arl"), default="ats")
    p.add_argument("--r-coarse", type=_positive_int, default=2000)
    p.add_argument("--r-fine", type=_positive_int, default=10_000)
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--max-obs", type=_positive_int, default=DEFAULT_MAX_OBS)
    p.add_argument("--out", help="output artifact (default: update in place)")
    _add_run(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="estimate run lengths")
    p.add_argument("--artifact", required=True)
    p.add_argument("--oc", help="out-of-control parameter set (JSON); default in control")
    p.add_argument("--chart", choices=CHARTS, default="acusum")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--R", type=_positive_int, default=10_000)
    p.add_argument("--max-obs", type=_positive_int, default=DEFAULT_MAX_OBS)
    _add_run(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table", help="ATS table for a scenario block")
    _add_family(p, required=True)
    p.add_argument("--rows", help="JSON list of [mean1, mean2], in-control row first")
    p.add_argument("--artifact", help="artifact to use (built and calibrated if missing)")
    p.add_argument("--m", type=_positive_int, default=1_000_000)
    p.add_argument("--target", type=float, default=200.0)
    p.add_argument("--R", type=_positive_int, default=10_000)
    p.add_argument("--csv")
    _add_run(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("transform", help="events or pairs to labelled z values")
    p.add_argument("--ic")
    p.add_argument("--artifact")
    p.add_argument("--input", default="-")
    p.add_argument("--format", choices=("auto", "ndjson", "csv"), default="auto")
    p.add_argument("--output")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("monitor", help="run a chart over an event stream")
    p.add_argument("--artifact", required=True)
    p.add_argument("--ic", help="expected in-control parameter set, checked against the artifact")
    p.add_argument("--chart", choices=CHARTS, default="acusum")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--target", type=float, default=None)
    p.add_argument("--input", default="-")
    p.add_argument("--format", choices=("auto", "ndjson", "csv"), default="auto")
    p.add_argument("--init", choices=("pool", "zero"), default="pool")
    p.add_argument("--snapshot", type=int, default=None, help="pool index of the start state")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--stop-on-alarm", dest="continue_", action="store_false",
                      help="stop after the first alarm (default)")
    mode.add_argument("--continue", dest="continue_", action="store_true",
                      help="keep monitoring after an alarm")
    p.add_argument("--alarms-only", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_monitor, continue_=False)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "metric", None) == "arl":
        args.metric = "anos"
    try:
        return args.func(args)
    except (ConfigError, ProtocolError, DomainError, CalibrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
