import csv
import io
import json
import logging
import sys
from typing import List, Optional, Union

import logmuse
from pydantic import ValidationError
from ubiquerg import VersionInHelpParser, expandpath

from splaynetsim._version import __version__
from splaynetsim.const import (
    ARRIVAL_ALL_AT_ONCE,
    ARRIVAL_POISSON,
    CSV_COLUMNS,
    DEFAULT_DSN,
    DEFAULT_SEED,
    EXIT_DETECTOR,
    EXIT_MISMATCH,
    EXIT_OK,
    EXIT_USAGE,
    OUTPUT_FORMATS,
    PKG_NAME,
    TERMINATION_DETECTOR,
)
from splaynetsim.exceptions import ResultStoreError, SplayNetSimError
from splaynetsim.models import DetectorFlags, ExperimentSpec, RunReport, SimConfig
from splaynetsim.modules.experiment import with_aggregates
from splaynetsim.splaynetsim import SplayNetAgent
from splaynetsim.utils import parse_int_list, parse_seeds, parse_workload

_LOGGER = logging.getLogger(PKG_NAME)

DEFAULT_REQUESTS_FRAC = 0.25


def _add_run_options(parser: VersionInHelpParser) -> None:
    parser.add_argument(
        "--nodes", required=True, help="Tree size; comma separated list for sweeps"
    )
    parser.add_argument("--requests", type=int, help="Requests per run (m)")
    parser.add_argument(
        "--requests-frac",
        type=float,
        default=DEFAULT_REQUESTS_FRAC,
        help=f"Requests per run as a fraction of n, used without --requests "
        f"[Default: {DEFAULT_REQUESTS_FRAC}]",
    )
    parser.add_argument(
        "--workload",
        default="uniform",
        help="uniform | zipf:<alpha> | product:<file> | trace:<file> [Default: uniform]",
    )
    parser.add_argument(
        "--arrival",
        choices=[ARRIVAL_ALL_AT_ONCE, ARRIVAL_POISSON],
        default=ARRIVAL_ALL_AT_ONCE,
        help=f"Arrival process of requests [Default: {ARRIVAL_ALL_AT_ONCE}]",
    )
    parser.add_argument(
        "--rate", type=float, default=1.0, help="Poisson arrivals per slot [Default: 1.0]"
    )
    parser.add_argument(
        "--seed", type=int, default=DEFAULT_SEED, help=f"Seed [Default: {DEFAULT_SEED}]"
    )
    parser.add_argument("--seeds", help="Seeds of a sweep: '1,2,3' or '1..20'")
    parser.add_argument(
        "--max-timeslots", type=int, help="Slot budget [Default: grows with n and m]"
    )
    parser.add_argument(
        "--lockstep-rounds",
        action="store_true",
        help="Generate rotation requests only at global round barriers",
    )
    parser.add_argument(
        "--super-rounds", type=int, default=1, help="Number of request batches [Default: 1]"
    )
    parser.add_argument(
        "--detectors",
        choices=["on", "off"],
        default="on",
        help="Runtime invariant detectors [Default: on]",
    )
    parser.add_argument("--out", help="Output file [Default: standard output]")
    parser.add_argument(
        "--format",
        choices=OUTPUT_FORMATS,
        help="Output format [Default: from the --out suffix, else csv]",
    )
    parser.add_argument(
        "--log",
        choices=["none", "events"],
        default="none",
        help="Write the protocol event log next to --out [Default: none]",
    )
    parser.add_argument(
        "--dsn",
        default=DEFAULT_DSN,
        help=f"Result store URL used with --store [Default: {DEFAULT_DSN}]",
    )
    parser.add_argument(
        "--store", action="store_true", help="Keep the run reports in the result store"
    )


def build_argparser() -> VersionInHelpParser:
    """
    Build the command line parser with the run, sweep and verify commands
    """
    parser = VersionInHelpParser(
        prog=PKG_NAME,
        description="Simulator of concurrent self-adjusting SplayNet tree networks",
        version=__version__,
    )
    subparsers = parser.add_subparsers(dest="command")

    run_parser = subparsers.add_parser("run", help="Run the protocol once")
    sweep_parser = subparsers.add_parser("sweep", help="Run a sweep over tree sizes and seeds")
    for sub in (run_parser, sweep_parser):
        _add_run_options(sub)

    verify_parser = subparsers.add_parser(
        "verify", help="Check single splays against the reference splay"
    )
    verify_parser.add_argument("--nodes", required=True, help="Tree size(s), comma separated")
    verify_parser.add_argument(
        "--exhaustive-pairs", action="store_true", help="Check every ordered pair"
    )
    verify_parser.add_argument(
        "--samples",
        type=int,
        default=1000,
        help="Random pairs checked without --exhaustive-pairs [Default: 1000]",
    )
    verify_parser.add_argument(
        "--seed", type=int, default=DEFAULT_SEED, help=f"Seed [Default: {DEFAULT_SEED}]"
    )

    for sub in (run_parser, sweep_parser, verify_parser):
        logmuse.add_logging_options(sub)
    return parser


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return f"{value:.6f}".rstrip("0").rstrip(".")
    return str(value)


def format_csv(reports: List[RunReport]) -> str:
    """
    CSV with the fixed column order; an empty list gives the header only
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        writer.writerow([_cell(getattr(report, column)) for column in CSV_COLUMNS])
    return buffer.getvalue()


def format_json(reports: Union[RunReport, List[RunReport]]) -> str:
    if isinstance(reports, RunReport):
        content = reports.model_dump(mode="json")
    else:
        content = [report.model_dump(mode="json") for report in reports]
    return json.dumps(content, indent=2) + "\n"


def emit_results(
    reports: Union[RunReport, List[RunReport]], fmt: str = "csv", path: Optional[str] = None
) -> str:
    """
    Write reports as CSV or JSON.

    :param reports: one report (JSON object) or a list of reports (rows / JSON list)
    :param fmt: 'csv' or 'json'
    :param path: output file [Default: standard output]
    :return: the written text
    """
    if fmt not in OUTPUT_FORMATS:
        raise ValueError(f"Unknown output format '{fmt}', expected one of {OUTPUT_FORMATS}")
    if fmt == "csv":
        rows = [reports] if isinstance(reports, RunReport) else reports
        text = format_csv(rows)
    else:
        text = format_json(reports)
    if path is None:
        sys.stdout.write(text)
        return text
    with open(expandpath(path), "w") as out_file:
        out_file.write(text)
    _LOGGER.info(f"Results written to '{path}'")
    return text


def _output_format(args) -> str:
    if args.format:
        return args.format
    if args.out and args.out.endswith(".json"):
        return "json"
    return "csv"


def _requests_for(args, n: int) -> int:
    if args.requests is not None:
        return args.requests
    return max(1, round(args.requests_frac * n))


def _detectors(args) -> DetectorFlags:
    enabled = args.detectors == "on"
    return DetectorFlags(
        deadlock=enabled,
        loop=enabled,
        buffer=enabled,
        invariants=enabled,
        stall=enabled,
        locality=enabled,
    )


def _events_path(args) -> str:
    return f"{args.out}.events.log" if args.out else "events.log"


def _run(args) -> int:
    nodes = parse_int_list(args.nodes)
    if len(nodes) != 1:
        raise ValueError("run takes a single tree size, use sweep for several")
    n = nodes[0]
    config = SimConfig(
        n=n,
        seed=args.seed,
        workload=parse_workload(args.workload, _requests_for(args, n), args.arrival, args.rate),
        max_timeslots=args.max_timeslots,
        detectors=_detectors(args),
        lockstep_rounds=args.lockstep_rounds,
        super_rounds=args.super_rounds,
        log_events=args.log == "events",
    )
    agent = SplayNetAgent(dsn=args.dsn)
    result = agent.run(config)
    report = agent.analysis.summarize(result)
    if args.store:
        agent.results.add(report)
    if config.log_events:
        result.log.write(expandpath(_events_path(args)))
    emit_results(report, _output_format(args), args.out)
    if result.termination == TERMINATION_DETECTOR:
        _LOGGER.error(f"Detector fired: {result.diagnostic} (results: {args.out or 'stdout'})")
        return EXIT_DETECTOR
    return EXIT_OK


def _sweep(args) -> int:
    spec = ExperimentSpec(
        nodes=parse_int_list(args.nodes),
        seeds=parse_seeds(args.seeds) or [args.seed],
        workload=parse_workload(args.workload, args.requests or 1, args.arrival, args.rate),
        requests_frac=None if args.requests is not None else args.requests_frac,
        lockstep_rounds=args.lockstep_rounds,
        super_rounds=args.super_rounds,
        max_timeslots=args.max_timeslots,
        detectors=_detectors(args),
    )
    agent = SplayNetAgent(dsn=args.dsn)
    reports = agent.sweep(spec, store=args.store)
    emit_results(with_aggregates(reports), _output_format(args), args.out)
    fired = [report for report in reports if report.termination == TERMINATION_DETECTOR]
    if fired:
        _LOGGER.error(
            f"Detector fired in {len(fired)} runs, first: {fired[0].diagnostic} "
            f"(results: {args.out or 'stdout'})"
        )
        return EXIT_DETECTOR
    return EXIT_OK


def _verify(args) -> int:
    agent = SplayNetAgent()
    failed = 0
    for n in parse_int_list(args.nodes):
        report = agent.verify(n, args.exhaustive_pairs, args.samples, args.seed)
        passed = report.checked - len(report.mismatches)
        print(f"n={n}: {passed} passed, {len(report.mismatches)} failed")
        for diagnostic in report.diagnostics:
            print(f"  {diagnostic}")
        failed += len(report.mismatches)
    return EXIT_MISMATCH if failed else EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command line entry point.

    :param argv: arguments [Default: sys.argv]
    :return: exit code (0 ok, 1 oracle mismatch, 2 invalid input, 3 detector fired)
    """
    parser = build_argparser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    global _LOGGER
    _LOGGER = logmuse.logger_via_cli(args, name=PKG_NAME, make_root=True)

    commands = {"run": _run, "sweep": _sweep, "verify": _verify}
    try:
        return commands[args.command](args)
    except ValidationError as err:
        _LOGGER.error(f"Invalid configuration: {err}")
    except (OSError, ResultStoreError) as err:
        _LOGGER.error(f"File or result store error: {err}")
    except (ValueError, SplayNetSimError) as err:
        _LOGGER.error(f"Invalid input: {err}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
