"""
Command line entry point: ingestion, evaluation, identity queries, fleet audits and scenario runs.

The ledger is read from --ledger PATH ('-' for standard input), else from $IDEM_LEDGER, else from standard input.
Time flags take integer ticks or ISO-8601 instants with a UTC offset.
"""

import argparse
import logging
import os
import sys
from enum import IntEnum
from pathlib import Path
from typing import List, Optional, Sequence

from idem.exceptions import IdemException, LedgerError
from idem.identity import (
    check_diachronic_pointwise,
    check_persistence_path,
    check_synchronic,
    partition_fleet,
    persistence_segments,
)
from idem.ledger import LedgerFile, append_to_path, parse_event_document, read_ledger
from idem.model import KindPath, Timestamp, canonical_decimal
from idem.scenario import BUILTIN_NAMES, builtin_scenario, builtin_scenarios, run_scenario
from idem.tau import tau_at, tau_trajectory

logger = logging.getLogger("IDEM")

LEDGER_ENV = "IDEM_LEDGER"


class ExitStatus(IntEnum):
    SUCCESS = 0
    NEGATIVE = 1
    USAGE = 2
    DATA_ERROR = 3


class UsageError(Exception):
    pass


def _emit(lines: Sequence[str]) -> None:
    for line in lines:
        print(line)


def _table(header: Sequence[str], rows: List[Sequence[str]]) -> List[str]:
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]

    return ["  ".join(str(cell).ljust(width) for cell, width in zip(row, widths)).rstrip() for row in [header, *rows]]


def _ledger(args: argparse.Namespace) -> LedgerFile:
    path = args.ledger or os.environ.get(LEDGER_ENV) or "-"

    ledger = read_ledger(sys.stdin.buffer.read() if path == "-" else Path(path).read_bytes())
    logger.debug("Read %s records of %s systems from %s", len(ledger.records), len(ledger.histories()), path)

    return ledger


def _time(ledger: LedgerFile, text: Optional[str], flag: str) -> Timestamp:
    if text is None:
        raise UsageError(f"{flag} is required")

    try:
        return ledger.header.parse_time(text)
    except ValueError as e:
        raise UsageError(f"{flag}: {e}") from e


def cmd_ingest(args: argparse.Namespace) -> int:
    path = args.ledger or os.environ.get(LEDGER_ENV)
    if not path or path == "-":
        raise UsageError("ingest needs a ledger file, pass --ledger PATH or set IDEM_LEDGER")

    system_id, event = parse_event_document(args.event)
    updated = append_to_path(path, system_id, event)
    print(len(updated.records))

    return ExitStatus.SUCCESS


def cmd_tau(args: argparse.Namespace) -> int:
    ledger = _ledger(args)
    h = ledger.history(args.system)

    if args.at is not None:
        if args.start is not None or args.end is not None:
            raise UsageError("--at cannot be combined with --from/--to")

        print(canonical_decimal(tau_at(h, _time(ledger, args.at, "--at"))))
        return ExitStatus.SUCCESS

    trajectory = tau_trajectory(h, _time(ledger, args.start, "--from"), _time(ledger, args.end, "--to"))
    rows = [[str(piece.start), str(piece.end), canonical_decimal(piece.level)] for piece in trajectory.pieces]

    if args.format == "lines":
        _emit([" ".join(row) for row in rows])
    else:
        _emit(_table(["from", "to", "level"], rows))

    return ExitStatus.SUCCESS


def cmd_identity(args: argparse.Namespace) -> int:
    ledger = _ledger(args)
    x = ledger.history(args.x)
    synchronic = args.y is not None or args.at is not None
    diachronic = args.t1 is not None or args.t2 is not None

    if synchronic == diachronic:
        raise UsageError("pass either --y with --at, or --t1 with --t2")

    if synchronic:
        if args.path:
            raise UsageError("--path only applies to --t1/--t2 queries")
        if args.y is None:
            raise UsageError("--y is required with --at")

        verdict = check_synchronic(x, ledger.history(args.y), _time(ledger, args.at, "--at"), args.kind)
    else:
        t1, t2 = _time(ledger, args.t1, "--t1"), _time(ledger, args.t2, "--t2")
        check = check_persistence_path if args.path else check_diachronic_pointwise
        verdict = check(x, t1, t2, args.kind)

    print(verdict)
    if args.format == "text" and verdict.details:
        print(f"  {verdict.details}")

    if args.strict and not verdict.identical:
        return ExitStatus.NEGATIVE

    return ExitStatus.SUCCESS


def cmd_partition(args: argparse.Namespace) -> int:
    ledger = _ledger(args)
    partition = partition_fleet(ledger.histories(), _time(ledger, args.at, "--at"), args.kind)
    excluded = sorted(partition.excluded.items())

    if args.format == "lines":
        _emit([" ".join(["class", str(index), *members]) for index, members in enumerate(partition.classes)])
        _emit([f"excluded {system_id} {reason}" for system_id, reason in excluded])
        return ExitStatus.SUCCESS

    print(partition)
    if excluded:
        print("excluded: " + ", ".join(f"{system_id} ({reason})" for system_id, reason in excluded))

    return ExitStatus.SUCCESS


def cmd_segments(args: argparse.Namespace) -> int:
    ledger = _ledger(args)
    start, end = _time(ledger, args.start, "--from"), _time(ledger, args.end, "--to")
    segments = persistence_segments(ledger.history(args.system), start, end, args.kind)
    rows = [
        [str(segment.start), str(segment.end), canonical_decimal(segment.level), str(segment.incarnation_index)]
        for segment in segments
    ]

    if args.format == "lines":
        _emit([" ".join(row) for row in rows])
    else:
        _emit(_table(["from", "to", "level", "incarnation"], rows))

    return ExitStatus.SUCCESS


def cmd_scenario_run(args: argparse.Namespace) -> int:
    if args.all == (args.name is not None):
        raise UsageError("pass a scenario name or --all")

    scenarios = builtin_scenarios() if args.all else [builtin_scenario(args.name)]
    passed = True

    for scenario in scenarios:
        report = run_scenario(scenario)
        passed = passed and report.passed

        if args.format == "lines":
            _emit([f"{scenario.name} {outcome}" for outcome in report.outcomes])
            continue

        failures = sum(not outcome.passed for outcome in report.outcomes)
        print(f"{scenario.name}: {len(report.outcomes) - failures}/{len(report.outcomes)} queries passed")
        _emit([f"  {outcome}" for outcome in report.outcomes if not outcome.passed or args.verbose])

    return ExitStatus.SUCCESS if passed else ExitStatus.NEGATIVE


def cmd_scenario_list(args: argparse.Namespace) -> int:
    _emit(BUILTIN_NAMES)

    return ExitStatus.SUCCESS


def _kind(text: str) -> KindPath:
    try:
        return KindPath.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    common.add_argument("--format", choices=["text", "lines"], default="text", help="Output format")

    reading = argparse.ArgumentParser(add_help=False, parents=[common])
    reading.add_argument("--ledger", default=None, help=f"Ledger file, '-' for standard input (default: ${LEDGER_ENV})")

    parser = argparse.ArgumentParser(prog="idem", description="Identity criteria for AI system kinds.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    ingest = sub.add_parser("ingest", parents=[reading], help="Append one event document to a ledger")
    ingest.add_argument("--event", required=True, help="Event document in the ledger record format")
    ingest.set_defaults(func=cmd_ingest)

    tau = sub.add_parser("tau", parents=[reading], help="Trustworthiness level at a time or over an interval")
    tau.add_argument("--system", required=True)
    tau.add_argument("--at", default=None)
    tau.add_argument("--from", dest="start", default=None)
    tau.add_argument("--to", dest="end", default=None)
    tau.set_defaults(func=cmd_tau)

    identity = sub.add_parser("identity", parents=[reading], help="Synchronic or diachronic identity verdict")
    identity.add_argument("--kind", required=True, type=_kind)
    identity.add_argument("--x", required=True)
    identity.add_argument("--y", default=None)
    identity.add_argument("--at", default=None)
    identity.add_argument("--t1", default=None)
    identity.add_argument("--t2", default=None)
    identity.add_argument("--path", action="store_true", help="Require persistence along the whole interval")
    identity.add_argument("--strict", action="store_true", help="Exit with 1 on a negative verdict")
    identity.set_defaults(func=cmd_identity)

    partition = sub.add_parser("partition", parents=[reading], help="Partition the fleet into identity classes")
    partition.add_argument("--kind", required=True, type=_kind)
    partition.add_argument("--at", required=True)
    partition.set_defaults(func=cmd_partition)

    segments = sub.add_parser("segments", parents=[reading], help="Persistence segments of one system")
    segments.add_argument("--system", required=True)
    segments.add_argument("--from", dest="start", required=True)
    segments.add_argument("--to", dest="end", required=True)
    segments.add_argument("--kind", required=True, type=_kind)
    segments.set_defaults(func=cmd_segments)

    scenario = sub.add_parser("scenario", help="Builtin scenarios")
    scenario_sub = scenario.add_subparsers(dest="scenario_cmd", required=True)

    run = scenario_sub.add_parser("run", parents=[common], help="Run builtin scenarios and report every query")
    run.add_argument("name", nargs="?", default=None, help=f"One of {', '.join(BUILTIN_NAMES)}")
    run.add_argument("--all", action="store_true")
    run.set_defaults(func=cmd_scenario_run)

    listing = scenario_sub.add_parser("list", parents=[common], help="List builtin scenario names")
    listing.set_defaults(func=cmd_scenario_list)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ExitStatus.SUCCESS if not e.code else ExitStatus.USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )

    try:
        return int(args.func(args))
    except UsageError as e:
        print(f"{parser.prog} {args.cmd}: error: {e}", file=sys.stderr)
        return ExitStatus.USAGE
    except LedgerError as e:
        print(f"error: {e.rule}: {e}", file=sys.stderr)
        return ExitStatus.DATA_ERROR
    except IdemException as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return ExitStatus.DATA_ERROR
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return ExitStatus.DATA_ERROR
