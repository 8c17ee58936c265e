"""Command-line interface: ``gcts <command> --case PATH [options]``.

Exit codes: 0 success, 1 validation error, 2 infeasible, 3 prices not
certified (non-unique multipliers), 4 internal failure or failed check.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .casefile import BUILTIN, load_case
from .errors import GctsError
from .pipeline import EXIT_INTERNAL, EXIT_OK, PipelineOptions, ReportBundle, run_pipeline
from .report import SECTIONS, emit_report

log = logging.getLogger("gcts")

COMMANDS = {
    "clear": "clear the interchange market and print dispatch, bids, flows and prices",
    "recover": "recover prices from marginal-unit rows (add --distributed for the consensus solver)",
    "settle": "settle the market and split congestion rents among areas and bids",
    "verify": "run every consistency check; nonzero exit if one fails",
    "sweep": "cost gap to joint dispatch along a shrinking price-gap schedule",
    "report": "all of the above",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcts", description="Multi-area interchange clearing and rent settlement.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--case", required=True, help=f"case file path or built-in name ({', '.join(BUILTIN)})")
        p.add_argument("--scenario", help="named scenario block of the case file")
        p.add_argument("--ref-bus", type=int, help="reference bus (must be a boundary bus)")
        p.add_argument("--tol", type=float, default=1e-6, help="verification tolerance (default 1e-6)")
        p.add_argument("--distributed", action="store_true", help="also run the distributed price recovery")
        p.add_argument("--format", choices=("table", "machine"), default="table", help="output format")
        p.add_argument("--out", help="write the report to this path instead of standard output")
        p.add_argument("-v", "--verbose", action="count", default=0, help="more log output")
    return parser


def _options(args) -> PipelineOptions:
    cmd = args.command
    return PipelineOptions(
        ref_bus=args.ref_bus,
        tol=args.tol,
        distributed=args.distributed,
        check_sensitivities=cmd in ("settle", "verify", "report"),
        sweep=cmd in ("sweep", "report"),
        jed=cmd in ("clear", "sweep", "report", "verify"),
    )


def _exit_code(command: str, bundle: ReportBundle) -> int:
    code = bundle.exit_code
    if code == EXIT_OK and command in ("verify", "report") and not bundle.verified:
        return EXIT_INTERNAL
    if command in ("clear", "sweep") and "recover" in bundle.errors and len(bundle.errors) == 1:
        return EXIT_OK  # certification is not part of these commands
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2) if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        case = load_case(args.case, args.scenario)
        bundle = run_pipeline(case, _options(args))
        text = emit_report(bundle, args.format, args.out, SECTIONS[args.command])
    except GctsError as exc:
        print(f"gcts: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - last-resort guard
        log.exception("unexpected failure")
        print(f"gcts: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if args.out is None:
        sys.stdout.write(text)
    for section, err in sorted(bundle.errors.items()):
        print(f"gcts: {section}: {err}", file=sys.stderr)
    return _exit_code(args.command, bundle)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
