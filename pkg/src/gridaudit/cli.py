"""Command-line surface: validate, audit, extract and faultlab subcommands.

Exit codes: 0 = pass, 1 = model mismatch (validation failed or the audit
found culprits), 2 = usage or input error. Every error path prints a single
machine-parsable line prefixed "error:" to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audit import AuditReport, audit, load_binding_spec, validate
from .compare import DEFAULT_TOLERANCE, ToleranceSpec
from .errors import GridAuditError
from .faultlab import build_consistent_gridbook, diff_cells, inject, load_fault_spec
from .grid import open_workbook, parse_a1, read_range, read_series, resolve_name
from .grid import CellRef, RangeRef, save_gridbook_json
from .audit import resolve_inputs

EXIT_PASS = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2


def _exit_code(report: AuditReport) -> int:
    if report.verdict == "error":
        return EXIT_USAGE
    if report.verdict == "fail" or report.culprits:
        return EXIT_MISMATCH
    return EXIT_PASS


def _pick_format(requested: str | None) -> str:
    if requested is not None:
        return requested
    return "text" if sys.stdout.isatty() else "json"


def _tolerance_from_args(args: argparse.Namespace) -> ToleranceSpec | None:
    if args.rtol is None and args.atol is None:
        return None
    return ToleranceSpec(
        rtol=args.rtol if args.rtol is not None else DEFAULT_TOLERANCE.rtol,
        atol=args.atol if args.atol is not None else DEFAULT_TOLERANCE.atol,
    )


def _render_text(report: AuditReport, localized: bool) -> str:
    lines: list[str] = []
    if localized:
        lines.append(f"{'node':<12} {'bound':<6} {'status':<7} mismatch")
        for n in report.nodes:
            bound = "yes" if n.bound else "no"
            if n.passed is None:
                status, frac = "-", "-"
            else:
                status = "pass" if n.passed else "fail"
                frac = f"{n.mismatch_fraction:.4f}"
            lines.append(f"{n.node:<12} {bound:<6} {status:<7} {frac}")
        for c in report.culprits:
            label = "culprit (upstream unverified)" if c.upstream_unverified else "culprit"
            errors = ", ".join(c.error_ranges) or "-"
            correct = ", ".join(c.correct_ranges) or "-"
            lines.append(f"{label}: {c.node}  error: {errors}  correct: {correct}")
        lines.append(f"verdict: {report.verdict}")
    else:
        lines.append("PASS" if report.verdict == "pass" else "FAIL")
    return "\n".join(lines)


def _emit_report(report: AuditReport, fmt: str, localized: bool) -> int:
    if report.verdict == "error":
        print(f"error: {report.error}", file=sys.stderr)
        return EXIT_USAGE
    if fmt == "json":
        print(report.to_json())
    else:
        print(_render_text(report, localized))
    return _exit_code(report)


def cmd_validate(args: argparse.Namespace) -> int:
    spec = load_binding_spec(args.spec)
    book = open_workbook(spec.workbook_path())
    report = validate(book, spec, default_tol=_tolerance_from_args(args))
    return _emit_report(report, _pick_format(args.format), localized=False)


def cmd_audit(args: argparse.Namespace) -> int:
    spec = load_binding_spec(args.spec)
    book = open_workbook(spec.workbook_path())
    report = audit(book, spec, default_tol=_tolerance_from_args(args))
    return _emit_report(report, _pick_format(args.format), localized=True)


def cmd_extract(args: argparse.Namespace) -> int:
    book = open_workbook(args.workbook)
    target = args.range
    try:
        ref = parse_a1(target)
    except GridAuditError:
        ref = resolve_name(book, target)
    if isinstance(ref, RangeRef) and ref.size == 1:
        ref = ref.start
    if isinstance(ref, CellRef):
        if args.expand is not None:
            orientation = "col" if args.expand == "down" else "row"
            series = read_series(book, ref, orientation)
        else:
            series = read_range(book, RangeRef(ref, ref))
    else:
        if args.expand is not None:
            raise GridAuditError("--expand only applies to a single-cell reference")
        series = read_range(book, ref)
    for value in series:
        print(repr(value))
    return EXIT_PASS


def cmd_faultlab(args: argparse.Namespace) -> int:
    spec = load_binding_spec(args.spec)
    fault = load_fault_spec(args.fault)
    workbook_path = spec.workbook_path()
    source_book = open_workbook(workbook_path) if workbook_path.is_file() else None
    inputs = resolve_inputs(source_book, spec)
    pristine = build_consistent_gridbook(inputs, spec)
    tampered = inject(pristine, fault, spec)
    out = Path(args.out)
    save_gridbook_json(tampered, out)
    cells = diff_cells(pristine, tampered)
    truth = {
        "fault": fault.to_dict(),
        "tampered_cells": [ref.a1() for ref in cells],
    }
    truth_path = out.with_name(out.stem + ".truth" + out.suffix)
    truth_path.write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out} and {truth_path} ({len(cells)} cells tampered)")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridaudit",
        description="Audit workbook calculations against a trusted model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser(
        "validate", help="compare only the terminal node; pass/fail"
    )
    p_validate.add_argument("--spec", required=True, help="binding spec JSON file")
    p_validate.add_argument("--rtol", type=float, default=None,
                            help="relative tolerance (default 1e-5)")
    p_validate.add_argument("--atol", type=float, default=None,
                            help="absolute tolerance (default 1e-8)")
    p_validate.add_argument("--format", choices=("text", "json"), default=None)
    p_validate.set_defaults(func=cmd_validate)

    p_audit = sub.add_parser(
        "audit", help="compare every bound node and localize failures"
    )
    p_audit.add_argument("--spec", required=True, help="binding spec JSON file")
    p_audit.add_argument("--rtol", type=float, default=None)
    p_audit.add_argument("--atol", type=float, default=None)
    p_audit.add_argument("--format", choices=("text", "json"), default=None)
    p_audit.set_defaults(func=cmd_audit)

    p_extract = sub.add_parser(
        "extract", help="print a numeric series from a workbook"
    )
    p_extract.add_argument("--workbook", required=True)
    p_extract.add_argument("--range", required=True,
                           help="A1 reference or defined name")
    p_extract.add_argument("--expand", choices=("right", "down"), default=None,
                           help="expand from a single-cell anchor")
    p_extract.set_defaults(func=cmd_extract)

    p_fault = sub.add_parser(
        "faultlab", help="inject a fault into a consistent synthetic gridbook"
    )
    p_fault.add_argument("--spec", required=True, help="binding spec JSON file")
    p_fault.add_argument("--fault", required=True, help="fault spec JSON file")
    p_fault.add_argument("--out", required=True, help="tampered gridbook-JSON path")
    p_fault.set_defaults(func=cmd_faultlab)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GridAuditError, FileNotFoundError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
