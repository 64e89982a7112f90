from __future__ import annotations

import argparse
import sys
import time

from app.handlers.common import RunOptions, load_field
from app.services.verify import assemble_report
from app.storage.files import write_json_atomic
from app.utils.logging import complete_operation, log_event, update_context

EXIT_FAILED = 2


def run_verify(opts: RunOptions) -> int:
    started = time.perf_counter()
    v, aug = load_field(opts)
    report = assemble_report(v, aug)
    payload = report.to_dict()
    if not opts.deterministic:
        # время прогона портит побайтовое сравнение, поэтому только по запросу
        payload["elapsed_s"] = round(time.perf_counter() - started, 3)

    out = opts.output_or("report.json")
    update_context(output_path=str(out))
    write_json_atomic(out, payload)

    if report.passed:
        print(f"PASS {v.mode.value}: {len(report.cycles)} cycles -> {out}", file=sys.stdout)
        return 0

    failures = report.failures()
    log_event("report_failed", level="WARNING", message=", ".join(failures), failures=failures)
    print(f"FAIL {v.mode.value}: {', '.join(failures)} -> {out}", file=sys.stdout)
    update_context(exit_code=EXIT_FAILED)
    complete_operation(ok=False, err=f"{len(failures)} failed checks", exit_code=EXIT_FAILED)
    return EXIT_FAILED


def register(subparsers: argparse._SubParsersAction, parents) -> None:
    p = subparsers.add_parser("verify", parents=parents, help="verify a field file (or a configuration built on the fly)")
    p.set_defaults(handler=run_verify)
