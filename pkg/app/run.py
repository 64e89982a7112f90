from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import List, Optional, Sequence

from .config import ODE_TOL_RANGE, TOL_RANGE, check_tolerance, settings
from .handlers import build, layout, portrait, verify
from .handlers.common import RunOptions
from .middlewares.operation_logger import operation
from .services.construct import Mode
from .services.errors import ConfigurationError, RealizationError
from .utils.logging import log_event, setup_logging, stop_logging, update_context

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2
EXIT_INVALID = 3


class _Parser(argparse.ArgumentParser):
    # ошибки разбора аргументов - это тоже невалидный ввод, а не провал отчёта
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _tolerance(name: str, bounds):
    def parse(value: str) -> float:
        try:
            return check_tolerance(name, float(value), bounds)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", required=True, help="configuration or field JSON")
    common.add_argument("--output", "-o", help="output file (default under OUTPUT_DIR)")
    common.add_argument("--mode", choices=[m.value for m in Mode], help="construction mode (default full)")
    common.add_argument("--tol-ode", type=_tolerance("--tol-ode", ODE_TOL_RANGE), help="absolute ODE tolerance")
    common.add_argument("--tol-report", type=_tolerance("--tol-report", TOL_RANGE), help="report tolerance")
    common.add_argument(
        "--remark-optimization",
        action=argparse.BooleanOptionalAction,
        default=settings.REMARK_OPTIMIZATION,
        help="leave helper circles out of the tangential sums",
    )
    common.add_argument("--json-diagnostics", action="store_true", help="print errors as JSON on stdout")
    common.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=settings.DETERMINISTIC,
        help="byte-stable outputs (no timings in reports)",
    )

    parser = _Parser(prog="realize", description="Polynomial vector fields with prescribed limit cycles")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for handler in (build, verify, layout, portrait):
        handler.register(sub, [common])
    return parser


def _report_error(opts: RunOptions, exc: Exception) -> None:
    if isinstance(exc, RealizationError):
        payload = exc.to_dict()
    else:
        payload = {"error": type(exc).__name__, "message": str(exc)}
    if opts.json_diagnostics:
        print(json.dumps(payload, ensure_ascii=False), file=sys.stdout)
    else:
        print(f"error: {payload['message']}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    opts = RunOptions.from_args(args)

    saved = dataclasses.asdict(settings)
    if opts.tol_ode is not None:
        settings.TOL_ODE = opts.tol_ode
    if opts.tol_report is not None:
        settings.TOL_REPORT = opts.tol_report
    settings.DETERMINISTIC = opts.deterministic

    overrides: List[str] = [k for k in ("tol_ode", "tol_report") if getattr(opts, k) is not None]
    fields = {"input_path": str(opts.input), "args": {k: getattr(opts, k) for k in overrides} or None}
    try:
        with operation(opts.command, **fields):
            try:
                code = args.handler(opts)
            except (ConfigurationError, OSError) as exc:
                update_context(exit_code=EXIT_INVALID)
                log_event("input_invalid", level="ERROR", message=str(exc), err=str(exc))
                _report_error(opts, exc)
                raise
            except RealizationError as exc:
                update_context(exit_code=EXIT_ERROR)
                log_event("command_failed", level="ERROR", message=str(exc), err=str(exc))
                _report_error(opts, exc)
                raise
            update_context(exit_code=code)
            return code
    except (ConfigurationError, OSError):
        return EXIT_INVALID
    except RealizationError:
        return EXIT_ERROR
    finally:
        for key, value in saved.items():
            setattr(settings, key, value)


if __name__ == "__main__":
    exit_code = main()
    stop_logging()
    sys.exit(exit_code)
