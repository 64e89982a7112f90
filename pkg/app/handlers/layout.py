from __future__ import annotations

import argparse
import sys

from app.handlers.common import RunOptions, read_configuration
from app.services.configuration import validate_configuration
from app.storage.codec import config_to_json
from app.storage.files import write_json_atomic
from app.utils.logging import update_context


def run_layout(opts: RunOptions) -> int:
    """Forest (or explicit cycles) -> validated explicit circle list."""
    c, form = read_configuration(opts)
    idx = validate_configuration(c)
    out = opts.output_or("configuration.json")
    update_context(output_path=str(out))
    write_json_atomic(out, config_to_json(c))
    print(f"{form}: {c.n} cycles, {idx.r} primary -> {out}", file=sys.stdout)
    return 0


def register(subparsers: argparse._SubParsersAction, parents) -> None:
    p = subparsers.add_parser("layout", parents=parents, help="lay out a nesting forest as explicit circles")
    p.set_defaults(handler=run_layout)
