from __future__ import annotations

import argparse
import sys

from app.handlers.common import RunOptions, load_field
from app.services.portrait import render_portrait
from app.storage.files import write_text_atomic
from app.utils.logging import log_event, update_context


def run_portrait(opts: RunOptions) -> int:
    v, _ = load_field(opts)
    portrait = render_portrait(v)
    out = opts.output_or("portrait.svg")
    update_context(output_path=str(out))
    write_text_atomic(out, portrait.svg)
    if portrait.skipped:
        log_event("seeds_skipped", level="WARNING", message=f"{len(portrait.skipped)} seeds skipped")
    print(f"{len(portrait.streamlines)} streamlines -> {out}", file=sys.stdout)
    return 0


def register(subparsers: argparse._SubParsersAction, parents) -> None:
    p = subparsers.add_parser("portrait", parents=parents, help="render an SVG phase portrait")
    p.set_defaults(handler=run_portrait)
