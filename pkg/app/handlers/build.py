from __future__ import annotations

import argparse
import sys

from app.handlers.common import RunOptions, load_field
from app.storage.codec import field_to_json
from app.storage.files import write_json_atomic
from app.utils.logging import log_event, update_context


def run_build(opts: RunOptions) -> int:
    v, aug = load_field(opts)
    out = opts.output_or("field.json")
    update_context(output_path=str(out))
    write_json_atomic(out, field_to_json(v, aug))

    line = f"{v.mode.value}: degree {v.degree} (bound {v.degree_bound}), {len(v.circles)} circles"
    if aug is not None:
        line += f", N={aug.N}, epsilon={aug.epsilon}"
    log_event("field_written", message=f"{line} -> {out}")
    print(f"{line} -> {out}", file=sys.stdout)
    return 0


def register(subparsers: argparse._SubParsersAction, parents) -> None:
    p = subparsers.add_parser("build", parents=parents, help="build a realizing vector field from a configuration")
    p.set_defaults(handler=run_build)
