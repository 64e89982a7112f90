from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Tuple

from app.config import settings
from app.services.configuration import AugmentedConfiguration, Configuration
from app.services.construct import Mode, VectorField, build_field
from app.services.errors import InvalidInput
from app.storage.codec import FIELD_FORMAT, config_from_json, field_from_json
from app.storage.files import read_json
from app.utils.logging import log_event, update_context

log = logging.getLogger(__name__)

DEFAULT_MODE = Mode.FULL


@dataclass
class RunOptions:
    command: str
    input: Path
    output: Optional[Path] = None
    mode: Optional[Mode] = None
    tol_ode: Optional[float] = None
    tol_report: Optional[float] = None
    remark_optimization: bool = False
    json_diagnostics: bool = False
    deterministic: bool = True

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunOptions":
        return cls(
            command=args.command,
            input=Path(args.input),
            output=Path(args.output) if args.output else None,
            mode=Mode.parse(args.mode) if args.mode else None,
            tol_ode=args.tol_ode,
            tol_report=args.tol_report,
            remark_optimization=args.remark_optimization,
            json_diagnostics=args.json_diagnostics,
            deterministic=args.deterministic,
        )

    def output_or(self, name: str) -> Path:
        return self.output if self.output is not None else settings.OUTPUT_DIR / name


def is_field_file(data: Any) -> bool:
    return isinstance(data, dict) and data.get("format") == FIELD_FORMAT


def read_configuration(opts: RunOptions) -> Tuple[Configuration, str]:
    data = read_json(opts.input)
    if is_field_file(data):
        raise InvalidInput(f"{opts.input} is a field file, a configuration is expected", path=str(opts.input))
    c, form = config_from_json(data)
    update_context(cycles=c.n)
    return c, form


def load_field(opts: RunOptions) -> Tuple[VectorField, Optional[AugmentedConfiguration]]:
    """Field file as is, or a configuration built on the fly (default mode full)."""
    data = read_json(opts.input)
    if is_field_file(data):
        v, aug = field_from_json(data)
        if opts.mode is not None and opts.mode is not v.mode:
            log.warning("--mode %s ignored: %s holds a %s field", opts.mode.value, opts.input, v.mode.value)
        update_context(mode=v.mode.value, cycles=v.base_count)
        log_event("field_loaded", message=f"{v.mode.value} field from {opts.input}")
        return v, aug
    c, _ = config_from_json(data)
    mode = opts.mode or DEFAULT_MODE
    update_context(mode=mode.value, cycles=c.n)
    return build_field(c, mode, remark=opts.remark_optimization)
