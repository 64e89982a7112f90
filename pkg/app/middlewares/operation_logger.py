from __future__ import annotations

import uuid
from contextlib import contextmanager
from typing import Any, Iterator

from app.utils.logging import (
    OperationContext,
    complete_operation,
    get_operation_context,
    log_event,
    log_exception,
    reset_operation_context,
    start_operation,
)


@contextmanager
def operation(command: str, **fields: Any) -> Iterator[OperationContext]:
    """Brackets one CLI command: command_received ... command_finished.

    The handler may finish the operation itself (e.g. with a failed report);
    otherwise it is closed here as ok, or as failed when an exception escapes.
    """
    correlation = str(uuid.uuid4())
    ctx = start_operation(correlation_id=correlation, command=command, **fields)
    log_event("command_received", message=f"{command} started", correlation_id=correlation)
    try:
        yield ctx
    except BaseException as exc:
        ctx = get_operation_context()
        if ctx and ctx.ok is None:
            log_exception("exception", exc)
            complete_operation(ok=False, err=f"{type(exc).__name__}: {exc}", force=True, exit_code=ctx.exit_code)
        raise
    else:
        ctx = get_operation_context()
        if ctx and ctx.ok is None:
            complete_operation(ok=True, exit_code=ctx.exit_code)
    finally:
        reset_operation_context()
