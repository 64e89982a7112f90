from __future__ import annotations

import json
import logging
import os
import queue
import sys
import time
import uuid
from contextvars import ContextVar
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from logging import Logger
from logging.handlers import QueueHandler, QueueListener, RotatingFileHandler
from pathlib import Path
from typing import Any, Dict

LOGGER_NAME = "realize"
LOG_FILE = "realize.log"
MAX_ERR_TEXT = 2048

# служебные поля контекста в payload не попадают
_PRIVATE = frozenset({"correlation_id", "started_at"})


def _truncate(value: str | None, *, limit: int) -> str | None:
    if value is None or len(value) <= limit:
        return value
    return value[: limit - 1] + "…"


def _iso_ts() -> str:
    return datetime.now(timezone.utc).isoformat()


def _env_flag(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in {"1", "true", "yes", "on"}


@dataclass
class OperationContext:
    """State of one CLI command, merged into every event it logs."""

    correlation_id: str
    started_at: float = field(default_factory=time.perf_counter)
    command: str | None = None
    input_path: str | None = None
    output_path: str | None = None
    mode: str | None = None
    args: Dict[str, Any] | None = None
    cycles: int | None = None
    exit_code: int | None = None
    ok: bool | None = None
    err: str | None = None

    def to_payload(self) -> Dict[str, Any]:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name not in _PRIVATE and getattr(self, f.name) is not None
        }

    def duration_ms(self) -> int:
        return int((time.perf_counter() - self.started_at) * 1000)


_context_var: ContextVar[OperationContext | None] = ContextVar("operation_context", default=None)
_queue_listener: QueueListener | None = None


class JsonFormatter(logging.Formatter):
    """One JSON object per line; events built by log_event pass through as is."""

    def format(self, record: logging.LogRecord) -> str:
        event = dict(getattr(record, "event_data", {}))
        event.setdefault("ts", _iso_ts())
        event.setdefault("level", record.levelname)
        event.setdefault("logger", record.name)
        event.setdefault("message", record.getMessage())
        if record.exc_info:
            event.setdefault("err", self.formatException(record.exc_info))
            event.setdefault("ok", False)
        return json.dumps(event, ensure_ascii=False, separators=(",", ":"), default=str)


class ConsoleFormatter(logging.Formatter):
    COLORS = {
        "DEBUG": "\x1b[38;5;245m",
        "INFO": "\x1b[38;5;46m",
        "WARNING": "\x1b[38;5;214m",
        "ERROR": "\x1b[38;5;196m",
    }
    RESET = "\x1b[0m"

    def format(self, record: logging.LogRecord) -> str:
        event: Dict[str, Any] = getattr(record, "event_data", {})
        level = record.levelname
        color = self.COLORS.get(level, "") if sys.stderr.isatty() else ""
        shown = f"{color}{level}{self.RESET}" if color else level
        ts = datetime.fromtimestamp(record.created).strftime("%H:%M:%S")
        tag = event.get("correlation_id", "------")[:6]
        # "verify/full" или просто имя логгера для сообщений библиотек
        where = "/".join(str(event[k]) for k in ("command", "mode") if event.get(k)) or record.name
        return f"[{ts} {shown}] (#{tag}) {where}: {record.getMessage()}"


def setup_logging(level: str | None = None) -> None:
    """Console on stderr plus an optional JSON-lines file; stdout stays clean."""
    global _queue_listener
    if _queue_listener is not None:
        return

    root = logging.getLogger()
    root.setLevel((level or os.getenv("LOG_LEVEL", "INFO")).upper())
    log_queue: queue.Queue[logging.LogRecord] = queue.Queue()
    root.handlers = [QueueHandler(log_queue)]

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(ConsoleFormatter())
    handlers: list[logging.Handler] = [console]

    if _env_flag("LOG_JSON", True):
        logs_dir = Path(os.getenv("LOG_DIR", "logs"))
        logs_dir.mkdir(parents=True, exist_ok=True)
        max_bytes = int(float(os.getenv("LOG_MAX_MB", "50")) * 1024 * 1024)
        file_handler = RotatingFileHandler(str(logs_dir / LOG_FILE), maxBytes=max_bytes, backupCount=10, encoding="utf-8")
        file_handler.setFormatter(JsonFormatter())
        handlers.append(file_handler)

    _queue_listener = QueueListener(log_queue, *handlers, respect_handler_level=True)
    _queue_listener.start()


def stop_logging() -> None:
    """Flush the queue; safe to call twice."""
    global _queue_listener
    if _queue_listener is not None:
        _queue_listener.stop()
        _queue_listener = None


# ---------- контекст операции ----------
def get_operation_context(create: bool = False) -> OperationContext | None:
    ctx = _context_var.get()
    if ctx is None and create:
        ctx = OperationContext(correlation_id=str(uuid.uuid4()))
        _context_var.set(ctx)
    return ctx


def reset_operation_context() -> None:
    _context_var.set(None)


def _apply(ctx: OperationContext, values: Dict[str, Any]) -> None:
    for key, value in values.items():
        if key not in _PRIVATE and hasattr(ctx, key):
            setattr(ctx, key, value)


def start_operation(*, correlation_id: str | None = None, **values: Any) -> OperationContext:
    ctx = OperationContext(correlation_id=correlation_id or str(uuid.uuid4()))
    _apply(ctx, values)
    _context_var.set(ctx)
    return ctx


def update_context(**values: Any) -> None:
    ctx = get_operation_context(create=True)
    if ctx is not None:
        _apply(ctx, values)


# ---------- события ----------
def _payload(event: str, level: str, extra: Dict[str, Any]) -> Dict[str, Any]:
    ctx = get_operation_context()
    payload: Dict[str, Any] = {
        "ts": _iso_ts(),
        "level": level,
        "event": event,
        "correlation_id": ctx.correlation_id if ctx else extra.get("correlation_id", "------"),
    }
    if ctx:
        payload.update(ctx.to_payload())
    payload.update(extra)
    if payload.get("err"):
        payload["err"] = _truncate(str(payload["err"]), limit=MAX_ERR_TEXT)
    if ctx and event == "command_finished":
        payload.setdefault("duration_ms", ctx.duration_ms())
    return payload


def _emit(event: str, level: str, message: str, extra: Dict[str, Any]) -> None:
    logging.getLogger(LOGGER_NAME).log(
        getattr(logging, level, logging.INFO), message, extra={"event_data": _payload(event, level, extra)}
    )


def log_event(event: str, level: str = "INFO", message: str | None = None, **extra: Any) -> None:
    """Structured milestone: the event name plus the current operation context."""
    _emit(event, level, message or event, extra)


def log_exception(event: str, err: BaseException, message: str | None = None, **extra: Any) -> None:
    update_context(err=str(err), ok=False)
    _emit(event, "ERROR", message or str(err), {"error_type": type(err).__name__, **extra})


def complete_operation(ok: bool, err: str | None = None, *, force: bool = False, **extra: Any) -> None:
    """Close the operation once with command_finished (``force`` closes it again)."""
    ctx = get_operation_context(create=True)
    if ctx.ok is not None and not force:
        return
    update_context(ok=ok, err=err)
    _emit("command_finished", "INFO" if ok else "ERROR", "command_finished", {"err": err, "ok": ok, **extra})
