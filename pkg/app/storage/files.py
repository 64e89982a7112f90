from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

from app.services.errors import InvalidInput


def write_text_atomic(path: Path | str, text: str) -> Path:
    """
    Пишем во временный файл рядом с целевым -> os.replace.
    Читатель видит либо старый файл, либо новый целиком.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    tmp = Path(tmp_name)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    finally:
        try: tmp.unlink(missing_ok=True)
        except OSError: pass
    return path


def write_json_atomic(path: Path | str, payload: Any) -> Path:
    # порядок ключей задаёт вызывающий код, sort_keys не нужен
    text = json.dumps(payload, ensure_ascii=False, indent=2, allow_nan=False) + "\n"
    return write_text_atomic(path, text)


def read_json(path: Path | str) -> Any:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})", path=str(path)) from exc
