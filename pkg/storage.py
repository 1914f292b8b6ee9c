"""
storage.py — output files + error log

Every artifact the pipeline produces goes through write_text_atomic so a
crashed run never leaves half a CSV behind: write to a temp file in the
same directory, then os.replace over the target.

Recoverable failures are appended to logs/errors.log, same format the
fetchers always used: [UTC timestamp] [tag] message.
"""

import csv
import io
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

_LOG_DIR = Path(os.getenv("GAIT_LOG_DIR", Path(__file__).parent / "logs"))


def write_error_log(tag: str, message: str) -> None:
    """Append a timestamped error to logs/errors.log. Never raises."""
    try:
        _LOG_DIR.mkdir(parents=True, exist_ok=True)
        ts = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M UTC")
        with open(_LOG_DIR / "errors.log", "a", encoding="utf-8") as f:
            f.write(f"[{ts}] [{tag}] {message}\n")
    except OSError:
        pass


def log_failure(tag: str, message: str) -> None:
    """Print a tagged failure line and keep a copy in the error log."""
    print(f"[{tag}] {message}")
    write_error_log(tag, message)


def write_bytes_atomic(path: Path | str, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path


def write_text_atomic(path: Path | str, text: str) -> Path:
    return write_bytes_atomic(path, text.encode("utf-8"))


def write_json_atomic(path: Path | str, payload: dict) -> Path:
    # sort_keys + fixed indent: same input -> byte-identical file
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    return write_text_atomic(path, text)


def write_csv_atomic(path: Path | str, header: list[str],
                     rows: list[list]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return write_text_atomic(path, buf.getvalue())
