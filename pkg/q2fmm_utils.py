# File: q2fmm_utils.py (Q2FMM)

import csv
import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)


# --- Deterministic artifact writers ---
def format_value(value: Any) -> str:
    """CSV cell text: floats with repr precision, None as empty, NaN kept literal."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(float(value))
    return str(value)


def rows_to_csv(rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> str:
    """RFC 4180 text (CRLF line ends, quoting only where needed); columns default to the first row's keys."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(col)) for col in columns])
    return buffer.getvalue()


def write_csv(path: Path, rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows, columns), encoding="utf-8", newline="")
    logger.info(f"✅ Wrote {len(rows)} rows to {path}")
    return path


def dumps_json(payload: Any) -> str:
    """Sorted keys and fixed indentation so identical runs produce identical bytes."""
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(payload), encoding="utf-8")
    logger.info(f"✅ Wrote {path}")
    return path


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"✅ Wrote {path}")
    return path


def read_csv(path: Path) -> List[Dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_manifest(out_dir: Path, command: str, files: Sequence[Path], seed: int) -> Path:
    """manifest.json listing every artifact of a run with its size and sha256 digest."""
    out_dir = Path(out_dir)
    entries = []
    for path in sorted({Path(p) for p in files}, key=lambda p: p.name):
        data = path.read_bytes()
        entries.append({"name": path.name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
    return write_json(out_dir / "manifest.json", {"command": command, "seed": seed, "files": entries})
