"""Canonical report serialization and atomic file output.

Reports are JSON documents of the form {"header": ..., "report": ...}.  The
header carries timestamps and tool-version metadata and is excluded from the
canonical form; the report body is serialized canonically: keys sorted,
floats printed with 17 significant digits, no NaN/Inf.  Two runs of the same
command with the same seed produce byte-identical report bodies.
"""

from __future__ import annotations

import datetime
import json
import math
import os
import tempfile

TOOL_VERSION = "0.1.0"


def _canonical(obj) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            raise ValueError("canonical reports cannot contain NaN or Inf")
        return format(obj, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        return "{" + ",".join(
            json.dumps(str(k), ensure_ascii=False) + ":" + _canonical(v)
            for k, v in items
        ) + "}"
    raise TypeError(f"cannot canonically serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Deterministic JSON for a report body."""
    return _canonical(_sanitize(obj))


def _sanitize(obj):
    """Replace non-finite floats with None; coerce numpy scalars and arrays."""
    if hasattr(obj, "tolist") and not isinstance(obj, (str, bytes)):
        obj = obj.tolist()
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return None
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def report_document(body: dict, command: str) -> str:
    """Full JSON document: non-canonical header plus canonical body."""
    header = {
        "tool": "crtweight",
        "version": TOOL_VERSION,
        "command": command,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    return (
        '{"header": '
        + json.dumps(header, ensure_ascii=False)
        + ', "report": '
        + canonical_json(body)
        + "}\n"
    )


def write_text_atomic(path, text: str) -> None:
    """Write via a temp file and rename: no partial output on error."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".crtweight-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def csv_text(rows: list[dict]) -> str:
    """Flat CSV for a list of uniform dict rows (lossy convenience export)."""
    if not rows:
        return ""
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row.get(c)
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append(format(v, ".17g"))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
