"""Small I/O helpers: number formatting and atomic file writes."""

from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path

SIG_DIGITS = 12


def fmt(x) -> str:
    """Format a number with 12 significant digits; integers stay integers."""
    if isinstance(x, (bool,)):
        return "true" if x else "false"
    if isinstance(x, (int,)) or (hasattr(x, "dtype") and x.dtype.kind in "iu"):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{SIG_DIGITS}g}"


def atomic_write(path, text: str) -> Path:
    """Write text to path via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
