"""Atomic file output shared by the metrics, diagnostics and CLI writers."""

import csv
import io
import os
import tempfile


def fmt(value):
    """Render floats at 12 significant digits, everything else with ``str``."""
    return f"{value:.12g}" if isinstance(value, float) else str(value)


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    """Atomic CSV with a header row; cells go through ``fmt``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    write_atomic(path, buf.getvalue())
