"""Deterministic CSV output: '.' decimals, LF endings, '#' manifest lines.

Floats are written with repr (shortest round-trip form), so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import os


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_csv(path, header, rows, manifest: dict | None = None):
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for key, value in (manifest or {}).items():
            fh.write(f"# {key}={format_value(value)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
