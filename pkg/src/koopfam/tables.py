"""Schema-tagged CSV tables.

Every file starts with ``# schema=<name> version=1``; floats are written with
17 significant digits so that values round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import re

from koopfam.errors import ConfigError

SCHEMA_VERSION = 1
_SCHEMA_RE = re.compile(r"^#\s*schema=(\S+)\s+version=(\d+)\s*$")


def fmt(value):
    if isinstance(value, (bool,)):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def write_table(path, schema, header, rows):
    """Write rows (iterables of scalars or strings) under a schema line."""
    buf = io.StringIO()
    buf.write(f"# schema={schema} version={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_table(path, schema=None):
    """Return ``(schema_name, header, rows)`` with rows as lists of strings."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        m = _SCHEMA_RE.match(first.strip())
        if not m:
            raise ConfigError(f"{path}: line 1: missing '# schema=<name> version=1' header")
        name, version = m.group(1), int(m.group(2))
        if version != SCHEMA_VERSION:
            raise ConfigError(f"{path}: line 1: unsupported schema version {version}")
        if schema is not None and name != schema:
            raise ConfigError(f"{path}: line 1: expected schema '{schema}', found '{name}'")
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: line 2: missing column header") from None
        rows = []
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(row)
    return name, header, rows
