"""Unified event log: DNS requests and responses, flow boundaries and byte arrivals.

CSV schema (header row always present)::

    t,kind,link,ldns_id,client_id,bytes

Empty fields mean "not applicable".  Times are written with ``repr`` so a
log read back is bit-identical to the one written.  Paths ending in ``.gz``
are compressed transparently.
"""

from __future__ import annotations

import csv
import gzip
import io
from typing import NamedTuple

KINDS = ("dns_request", "dns_response", "flow_start", "bytes", "flow_end")
HEADER = ("t", "kind", "link", "ldns_id", "client_id", "bytes")


class TraceRecord(NamedTuple):
    t: float
    kind: str
    link: int | None = None
    ldns_id: int | None = None
    client_id: int | None = None
    bytes: int = 0


def _open(path, mode):
    path = str(path)
    if path.endswith(".gz"):
        # no name and mtime=0 keep compressed output byte-identical across runs
        if "w" in mode:
            raw = gzip.GzipFile(filename="", mode="wb", fileobj=open(path, "wb"), mtime=0)
            wrapper = io.TextIOWrapper(raw, newline="")
            return _ClosingWrapper(wrapper, raw.fileobj)
        return io.TextIOWrapper(gzip.open(path, "rb"), newline="")
    return open(path, mode, newline="")


class _ClosingWrapper:
    """Text stream over a GzipFile that also closes the underlying file."""

    def __init__(self, stream, fileobj):
        self._stream, self._fileobj = stream, fileobj

    def write(self, text):
        return self._stream.write(text)

    def close(self):
        self._stream.close()
        self._fileobj.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _field(v):
    return "" if v is None else str(v)


def format_record(r: TraceRecord) -> str:
    return f"{r.t!r},{r.kind},{_field(r.link)},{_field(r.ldns_id)},{_field(r.client_id)},{r.bytes}\n"


def write_trace(records, path_or_file):
    if hasattr(path_or_file, "write"):
        f, close = path_or_file, False
    else:
        f, close = _open(path_or_file, "w"), True
    try:
        f.write(",".join(HEADER) + "\n")
        for r in records:
            f.write(format_record(r))
    finally:
        if close:
            f.close()


def _opt_int(s):
    return int(s) if s != "" else None


def parse_rows(rows):
    for row in rows:
        if row["kind"] not in KINDS:
            raise ValueError(f"unknown trace record kind {row['kind']!r}")
        yield TraceRecord(
            float(row["t"]),
            row["kind"],
            _opt_int(row["link"]),
            _opt_int(row["ldns_id"]),
            _opt_int(row["client_id"]),
            int(row["bytes"] or 0),
        )


def read_trace(path_or_file) -> list:
    if hasattr(path_or_file, "read"):
        reader = csv.DictReader(path_or_file)
        _check_header(reader.fieldnames)
        return list(parse_rows(reader))
    with _open(path_or_file, "r") as f:
        reader = csv.DictReader(f)
        _check_header(reader.fieldnames)
        return list(parse_rows(reader))


def _check_header(fields):
    if tuple(fields or ()) != HEADER:
        raise ValueError(f"trace header must be {','.join(HEADER)}, got {fields}")


def trace_to_string(records) -> str:
    buf = io.StringIO()
    write_trace(records, buf)
    return buf.getvalue()
