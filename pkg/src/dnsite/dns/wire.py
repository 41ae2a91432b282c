"""Minimal DNS message codec: one-question queries in, A answers out.

Only what an authoritative A-record server needs is implemented; anything
malformed raises :class:`DnsParseError`.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field

TYPE_A = 1
CLASS_IN = 1

RCODE_NOERROR = 0
RCODE_FORMERR = 1
RCODE_NXDOMAIN = 3
RCODE_NOTIMP = 4
RCODE_REFUSED = 5

FLAG_QR = 0x8000
FLAG_AA = 0x0400
FLAG_TC = 0x0200
FLAG_RD = 0x0100
OPCODE_MASK = 0x7800

MAX_NAME = 255
MAX_LABEL = 63
_HEADER = struct.Struct("!HHHHHH")


class DnsParseError(ValueError):
    pass


class RefusedQuery(DnsParseError):
    """A well-formed header we decline to answer (e.g. several questions)."""

    def __init__(self, msg, ident, flags, question=None):
        super().__init__(msg)
        self.id = ident
        self.flags = flags
        self.question = question


@dataclass(frozen=True)
class DnsQuery:
    id: int
    labels: tuple
    qtype: int = TYPE_A
    qclass: int = CLASS_IN
    flags: int = FLAG_RD

    @classmethod
    def for_name(cls, name: str, qtype=TYPE_A, id=0, flags=FLAG_RD) -> "DnsQuery":
        labels = tuple(p.encode("ascii") for p in name.rstrip(".").split(".") if p)
        return cls(id, labels, qtype, CLASS_IN, flags)

    @property
    def qname(self) -> str:
        return ".".join(l.decode("ascii", "backslashreplace") for l in self.labels)

    @property
    def name_key(self) -> str:
        return self.qname.lower()


@dataclass(frozen=True)
class ResourceRecord:
    name: str
    rtype: int
    rclass: int
    ttl: int
    rdata: bytes

    @property
    def address(self) -> str:
        return str(ipaddress.IPv4Address(self.rdata))


@dataclass(frozen=True)
class DnsResponse:
    id: int
    flags: int
    question: DnsQuery | None
    answers: list = field(default_factory=list)

    @property
    def rcode(self) -> int:
        return self.flags & 0xF


def encode_name(labels) -> bytes:
    out = bytearray()
    for label in labels:
        if not 0 < len(label) <= MAX_LABEL:
            raise ValueError(f"label length {len(label)} outside 1..{MAX_LABEL}")
        out.append(len(label))
        out += label
    out.append(0)
    if len(out) > MAX_NAME:
        raise ValueError(f"encoded name is {len(out)} bytes, limit {MAX_NAME}")
    return bytes(out)


def decode_name(data: bytes, offset: int):
    """Decode a possibly compressed name; returns (labels, offset after the name)."""
    labels = []
    end = None
    length = 0
    pos = offset
    while True:
        if pos >= len(data):
            raise DnsParseError("name runs past end of message")
        b = data[pos]
        tag = b & 0xC0
        if tag == 0xC0:
            if pos + 1 >= len(data):
                raise DnsParseError("truncated compression pointer")
            target = ((b & 0x3F) << 8) | data[pos + 1]
            if end is None:
                end = pos + 2
            # pointers must go strictly backwards; this rules out loops
            if target >= pos:
                raise DnsParseError("compression pointer does not point backwards")
            pos = target
            continue
        if tag != 0:
            raise DnsParseError(f"unsupported label type 0x{tag:02x}")
        if b == 0:
            length += 1
            if length > MAX_NAME:
                raise DnsParseError("name longer than 255 bytes")
            return tuple(labels), (end if end is not None else pos + 1)
        if pos + 1 + b > len(data):
            raise DnsParseError("label runs past end of message")
        labels.append(bytes(data[pos + 1:pos + 1 + b]))
        length += 1 + b
        if length > MAX_NAME:
            raise DnsParseError("name longer than 255 bytes")
        pos += 1 + b


def _header(data):
    if len(data) < _HEADER.size:
        raise DnsParseError(f"message is {len(data)} bytes, header needs 12")
    return _HEADER.unpack_from(data)


def parse_query(data: bytes) -> DnsQuery:
    ident, flags, qd, an, ns, ar = _header(data)
    if flags & FLAG_QR:
        raise DnsParseError("QR bit set; not a query")
    if flags & OPCODE_MASK:
        raise DnsParseError(f"opcode {(flags & OPCODE_MASK) >> 11} is not a standard query")
    if qd == 0:
        raise DnsParseError("query has no question")
    labels, pos = decode_name(data, _HEADER.size)
    if pos + 4 > len(data):
        raise DnsParseError("question truncated")
    qtype, qclass = struct.unpack_from("!HH", data, pos)
    q = DnsQuery(ident, labels, qtype, qclass, flags)
    if qd > 1:
        raise RefusedQuery(f"{qd} questions in one query", ident, flags, q)
    return q


def serialize_query(q: DnsQuery) -> bytes:
    return (_HEADER.pack(q.id, q.flags, 1, 0, 0, 0)
            + encode_name(q.labels) + struct.pack("!HH", q.qtype, q.qclass))


def _response_flags(q_flags, rcode):
    return FLAG_QR | FLAG_AA | (q_flags & FLAG_RD) | rcode


def build_error(q: DnsQuery | None, rcode: int, ident=None, q_flags=None) -> bytes:
    """Header-plus-question error reply; without a question only the header is sent."""
    if q is None:
        return _HEADER.pack(ident or 0, _response_flags(q_flags or 0, rcode), 0, 0, 0, 0)
    return (_HEADER.pack(q.id, _response_flags(q.flags, rcode), 1, 0, 0, 0)
            + encode_name(q.labels) + struct.pack("!HH", q.qtype, q.qclass))


def build_response(q: DnsQuery, addr, ttl: int, zone: str | None = None) -> bytes:
    """Authoritative reply to ``q``.

    With ``zone`` given, names other than the zone name get NXDOMAIN and
    non-A (or non-IN) questions for the zone name get an empty NOERROR.
    """
    if zone is not None and q.name_key != zone.rstrip(".").lower():
        return build_error(q, RCODE_NXDOMAIN)
    if q.qtype != TYPE_A or q.qclass != CLASS_IN:
        return build_error(q, RCODE_NOERROR)
    if not 0 <= int(ttl) < 2**31:
        raise ValueError(f"ttl {ttl} out of range")
    rdata = ipaddress.IPv4Address(addr).packed
    answer = struct.pack("!HHHIH", 0xC00C, TYPE_A, CLASS_IN, int(ttl), 4) + rdata
    return (_HEADER.pack(q.id, _response_flags(q.flags, RCODE_NOERROR), 1, 1, 0, 0)
            + encode_name(q.labels) + struct.pack("!HH", q.qtype, q.qclass) + answer)


def parse_response(data: bytes) -> DnsResponse:
    ident, flags, qd, an, ns, ar = _header(data)
    if not flags & FLAG_QR:
        raise DnsParseError("QR bit clear; not a response")
    pos = _HEADER.size
    question = None
    for _ in range(qd):
        labels, pos = decode_name(data, pos)
        if pos + 4 > len(data):
            raise DnsParseError("question truncated")
        qtype, qclass = struct.unpack_from("!HH", data, pos)
        pos += 4
        question = question or DnsQuery(ident, labels, qtype, qclass, flags)
    answers = []
    for _ in range(an):
        labels, pos = decode_name(data, pos)
        if pos + 10 > len(data):
            raise DnsParseError("resource record truncated")
        rtype, rclass, ttl, rdlen = struct.unpack_from("!HHIH", data, pos)
        pos += 10
        if pos + rdlen > len(data):
            raise DnsParseError("rdata truncated")
        name = ".".join(l.decode("ascii", "backslashreplace") for l in labels)
        answers.append(ResourceRecord(name, rtype, rclass, ttl, bytes(data[pos:pos + rdlen])))
        pos += rdlen
    return DnsResponse(ident, flags, question, answers)
