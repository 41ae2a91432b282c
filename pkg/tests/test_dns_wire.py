import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnsite.dns import (
    DnsParseError, DnsQuery, RefusedQuery, build_error, build_response, parse_query, parse_response,
    serialize_query,
)
from dnsite.dns import wire

from dns_fuzz import fuzz

# RFC 1035 layout: header (id, flags, qd, an, ns, ar), then QNAME labels, QTYPE, QCLASS
GOLDEN_QUERY = bytes.fromhex(
    "1234"  # id
    "0100"  # flags: RD
    "0001" "0000" "0000" "0000"
    "01" "61" "01" "62" "00"  # a.b
    "0001" "0001"  # A, IN
)
GOLDEN_RESPONSE = bytes.fromhex(
    "1234" "8500"  # QR | AA | RD, RA clear, NOERROR
    "0001" "0001" "0000" "0000"
    "0161016200" "0001" "0001"
    "c00c" "0001" "0001" "0000000f" "0004" "c0000201"  # a.b A IN ttl 15 192.0.2.1
)


def test_golden_query_parses():
    assert len(GOLDEN_QUERY) == 21
    q = parse_query(GOLDEN_QUERY)
    assert (q.id, q.qname, q.qtype, q.qclass, q.flags) == (0x1234, "a.b", 1, 1, 0x0100)
    assert serialize_query(q) == GOLDEN_QUERY


def test_golden_response_bit_exact():
    q = parse_query(GOLDEN_QUERY)
    out = build_response(q, "192.0.2.1", 15)
    assert out == GOLDEN_RESPONSE
    r = parse_response(out)
    assert r.rcode == 0 and r.flags & wire.FLAG_AA and not r.flags & 0x0080
    assert r.answers[0].address == "192.0.2.1" and r.answers[0].ttl == 15 and r.answers[0].name == "a.b"
    assert len(out) <= 512


def test_nxdomain_outside_zone():
    q = DnsQuery.for_name("other.example", id=9)
    out = build_response(q, "192.0.2.1", 15, zone="www.example.org")
    assert out == bytes.fromhex("0009" "8503" "0001" "0000" "0000" "0000") + serialize_query(q)[12:]
    assert parse_response(out).rcode == wire.RCODE_NXDOMAIN


def test_aaaa_gets_empty_noerror():
    q = DnsQuery.for_name("www.example.org", qtype=28)
    r = parse_response(build_response(q, "192.0.2.1", 15, zone="www.example.org."))
    assert r.rcode == 0 and r.answers == [] and r.question.qtype == 28


def test_zone_match_is_case_insensitive():
    q = DnsQuery.for_name("WWW.Example.ORG")
    assert len(parse_response(build_response(q, "192.0.2.1", 15, zone="www.example.org")).answers) == 1


def test_short_datagram_rejected():
    with pytest.raises(DnsParseError):
        parse_query(GOLDEN_QUERY[:11])


@pytest.mark.parametrize("flags", [0x8100, 0x0900, 0x2000])
def test_non_query_headers_rejected(flags):
    with pytest.raises(DnsParseError):
        parse_query(GOLDEN_QUERY[:2] + struct.pack("!H", flags) + GOLDEN_QUERY[4:])


def test_no_question_rejected():
    with pytest.raises(DnsParseError):
        parse_query(GOLDEN_QUERY[:4] + b"\x00\x00" + GOLDEN_QUERY[6:12])


def test_multi_question_refused():
    data = GOLDEN_QUERY[:4] + b"\x00\x02" + GOLDEN_QUERY[6:] + b"\xc0\x0c\x00\x01\x00\x01"
    with pytest.raises(RefusedQuery) as e:
        parse_query(data)
    out = build_error(e.value.question, wire.RCODE_REFUSED)
    assert parse_response(out).rcode == wire.RCODE_REFUSED and parse_response(out).id == 0x1234


def test_compressed_question_name():
    # id bytes 01 61 read as label "a", flags high byte 00 ends the name
    data = bytes.fromhex("0161" "0000" "0001000000000000" "c000" "0001" "0001")
    assert parse_query(data).qname == "a"


@pytest.mark.parametrize("name_bytes", [
    "c00c",  # points at itself
    "c00e",  # points forward
    "c0",  # truncated pointer
    "0561",  # label runs past the end
    "4061",  # reserved label type
    "",  # name missing
])
def test_malformed_names_rejected(name_bytes):
    with pytest.raises(DnsParseError):
        parse_query(GOLDEN_QUERY[:12] + bytes.fromhex(name_bytes) + b"\x00\x01\x00\x01"[: 4 if name_bytes else 0])


def test_overlong_name_rejected():
    labels = [b"x" * 63] * 4  # 4 * 64 + 1 = 257 bytes
    raw = b"".join(bytes([len(l)]) + l for l in labels) + b"\x00"
    with pytest.raises(DnsParseError):
        parse_query(GOLDEN_QUERY[:12] + raw + b"\x00\x01\x00\x01")
    with pytest.raises(ValueError):
        serialize_query(DnsQuery(1, tuple(labels)))
    with pytest.raises(ValueError):
        serialize_query(DnsQuery(1, (b"y" * 64,)))


def test_trailing_additional_section_ignored():
    opt = b"\x00\x00\x29\x10\x00\x00\x00\x00\x00\x00\x00"
    data = GOLDEN_QUERY[:10] + b"\x00\x01" + GOLDEN_QUERY[12:] + opt
    assert parse_query(data).qname == "a.b"


queries = st.builds(
    DnsQuery,
    id=st.integers(0, 0xFFFF),
    labels=st.lists(st.from_regex(rb"[A-Za-z0-9-]{1,63}", fullmatch=True), min_size=1, max_size=4).map(tuple),
    qtype=st.integers(0, 0xFFFF),
    qclass=st.integers(0, 0xFFFF),
    flags=st.integers(0, 0xFFFF).map(lambda f: f & ~0xF800),
)


@given(queries)
def test_round_trip(q):
    assert parse_query(serialize_query(q)) == q


@given(queries, st.sampled_from(["192.0.2.1", "203.0.113.77"]), st.integers(0, 2**31 - 1))
def test_every_response_reparses_and_echoes(q, addr, ttl):
    r = parse_response(build_response(q, addr, ttl))
    assert r.id == q.id and r.question.labels == q.labels and r.question.qtype == q.qtype
    assert r.flags & wire.FLAG_QR and r.flags & wire.FLAG_AA and (r.flags & wire.FLAG_RD) == (q.flags & wire.FLAG_RD)
    if q.qtype == 1 and q.qclass == 1:
        assert r.answers[0].address == addr and r.answers[0].ttl == ttl


def test_fuzz_smoke():
    faults, parsed, rejected = fuzz(20_000, seed=1)
    assert faults == []
    assert parsed > 0 and rejected > 0
