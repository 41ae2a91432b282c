import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnsite.trace import HEADER, KINDS, TraceRecord, read_trace, trace_to_string, write_trace

records = st.builds(
    TraceRecord,
    t=st.floats(0, 1e6, allow_nan=False),
    kind=st.sampled_from(KINDS),
    link=st.none() | st.integers(0, 3),
    ldns_id=st.none() | st.integers(0, 10**6),
    client_id=st.none() | st.integers(0, 10**6),
    bytes=st.integers(0, 10**9),
)


@given(st.lists(records, max_size=30))
def test_csv_round_trip_is_exact(recs):
    assert read_trace(io.StringIO(trace_to_string(recs))) == recs


def test_gzip_round_trip_and_byte_identical(tmp_path):
    recs = [TraceRecord(0.1, "dns_request", 0, 1, 2, 0), TraceRecord(0.2, "bytes", 1, 1, 2, 1500)]
    a, b = tmp_path / "a.csv.gz", tmp_path / "b.csv.gz"
    write_trace(recs, a)
    write_trace(recs, b)
    assert a.read_bytes() == b.read_bytes()
    assert read_trace(a) == recs


def test_header_and_empty_fields():
    text = trace_to_string([TraceRecord(1.5, "bytes", 0, None, None, 10)])
    assert text.splitlines() == [",".join(HEADER), "1.5,bytes,0,,,10"]


def test_bad_header_and_kind_rejected():
    with pytest.raises(ValueError):
        read_trace(io.StringIO("t,kind\n1,bytes\n"))
    with pytest.raises(ValueError):
        read_trace(io.StringIO(",".join(HEADER) + "\n1,teleport,0,0,0,0\n"))
