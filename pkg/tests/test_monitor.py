import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnsite.monitor import (
    ErrorSeries, LinkMonitor, LinkSet, OutOfOrderError, error_metric, error_series, link_byte_bins,
    window_index,
)
from dnsite.trace import TraceRecord


def brute_force_window_bytes(events, t, w, n):
    """Re-scan every event; sum bytes whose small window is among the n ending at t's."""
    k = window_index(t, w)
    return sum(b for (te, b) in events if k - n + 1 <= window_index(te, w) <= k)


def random_feed(rng, w, n):
    m = int(rng.integers(1, 40))
    times = np.sort(rng.uniform(0, rng.uniform(0.05, 5 * n * w), m))
    if rng.random() < 0.3:
        # land some events exactly on grid edges
        times = np.sort(np.round(times / w) * w)
    sizes = rng.integers(0, 5000, m)
    return list(zip(times.tolist(), sizes.tolist()))


def check_feed(rng):
    w = float(rng.choice([0.1, 0.05, 0.25]))
    n = int(rng.integers(1, 30))
    m = LinkMonitor(0, w, n)
    events = random_feed(rng, w, n)
    seen = []
    for t, b in events:
        m.record_bytes(t, b)
        seen.append((t, b))
        for probe in (t, t + float(rng.uniform(0, 2 * n * w))):
            if m.window_bytes(probe) != brute_force_window_bytes(seen, probe, w, n):
                return False
            if m.utilization(probe) != brute_force_window_bytes(seen, probe, w, n) * 8 / (n * w):
                return False
    return True


def test_utilization_matches_brute_force_oracle():
    rng = np.random.default_rng(2024)
    assert all(check_feed(rng) for _ in range(10_000))


def test_accumulation_and_policy_filter():
    m = LinkMonitor(0, 0.1, 10, direction_policy="egress")
    m.record_bytes(0.05, 1000)
    assert m.window_bytes(0.05) == 1000
    m.record_bytes(0.06, 500, "ingress")
    assert m.window_bytes(0.06) == 1000
    m2 = LinkMonitor(0, 0.1, 10)
    m2.record_bytes(0.01, 500)
    m2.record_bytes(0.02, 700, "ingress")
    assert m2.ring[0] == 1200


def test_empty_monitor_is_zero():
    assert LinkMonitor().utilization(12.3) == 0


@pytest.mark.parametrize("n", [1, 10, 100, 300])
def test_constant_rate_fixed_point(n):
    m = LinkMonitor(0, 0.1, n)
    for k in range(int(n * 1.5) + 10):
        m.record_bytes(k * 0.1 + 0.05, 12_500)  # 125 000 B/s
    assert m.utilization(k * 0.1 + 0.05) == pytest.approx(1e6)


def test_out_of_order_beyond_one_window_rejected():
    m = LinkMonitor(0, 0.1, 10)
    m.record_bytes(5.0, 1)
    m.record_bytes(4.95, 1)  # within tolerance
    with pytest.raises(OutOfOrderError):
        m.record_bytes(4.8, 1)


def test_window_start_never_decreases():
    m = LinkMonitor(0, 0.1, 5)
    starts = []
    for t in [0.0, 0.33, 0.31, 1.7, 1.65, 9.0]:
        m.record_bytes(t, 10)
        starts.append(m.current_window_start)
    assert starts == sorted(starts)


@given(st.lists(st.tuples(st.floats(0, 20), st.integers(0, 10_000)), min_size=1, max_size=60),
       st.lists(st.tuples(st.floats(0, 1, exclude_max=True), st.integers(0, 10_000)), max_size=20),
       st.integers(1, 50))
def test_eviction_ignores_old_events(recent, old, n):
    """Events whose small window lies before the measurement window never change utilization."""
    w = 0.1
    t = max(te for te, _ in recent)
    first = window_index(t, w) - n + 1
    recent = sorted((te, b) for te, b in recent if window_index(te, w) >= first)
    old = sorted((f * first * w, b) for f, b in old if first > 0)
    old = [(te, b) for te, b in old if window_index(te, w) < first]
    a, b = LinkMonitor(0, w, n), LinkMonitor(0, w, n)
    for te, nb in recent:
        a.record_bytes(te, nb)
    for te, nb in old + recent:
        b.record_bytes(te, nb)
    assert a.utilization(t) == b.utilization(t)


@given(st.lists(st.tuples(st.floats(0, 100), st.integers(0, 1000), st.integers(0, 2)), max_size=80))
def test_sum_conservation(events):
    links = LinkSet(3, window=1000.0)
    for t, b, link in sorted(events):
        links.record(link, t, b)
    total = sum(b for _, b, _ in events)
    assert sum(m.recorded_total for m in links.monitors) == total
    if events:
        assert sum(m.window_bytes(max(e[0] for e in events)) for m in links.monitors) == total


def test_error_metric_examples():
    assert error_metric(4e6, 4e6) == 0
    assert error_metric(5e6, 0) == 1
    assert error_metric(6e6, 4e6) == pytest.approx(0.2)
    assert error_metric(0, 0) == 0


@given(st.floats(0, 1e12), st.floats(0, 1e12), st.floats(1e-6, 1e6))
def test_error_metric_properties(u1, u2, c):
    e = error_metric(u1, u2)
    assert 0 <= e <= 1
    assert e == error_metric(u2, u1)
    if u1 + u2 > 0 and c * (u1 + u2) > 1e-300:
        assert error_metric(c * u1, c * u2) == pytest.approx(e, abs=1e-12)


def bytes_events(link_rates, duration, w=0.1):
    out = []
    for k in range(int(round(duration / w))):
        for link, rate in link_rates.items():
            out.append(TraceRecord(k * w, "bytes", link, 0, 0, rate))
    return out


def test_all_traffic_on_one_link():
    s = error_series(bytes_events({0: 1000}, 60), 20, 1, duration=60)
    assert len(s) > 0 and np.all(s.epsilon == 1.0)


def test_balanced_constant_traffic_is_zero():
    s = error_series(bytes_events({0: 1000, 1: 1000}, 60), 20, 1, duration=60)
    assert np.all(s.epsilon == 0.0)


def test_alternating_flows_average_out():
    # 1 s flows alternating between links; I = 20 s spans many flows
    events = []
    for k in range(1200):
        t = k * 0.1
        events.append(TraceRecord(t, "bytes", int(t) % 2, 0, 0, 1000))
    s = error_series(events, 20, 1, duration=120)
    assert s.median() < 0.06
    short = error_series(events, 1, 1, duration=120)
    assert short.median() > 0.9


def test_error_series_excludes_warmup_and_steps():
    s = error_series(bytes_events({0: 10, 1: 30}, 100), 20, 1, duration=100)
    assert s.times[0] >= 20
    assert np.allclose(np.diff(s.times), 1.0)
    assert np.allclose(s.epsilon, 0.5)


def test_error_series_too_short_is_empty():
    s = error_series(bytes_events({0: 10, 1: 30}, 10), 20, 1, duration=10)
    assert len(s) == 0 and math.isnan(s.median())


def test_error_series_csv_round_trip():
    s = error_series(bytes_events({0: 10, 1: 30}, 60), 20, 1, duration=60)
    text = s.to_csv()
    assert text.splitlines()[0] == "t_seconds,epsilon"
    assert text.splitlines()[1] == f"{s.times[0]:.6f},0.500000"
    back = ErrorSeries.from_csv(io.StringIO(text))
    assert np.allclose(back.times, s.times) and np.allclose(back.epsilon, s.epsilon)


def test_link_byte_bins_matches_manual_sum():
    events = [TraceRecord(0.05, "bytes", 0, 0, 0, 3), TraceRecord(0.1, "bytes", 1, 0, 0, 4),
              TraceRecord(0.19, "bytes", 1, 0, 0, 5), TraceRecord(0.3, "dns_request", 0, 0, 0, 0)]
    bins = link_byte_bins(events, 0.1, (0, 1), span=0.3)
    assert bins[0, 0] == 3 and bins[1, 1] == 9 and bins.sum() == 12
