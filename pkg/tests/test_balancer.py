import itertools
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnsite.balancer import (
    Balancer, DecisionLog, TtlPolicy, advertised_ttl_for, canonical_policy, decisions_to_csv,
)
from dnsite.model import LdnsProfile
from dnsite.monitor import LinkSet


def loaded_links(loads, window=1.0, t=0.55):
    links = LinkSet(len(loads), window)
    for i, b in enumerate(loads):
        links.record(i, t, b)
    return links


def test_round_robin_rotation():
    b = Balancer("rr", link_count=2)
    assert [b.decide(t).chosen_link for t in range(4)] == [0, 1, 0, 1]


def test_measurement_based_argmin():
    b = Balancer("mb", loaded_links([25_000, 62_500]))
    d = b.decide(0.6, "ldns")
    assert d.chosen_link == 0
    assert d.link_loads_at_decision == pytest.approx((2e5, 5e5))


def test_measurement_based_tie_uses_cursor():
    b = Balancer("mb", loaded_links([37_500, 37_500]))
    b.rr_cursor = 1
    assert b.decide(0.6).chosen_link == 1
    assert b.rr_cursor == 0
    assert b.decide(0.6).chosen_link == 0


def test_exhaustive_two_link_tie_sequences():
    """For every pattern of tie/no-tie decisions the tie-break rotates exactly like RR."""
    for pattern in itertools.product([None, 0, 1], repeat=6):
        b = Balancer("mb", LinkSet(2, 1.0))
        cursor = 0
        for step, low in enumerate(pattern):
            t = step * 10.0
            loads = [0, 0] if low is None else [0 if i == low else 1000 for i in range(2)]
            for i, v in enumerate(loads):
                b.links.record(i, t, v)
            expected = cursor if low is None else low
            assert b.decide(t).chosen_link == expected
            cursor = (expected + 1) % 2


@given(st.integers(2, 6), st.integers(1, 40))
def test_rr_fairness(k, rounds):
    b = Balancer("rr", link_count=k)
    chosen = [b.decide(t).chosen_link for t in range(k * rounds)]
    assert all(chosen.count(i) == rounds for i in range(k))


@given(st.lists(st.integers(0, 10**6), min_size=2, max_size=6), st.integers(0, 5))
def test_mb_picks_a_minimum_for_any_k(loads, cursor):
    links = loaded_links(loads)
    b = Balancer("mb", links)
    b.rr_cursor = cursor % len(loads)
    d = b.decide(0.6)
    assert loads[d.chosen_link] == min(loads)
    # decision has no effect on monitors
    assert [m.window_bytes(0.6) for m in links.monitors] == loads


@given(st.lists(st.integers(0, 5), min_size=2, max_size=5))
def test_repeated_mb_calls_rotate_only_among_ties(loads):
    b = Balancer("mb", loaded_links(loads))
    picks = {b.decide(0.6).chosen_link for _ in range(3 * len(loads))}
    assert picks == {i for i, v in enumerate(loads) if v == min(loads)}


def test_mb_requires_monitors():
    with pytest.raises(ValueError):
        Balancer("mb")


def test_policy_aliases():
    assert canonical_policy("rr") == "round_robin"
    assert canonical_policy("mb") == "measurement_based"
    with pytest.raises(ValueError):
        canonical_policy("least-conn")


def test_random_and_static_baselines():
    r = Balancer("random", link_count=3, seed=5)
    assert {r.decide(t).chosen_link for t in range(100)} == {0, 1, 2}
    s = Balancer("static", link_count=2, static_link=1)
    assert {s.decide(t).chosen_link for t in range(10)} == {1}


def test_ttl_honoring_gets_nominal():
    p = TtlPolicy(nominal_ttl=15)
    p.register("a", violator=False)
    assert p.advertised_ttl_for("a") == 15
    assert advertised_ttl_for(LdnsProfile("a"), p) == 15


def test_ttl_violator_fixed_in_range():
    p = TtlPolicy(seed=3)
    p.register("v", violator=True)
    ttl = p.advertised_ttl_for("v")
    assert 5 <= ttl <= 600 and ttl == int(ttl)
    assert all(p.advertised_ttl_for("v") == ttl for _ in range(10))


def test_ttl_unknown_ldns_assigned_on_first_sight():
    p = TtlPolicy(violator_fraction=0.4, seed=11)
    ttls = {i: p.advertised_ttl_for(i) for i in range(2000)}
    violators = sum(p.is_violator(i) for i in range(2000))
    assert 0.35 < violators / 2000 < 0.45
    assert all(p.advertised_ttl_for(i) == ttls[i] for i in range(2000))


def test_ttl_ignore_mode_advertises_nominal_but_applies_own():
    p = TtlPolicy(mode="ignore")
    p.register("v", violator=True, own_ttl=300)
    assert p.advertised_ttl_for("v") == 15
    assert p.effective_ttl_for("v") == 300


def test_decision_log_bounded_and_counts_drops():
    log = DecisionLog(maxsize=3)
    b = Balancer("rr", link_count=2, log=log)
    for t in range(5):
        b.decide(t)
    assert len(log.drain()) == 3 and log.dropped == 2


def test_concurrent_decisions_keep_rr_fair():
    b = Balancer("rr", link_count=2)
    def worker():
        for _ in range(500):
            b.decide(0.0)
    threads = [threading.Thread(target=worker) for _ in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    links = [d.chosen_link for d in b.log]
    assert links.count(0) == links.count(1) == 2000


def test_decisions_csv_schema():
    b = Balancer("mb", loaded_links([10, 20]))
    b.decide(0.6, "l0")
    text = decisions_to_csv(b.log)
    header, row = text.splitlines()
    assert header == "t_seconds,ldns_id,chosen_link,advertised_ttl,load0_bps,load1_bps"
    assert row.split(",")[:3] == ["0.600000", "l0", "0"]
