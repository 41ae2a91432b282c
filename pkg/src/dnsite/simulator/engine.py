"""Discrete-event simulation of DNS-steered traffic on k access links.

Events live in a binary heap keyed by ``(t, sequence)``.  Transfers are
fluid: each flow drains at a constant rate and its bytes are emitted once
per small window (100 ms), stamped at the end of the window they were sent
in, so the link monitors and the error metric see exactly the same grid.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from ..balancer import Balancer, TtlPolicy, canonical_policy
from ..model import ClientSession, LdnsProfile
from ..monitor import LinkSet, error_series_from_bins
from ..trace import TraceRecord
from .scenario import Scenario

# keeps a flow from lingering one extra tick because of float round-off
_BYTE_EPS = 1e-6


@dataclass(frozen=True)
class DelayModel:
    """Lag between a client's resolution and the arrival of its traffic."""

    kind: str = "rtt"
    fixed_delta: float = 0.0
    rtt_multiplier: float = 3.0

    def delay(self, rtt: float) -> float:
        if self.kind == "fixed":
            return self.fixed_delta
        return self.rtt_multiplier * rtt


@dataclass
class FlowState:
    flow_id: int
    client_id: int
    ldns_id: int
    link: int
    size: int
    rate: float
    start_t: float
    dns_decision_t: float
    sent: int = 0

    @property
    def size_remaining(self) -> int:
        return self.size - self.sent

    def cumulative(self, t: float) -> int:
        if t <= self.start_t:
            return 0
        return min(self.size, math.floor((t - self.start_t) * self.rate / 8 + _BYTE_EPS))


@dataclass
class RunResult:
    scenario: Scenario
    trace: list
    errors: object
    decisions: list
    summary: dict
    ldns: list = field(default_factory=list)
    clients: list = field(default_factory=list)
    bins: np.ndarray | None = None


class _Engine:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.w = sc.small_window
        self.now = 0.0
        self._heap = []
        self._seq = 0
        self.trace = []
        self.nticks = int(round(sc.duration / self.w))
        self.bins = np.zeros((sc.link_count, self.nticks + 2), dtype=np.int64)
        self.policy = canonical_policy(sc.policy)
        self.measured = self.policy == "measurement_based"
        self.links = LinkSet(sc.link_count, sc.window, self.w, sc.direction_policy)
        seeds = np.random.SeedSequence(sc.seed).spawn(3)
        self.setup_rng = np.random.default_rng(seeds[0])
        self.ttl_policy = TtlPolicy(sc.nominal_ttl, sc.violator_fraction,
                                    (sc.violator_ttl_min, sc.violator_ttl_max),
                                    sc.violation_mode, seed=seeds[1])
        self.balancer = Balancer(self.policy, self.links, sc.link_count, self.ttl_policy, seed=seeds[1])
        self._stream_seeds = seeds[2]

    def push(self, t, kind, payload=None):
        heapq.heappush(self._heap, (t, self._seq, kind, payload))
        self._seq += 1

    def emit(self, t, kind, link=None, ldns_id=None, client_id=None, nbytes=0):
        self.trace.append(TraceRecord(t, kind, link, ldns_id, client_id, nbytes))

    def emit_bytes(self, k, t, link, ldns_id, client_id, nbytes):
        self.trace.append(TraceRecord(t, "bytes", link, ldns_id, client_id, nbytes))
        self.bins[link, k] += nbytes
        if self.measured:
            self.links.record(link, t, nbytes, "egress")

    def decide(self, t, ldns_id, client_id):
        d = self.balancer.decide(t, ldns_id)
        self.emit(t, "dns_request", d.chosen_link, ldns_id, client_id)
        return d

    def run(self):
        self.setup()
        self.push(self.w, "tick", 1)
        handlers = {"tick": self.on_tick}
        handlers.update(self.handlers())
        heap = self._heap
        end = self.sc.duration + 1e-9
        while heap and heap[0][0] <= end:
            t, _, kind, payload = heapq.heappop(heap)
            self.now = t
            handlers[kind](t, payload)
        return self.result()

    def on_tick(self, t, k):
        self.tick(k, t)
        if k + 1 <= self.nticks:
            self.push((k + 1) * self.w, "tick", k + 1)

    def error_series(self):
        sc = self.sc
        return error_series_from_bins(self.bins, sc.timescale, sc.step, self.w, sc.duration)

    def base_summary(self, errors):
        per_link = self.bins.sum(axis=1)
        dns = sum(1 for r in self.trace if r.kind == "dns_request")
        return {
            "dns_requests": dns,
            "bytes_per_link": [int(b) for b in per_link],
            "total_bytes": int(per_link.sum()),
            "bytes_per_dns_request": float(per_link.sum() / dns) if dns else math.nan,
            "mean_load_bps": [float(b * 8 / self.sc.duration) for b in per_link],
            "median_epsilon": errors.median(),
        }


class ClosedLoopEngine(_Engine):
    """Clients that resolve, download, sleep and repeat behind caching LDNS servers."""

    def handlers(self):
        return {"wake": self.on_wake, "start": self.on_start}

    def setup(self):
        sc, rng = self.sc, self.setup_rng
        counts = hidden_client_counts(sc, rng)
        order = rng.permutation(sc.ldns_count)
        n_viol = round(sc.violator_fraction * sc.ldns_count)
        n_noncache = round(sc.noncaching_fraction * sc.ldns_count)
        violators = set(order[:n_viol].tolist())
        noncaching = set(order[:n_noncache].tolist())
        self.delay_model = DelayModel(sc.delay_kind, sc.delay_fixed, sc.delay_rtt_multiplier)
        size_dist = sc.size_dist
        sleep_mean = sc.effective_sleep_mean
        self.ldns, self.clients = [], []
        for i in range(sc.ldns_count):
            own = int(rng.integers(sc.violator_ttl_min, sc.violator_ttl_max + 1)) if i in violators else None
            self.ttl_policy.register(i, i in violators, own)
            ldns = LdnsProfile(i, honors_ttl=i not in violators, caching=i not in noncaching,
                               effective_ttl=self.ttl_policy.effective_ttl_for(i))
            for _ in range(int(counts[i])):
                cid = len(self.clients)
                rate = log_uniform(rng, sc.path_rate_min, sc.path_rate_max)
                rtt = log_uniform(rng, sc.path_rtt_min, sc.path_rtt_max)
                self.clients.append(ClientSession(cid, i, size_dist, sleep_mean, rtt,
                                                  min(rate, sc.flow_rate_cap)))
                ldns.client_ids.append(cid)
            self.ldns.append(ldns)
        self.cache = [None] * sc.ldns_count  # (resolved_at, link)
        self.streams = [np.random.default_rng(s) for s in self._stream_seeds.spawn(len(self.clients))]
        self.active = {}
        self.next_flow = 0
        self.lookups = 0
        self.completed = 0
        for c in self.clients:
            self.push(float(self.streams[c.id].uniform(0, sleep_mean)), "wake", c.id)

    def on_wake(self, t, cid):
        client = self.clients[cid]
        ldns = self.ldns[client.ldns_id]
        cached = self.cache[ldns.id]
        self.lookups += 1
        if ldns.caching and cached is not None and t - cached[0] < ldns.effective_ttl:
            link = cached[1]
        else:
            link = self.decide(t, ldns.id, cid).chosen_link
            self.cache[ldns.id] = (t, link)
        self.emit(t, "dns_response", link, ldns.id, cid)
        stream = self.streams[cid]
        size = max(1, int(round(client.size_dist.sample(stream))))
        delta = self.delay_model.delay(client.path_rtt)
        flow = FlowState(self.next_flow, cid, ldns.id, link, size, client.path_rate, t + delta, t)
        self.next_flow += 1
        self.push(t + delta, "start", flow)

    def on_start(self, t, flow):
        self.emit(t, "flow_start", flow.link, flow.ldns_id, flow.client_id, flow.size)
        self.active[flow.flow_id] = flow

    def tick(self, k, t):
        done = []
        for flow in self.active.values():
            cum = flow.cumulative(t)
            if cum > flow.sent:
                self.emit_bytes(k, t, flow.link, flow.ldns_id, flow.client_id, cum - flow.sent)
                flow.sent = cum
            if flow.sent >= flow.size:
                done.append(flow)
        for flow in done:
            del self.active[flow.flow_id]
            self.completed += 1
            self.emit(t, "flow_end", flow.link, flow.ldns_id, flow.client_id, flow.size)
            client = self.clients[flow.client_id]
            sleep = float(self.streams[flow.client_id].exponential(client.sleep_mean))
            self.push(t + sleep, "wake", flow.client_id)

    def result(self):
        errors = self.error_series()
        summary = self.base_summary(errors)
        summary.update(
            lookups=self.lookups,
            cache_hits=self.lookups - summary["dns_requests"],
            flows_completed=self.completed,
            clients=len(self.clients),
        )
        return RunResult(self.sc, self.trace, errors, list(self.balancer.log), summary,
                         self.ldns, self.clients, self.bins)


class CbrEngine(_Engine):
    """Constant-rate flows, each steered by its own DNS decision on arrival."""

    def __init__(self, sc, arrivals=None):
        super().__init__(sc)
        self.arrivals = arrivals

    def handlers(self):
        return {"arrive": self.on_arrive, "start": self.on_start}

    def setup(self):
        sc = self.sc
        if self.arrivals is None:
            rng = np.random.default_rng(self._stream_seeds.spawn(1)[0])
            gaps = rng.exponential(1 / sc.cbr_arrival_rate, int(sc.duration * sc.cbr_arrival_rate * 2) + 10)
            times = np.cumsum(gaps)
            self.arrivals = times[times < sc.duration].tolist()
        self.pkt_bytes = sc.cbr_flow_rate * sc.cbr_packet_interval / 8
        self.active = {}
        for fid, t in enumerate(self.arrivals):
            self.push(float(t), "arrive", fid)

    def on_arrive(self, t, fid):
        link = self.decide(t, fid, fid).chosen_link
        self.emit(t, "dns_response", link, fid, fid)
        flow = FlowState(fid, fid, fid, link, int(self.sc.cbr_flow_size), self.sc.cbr_flow_rate,
                         t + self.sc.delay_fixed, t)
        self.push(flow.start_t, "start", flow)

    def on_start(self, t, flow):
        self.emit(t, "flow_start", flow.link, flow.ldns_id, flow.client_id, flow.size)
        self.active[flow.flow_id] = flow

    def packets_sent(self, flow, t):
        if t < flow.start_t:
            return 0
        return math.floor((t - flow.start_t) / self.sc.cbr_packet_interval + 1e-9) + 1

    def tick(self, k, t):
        done = []
        for flow in self.active.values():
            cum = min(flow.size, int(self.packets_sent(flow, t) * self.pkt_bytes))
            if cum > flow.sent:
                self.emit_bytes(k, t, flow.link, flow.ldns_id, flow.client_id, cum - flow.sent)
                flow.sent = cum
            if flow.sent >= flow.size:
                done.append(flow)
        for flow in done:
            del self.active[flow.flow_id]
            self.emit(t, "flow_end", flow.link, flow.ldns_id, flow.client_id, flow.size)

    def result(self):
        errors = self.error_series()
        summary = self.base_summary(errors)
        summary["flows"] = len(self.arrivals)
        return RunResult(self.sc, self.trace, errors, list(self.balancer.log), summary, bins=self.bins)


def pareto_gaps(rng, shape, mean_gap, size):
    """I.i.d. Pareto inter-arrival gaps with the given mean (shape must exceed 1)."""
    if shape <= 1:
        raise ValueError("Pareto shape must be > 1 for a finite mean gap")
    scale = mean_gap * (shape - 1) / shape
    return scale * (1 + rng.pareto(shape, size))


class ParetoEngine(_Engine):
    """Persistent sources with Pareto renewal packet gaps; no flow start/finish churn.

    Each source resolves when it starts and, if ``pareto_reresolve`` is set,
    again every that many seconds at its own random phase, so re-resolutions
    are spread evenly over time.  Packets follow the latest decision.
    """

    start_spread = 5.0

    def handlers(self):
        return {"resolve": self.on_resolve, "reresolve": self.on_reresolve}

    def setup(self):
        sc = self.sc
        streams = [np.random.default_rng(s) for s in self._stream_seeds.spawn(sc.pareto_sources + 1)]
        starts = np.sort(streams[-1].uniform(0, min(self.start_spread, sc.duration / 2), sc.pareto_sources))
        period = sc.pareto_reresolve
        phases = streams[-1].uniform(0, period, sc.pareto_sources) if period > 0 else None
        self.link_of = [None] * sc.pareto_sources
        self.packets = []
        self.cursor = [0] * sc.pareto_sources
        expected = sc.duration / sc.pareto_mean_gap
        for i in range(sc.pareto_sources):
            times = []
            t = starts[i]
            while t <= sc.duration:
                gaps = pareto_gaps(streams[i], sc.pareto_shape, sc.pareto_mean_gap, int(expected * 1.2) + 100)
                chunk = t + np.cumsum(gaps)
                times.append(chunk)
                t = chunk[-1]
            self.packets.append(np.concatenate(times))
            self.push(float(starts[i]), "resolve", i)
            if period > 0:
                first = starts[i] + phases[i]
                self.push(float(first if first > starts[i] else first + period), "reresolve", i)

    def on_resolve(self, t, i):
        link = self.decide(t, i, i).chosen_link
        self.emit(t, "dns_response", link, i, i)
        self.link_of[i] = link

    def on_reresolve(self, t, i):
        self.on_resolve(t, i)
        self.push(t + self.sc.pareto_reresolve, "reresolve", i)

    def tick(self, k, t):
        pkt = self.sc.pareto_pkt_size
        for i, link in enumerate(self.link_of):
            if link is None:
                continue
            hi = int(np.searchsorted(self.packets[i], t, side="right"))
            count = hi - self.cursor[i]
            self.cursor[i] = hi
            if count > 0:
                self.emit_bytes(k, t, link, i, i, count * pkt)

    def result(self):
        errors = self.error_series()
        summary = self.base_summary(errors)
        summary["sources"] = self.sc.pareto_sources
        return RunResult(self.sc, self.trace, errors, list(self.balancer.log), summary, bins=self.bins)


def log_uniform(rng, lo, hi):
    if lo == hi:
        return float(lo)
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def hidden_client_counts(sc: Scenario, rng):
    if sc.hidden_clients_dist == "uniform":
        return rng.integers(sc.hidden_clients_min, sc.hidden_clients_max + 1, sc.ldns_count)
    raw = sc.hidden_clients_min * (1 + rng.pareto(sc.hidden_clients_shape, sc.ldns_count))
    return np.minimum(np.floor(raw), sc.hidden_clients_max).astype(int)


def run(sc: Scenario, **kwargs) -> RunResult:
    """Simulate one scenario; identical scenarios (seed included) give identical traces."""
    sc.check()
    engine = {"closed_loop": ClosedLoopEngine, "cbr": CbrEngine, "pareto": ParetoEngine}[sc.workload]
    return engine(sc, **kwargs).run()


def synthetic_cbr(sc: Scenario, arrivals=None) -> RunResult:
    return CbrEngine(sc.replace(workload="cbr").check(), arrivals).run()


def synthetic_pareto(sc: Scenario) -> RunResult:
    return ParetoEngine(sc.replace(workload="pareto").check()).run()
