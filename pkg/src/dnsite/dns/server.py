"""Authoritative UDP DNS front end that answers each A query with the link
picked by a :class:`~dnsite.balancer.Balancer`.

The request path is synchronous and lock-protected inside the balancer, so
the handler can be driven directly (tests, offline parity checks) or from
the asyncio datagram endpoint started by :func:`serve`.
"""

from __future__ import annotations

import asyncio
import ipaddress
import logging
import signal
import time
from collections import Counter
from dataclasses import dataclass

from ..balancer import Balancer, DecisionLog, TtlPolicy, decisions_to_csv
from ..monitor import SMALL_WINDOW, LinkSet
from . import wire

log = logging.getLogger(__name__)

ZONE_HEADER = "# dnsite-zone v1"


@dataclass(frozen=True)
class ZoneConfig:
    zone_name: str
    addresses: tuple
    nominal_ttl: int = 15
    violator_emulation: bool = True
    violator_fraction: float = 0.4
    violator_ttl_min: int = 5
    violator_ttl_max: int = 600
    violation_mode: str = "advertise"
    policy: str = "measurement_based"
    window: float = 10.0
    small_window: float = SMALL_WINDOW
    decision_log_max: int = 100_000
    seed: int = 0

    def validate(self) -> list:
        errors = []
        if not self.zone_name.strip("."):
            errors.append("zone_name: must not be empty")
        else:
            try:
                wire.encode_name([p.encode("ascii") for p in self.zone_name.rstrip(".").split(".")])
            except (ValueError, UnicodeEncodeError) as e:
                errors.append(f"zone_name: {e}")
        if len(self.addresses) < 2:
            errors.append("addresses: need at least two link addresses")
        if len(set(self.addresses)) != len(self.addresses):
            errors.append("addresses: must be distinct")
        for a in self.addresses:
            try:
                ipaddress.IPv4Address(a)
            except ValueError:
                errors.append(f"addresses: {a!r} is not an IPv4 address")
        if not 0 < self.nominal_ttl < 2**31:
            errors.append("nominal_ttl: must be a positive 32-bit value")
        if not 0 <= self.violator_fraction <= 1:
            errors.append("violator_fraction: must be in [0, 1]")
        if not 0 < self.violator_ttl_min <= self.violator_ttl_max:
            errors.append("violator_ttl_min/max: need 0 < min <= max")
        if self.violation_mode not in ("advertise", "ignore"):
            errors.append("violation_mode: must be advertise or ignore")
        if self.window <= 0 or self.small_window <= 0:
            errors.append("window, small_window: must be > 0")
        if self.decision_log_max < 1:
            errors.append("decision_log_max: must be >= 1")
        return errors

    @classmethod
    def parse(cls, text: str) -> "ZoneConfig":
        lines = text.splitlines()
        if not lines or lines[0].strip() != ZONE_HEADER:
            raise ValueError(f"zone config must start with {ZONE_HEADER!r}")
        kinds = {k: type(v.default) for k, v in cls.__dataclass_fields__.items()}
        values, errors = {}, []
        for lineno, line in enumerate(lines[1:], start=2):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = (s.strip() for s in line.partition("="))
            if not sep or key not in kinds:
                errors.append(f"line {lineno}: expected a known 'key = value'")
                continue
            try:
                if key == "addresses":
                    values[key] = tuple(a.strip() for a in raw.split(",") if a.strip())
                elif kinds[key] is bool:
                    if raw.lower() not in ("true", "false", "yes", "no", "1", "0"):
                        raise ValueError(raw)
                    values[key] = raw.lower() in ("true", "yes", "1")
                elif kinds[key] in (int, float):
                    values[key] = kinds[key](raw)
                else:
                    values[key] = raw
            except ValueError:
                errors.append(f"line {lineno}: bad value {raw!r} for {key}")
        for key in ("zone_name", "addresses"):
            if key not in values:
                errors.append(f"{key}: required")
        if not errors:
            cfg = cls(**values)
            errors = cfg.validate()
        if errors:
            raise ValueError("invalid zone config:\n  " + "\n  ".join(errors))
        return cfg

    @classmethod
    def load(cls, path) -> "ZoneConfig":
        with open(path) as f:
            return cls.parse(f.read())

    def ttl_policy(self) -> TtlPolicy:
        fraction = self.violator_fraction if self.violator_emulation else 0.0
        return TtlPolicy(self.nominal_ttl, fraction, (self.violator_ttl_min, self.violator_ttl_max),
                         self.violation_mode, seed=self.seed)

    def make_balancer(self, links: LinkSet | None = None, log=None) -> Balancer:
        k = len(self.addresses)
        if links is None:
            links = LinkSet(k, self.window, self.small_window)
        return Balancer(self.policy, links, k, self.ttl_policy(), seed=self.seed, log=log)


class ReplayFeeder:
    """Feeds recorded per-link byte counts into link monitors as the clock advances.

    Any object with ``advance(now)`` can stand in for it, e.g. a reader of
    interface counters.
    """

    def __init__(self, records, links: LinkSet, direction="egress"):
        self._records = [r for r in records if r.kind == "bytes" and r.link is not None]
        self._records.sort(key=lambda r: r.t)
        self._pos = 0
        self.links = links
        self.direction = direction

    def advance(self, now: float) -> int:
        n = 0
        recs = self._records
        while self._pos < len(recs) and recs[self._pos].t <= now:
            r = recs[self._pos]
            if r.link < len(self.links):
                self.links.record(r.link, r.t, r.bytes, self.direction)
            self._pos += 1
            n += 1
        return n

    @property
    def exhausted(self) -> bool:
        return self._pos >= len(self._records)


class MonotonicClock:
    def __init__(self):
        self._start = time.monotonic()

    def __call__(self) -> float:
        return time.monotonic() - self._start


class DnsService:
    def __init__(self, config: ZoneConfig, balancer: Balancer | None = None, feed=None,
                 clock=None, decision_log: DecisionLog | None = None):
        errors = config.validate()
        if errors:
            raise ValueError("invalid zone config:\n  " + "\n  ".join(errors))
        self.config = config
        self.decision_log = decision_log or DecisionLog(config.decision_log_max)
        self.balancer = balancer or config.make_balancer(log=self.decision_log)
        if self.balancer.link_count != len(config.addresses):
            raise ValueError("balancer link count does not match the zone's address list")
        self.feed = feed
        self.clock = clock or MonotonicClock()
        self.zone_key = config.zone_name.rstrip(".").lower()
        self.stats = Counter()
        self.link_answers = Counter()

    def handle(self, data: bytes, addr=None) -> bytes | None:
        """Answer one datagram; returns the reply, or None to drop it."""
        self.stats["queries_total"] += 1
        try:
            q = wire.parse_query(data)
        except wire.RefusedQuery as e:
            self.stats["refused"] += 1
            if e.question is not None:
                return wire.build_error(e.question, wire.RCODE_REFUSED)
            return wire.build_error(None, wire.RCODE_REFUSED, e.id, e.flags)
        except wire.DnsParseError as e:
            self.stats["parse_errors"] += 1
            log.debug("dropping malformed datagram from %s: %s", addr, e)
            return None
        if q.name_key != self.zone_key:
            self.stats["nxdomain"] += 1
            return wire.build_error(q, wire.RCODE_NXDOMAIN)
        if q.qtype != wire.TYPE_A or q.qclass != wire.CLASS_IN:
            self.stats["nodata"] += 1
            return wire.build_error(q, wire.RCODE_NOERROR)
        now = self.clock()
        if self.feed is not None:
            self.feed.advance(now)
        ldns = addr[0] if addr else None
        decision = self.balancer.decide(now, ldns)
        self.stats["answered"] += 1
        self.link_answers[decision.chosen_link] += 1
        return wire.build_response(q, self.config.addresses[decision.chosen_link], int(decision.advertised_ttl))

    def stats_text(self) -> str:
        counters = Counter({"queries_total": 0, "parse_errors": 0, "nxdomain": 0, "answered": 0})
        counters.update(self.stats)
        lines = [f"{k} {v}" for k, v in sorted(counters.items())]
        lines += [f"decisions_link_{i} {self.link_answers[i]}" for i in range(len(self.config.addresses))]
        dropped = getattr(self.decision_log, "dropped", 0)
        lines.append(f"decisions_dropped {dropped}")
        return "\n".join(lines) + "\n"


class _Protocol(asyncio.DatagramProtocol):
    def __init__(self, service: DnsService):
        self.service = service
        self.transport = None

    def connection_made(self, transport):
        self.transport = transport

    def datagram_received(self, data, addr):
        try:
            reply = self.service.handle(data, addr)
        except Exception:  # one bad request must not take the server down
            self.service.stats["internal_errors"] += 1
            log.exception("error handling datagram from %s", addr)
            return
        if reply is not None:
            try:
                self.transport.sendto(reply, addr)
            except OSError as e:
                self.service.stats["send_errors"] += 1
                log.warning("send to %s failed: %s", addr, e)

    def error_received(self, exc):
        self.service.stats["socket_errors"] += 1
        log.warning("socket error: %s", exc)


async def _bind(loop, service, host, port, retries, backoff):
    delay = backoff
    for attempt in range(retries + 1):
        try:
            return await loop.create_datagram_endpoint(lambda: _Protocol(service), local_addr=(host, port))
        except OSError as e:
            if attempt == retries:
                raise
            log.warning("bind %s:%s failed (%s); retrying in %.1fs", host, port, e, delay)
            await asyncio.sleep(delay)
            delay = min(delay * 2, 5.0)


def _flush(service, path):
    decisions = service.decision_log.drain() if hasattr(service.decision_log, "drain") else []
    if path is None or not decisions:
        return
    text = decisions_to_csv(decisions, link_count=len(service.config.addresses))
    with open(path, "a", newline="") as f:
        if f.tell() > 0:
            text = text.split("\n", 1)[1]
        f.write(text)


async def serve(service: DnsService, host="127.0.0.1", port=53, stop: asyncio.Event | None = None,
                decision_log_path=None, flush_interval=1.0, feed_interval=0.1,
                bind_retries=3, bind_backoff=0.5, ready=None, stats_path=None):
    """Run the UDP server until ``stop`` is set (or SIGINT/SIGTERM arrives).

    ``ready``, if given, is a future resolved with the bound ``(host, port)``.
    SIGUSR1 writes the counters to ``stats_path`` (or the log).
    """
    loop = asyncio.get_running_loop()
    stop = stop or asyncio.Event()
    transport, _ = await _bind(loop, service, host, port, bind_retries, bind_backoff)
    bound = transport.get_extra_info("sockname")[:2]
    log.info("serving %s on %s:%s", service.config.zone_name, *bound)

    def dump_stats():
        text = service.stats_text()
        if stats_path:
            with open(stats_path, "w") as f:
                f.write(text)
        else:
            log.info("stats:\n%s", text)

    installed = []
    for sig, handler in ((signal.SIGINT, stop.set), (signal.SIGTERM, stop.set), (signal.SIGUSR1, dump_stats)):
        try:
            loop.add_signal_handler(sig, handler)
            installed.append(sig)
        except (NotImplementedError, RuntimeError, ValueError):
            pass
    if ready is not None and not ready.done():
        ready.set_result(bound)

    async def periodic():
        last_flush = loop.time()
        while True:
            await asyncio.sleep(feed_interval)
            if service.feed is not None:
                service.feed.advance(service.clock())
            if loop.time() - last_flush >= flush_interval:
                _flush(service, decision_log_path)
                last_flush = loop.time()

    task = loop.create_task(periodic())
    try:
        await stop.wait()
    finally:
        task.cancel()
        try:
            await task
        except asyncio.CancelledError:
            pass
        transport.close()
        _flush(service, decision_log_path)
        for sig in installed:
            loop.remove_signal_handler(sig)
        if stats_path:
            dump_stats()
    return service.stats
