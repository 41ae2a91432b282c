"""Resolution-time link selection.

``round_robin`` rotates through the links; ``measurement_based`` picks the
link with the least load in the monitors' sliding window, rotating among
exact ties with the round-robin cursor.  ``random`` and ``static`` are
baselines for tests.
"""

from __future__ import annotations

import io
import queue
import threading
from dataclasses import dataclass

import numpy as np

from .monitor import LinkSet

POLICIES = ("round_robin", "measurement_based", "random", "static")
ALIASES = {"rr": "round_robin", "mb": "measurement_based"}


def canonical_policy(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in POLICIES:
        raise ValueError(f"unknown balancing policy {name!r}")
    return name


@dataclass(frozen=True)
class BalancerDecision:
    t: float
    ldns_id: object
    chosen_link: int
    advertised_ttl: float
    link_loads_at_decision: tuple = ()


class TtlPolicy:
    """Per-LDNS advertised TTL, fixed for the lifetime of an experiment.

    Honoring LDNS servers get ``nominal_ttl``.  For violators, ``mode``
    selects how violation is emulated: ``"advertise"`` hands each violator
    its own TTL drawn once from ``violator_range``; ``"ignore"`` advertises
    the nominal TTL and leaves the violator to apply its own.
    """

    def __init__(self, nominal_ttl=15, violator_fraction=0.4, violator_range=(5, 600),
                 mode="advertise", seed=None):
        if mode not in ("advertise", "ignore"):
            raise ValueError(f"unknown violation mode {mode!r}")
        self.nominal_ttl = nominal_ttl
        self.violator_fraction = violator_fraction
        self.violator_range = violator_range
        self.mode = mode
        self._rng = np.random.default_rng(seed)
        self._violator = {}
        self._own_ttl = {}
        self._lock = threading.Lock()

    def draw_violator_ttl(self) -> int:
        lo, hi = self.violator_range
        return int(self._rng.integers(lo, hi + 1))

    def register(self, ldns_id, violator: bool, own_ttl=None):
        with self._lock:
            self._violator[ldns_id] = violator
            if violator:
                self._own_ttl[ldns_id] = own_ttl if own_ttl is not None else self.draw_violator_ttl()

    def is_violator(self, ldns_id) -> bool:
        with self._lock:
            if ldns_id not in self._violator:
                violator = bool(self._rng.random() < self.violator_fraction)
                self._violator[ldns_id] = violator
                if violator:
                    self._own_ttl[ldns_id] = self.draw_violator_ttl()
            return self._violator[ldns_id]

    def advertised_ttl_for(self, ldns_id) -> float:
        if self.is_violator(ldns_id) and self.mode == "advertise":
            return self._own_ttl[ldns_id]
        return self.nominal_ttl

    def effective_ttl_for(self, ldns_id) -> float:
        """TTL the LDNS actually applies to its cache."""
        if self.is_violator(ldns_id):
            return self._own_ttl[ldns_id]
        return self.nominal_ttl


def advertised_ttl_for(ldns, policy: TtlPolicy) -> float:
    ldns_id = getattr(ldns, "id", ldns)
    return policy.advertised_ttl_for(ldns_id)


class Balancer:
    """Pluggable decision point shared by the simulator, the replay engine and the DNS service."""

    def __init__(self, policy="round_robin", links: LinkSet | None = None, link_count=None,
                 ttl_policy: TtlPolicy | None = None, seed=None, static_link=0, log=None):
        self.policy = canonical_policy(policy)
        if links is None and self.policy == "measurement_based":
            raise ValueError("measurement-based balancing needs link monitors")
        self.links = links
        self.link_count = link_count or (len(links) if links is not None else 2)
        if self.link_count < 2:
            raise ValueError("need at least two links to balance")
        self.ttl_policy = ttl_policy or TtlPolicy()
        self.rr_cursor = 0
        self.static_link = static_link
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()
        self.log = log if log is not None else []

    @property
    def mb_window(self):
        return self.links.window if self.links is not None else None

    def choose(self, t: float):
        """Pick a link; returns (link, load snapshot)."""
        with self._lock:
            k = self.link_count
            if self.policy == "round_robin":
                link = self.rr_cursor
                self.rr_cursor = (self.rr_cursor + 1) % k
                return link, ()
            if self.policy == "random":
                return int(self._rng.integers(k)), ()
            if self.policy == "static":
                return self.static_link, ()
            loads = self.links.snapshot(t)
            low = min(loads)
            for step in range(k):
                link = (self.rr_cursor + step) % k
                if loads[link] == low:
                    break
            self.rr_cursor = (link + 1) % k
            return link, loads

    def decide(self, t: float, ldns_id=None) -> BalancerDecision:
        link, loads = self.choose(t)
        ttl = self.ttl_policy.advertised_ttl_for(ldns_id)
        decision = BalancerDecision(t, ldns_id, link, ttl, loads)
        self.log.append(decision)
        return decision


class DecisionLog:
    """Bounded, lossy decision sink for the live service; drops are counted."""

    def __init__(self, maxsize=10000):
        self._queue = queue.Queue(maxsize)
        self.dropped = 0

    def append(self, decision: BalancerDecision):
        try:
            self._queue.put_nowait(decision)
        except queue.Full:
            self.dropped += 1

    def drain(self) -> list:
        out = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out


def decisions_to_csv(decisions, fp=None, link_count=2) -> str:
    out = io.StringIO()
    header = ["t_seconds", "ldns_id", "chosen_link", "advertised_ttl"]
    header += [f"load{i}_bps" for i in range(link_count)]
    out.write(",".join(header) + "\n")
    for d in decisions:
        loads = [f"{x:.3f}" for x in d.link_loads_at_decision] or [""] * link_count
        out.write(f"{d.t:.6f},{d.ldns_id},{d.chosen_link},{d.advertised_ttl:g}," + ",".join(loads) + "\n")
    text = out.getvalue()
    if fp is not None:
        if hasattr(fp, "write"):
            fp.write(text)
        else:
            with open(fp, "w", newline="") as f:
                f.write(text)
    return text
