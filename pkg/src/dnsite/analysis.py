"""Trace analysis: LDNS/client association by origin AS, TTL-honoring
estimates from request inter-arrivals, CCDF regression fits and
distribution-free confidence intervals for medians.
"""

from __future__ import annotations

import csv
import ipaddress
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats


class PrefixTable:
    """Prefix -> origin AS map with longest-prefix-match lookup (binary trie)."""

    def __init__(self, entries=()):
        self._roots = {4: [None, None, None], 6: [None, None, None]}
        self.entries = []
        for prefix, asn in entries:
            self.add(prefix, asn)

    def __len__(self):
        return len(self.entries)

    def add(self, prefix, asn: int):
        net = ipaddress.ip_network(prefix, strict=False)
        node = self._roots[net.version]
        bits = int(net.network_address)
        width = net.max_prefixlen
        for i in range(net.prefixlen):
            b = (bits >> (width - 1 - i)) & 1
            if node[b] is None:
                node[b] = [None, None, None]
            node = node[b]
        if node[2] is not None:
            raise ValueError(f"duplicate prefix {net}")
        node[2] = int(asn)
        self.entries.append((net, int(asn)))

    def lookup(self, addr):
        ip = ipaddress.ip_address(addr)
        node = self._roots[ip.version]
        bits = int(ip)
        width = ip.max_prefixlen
        best = node[2]
        for i in range(width):
            node = node[(bits >> (width - 1 - i)) & 1]
            if node is None:
                break
            if node[2] is not None:
                best = node[2]
        return best

    @classmethod
    def parse(cls, text: str) -> "PrefixTable":
        table = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                prefix, asn = line.split(",")
                table.add(prefix.strip(), int(asn))
            except ValueError as e:
                raise ValueError(f"prefix table line {lineno}: {e}") from None
        return table

    @classmethod
    def from_file(cls, path) -> "PrefixTable":
        with open(path) as f:
            return cls.parse(f.read())

    def dumps(self) -> str:
        return "".join(f"{net},{asn}\n" for net, asn in self.entries)


def lpm(addr, table: PrefixTable):
    return table.lookup(addr)


class DnsLogEntry(NamedTuple):
    t: float
    ldns_addr: str
    qname: str = ""


class FlowLogEntry(NamedTuple):
    t: float
    client_addr: str
    bytes: int = 0


@dataclass
class AssociationResult:
    pairs: list = field(default_factory=list)  # (FlowLogEntry, ldns_addr, dns_request_t)
    ignored_no_ldns: int = 0
    ignored_ambiguous: int = 0

    @property
    def total(self) -> int:
        return len(self.pairs) + self.ignored_no_ldns + self.ignored_ambiguous

    @property
    def coverage_fraction(self) -> float:
        return len(self.pairs) / self.total if self.total else 0.0

    def clients_per_ldns(self) -> Counter:
        seen = defaultdict(set)
        for req, ldns, _ in self.pairs:
            seen[ldns].add(req.client_addr)
        return Counter({ldns: len(c) for ldns, c in seen.items()})


def associate(dns_log, flow_log, table: PrefixTable) -> AssociationResult:
    """Pair each client request with the latest earlier request of the single
    LDNS sharing its origin AS; requests with zero or several such LDNS are ignored."""
    dns_log = list(dns_log)
    origin = {}
    for entry in dns_log:
        if entry.ldns_addr not in origin:
            origin[entry.ldns_addr] = table.lookup(entry.ldns_addr)
    seen_by_as = defaultdict(dict)  # asn -> {ldns_addr: latest request time}
    result = AssociationResult()
    i = 0
    for req in flow_log:
        while i < len(dns_log) and dns_log[i].t < req.t:
            entry = dns_log[i]
            asn = origin[entry.ldns_addr]
            if asn is not None:
                seen_by_as[asn][entry.ldns_addr] = entry.t
            i += 1
        asn = table.lookup(req.client_addr)
        candidates = seen_by_as.get(asn, {}) if asn is not None else {}
        if not candidates:
            result.ignored_no_ldns += 1
        elif len(candidates) > 1:
            result.ignored_ambiguous += 1
        else:
            (ldns, t_dns), = candidates.items()
            result.pairs.append((req, ldns, t_dns))
    return result


@dataclass
class InterarrivalResult:
    min_gap: dict
    single_request: list
    cdf_x: np.ndarray
    cdf_y: np.ndarray
    honoring_fraction: float | None = None


def min_interarrival_per_ldns(dns_log, ttl=None) -> InterarrivalResult:
    """Minimum gap between consecutive requests of each LDNS.

    LDNS servers seen only once have no gap; they are listed separately and
    left out of the CDF.  With ``ttl`` given, also reports the fraction of
    LDNS whose minimum gap is at least the TTL.
    """
    last, gaps = {}, {}
    order = []
    for entry in dns_log:
        key = entry.ldns_addr
        if key in last:
            gap = entry.t - last[key]
            gaps[key] = min(gap, gaps.get(key, math.inf))
        else:
            order.append(key)
        last[key] = entry.t
    single = [k for k in order if k not in gaps]
    x = np.sort(np.fromiter(gaps.values(), dtype=float, count=len(gaps)))
    y = np.arange(1, len(x) + 1) / len(x) if len(x) else np.zeros(0)
    honoring = None
    if ttl is not None and gaps:
        honoring = float(np.mean(x >= ttl))
    return InterarrivalResult(gaps, single, x, y, honoring)


@dataclass
class FitResult:
    family: str
    params: dict
    goodness: float

    def log_ccdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "pareto":
            return np.minimum(0.0, -self.params["shape"] * (np.log(x) - math.log(self.params["scale"])))
        return stats.norm.logsf((np.log(x) - self.params["mu"]) / self.params["sigma"])


def _plotting_positions(samples):
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    cdf = (np.arange(1, n + 1) - 0.5) / n
    return x, cdf


def fit_distribution(samples, family: str) -> FitResult:
    """Least-squares fit on the empirical CCDF.

    Pareto: straight line in log-log coordinates, slope = -shape.
    Lognormal: straight line of the normal quantile of the CDF against log x.
    ``goodness`` is the residual sum of squares of log CCDF for either
    family, so values are comparable; smaller is better.
    """
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 10:
        raise ValueError(f"need at least 10 samples, got {len(samples)}")
    if np.any(samples <= 0) or not np.all(np.isfinite(samples)):
        raise ValueError("samples must be positive and finite")
    if np.all(samples == samples[0]):
        raise ValueError("samples are constant; no distribution can be fitted")
    x, cdf = _plotting_positions(samples)
    logx = np.log(x)
    if family == "pareto":
        slope, intercept = np.polyfit(logx, np.log1p(-cdf), 1)
        shape = -slope
        if not shape > 0:
            raise ValueError("CCDF does not decay; Pareto fit undefined")
        fit = FitResult("pareto", {"shape": float(shape), "scale": float(math.exp(intercept / shape))}, 0.0)
    elif family == "lognormal":
        slope, intercept = np.polyfit(logx, stats.norm.ppf(cdf), 1)
        if not slope > 0:
            raise ValueError("lognormal fit undefined for this sample")
        fit = FitResult("lognormal", {"mu": float(-intercept / slope), "sigma": float(1 / slope)}, 0.0)
    else:
        raise ValueError(f"unknown family {family!r}")
    resid = np.log1p(-cdf) - fit.log_ccdf(x)
    fit.goodness = float(np.sum(resid**2))
    return fit


def best_fit(samples, families=("pareto", "lognormal")) -> FitResult:
    return min((fit_distribution(samples, f) for f in families), key=lambda f: f.goodness)


class MedianCI(NamedTuple):
    median: float
    lower: float
    upper: float
    widened: bool = False


def median_ci(samples, confidence=0.99) -> MedianCI:
    """Order-statistic (sign-test) confidence interval for the median."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < 8:
        raise ValueError(f"need at least 8 samples, got {n}")
    med = float(np.median(x))
    alpha = 1 - confidence
    # largest k with P(Binom(n, 1/2) <= k - 1) <= alpha / 2
    k = int(stats.binom.ppf(alpha / 2, n, 0.5))
    while k >= 1 and stats.binom.cdf(k - 1, n, 0.5) > alpha / 2:
        k -= 1
    while stats.binom.cdf(k, n, 0.5) <= alpha / 2:
        k += 1
    if k < 1:
        warnings.warn(f"{n} samples cannot reach {confidence:.0%} confidence; returning the sample range")
        return MedianCI(med, float(x[0]), float(x[-1]), True)
    return MedianCI(med, float(x[k - 1]), float(x[n - k]), False)


# --- log file formats -------------------------------------------------------

def read_dns_log(path) -> list:
    with open(path, newline="") as f:
        return [DnsLogEntry(float(r["t"]), r["ldns_addr"], r.get("qname", "")) for r in csv.DictReader(f)]


def read_flow_log(path) -> list:
    with open(path, newline="") as f:
        return [FlowLogEntry(float(r["t"]), r["client_addr"], int(r["bytes"])) for r in csv.DictReader(f)]


def write_dns_log(entries, path):
    with open(path, "w", newline="") as f:
        f.write("t,ldns_addr,qname\n")
        for e in entries:
            f.write(f"{e.t!r},{e.ldns_addr},{e.qname}\n")


def write_flow_log(entries, path):
    with open(path, "w", newline="") as f:
        f.write("t,client_addr,bytes\n")
        for e in entries:
            f.write(f"{e.t!r},{e.client_addr},{e.bytes}\n")


@dataclass
class SyntheticLogs:
    dns_log: list
    flow_log: list
    table: PrefixTable
    truth: dict  # client_addr -> ldns_addr


def export_logs(trace, qname="www.example.org", shared_as_every=0, unrouted_every=0) -> SyntheticLogs:
    """Turn a simulator trace into address-level DNS and flow logs with ground truth.

    LDNS ``i`` and its clients are placed in AS ``64512 + i`` (a /16), with the
    LDNS in a more specific /24 of the same AS.  ``shared_as_every=m`` folds
    every ``m``-th LDNS into the previous LDNS's AS, creating ambiguity;
    ``unrouted_every=m`` leaves every ``m``-th AS's client space unannounced.
    """
    ldns_ids = sorted({r.ldns_id for r in trace if r.ldns_id is not None})
    as_slot = {}
    for pos, i in enumerate(ldns_ids):
        if shared_as_every and pos % shared_as_every == shared_as_every - 1 and pos > 0:
            as_slot[i] = as_slot[ldns_ids[pos - 1]]
        else:
            as_slot[i] = pos
    if max(as_slot.values(), default=0) > 255:
        raise ValueError("too many LDNS servers for the synthetic address plan")
    members = defaultdict(list)
    for i in ldns_ids:
        members[as_slot[i]].append(i)
    ldns_addr = {i: f"10.{as_slot[i]}.0.{1 + members[as_slot[i]].index(i)}" for i in ldns_ids}
    table = PrefixTable()
    for slot in sorted(members):
        asn = 64512 + slot
        table.add(f"10.{slot}.0.0/24", asn)
        if not (unrouted_every and slot % unrouted_every == unrouted_every - 1):
            table.add(f"10.{slot}.0.0/16", asn)
    client_addr, truth = {}, {}
    per_slot = Counter()
    for r in trace:
        if r.client_id is not None and r.client_id not in client_addr and r.ldns_id is not None:
            slot = as_slot[r.ldns_id]
            c = per_slot[slot]
            per_slot[slot] += 1
            if c >= 250 * 254:
                raise ValueError("too many clients in one AS for the synthetic address plan")
            addr = f"10.{slot}.{1 + c // 250}.{1 + c % 250}"
            client_addr[r.client_id] = addr
            truth[addr] = ldns_addr[r.ldns_id]
    dns_log = [DnsLogEntry(r.t, ldns_addr[r.ldns_id], qname) for r in trace if r.kind == "dns_request"]
    flow_log = [FlowLogEntry(r.t, client_addr[r.client_id], r.bytes) for r in trace if r.kind == "flow_start"]
    return SyntheticLogs(dns_log, flow_log, table, truth)


def bytes_per_client(flow_log) -> dict:
    totals = Counter()
    for e in flow_log:
        totals[e.client_addr] += e.bytes
    return dict(totals)
