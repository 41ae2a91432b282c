"""Domain vocabulary, workload distributions and the granularity model.

The granularity model relates the DNS request rate an LDNS presents to the
authoritative server with the amount of traffic each resolution steers:

    lambda = n*r                  (non-caching LDNS)
    lambda = min(n*r, 1/T)        (caching LDNS with TTL T)
    R / lambda = s  or  n*r*s*T   (bytes steered per DNS request)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize, stats

KB = 1000


@dataclass(frozen=True)
class GranularityInput:
    n: int
    r: float
    s: float
    ttl: float
    caching: bool = True

    def __post_init__(self):
        for name in ("n", "r", "s", "ttl"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")


def ldns_request_rate(g: GranularityInput) -> float:
    """DNS requests per second reaching the authoritative server from one LDNS."""
    offered = g.n * g.r
    if not g.caching:
        return offered
    return min(offered, 1.0 / g.ttl)


def granularity_bytes_per_request(g: GranularityInput) -> float:
    """Expected bytes of traffic that follow a single DNS resolution."""
    offered = g.n * g.r
    if not g.caching or offered < 1.0 / g.ttl:
        return g.s
    return offered * g.s * g.ttl


def pending_load_ratio(delta: float, lam: float) -> float:
    """Number of DNS requests routed while one request's traffic is still in flight.

    Values above 1 mean the balancer decides blind to load it has already
    committed but not yet observed.
    """
    if delta < 0 or lam < 0:
        raise ValueError("delta and lambda must be non-negative")
    return delta * lam


@dataclass(frozen=True)
class SizeDistribution:
    """Transfer size in bytes: either fixed, or lognormal clamped at a cap.

    For the lognormal kind the location parameter is solved so that the mean
    *after clamping* equals ``mean_bytes``; with an infinite cap this reduces
    to ``ln(mean) - sigma**2 / 2``.
    """

    kind: str = "fixed"
    mean_bytes: float = 225 * KB
    truncation_cap: float = math.inf
    sigma: float = 1.5

    def __post_init__(self):
        if self.kind not in ("fixed", "lognormal"):
            raise ValueError(f"unknown size distribution kind {self.kind!r}")
        if not self.mean_bytes > 0:
            raise ValueError("mean_bytes must be > 0")
        if self.kind == "lognormal":
            if not self.sigma > 0:
                raise ValueError("sigma must be > 0")
            if self.truncation_cap < self.mean_bytes:
                raise ValueError(
                    f"truncation cap {self.truncation_cap} is below the configured "
                    f"mean {self.mean_bytes}"
                )

    @cached_property
    def mu(self) -> float:
        if self.kind != "lognormal":
            raise AttributeError("mu is only defined for the lognormal kind")
        base = math.log(self.mean_bytes) - self.sigma**2 / 2
        if math.isinf(self.truncation_cap):
            return base
        if self.truncation_cap == self.mean_bytes:
            # every sample clamps to the cap; any large location works
            return math.log(self.truncation_cap) + 10 * self.sigma

        def gap(mu):
            return clamped_lognormal_mean(mu, self.sigma, self.truncation_cap) - self.mean_bytes

        hi = math.log(self.truncation_cap) + 10 * self.sigma
        return optimize.brentq(gap, base - 1.0, hi, xtol=1e-12)

    def sample(self, rng: np.random.Generator, size=None):
        return sample_size(self, rng, size)


def clamped_lognormal_mean(mu: float, sigma: float, cap: float) -> float:
    """E[min(X, cap)] for X ~ lognormal(mu, sigma)."""
    z = (math.log(cap) - mu) / sigma
    body = math.exp(mu + sigma**2 / 2) * stats.norm.cdf(z - sigma)
    return body + cap * stats.norm.sf(z)


def sample_size(d: SizeDistribution, rng: np.random.Generator, size=None):
    if d.kind == "fixed":
        if size is None:
            return float(d.mean_bytes)
        return np.full(size, float(d.mean_bytes))
    x = rng.lognormal(d.mu, d.sigma, size)
    return np.minimum(x, d.truncation_cap) if size is not None else min(float(x), d.truncation_cap)


@dataclass
class LdnsProfile:
    id: int | str
    honors_ttl: bool = True
    caching: bool = True
    effective_ttl: float = 15.0
    client_ids: list = field(default_factory=list)

    @property
    def hidden_client_count(self) -> int:
        return len(self.client_ids)

    def validate(self):
        errors = []
        if not self.client_ids:
            errors.append(f"ldns {self.id}: needs at least one client")
        if self.caching and not self.effective_ttl > 0:
            errors.append(f"ldns {self.id}: effective_ttl must be > 0 when caching")
        return errors


@dataclass
class ClientSession:
    id: int | str
    ldns_id: int | str
    size_dist: SizeDistribution
    sleep_mean: float
    path_rtt: float
    path_rate: float

    def __post_init__(self):
        if not (self.path_rtt > 0 and self.path_rate > 0):
            raise ValueError("path_rtt and path_rate must be > 0")

    @property
    def request_rate(self) -> float:
        """Open-loop approximation of the closed-loop connection rate r."""
        transfer = self.size_dist.mean_bytes * 8 / self.path_rate
        return 1.0 / (self.sleep_mean + transfer)
