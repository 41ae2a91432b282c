"""Experiment configuration and its key-value file format.

A scenario file starts with a version line and holds one ``key = value``
pair per line; ``#`` starts a comment.  Keys are the field names of
:class:`Scenario`.  Lines of the form ``sweep.<key> = v1, v2, ...`` declare
a parameter sweep; several sweep keys must list the same number of values
and advance in lockstep::

    # dnsite-scenario v1
    name = fig_filesize
    size_kind = fixed
    load_reference_size = 225000
    sweep.size_mean = 30000, 625000
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields

from ..balancer import canonical_policy
from ..model import SizeDistribution
from ..monitor import POLICIES as DIRECTION_POLICIES

HEADER = "# dnsite-scenario v1"
WORKLOADS = ("closed_loop", "cbr", "pareto")
DEFAULT_SEED = 20080410


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Scenario:
    name: str = "default"
    workload: str = "closed_loop"
    duration: float = 600.0
    seed: int = DEFAULT_SEED

    # LDNS population
    ldns_count: int = 40
    hidden_clients_dist: str = "uniform"
    hidden_clients_min: int = 1
    hidden_clients_max: int = 5
    hidden_clients_shape: float = 1.2
    violator_fraction: float = 0.4
    violator_ttl_min: int = 5
    violator_ttl_max: int = 600
    violation_mode: str = "advertise"
    noncaching_fraction: float = 0.0
    nominal_ttl: float = 15.0

    # closed-loop clients
    sleep_mean: float = 35.0
    load_reference_size: float = 0.0
    size_kind: str = "lognormal"
    size_mean: float = 225_000.0
    size_cap: float = 625_000.0
    size_sigma: float = 1.5
    path_rate_min: float = 0.5e6
    path_rate_max: float = 10e6
    path_rtt_min: float = 0.010
    path_rtt_max: float = 0.300
    flow_rate_cap: float = math.inf
    delay_kind: str = "rtt"
    delay_fixed: float = 0.0
    delay_rtt_multiplier: float = 3.0

    # balancing and measurement
    policy: str = "round_robin"
    window: float = 10.0
    small_window: float = 0.1
    direction_policy: str = "both"
    link_count: int = 2
    timescale: float = 20.0
    step: float = 1.0

    # synthetic CBR flows
    cbr_arrival_rate: float = 2.0
    cbr_flow_size: float = 1_250_000.0
    cbr_flow_rate: float = 1e6
    cbr_packet_interval: float = 0.1

    # synthetic Pareto renewal sources
    pareto_sources: int = 20
    pareto_shape: float = 1.2
    pareto_mean_gap: float = 0.01
    pareto_pkt_size: int = 1000
    pareto_reresolve: float = 0.0

    @property
    def size_dist(self) -> SizeDistribution:
        cap = self.size_cap if self.size_kind == "lognormal" else math.inf
        return SizeDistribution(self.size_kind, self.size_mean, cap, self.size_sigma)

    @property
    def effective_sleep_mean(self) -> float:
        """Mean idle time, rescaled to hold per-client load when a reference size is set."""
        if self.load_reference_size > 0:
            return self.sleep_mean * self.size_mean / self.load_reference_size
        return self.sleep_mean

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def validate(self) -> list:
        errors = []

        def need(cond, msg):
            if not cond:
                errors.append(msg)

        need(self.workload in WORKLOADS, f"workload: must be one of {WORKLOADS}")
        need(self.duration > 0, "duration: must be > 0")
        need(0 <= self.seed < 2**64, "seed: must be a 64-bit unsigned integer")
        need(self.ldns_count >= 1, "ldns_count: must be >= 1")
        need(self.hidden_clients_dist in ("uniform", "pareto"), "hidden_clients_dist: must be uniform or pareto")
        need(self.hidden_clients_min >= 1, "hidden_clients_min: must be >= 1")
        need(self.hidden_clients_max >= self.hidden_clients_min, "hidden_clients_max: must be >= hidden_clients_min")
        need(self.hidden_clients_shape > 0, "hidden_clients_shape: must be > 0")
        need(0 <= self.violator_fraction <= 1, "violator_fraction: must be in [0, 1]")
        need(0 <= self.noncaching_fraction <= self.violator_fraction,
             "noncaching_fraction: must be in [0, violator_fraction]")
        need(0 < self.violator_ttl_min <= self.violator_ttl_max, "violator_ttl_min/max: need 0 < min <= max")
        need(self.violation_mode in ("advertise", "ignore"), "violation_mode: must be advertise or ignore")
        need(self.nominal_ttl > 0, "nominal_ttl: must be > 0")
        need(self.sleep_mean > 0, "sleep_mean: must be > 0")
        need(self.load_reference_size >= 0, "load_reference_size: must be >= 0")
        try:
            self.size_dist
        except ValueError as e:
            errors.append(f"size: {e}")
        need(0 < self.path_rate_min <= self.path_rate_max, "path_rate_min/max: need 0 < min <= max")
        need(0 < self.path_rtt_min <= self.path_rtt_max, "path_rtt_min/max: need 0 < min <= max")
        need(self.flow_rate_cap > 0, "flow_rate_cap: must be > 0")
        need(self.delay_kind in ("fixed", "rtt"), "delay_kind: must be fixed or rtt")
        need(self.delay_fixed >= 0, "delay_fixed: must be >= 0")
        need(self.delay_rtt_multiplier >= 0, "delay_rtt_multiplier: must be >= 0")
        try:
            canonical_policy(self.policy)
        except ValueError as e:
            errors.append(f"policy: {e}")
        need(self.small_window > 0, "small_window: must be > 0")
        if self.small_window > 0:
            n = round(self.window / self.small_window)
            need(n >= 1 and abs(n * self.small_window - self.window) < 1e-9 * max(1, self.window),
                 "window: must be a positive multiple of small_window")
            for key in ("timescale", "step"):
                v = getattr(self, key)
                m = round(v / self.small_window)
                need(m >= 1 and abs(m * self.small_window - v) < 1e-9 * max(1, v),
                     f"{key}: must be a positive multiple of small_window")
        need(self.direction_policy in DIRECTION_POLICIES, f"direction_policy: must be one of {DIRECTION_POLICIES}")
        need(self.link_count >= 2, "link_count: must be >= 2")
        need(self.cbr_arrival_rate > 0, "cbr_arrival_rate: must be > 0")
        need(self.cbr_flow_size > 0, "cbr_flow_size: must be > 0")
        need(self.cbr_flow_rate > 0, "cbr_flow_rate: must be > 0")
        need(self.cbr_packet_interval > 0, "cbr_packet_interval: must be > 0")
        need(self.pareto_sources >= 1, "pareto_sources: must be >= 1")
        need(self.pareto_shape > 1, "pareto_shape: must be > 1 for a finite mean gap")
        need(self.pareto_mean_gap > 0, "pareto_mean_gap: must be > 0")
        need(self.pareto_pkt_size > 0, "pareto_pkt_size: must be > 0")
        need(self.pareto_reresolve >= 0, "pareto_reresolve: must be >= 0")
        return errors

    def check(self) -> "Scenario":
        errors = self.validate()
        if errors:
            raise ScenarioError(errors)
        return self

    def dumps(self) -> str:
        lines = [HEADER]
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


_TYPES = {f.name: type(f.default) for f in fields(Scenario)}


def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(key, raw):
    if key not in _TYPES:
        raise KeyError(key)
    kind = _TYPES[key]
    raw = raw.strip()
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            value = float(raw)
            if not value.is_integer():
                raise
            return int(value)
    if kind is float:
        return float(raw)
    return raw


def parse(text: str):
    """Parse scenario text into ``(base Scenario, sweep dict)``; collects every error."""
    lines = text.splitlines()
    errors = []
    if not lines or lines[0].strip() != HEADER:
        errors.append(f"line 1: expected header {HEADER!r}")
    values, sweep = {}, {}
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        target = values
        if key.startswith("sweep."):
            key = key[len("sweep."):]
            target = sweep
        try:
            if target is sweep:
                sweep[key] = [_convert(key, part) for part in raw.split(",")]
            else:
                values[key] = _convert(key, raw)
        except KeyError:
            errors.append(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            errors.append(f"line {lineno}: bad value {raw!r} for {key}")
    lengths = {len(v) for v in sweep.values()}
    if len(lengths) > 1:
        errors.append("sweep: all sweep keys must list the same number of values")
    base = Scenario(**values)
    errors += [e for e in base.validate() if e not in errors]
    if len(lengths) <= 1:
        for point in expand(base, sweep):
            errors += [e for e in point[1].validate() if e not in errors]
    if errors:
        raise ScenarioError(errors)
    return base, sweep


def loads(text: str) -> Scenario:
    base, sweep = parse(text)
    if sweep:
        raise ScenarioError(["sweep: use parse()/expand() for scenario files with sweeps"])
    return base


def load(path):
    with open(path) as f:
        return parse(f.read())


def expand(base: Scenario, sweep: dict) -> list:
    """Sweep points as ``(label, Scenario)`` pairs, in file order."""
    if not sweep:
        return [(base.name, base)]
    keys = list(sweep)
    points = []
    for i in range(len(sweep[keys[0]])):
        changes = {k: sweep[k][i] for k in keys}
        label = "_".join(f"{k}={_format(v)}" for k, v in changes.items())
        points.append((label, base.replace(**changes)))
    return points
