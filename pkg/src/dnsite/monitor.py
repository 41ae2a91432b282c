"""Per-link traffic accounting.

Each link keeps a ring of ``n`` byte counters, one per small window of width
``w`` (100 ms by default), so the measurement window is ``W = n * w``.  The
grid is anchored at ``origin`` and only ever moves forward in whole ``w``
steps.  A query in the middle of a small window sees the partially filled
current window plus the ``n - 1`` complete windows before it.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from dataclasses import dataclass, field

import numpy as np

SMALL_WINDOW = 0.1
DIRECTIONS = ("ingress", "egress")
POLICIES = ("ingress", "egress", "both")

# absorbs float noise such as 0.3 / 0.1 == 2.9999999999999996
_GRID_EPS = 1e-9


class OutOfOrderError(ValueError):
    """A byte record arrived more than one small window in the past."""


def window_index(t: float, w: float = SMALL_WINDOW, origin: float = 0.0) -> int:
    return math.floor((t - origin) / w + _GRID_EPS)


def windows_for(window: float, w: float = SMALL_WINDOW) -> int:
    """Number of small windows making up a measurement window."""
    n = round(window / w)
    if n < 1 or abs(n * w - window) > 1e-9 * max(1.0, window):
        raise ValueError(f"window {window} is not a positive multiple of w={w}")
    return n


class LinkMonitor:
    def __init__(self, link_id=0, w=SMALL_WINDOW, n=100, direction_policy="both", origin=0.0):
        if n < 1:
            raise ValueError("window_count_n must be >= 1")
        if direction_policy not in POLICIES:
            raise ValueError(f"unknown direction policy {direction_policy!r}")
        self.link_id = link_id
        self.w = w
        self.n = n
        self.direction_policy = direction_policy
        self.origin = origin
        self.ring = [0] * n
        self._head = None  # absolute index of the newest small window
        self._total = 0  # sum of the ring
        self._now = -math.inf
        self.recorded_total = 0

    @property
    def window(self) -> float:
        return self.n * self.w

    @property
    def current_window_start(self) -> float:
        if self._head is None:
            return self.origin
        return self.origin + self._head * self.w

    def accepts(self, direction: str) -> bool:
        return self.direction_policy == "both" or direction == self.direction_policy

    def _advance(self, k: int):
        if self._head is None:
            self._head = k
            return
        steps = k - self._head
        if steps <= 0:
            return
        if steps >= self.n:
            self.ring = [0] * self.n
            self._total = 0
        else:
            ring, n = self.ring, self.n
            for j in range(self._head + 1, k + 1):
                slot = j % n
                self._total -= ring[slot]
                ring[slot] = 0
        self._head = k

    def record_bytes(self, t: float, nbytes: int, direction: str = "egress"):
        if nbytes < 0:
            raise ValueError("byte count must be non-negative")
        if direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {direction!r}")
        if t < self._now - self.w:
            raise OutOfOrderError(f"record at t={t} is behind the feed time {self._now}")
        self._now = max(self._now, t)
        if not self.accepts(direction):
            return self
        k = window_index(t, self.w, self.origin)
        self._advance(k)
        if k <= self._head - self.n:
            # already evicted; only possible when n == 1
            return self
        self.ring[k % self.n] += nbytes
        self._total += nbytes
        self.recorded_total += nbytes
        return self

    def window_bytes(self, t: float) -> int:
        """Bytes in the ``n`` small windows ending with the one containing ``t``.

        Read-only: the ring is not advanced.
        """
        if self._head is None:
            return 0
        k = window_index(t, self.w, self.origin)
        lo = k - self.n + 1
        if lo > self._head:
            return 0
        oldest = self._head - self.n + 1
        if k >= self._head:
            if lo <= oldest:
                return self._total
            total = self._total
            for j in range(oldest, lo):
                total -= self.ring[j % self.n]
            return total
        return sum(self.ring[j % self.n] for j in range(max(lo, oldest), k + 1))

    def utilization(self, t: float) -> float:
        """Load in bits per second over the measurement window ending at ``t``."""
        return self.window_bytes(t) * 8 / self.window


class LinkSet:
    """Monitors for all access links, read together as one consistent snapshot."""

    def __init__(self, k=2, window=10.0, w=SMALL_WINDOW, direction_policy="both", origin=0.0):
        if k < 1:
            raise ValueError("need at least one link")
        n = windows_for(window, w)
        self.monitors = [LinkMonitor(i, w, n, direction_policy, origin) for i in range(k)]
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.monitors)

    def __getitem__(self, i):
        return self.monitors[i]

    @property
    def window(self) -> float:
        return self.monitors[0].window

    def record(self, link: int, t: float, nbytes: int, direction: str = "egress"):
        with self._lock:
            self.monitors[link].record_bytes(t, nbytes, direction)

    def snapshot(self, t: float) -> tuple:
        with self._lock:
            return tuple(m.utilization(t) for m in self.monitors)


def error_metric(u1: float, u2: float) -> float:
    """Relative imbalance |U1 - U2| / (U1 + U2); two idle links count as balanced."""
    if u1 < 0 or u2 < 0:
        raise ValueError("utilizations must be non-negative")
    total = u1 + u2
    if total == 0:
        return 0.0
    return abs(u1 - u2) / total


@dataclass
class ErrorSeries:
    averaging_timescale: float
    step: float = 1.0
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    epsilon: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.times)

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.epsilon.tolist()))

    def median(self) -> float:
        if not len(self.epsilon):
            return math.nan
        return float(np.median(self.epsilon))

    def to_csv(self, fp=None) -> str:
        out = io.StringIO()
        out.write("t_seconds,epsilon\n")
        for t, e in zip(self.times, self.epsilon):
            out.write(f"{t:.6f},{e:.6f}\n")
        text = out.getvalue()
        if fp is not None:
            if hasattr(fp, "write"):
                fp.write(text)
            else:
                with open(fp, "w", newline="") as f:
                    f.write(text)
        return text

    @classmethod
    def from_csv(cls, fp, averaging_timescale=math.nan, step=math.nan):
        if isinstance(fp, (str, bytes)) or hasattr(fp, "__fspath__"):
            with open(fp, newline="") as f:
                rows = list(csv.DictReader(f))
        else:
            rows = list(csv.DictReader(fp))
        times = np.array([float(r["t_seconds"]) for r in rows])
        eps = np.array([float(r["epsilon"]) for r in rows])
        return cls(averaging_timescale, step, times, eps)


def link_byte_bins(events, w=SMALL_WINDOW, links=(0, 1), span=None):
    """Bytes per link per small window, indexed from time zero."""
    ts, ls, bs = [], [], []
    for rec in events:
        if rec.kind == "bytes":
            ts.append(rec.t)
            ls.append(rec.link)
            bs.append(rec.bytes)
    ts = np.asarray(ts, dtype=float)
    ls = np.asarray(ls, dtype=int)
    bs = np.asarray(bs, dtype=np.int64)
    last = span if span is not None else (ts.max() if len(ts) else 0.0)
    nbins = window_index(last, w) + 2
    idx = np.floor(ts / w + _GRID_EPS).astype(np.int64)
    keep = idx < nbins
    bins = np.zeros((len(links), nbins), dtype=np.int64)
    for row, link in enumerate(links):
        sel = keep & (ls == link)
        np.add.at(bins[row], idx[sel], bs[sel])
    return bins


def error_series_from_bins(bins, averaging_timescale=20.0, step=1.0, w=SMALL_WINDOW, span=None):
    """Error samples every ``step`` seconds from per-link small-window byte bins."""
    per_window = windows_for(averaging_timescale, w)
    per_step = windows_for(step, w)
    nbins = bins.shape[1]
    if span is None:
        span = nbins * w
    last_start = window_index(span, w) - per_window
    starts = np.arange(per_window, last_start + 1, per_step)
    if len(starts) == 0:
        return ErrorSeries(averaging_timescale, step)
    csum = np.zeros((2, nbins + 1), dtype=np.int64)
    np.cumsum(bins[:2], axis=1, out=csum[:, 1:])
    ends = starts + per_window
    u1 = (csum[0, ends] - csum[0, starts]).astype(float)
    u2 = (csum[1, ends] - csum[1, starts]).astype(float)
    total = u1 + u2
    with np.errstate(invalid="ignore", divide="ignore"):
        eps = np.where(total > 0, np.abs(u1 - u2) / np.where(total > 0, total, 1), 0.0)
    return ErrorSeries(averaging_timescale, step, np.round(starts * w, 9), eps)


def error_series(events, averaging_timescale=20.0, step=1.0, w=SMALL_WINDOW, duration=None, links=(0, 1)):
    """Error metric over windows ``[t, t + I)`` sampled every ``step`` seconds.

    The first ``I`` seconds are warm-up and produce no samples; only windows
    that fit entirely inside the run are reported.
    """
    if averaging_timescale <= 0:
        raise ValueError("averaging timescale must be > 0")
    if len(links) != 2:
        raise ValueError("the error metric compares exactly two links")
    events = list(events)
    span = duration
    if span is None:
        span = max((r.t for r in events), default=0.0)
    bins = link_byte_bins(events, w, links, span)
    return error_series_from_bins(bins, averaging_timescale, step, w, span)
