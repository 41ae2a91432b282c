"""Counterfactual replay of a trace under a different balancer.

Traffic volumes and timing are taken from the log as-is; only the link each
LDNS is sent to changes.  At every ``dns_request`` the replayed balancer
decides from the replayed link loads.  A client's bytes follow the answer in
its latest ``dns_response``; logs without responses (synthetic traffic) fall
back to the LDNS's latest decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..balancer import Balancer, TtlPolicy
from ..monitor import SMALL_WINDOW, LinkSet, error_series_from_bins, window_index


class MissingAttributionError(ValueError):
    pass


@dataclass
class ReplayResult:
    window: float
    errors: object
    decisions: list
    bins: np.ndarray

    def median(self):
        return self.errors.median()


def replay_mb(log, window, timescale=20.0, step=1.0, w=SMALL_WINDOW, link_count=2,
              duration=None, policy="measurement_based", direction_policy="both") -> ReplayResult:
    log = list(log)
    has_responses = False
    for r in log:
        if r.kind in ("dns_request", "dns_response", "bytes") and r.ldns_id is None:
            raise MissingAttributionError(
                f"trace record at t={r.t} ({r.kind}) has no ldns_id; replay needs per-LDNS attribution")
        if r.kind == "dns_response":
            has_responses = True
    if not any(r.kind == "dns_request" for r in log):
        raise MissingAttributionError("trace has no dns_request records to re-decide")

    links = LinkSet(link_count, window, w, direction_policy)
    balancer = Balancer(policy, links, link_count, TtlPolicy(violator_fraction=0.0))
    span = duration if duration is not None else max(r.t for r in log)
    nbins = window_index(span, w) + 2
    bins = np.zeros((link_count, nbins), dtype=np.int64)
    measured = balancer.policy == "measurement_based"
    ldns_link, client_link = {}, {}

    for r in log:
        kind = r.kind
        if kind == "bytes":
            if has_responses:
                link = client_link.get(r.client_id, r.link)
            else:
                link = ldns_link.get(r.ldns_id, r.link)
            k = window_index(r.t, w)
            if k < nbins:
                bins[link, k] += r.bytes
            if measured:
                links.record(link, r.t, r.bytes, "egress")
        elif kind == "dns_request":
            ldns_link[r.ldns_id] = balancer.decide(r.t, r.ldns_id).chosen_link
        elif kind == "dns_response":
            client_link[r.client_id] = ldns_link.get(r.ldns_id, r.link)

    errors = error_series_from_bins(bins, timescale, step, w, span)
    return ReplayResult(window, errors, list(balancer.log), bins)
