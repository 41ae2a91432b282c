"""DNS wire format and the balancing authoritative server."""

from .server import DnsService, MonotonicClock, ReplayFeeder, ZoneConfig, serve
from .wire import (
    DnsParseError, DnsQuery, DnsResponse, RefusedQuery, build_error, build_response,
    parse_query, parse_response, serialize_query,
)

__all__ = [
    "DnsParseError", "DnsQuery", "DnsResponse", "DnsService", "MonotonicClock", "RefusedQuery",
    "ReplayFeeder", "ZoneConfig", "build_error", "build_response", "parse_query",
    "parse_response", "serialize_query", "serve",
]
