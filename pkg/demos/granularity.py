"""Control granularity: how many bytes follow one DNS decision.

Compares the closed-form estimate n*r*s*T with what the simulator measures
for LDNS servers that honor the TTL.  The measured value tracks the renewal
form n*r*s*(T + 1/(n*r)), because after each expiry the cache stays empty
until the next client request arrives.

    python demos/granularity.py
"""

from dnsite.model import GranularityInput, granularity_bytes_per_request
from dnsite.simulator import Scenario, run

n, r, s = 3, 1 / 35, 225_000

for ttl in (5.0, 15.0, 60.0):
    sc = Scenario(hidden_clients_min=n, hidden_clients_max=n, ldns_count=20, violator_fraction=0.0,
                  size_kind="fixed", size_mean=s, nominal_ttl=ttl, path_rate_min=10e6, path_rate_max=10e6,
                  path_rtt_min=0.05, path_rtt_max=0.05, sleep_mean=35 - 0.18 - 0.5)
    measured = run(sc).summary["bytes_per_dns_request"]
    model = granularity_bytes_per_request(GranularityInput(n, r, s, ttl))
    renewal = n * r * s * (ttl + 1 / (n * r))
    print(f"T={ttl:>4g}s  model {model:>11,.0f}  renewal {renewal:>11,.0f}  measured {measured:>11,.0f}")
