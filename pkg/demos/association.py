"""Client to LDNS association from logs alone.

Runs a simulation, exports it as a DNS query log, a flow log and a prefix
table, then recovers each request's LDNS.  Ground truth from the simulator
scores the result.

    python demos/association.py
"""

from dnsite import analysis as A
from dnsite.simulator import Scenario, run

r = run(Scenario(duration=300.0))
logs = A.export_logs(r.trace, shared_as_every=3, unrouted_every=7)
res = A.associate(logs.dns_log, logs.flow_log, logs.table)
wrong = sum(logs.truth[req.client_addr] != ldns for req, ldns, _ in res.pairs)

print(f"flow records           {len(logs.flow_log)}")
print(f"associated             {len(res.pairs)} ({res.coverage_fraction:.0%}), {wrong} incorrect")
print(f"skipped, shared AS     {res.ignored_ambiguous}")
print(f"skipped, no LDNS in AS {res.ignored_no_ldns}")

sizes = A.bytes_per_client(logs.flow_log)
fit = A.best_fit(list(sizes.values()))
print(f"bytes per client: best fit {fit.family} {fit.params}")
