"""Command-line entry point: ``dnsite {simulate,replay,export-logs,analyze,serve}``.

Outputs go under ``--out``, defaulting to ``$DNSITE_OUT`` or ``./dnsite-out``.
Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, analysis
from .balancer import canonical_policy, decisions_to_csv
from .simulator import DEFAULT_SEED, MissingAttributionError, ScenarioError, expand, parse, replay_mb, run
from .trace import read_trace, write_trace

log = logging.getLogger("dnsite")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


class InvalidInput(Exception):
    pass


def bundled_scenarios() -> list:
    return sorted(p.name[:-4] for p in resources.files("dnsite.scenarios").iterdir() if p.name.endswith(".scn"))


def read_scenario_text(name_or_path: str) -> str:
    path = Path(name_or_path)
    if path.exists():
        return path.read_text()
    bundled = resources.files("dnsite.scenarios") / f"{name_or_path.removesuffix('.scn')}.scn"
    if bundled.is_file():
        return bundled.read_text()
    raise InvalidInput(f"scenario {name_or_path!r} is neither a file nor a bundled scenario "
                       f"({', '.join(bundled_scenarios())})")


def out_root(arg) -> Path:
    return Path(arg or os.environ.get("DNSITE_OUT") or "dnsite-out")


def parse_windows(text):
    if text is None or not text.strip():
        return []
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidInput(f"--window expects comma-separated seconds, got {text!r}") from None


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _simulate_point(job):
    label, sc, point_dir, gzip = job
    t0 = time.perf_counter()
    result = run(sc)
    point_dir.mkdir(parents=True, exist_ok=True)
    trace_path = point_dir / ("trace.csv.gz" if gzip else "trace.csv")
    write_trace(result.trace, trace_path)
    errors_path = point_dir / "errors.csv"
    result.errors.to_csv(errors_path)
    decisions_path = point_dir / "decisions.csv"
    decisions_to_csv(result.decisions, decisions_path, sc.link_count)
    (point_dir / "scenario.scn").write_text(sc.dumps())
    summary = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in result.summary.items()}
    _write_json(point_dir / "summary.json", summary)
    return {
        "label": label,
        "scenario_digest": sc.digest(),
        "seed": sc.seed,
        "outputs": [str(p) for p in (trace_path, errors_path, decisions_path, point_dir / "summary.json")],
        "median_epsilon": result.errors.median(),
        "wall_seconds": time.perf_counter() - t0,
    }


def cmd_simulate(args) -> int:
    try:
        base, sweep = parse(read_scenario_text(args.scenario))
    except ScenarioError as e:
        raise InvalidInput(str(e)) from None
    overrides = {"seed": args.seed if args.seed is not None else base.seed}
    if args.policy:
        overrides["policy"] = canonical_policy(args.policy)
    if args.window is not None:
        windows = parse_windows(args.window)
        if len(windows) != 1:
            raise InvalidInput("simulate takes a single --window value")
        overrides["window"] = windows[0]
    if args.timescale is not None:
        overrides["timescale"] = args.timescale
    base = base.replace(**overrides)
    for k in overrides:
        sweep.pop(k, None)
    points = expand(base, sweep)
    errors = []
    for _, sc in points:
        errors += [e for e in sc.validate() if e not in errors]
    if errors:
        raise InvalidInput(str(ScenarioError(errors)))

    root = out_root(args.out) / base.name
    root.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    jobs = [(label, sc, root if len(points) == 1 else root / label, args.gzip) for label, sc in points]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            runs = list(pool.map(_simulate_point, jobs))
    else:
        runs = [_simulate_point(j) for j in jobs]
    with open(root / "sweep_summary.csv", "w", newline="") as f:
        f.write("label,median_epsilon\n")
        for r in runs:
            f.write(f"{r['label']},{r['median_epsilon']:.6f}\n")
    manifest = {
        "tool_version": __version__,
        "command": "simulate",
        "scenario": args.scenario,
        "scenario_digest": base.digest(),
        "seed": base.seed,
        "runs": runs,
        "outputs": [str(root / "sweep_summary.csv")] + [p for r in runs for p in r["outputs"]],
        "wall_seconds": time.perf_counter() - t0,
    }
    _write_json(root / "manifest.json", manifest)
    for r in runs:
        print(f"{r['label']}\tmedian_epsilon={r['median_epsilon']:.4f}")
    print(f"wrote {root}")
    return EXIT_OK


def cmd_replay(args) -> int:
    windows = parse_windows(args.window)
    if not windows:
        log.warning("empty window list; nothing to replay")
        return EXIT_OK
    if not Path(args.trace).exists():
        raise InvalidInput(f"trace {args.trace} not found")
    trace = read_trace(args.trace)
    if not trace:
        raise InvalidInput(f"trace {args.trace} is empty")
    root = out_root(args.out) / "replay"
    root.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    duration = args.duration if args.duration is not None else max(r.t for r in trace)
    policy = canonical_policy(args.policy or "mb")
    rows, outputs = [], []
    for W in windows:
        try:
            res = replay_mb(trace, W, args.timescale, args.step, link_count=args.link_count,
                            duration=duration, policy=policy)
        except MissingAttributionError as e:
            raise InvalidInput(str(e)) from None
        path = root / f"replay_W{W:g}.csv"
        res.errors.to_csv(path)
        outputs.append(str(path))
        rows.append((W, res.median()))
        print(f"W={W:g}\tmedian_epsilon={res.median():.4f}")
    summary = root / "summary.csv"
    with open(summary, "w", newline="") as f:
        f.write("W,median_epsilon\n")
        for W, m in rows:
            f.write(f"{W:g},{m:.6f}\n")
    _write_json(root / "manifest.json", {
        "tool_version": __version__, "command": "replay", "trace": str(args.trace),
        "windows": windows, "timescale": args.timescale, "policy": policy,
        "outputs": [str(summary)] + outputs, "wall_seconds": time.perf_counter() - t0,
    })
    return EXIT_OK


def cmd_export_logs(args) -> int:
    if not Path(args.trace).exists():
        raise InvalidInput(f"trace {args.trace} not found")
    logs = analysis.export_logs(read_trace(args.trace), shared_as_every=args.shared_as_every,
                                unrouted_every=args.unrouted_every)
    root = out_root(args.out) / "logs"
    root.mkdir(parents=True, exist_ok=True)
    analysis.write_dns_log(logs.dns_log, root / "dns_log.csv")
    analysis.write_flow_log(logs.flow_log, root / "flow_log.csv")
    (root / "prefixes.txt").write_text(logs.table.dumps())
    with open(root / "truth.csv", "w", newline="") as f:
        f.write("client_addr,ldns_addr\n")
        for client, ldns in sorted(logs.truth.items()):
            f.write(f"{client},{ldns}\n")
    print(f"wrote {root}")
    return EXIT_OK


def _write_cdf(path, x, label):
    x = np.sort(np.asarray(x, dtype=float))
    with open(path, "w", newline="") as f:
        f.write(f"{label},cdf\n")
        for i, v in enumerate(x, start=1):
            f.write(f"{v!r},{i / len(x):.6f}\n")


def _fits(samples):
    report = {}
    for family in ("pareto", "lognormal"):
        try:
            fit = analysis.fit_distribution(samples, family)
            report[family] = {"params": fit.params, "goodness": fit.goodness}
        except ValueError as e:
            report[family] = {"error": str(e)}
    good = {k: v["goodness"] for k, v in report.items() if "goodness" in v}
    report["better_fit"] = min(good, key=good.get) if good else None
    return report


def cmd_analyze(args) -> int:
    for p in (args.dns_log, args.flow_log, args.prefix_table):
        if not Path(p).exists():
            raise InvalidInput(f"{p} not found")
    try:
        dns_log = analysis.read_dns_log(args.dns_log)
        flow_log = analysis.read_flow_log(args.flow_log)
        table = analysis.PrefixTable.from_file(args.prefix_table)
    except (KeyError, ValueError) as e:
        raise InvalidInput(f"cannot read analysis inputs: {e}") from None
    root = out_root(args.out) / "analysis"
    root.mkdir(parents=True, exist_ok=True)

    assoc = analysis.associate(dns_log, flow_log, table)
    with open(root / "association.csv", "w", newline="") as f:
        f.write("t,client_addr,bytes,ldns_addr,dns_t\n")
        for req, ldns, t_dns in assoc.pairs:
            f.write(f"{req.t!r},{req.client_addr},{req.bytes},{ldns},{t_dns!r}\n")
    report = {
        "client_requests": assoc.total,
        "pairs": len(assoc.pairs),
        "ignored_no_ldns": assoc.ignored_no_ldns,
        "ignored_ambiguous": assoc.ignored_ambiguous,
        "coverage_fraction": assoc.coverage_fraction,
    }
    if args.truth:
        with open(args.truth, newline="") as f:
            truth = {r["client_addr"]: r["ldns_addr"] for r in csv.DictReader(f)}
        wrong = sum(1 for req, ldns, _ in assoc.pairs if truth.get(req.client_addr) != ldns)
        report["pairs_checked"] = len(assoc.pairs)
        report["pairs_incorrect"] = wrong

    gaps = analysis.min_interarrival_per_ldns(dns_log, ttl=args.ttl)
    _write_cdf(root / "min_interarrival_cdf.csv", gaps.cdf_x, "min_gap_seconds")
    report["ldns_total"] = len(gaps.min_gap) + len(gaps.single_request)
    report["ldns_single_request"] = len(gaps.single_request)
    report["ttl_honoring_fraction"] = gaps.honoring_fraction

    clients = assoc.clients_per_ldns()
    per_client = analysis.bytes_per_client(req for req, _, _ in assoc.pairs)
    _write_cdf(root / "clients_per_ldns_cdf.csv", list(clients.values()), "clients")
    _write_cdf(root / "bytes_per_client_cdf.csv", list(per_client.values()), "bytes")
    report["clients_per_ldns_fit"] = _fits(list(clients.values()))
    report["bytes_per_client_fit"] = _fits([b for b in per_client.values() if b > 0])
    _write_json(root / "report.json", report)
    print(json.dumps({k: v for k, v in report.items() if not isinstance(v, dict)}, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .dns import DnsService, ReplayFeeder, ZoneConfig, serve

    if not args.zone:
        raise InvalidInput("serve needs --zone (a zone config file)")
    try:
        cfg = ZoneConfig.load(args.zone)
        changes = {}
        if args.policy:
            changes["policy"] = canonical_policy(args.policy)
        if args.window is not None:
            changes["window"] = float(args.window)
        if changes:
            cfg = ZoneConfig(**{**cfg.__dict__, **changes})
    except (OSError, ValueError) as e:
        raise InvalidInput(str(e)) from None
    service = DnsService(cfg)
    if args.feed:
        service.feed = ReplayFeeder(read_trace(args.feed), service.balancer.links)
    root = out_root(args.out) / "serve"
    root.mkdir(parents=True, exist_ok=True)

    async def main():
        stop = asyncio.Event()
        if args.duration:
            asyncio.get_running_loop().call_later(args.duration, stop.set)
        await serve(service, args.host, args.port, stop, decision_log_path=root / "decisions.csv",
                    stats_path=root / "stats.txt")

    try:
        asyncio.run(main())
    except OSError as e:
        log.error("cannot serve on %s:%s: %s", args.host, args.port, e)
        return EXIT_RUNTIME
    print(service.stats_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnsite", description="DNS-based ingress traffic engineering lab")
    p.add_argument("--version", action="version", version=f"dnsite {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario (and its sweep points)")
    s.add_argument("--scenario", required=True, help="scenario file or bundled name")
    s.add_argument("--seed", type=int, default=None, help=f"override the scenario seed (default {DEFAULT_SEED})")
    s.add_argument("--out", default=None)
    s.add_argument("--policy", choices=("rr", "mb"), default=None)
    s.add_argument("--window", default=None, help="measurement window W in seconds")
    s.add_argument("--timescale", type=float, default=None, help="averaging timescale I in seconds")
    s.add_argument("--workers", type=int, default=1, help="run sweep points in parallel")
    s.add_argument("--gzip", action="store_true", help="compress trace files")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replay", help="replay a trace with measurement-based balancing over several windows")
    r.add_argument("--trace", required=True)
    r.add_argument("--window", default="", help="comma-separated window sizes in seconds")
    r.add_argument("--timescale", type=float, default=20.0)
    r.add_argument("--step", type=float, default=1.0)
    r.add_argument("--policy", choices=("rr", "mb"), default=None)
    r.add_argument("--link-count", type=int, default=2)
    r.add_argument("--duration", type=float, default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_replay)

    e = sub.add_parser("export-logs", help="turn a simulator trace into DNS/flow logs with ground truth")
    e.add_argument("--trace", required=True)
    e.add_argument("--shared-as-every", type=int, default=0)
    e.add_argument("--unrouted-every", type=int, default=0)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_export_logs)

    a = sub.add_parser("analyze", help="associate clients with LDNS and fit distributions")
    a.add_argument("--dns-log", required=True)
    a.add_argument("--flow-log", required=True)
    a.add_argument("--prefix-table", required=True)
    a.add_argument("--truth", default=None, help="client_addr,ldns_addr CSV to score associations")
    a.add_argument("--ttl", type=float, default=15.0, help="advertised TTL for the honoring estimate")
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("serve", help="run the balancing authoritative DNS server")
    v.add_argument("--zone", "--scenario", dest="zone", help="zone config file")
    v.add_argument("--policy", choices=("rr", "mb"), default=None)
    v.add_argument("--window", type=float, default=None)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=5353)
    v.add_argument("--feed", default=None, help="trace file replayed into the link monitors")
    v.add_argument("--duration", type=float, default=None, help="stop after this many seconds")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInput as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # anything else is a runtime failure
        log.exception("failed: %s", e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
