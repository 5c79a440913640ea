"""Command line entry point: ``motionpi <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

EXIT_OK, EXIT_INCONSISTENT, EXIT_USAGE = 0, 1, 2


def _cmd_run(args) -> int:
    from .netsim import ScenarioError, load_scenario, run_scenario

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        for path, msg in exc.errors:
            print(f"{args.scenario}: {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    report = run_scenario(scenario, args.out, capture=args.capture, replay_check=args.replay_check)
    t = report.doc["totals"]
    print(f"{scenario.name}: {len(scenario.participants)} participant(s) x {scenario.days} day(s), "
          f"{t['local_records']} local / {t['server_records']} server records, "
          f"{'consistent' if report.consistent else 'INCONSISTENT'}")
    print(f"report written to {os.path.join(args.out, 'report.json')}")
    return report.exit_code


def _agent_dirs(path: str) -> list[str]:
    if os.path.exists(os.path.join(path, "agent.yaml")):
        return [path]
    root = os.path.join(path, "participants")
    if os.path.isdir(root):
        return [os.path.join(root, d) for d in sorted(os.listdir(root))
                if os.path.exists(os.path.join(root, d, "agent.yaml"))]
    return []


def _server_docs(server: str, agent) -> list[dict]:
    if server.startswith(("http://", "https://")):
        from .agent.transport import HttpTransport

        agent.transport = HttpTransport(server, agent.config.request_timeout_s)
        return agent.fetch_server_records()
    with open(server, encoding="utf-8") as fh:
        docs = [json.loads(line) for line in fh if line.strip()]
    return [d for d in docs if d.get("phone_id") == agent.config.phone_id]


def _cmd_verify(args) -> int:
    from .agent import AgentConfig, PhoneAgent
    from .agent.transport import TransportError

    dirs = _agent_dirs(args.local)
    if not dirs:
        print(f"{args.local}: no agent.yaml found (expected an agent or run directory)", file=sys.stderr)
        return EXIT_USAGE
    reports = {}
    for d in dirs:
        agent = PhoneAgent(AgentConfig.load(os.path.join(d, "agent.yaml")), os.path.join(d, "outbox"))
        try:
            rep = agent.verify_consistency(_server_docs(args.server, agent))
        except (TransportError, OSError) as exc:
            print(f"{d}: cannot read server records: {exc}", file=sys.stderr)
            return EXIT_USAGE
        finally:
            agent.close()
        reports[agent.config.participant_id] = rep.to_dict()
        status = "ok" if rep.ok else "MISMATCH"
        print(f"{agent.config.participant_id}: {status} missing_on_server={len(rep.missing_on_server)} "
              f"missing_locally={len(rep.missing_locally)} mismatched={len(rep.mismatched)} "
              f"dead_lettered={len(rep.dead_lettered)}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(reports, fh, indent=2, sort_keys=True)
    ok = all(not (r["missing_on_server"] or r["missing_locally"] or r["mismatched"]) for r in reports.values())
    return EXIT_OK if ok else EXIT_INCONSISTENT


def _cmd_extract(args) -> int:
    from .flash import FtlParseError, extract_files

    try:
        files = extract_files(args.nor, args.nand, args.out)
    except FtlParseError as exc:
        print(f"extract failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for f in files:
        print(f"{f.entry.name}\t{len(f.data)} bytes\tcreated {f.entry.created_t:.0f}")
    return EXIT_OK


def _table(rows: list[list], header: list[str]) -> str:
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def summarize_report(doc: dict) -> dict:
    """Condensed per-participant view of a run report."""
    out = {"scenario": doc["scenario"], "consistent": doc["consistent"], "network": doc["network"],
           "totals": doc["totals"], "participants": []}
    for p in doc["participants"]:
        s = p["surveys"]
        c = p["consistency"]
        out["participants"].append({
            "participant_id": p["participant_id"], "local": p["local_total"], "server": p["server_total"],
            "pending": p["pending_uploads"],
            "surveys_completed": sum(k["completed"] for k in s.values()),
            "surveys_declined": sum(k["declined"] for k in s.values()),
            "surveys_expired": sum(k["expired"] for k in s.values()),
            "phone_battery_pct": p["phone_battery_pct"],
            "min_band_battery_pct": min((b["battery_pct"] for b in p["bands"]), default=None),
            "nand_erases_from_fat_ops": sum(b["wear"]["nand_erases_from_fat_ops"] for b in p["bands"]),
            "inconsistent": len(c["missing_on_server"]) + len(c["missing_locally"]) + len(c["mismatched"]),
        })
    return out


def _cmd_report(args) -> int:
    path = os.path.join(args.run, "report.json")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    summary = summarize_report(doc)
    cols = ["participant_id", "local", "server", "pending", "surveys_completed", "surveys_declined",
            "surveys_expired", "phone_battery_pct", "min_band_battery_pct", "nand_erases_from_fat_ops", "inconsistent"]
    text = _table([[p[c] for c in cols] for p in summary["participants"]], cols)
    net = summary["network"]
    text += (f"\n\nrequests={net['requests']} delivered={net['delivered']} refused={net['refused']} "
             f"timeout={net['timeout']} mid_body_cut={net['mid_body_cut']} outages={net['outages']}\n"
             f"consistent={summary['consistent']}\n")
    print(text, end="")
    with open(os.path.join(args.run, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(os.path.join(args.run, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return EXIT_OK if summary["consistent"] else EXIT_INCONSISTENT


def _cmd_serve(args) -> int:
    from .backend import BackendConfig
    from .backend.http import make_server

    config = BackendConfig.load(args.config) if args.config else BackendConfig()
    if args.port is not None:
        config.port = args.port
    server = make_server(config)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        server.service.store.close()
    return EXIT_OK


def _cmd_triggers(args) -> int:
    from .signal import SignalError, TriggerConfig, batch_triggers, read_trace, write_triggers

    cfg = TriggerConfig.from_dict({"sample_rate_hz": args.rate, **({"mvpa_threshold": args.threshold}
                                                                   if args.threshold is not None else {})})
    try:
        trace = read_trace(args.trace)
        times = batch_triggers(trace, cfg, start_t=args.start)
    except SignalError as exc:
        print(f"{args.trace}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        write_triggers(args.out, times)
    for t in times:
        print(repr(t))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motionpi", description="Wearable + phone + backend data pipeline simulator")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file and write its artifacts")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--capture", action="store_true", help="write every request/response to wire.jsonl")
    r.add_argument("--replay-check", action="store_true", help="re-send all uploads twice after the run")
    r.set_defaults(fn=_cmd_run)

    v = sub.add_parser("verify", help="compare local outboxes with the server copy")
    v.add_argument("--local", required=True, help="agent directory or run directory")
    v.add_argument("--server", required=True, help="backend base URL or a store.jsonl dump")
    v.add_argument("--json", help="write the consistency reports here")
    v.set_defaults(fn=_cmd_verify)

    e = sub.add_parser("extract", help="mount raw NOR/NAND dumps and write files plus CSVs")
    e.add_argument("--nor", required=True)
    e.add_argument("--nand", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=_cmd_extract)

    rp = sub.add_parser("report", help="tabulate a run directory's report.json")
    rp.add_argument("--run", required=True)
    rp.set_defaults(fn=_cmd_report)

    s = sub.add_parser("serve", help="run the ingestion backend over HTTP")
    s.add_argument("--config")
    s.add_argument("--port", type=int)
    s.set_defaults(fn=_cmd_serve)

    t = sub.add_parser("triggers", help="replay a t,ax,ay,az trace through the MVPA detector")
    t.add_argument("--trace", required=True)
    t.add_argument("--out")
    t.add_argument("--rate", type=float, default=32.0)
    t.add_argument("--threshold", type=float)
    t.add_argument("--start", type=float, help="bout grid origin (default: first sample)")
    t.set_defaults(fn=_cmd_triggers)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
